//! Mini-batch training of a zone classifier.
//!
//! Single-threaded and fully determined by the seed: the seed drives weight
//! init, the train/validation split and every epoch shuffle.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::layer::Signal;
use super::network::{bce_loss, Architecture, ConvNet, Layout, WeightBundle, DEFAULT_THRESHOLD};
use super::optim::{adam_step_net, AdamConfig, AdamState};
use super::CnnError;
use crate::features::{FeatureTensor, Normalization};

#[derive(Clone, Debug, PartialEq)]
pub struct Example {
    pub input: Signal,
    pub label: u8,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub iterations: usize,
    pub batch_size: usize,
    pub adam: AdamConfig,
    /// Share of the dataset held out for model selection.
    pub validation_fraction: f64,
    /// Validation is run every this many iterations and after the last one.
    pub eval_every: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            iterations: 50_000,
            batch_size: 64,
            adam: AdamConfig::default(),
            validation_fraction: 0.15,
            eval_every: 50,
            seed: 42,
        }
    }
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub net: ConvNet,
    /// Mean batch loss of every iteration.
    pub history: Vec<f64>,
    /// Iteration whose weights were returned (0 = initial weights).
    pub best_iteration: usize,
    pub validation_accuracy: Option<f64>,
}

/// Accuracy and mean loss of `net` on `examples`.
pub fn evaluate(net: &ConvNet, examples: &[&Example], threshold: f64) -> Result<(f64, f64), CnnError> {
    if examples.is_empty() {
        return Ok((0.0, 0.0));
    }
    let mut correct = 0usize;
    let mut loss = 0.0;
    for ex in examples {
        let p = net.forward(&ex.input)?;
        loss += bce_loss(p, ex.label);
        if u8::from(p >= threshold) == ex.label {
            correct += 1;
        }
    }
    let n = examples.len() as f64;
    Ok((correct as f64 / n, loss / n))
}

/// Trains a fresh network of shape `arch` on `dataset`.
pub fn train(dataset: &[Example], arch: &Architecture, config: &TrainConfig) -> Result<TrainOutcome, CnnError> {
    if dataset.is_empty() {
        return Err(CnnError::EmptyDataset);
    }
    if let Some(ex) = dataset.iter().find(|e| e.label > 1) {
        return Err(CnnError::InvalidLabel(ex.label));
    }
    let positives = dataset.iter().filter(|e| e.label == 1).count();
    if positives == 0 || positives == dataset.len() {
        return Err(CnnError::SingleClassDataset);
    }
    if let Some(ex) = dataset.iter().find(|e| e.input.channels() != arch.in_channels) {
        return Err(CnnError::ChannelMismatch { expected: arch.in_channels, found: ex.input.channels() });
    }
    if config.batch_size == 0 {
        return Err(CnnError::EmptyBatch);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut net = ConvNet::init(arch, &mut rng);
    if config.iterations == 0 {
        return Ok(TrainOutcome { net, history: Vec::new(), best_iteration: 0, validation_accuracy: None });
    }

    let mut order: Vec<usize> = (0..dataset.len()).collect();
    order.shuffle(&mut rng);
    let n_val = ((dataset.len() as f64) * config.validation_fraction.clamp(0.0, 0.9)).round() as usize;
    let (val_idx, train_idx) = order.split_at(n_val);
    let validation: Vec<&Example> = val_idx.iter().map(|&i| &dataset[i]).collect();
    let mut train_idx = train_idx.to_vec();

    let mut state = AdamState::new(net.param_count());
    let mut history = Vec::with_capacity(config.iterations);
    let mut best: Option<(f64, f64, usize, ConvNet)> = None;
    let mut cursor = train_idx.len();
    let eval_every = config.eval_every.max(1);

    for it in 1..=config.iterations {
        let mut batch = Vec::with_capacity(config.batch_size);
        while batch.len() < config.batch_size {
            if cursor == train_idx.len() {
                train_idx.shuffle(&mut rng);
                cursor = 0;
            }
            let ex = &dataset[train_idx[cursor]];
            batch.push((&ex.input, ex.label));
            cursor += 1;
        }
        let (grads, loss) = net.backward(&batch)?;
        adam_step_net(&mut net, &grads, &mut state, &config.adam);
        history.push(loss);

        if !validation.is_empty() && (it % eval_every == 0 || it == config.iterations) {
            let (acc, vloss) = evaluate(&net, &validation, DEFAULT_THRESHOLD)?;
            let better = match &best {
                None => true,
                Some((bacc, bloss, _, _)) => acc > *bacc || (acc == *bacc && vloss < *bloss),
            };
            if better {
                best = Some((acc, vloss, it, net.clone()));
            }
        }
    }

    Ok(match best {
        Some((acc, _, it, best_net)) => TrainOutcome {
            net: best_net,
            history,
            best_iteration: it,
            validation_accuracy: Some(acc),
        },
        None => TrainOutcome {
            net,
            history,
            best_iteration: config.iterations,
            validation_accuracy: None,
        },
    })
}

/// Trains one zone's bundle from standardized tensors.
pub fn train_bundle(
    examples: &[(FeatureTensor, u8)],
    normalization: Normalization,
    zone_id: u8,
    layout: Layout,
    arch: &Architecture,
    config: &TrainConfig,
) -> Result<(WeightBundle, TrainOutcome), CnnError> {
    let dataset: Vec<Example> = examples
        .iter()
        .map(|(t, y)| Example { input: super::network::flatten_input(t, layout), label: *y })
        .collect();
    let outcome = train(&dataset, arch, config)?;
    let bundle = WeightBundle {
        net: outcome.net.clone(),
        layout,
        normalization,
        zone_id,
        threshold: DEFAULT_THRESHOLD,
    };
    bundle.validate()?;
    Ok((bundle, outcome))
}
