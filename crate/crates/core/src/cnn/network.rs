use rand::Rng;
use serde::{Deserialize, Serialize};

use super::layer::{conv1d_backward, conv1d_forward, leaky, ConvLayer, Signal};
use super::CnnError;
use crate::features::{FeatureTensor, Normalization, FEATURES, LINE_POSITIONS, WINDOW_FRAMES};

/// Probability clamp applied before taking logarithms in the loss.
pub const BCE_EPSILON: f64 = 1e-7;
pub const DEFAULT_LEAKY_SLOPE: f64 = 0.01;
pub const DEFAULT_THRESHOLD: f64 = 0.5;

/// Hidden layer widths, kernel size and activation slope of a network.
#[derive(Clone, Debug, PartialEq)]
pub struct Architecture {
    pub in_channels: usize,
    pub hidden: Vec<usize>,
    pub kernel_size: usize,
    pub leaky_slope: f64,
}

impl Architecture {
    /// Three 32-channel hidden convolutions with kernel 3 on the given input
    /// layout, followed by a single-channel output convolution.
    pub fn default_for(layout: Layout) -> Self {
        Architecture {
            in_channels: layout.channels(),
            hidden: vec![32, 32, 32],
            kernel_size: 3,
            leaky_slope: DEFAULT_LEAKY_SLOPE,
        }
    }
}

/// Stack of convolutions: LeakyReLU after every layer but the last, which has
/// one output channel and feeds global average pooling and a sigmoid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvNet {
    pub layers: Vec<ConvLayer>,
    pub leaky_slope: f64,
}

/// Intermediate values of one forward pass.
pub(crate) struct Trace {
    /// Input of every layer (`inputs[0]` is the network input).
    inputs: Vec<Signal>,
    /// Pre-activation output of every layer.
    pre: Vec<Signal>,
    pub(crate) probability: f64,
}

/// Logistic function, kept strictly inside (0, 1) even where f64 rounding
/// would saturate.
pub fn sigmoid(x: f64) -> f64 {
    let p = if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    };
    p.clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON / 2.0)
}

/// Binary cross-entropy with the prediction clamped to `[ε, 1 − ε]`.
pub fn bce_loss(prediction: f64, label: u8) -> f64 {
    let p = prediction.clamp(BCE_EPSILON, 1.0 - BCE_EPSILON);
    if label == 1 {
        -p.ln()
    } else {
        -(1.0 - p).ln()
    }
}

impl ConvNet {
    /// Seeded init: weights uniform in `±sqrt(1 / (in_channels · kernel))`,
    /// biases zero.
    pub fn init<R: Rng>(arch: &Architecture, rng: &mut R) -> Self {
        let mut widths = vec![arch.in_channels];
        widths.extend(&arch.hidden);
        widths.push(1);
        let layers = widths
            .windows(2)
            .map(|w| {
                let mut layer = ConvLayer::zeros(w[0], w[1], arch.kernel_size);
                let bound = (1.0 / (w[0] * arch.kernel_size) as f64).sqrt();
                for v in &mut layer.weights {
                    *v = rng.random_range(-bound..=bound);
                }
                layer
            })
            .collect();
        ConvNet { layers, leaky_slope: arch.leaky_slope }
    }

    pub fn validate(&self) -> Result<(), CnnError> {
        let last = self.layers.last().ok_or_else(|| CnnError::ShapeMismatch("network has no layers".into()))?;
        for l in &self.layers {
            l.validate()?;
        }
        for pair in self.layers.windows(2) {
            if pair[0].out_channels != pair[1].in_channels {
                return Err(CnnError::ShapeMismatch(format!(
                    "layer output {} does not feed layer input {}",
                    pair[0].out_channels, pair[1].in_channels
                )));
            }
        }
        if last.out_channels != 1 {
            return Err(CnnError::ShapeMismatch(format!(
                "final layer has {} output channels, expected 1",
                last.out_channels
            )));
        }
        if !self.leaky_slope.is_finite() {
            return Err(CnnError::ShapeMismatch("activation slope is not finite".into()));
        }
        Ok(())
    }

    pub fn in_channels(&self) -> usize {
        self.layers.first().map_or(0, |l| l.in_channels)
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(ConvLayer::param_count).sum()
    }

    /// Visits every parameter in canonical order (per layer: weights, then bias).
    pub fn params_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.layers.iter_mut().flat_map(|l| l.weights.iter_mut().chain(l.bias.iter_mut()))
    }

    pub fn params(&self) -> impl Iterator<Item = &f64> {
        self.layers.iter().flat_map(|l| l.weights.iter().chain(l.bias.iter()))
    }

    pub(crate) fn trace(&self, input: &Signal) -> Result<Trace, CnnError> {
        let n = self.layers.len();
        if n == 0 {
            return Err(CnnError::ShapeMismatch("network has no layers".into()));
        }
        let mut inputs = Vec::with_capacity(n);
        let mut pre = Vec::with_capacity(n);
        let mut x = input.clone();
        for (i, layer) in self.layers.iter().enumerate() {
            let z = conv1d_forward(&x, layer)?;
            inputs.push(x);
            x = if i + 1 < n {
                let mut a = z.clone();
                for v in a.as_mut_slice() {
                    *v = leaky(*v, self.leaky_slope);
                }
                a
            } else {
                z.clone()
            };
            pre.push(z);
        }
        let out = pre.last().expect("non-empty");
        if out.channels() != 1 {
            return Err(CnnError::ShapeMismatch(format!("network output has {} channels", out.channels())));
        }
        let logit = out.row(0).iter().sum::<f64>() / out.len() as f64;
        Ok(Trace { inputs, pre, probability: sigmoid(logit) })
    }

    /// Probability that the higher-resolution candidate is optimal.
    pub fn forward(&self, input: &Signal) -> Result<f64, CnnError> {
        Ok(self.trace(input)?.probability)
    }

    /// Gradient of the mean loss over `batch` with respect to every parameter,
    /// plus that mean loss. The loss value uses the ε-clamp; the gradient is
    /// that of the unclamped loss, `p − y` at the logit.
    pub fn backward(&self, batch: &[(&Signal, u8)]) -> Result<(Gradients, f64), CnnError> {
        if batch.is_empty() {
            return Err(CnnError::EmptyBatch);
        }
        let mut grads = Gradients::zeros_like(self);
        let mut loss = 0.0;
        for &(input, label) in batch {
            if label > 1 {
                return Err(CnnError::InvalidLabel(label));
            }
            let trace = self.trace(input)?;
            loss += bce_loss(trace.probability, label);
            let dlogit = trace.probability - f64::from(label);
            self.accumulate(&trace, dlogit, &mut grads);
        }
        let scale = 1.0 / batch.len() as f64;
        grads.scale(scale);
        Ok((grads, loss * scale))
    }

    fn accumulate(&self, trace: &Trace, dlogit: f64, grads: &mut Gradients) {
        let n = self.layers.len();
        let out_len = trace.pre[n - 1].len();
        let mut grad = Signal::zeros(1, out_len);
        grad.row_mut(0).fill(dlogit / out_len as f64);
        for i in (0..n).rev() {
            let layer = &self.layers[i];
            let g = &mut grads.layers[i];
            let grad_in =
                conv1d_backward(&trace.inputs[i], layer, &grad, &mut g.weights, &mut g.bias, i > 0);
            if let Some(mut gi) = grad_in {
                // through the activation of layer i - 1
                let z = &trace.pre[i - 1];
                for (d, &zv) in gi.as_mut_slice().iter_mut().zip(z.as_slice()) {
                    if zv < 0.0 {
                        *d *= self.leaky_slope;
                    }
                }
                grad = gi;
            }
        }
    }
}

/// Gradient buffers shaped like a [`ConvNet`]'s parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients {
    pub layers: Vec<LayerGradient>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LayerGradient {
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Gradients {
    pub fn zeros_like(net: &ConvNet) -> Self {
        Gradients {
            layers: net
                .layers
                .iter()
                .map(|l| LayerGradient { weights: vec![0.0; l.weights.len()], bias: vec![0.0; l.bias.len()] })
                .collect(),
        }
    }

    /// Values in the same canonical order as [`ConvNet::params`].
    pub fn values(&self) -> impl Iterator<Item = &f64> {
        self.layers.iter().flat_map(|l| l.weights.iter().chain(l.bias.iter()))
    }

    pub fn scale(&mut self, s: f64) {
        for l in &mut self.layers {
            l.weights.iter_mut().chain(l.bias.iter_mut()).for_each(|v| *v *= s);
        }
    }
}

/// How the 60 × 7 × 17 tensor is folded into channels × length.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Layout {
    /// 60 channels (frames), length 119 (feature-major 7 × 17).
    FramesAsChannels,
    /// 119 channels (feature-major 7 × 17), length 60 (frames).
    FeaturesAsChannels,
}

impl Layout {
    pub fn channels(self) -> usize {
        match self {
            Layout::FramesAsChannels => WINDOW_FRAMES,
            Layout::FeaturesAsChannels => FEATURES * LINE_POSITIONS,
        }
    }

    pub fn length(self) -> usize {
        match self {
            Layout::FramesAsChannels => FEATURES * LINE_POSITIONS,
            Layout::FeaturesAsChannels => WINDOW_FRAMES,
        }
    }

    pub fn tag(self) -> u8 {
        match self {
            Layout::FramesAsChannels => 0,
            Layout::FeaturesAsChannels => 1,
        }
    }

    pub fn from_tag(tag: u8) -> Option<Layout> {
        match tag {
            0 => Some(Layout::FramesAsChannels),
            1 => Some(Layout::FeaturesAsChannels),
            _ => None,
        }
    }
}

/// Flattens the last two tensor axes and lays the result out per `layout`.
pub fn flatten_input(tensor: &FeatureTensor, layout: Layout) -> Signal {
    let flat = FEATURES * LINE_POSITIONS;
    match layout {
        Layout::FramesAsChannels => {
            Signal::from_vec(WINDOW_FRAMES, flat, tensor.as_slice().to_vec()).expect("tensor shape")
        }
        Layout::FeaturesAsChannels => {
            let src = tensor.as_slice();
            let mut data = vec![0.0; FeatureTensor::LEN];
            for t in 0..WINDOW_FRAMES {
                for q in 0..flat {
                    data[q * WINDOW_FRAMES + t] = src[t * flat + q];
                }
            }
            Signal::from_vec(flat, WINDOW_FRAMES, data).expect("tensor shape")
        }
    }
}

/// One zone's classifier with everything needed to run it on raw windows.
#[derive(Clone, Debug, PartialEq)]
pub struct WeightBundle {
    pub net: ConvNet,
    pub layout: Layout,
    pub normalization: Normalization,
    pub zone_id: u8,
    pub threshold: f64,
}

impl WeightBundle {
    pub fn validate(&self) -> Result<(), CnnError> {
        self.net.validate()?;
        if self.net.in_channels() != self.layout.channels() {
            return Err(CnnError::ShapeMismatch(format!(
                "first layer takes {} channels but layout {:?} provides {}",
                self.net.in_channels(),
                self.layout,
                self.layout.channels()
            )));
        }
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            return Err(CnnError::InvalidThreshold(self.threshold));
        }
        if self.zone_id > 3 {
            return Err(CnnError::ShapeMismatch(format!("zone id {} outside 0..=3", self.zone_id)));
        }
        if self.normalization.std.iter().any(|s| !(*s > 0.0)) {
            return Err(CnnError::ShapeMismatch("normalization std must be positive".into()));
        }
        Ok(())
    }

    pub fn forward(&self, tensor: &FeatureTensor) -> Result<f64, CnnError> {
        self.net.forward(&flatten_input(tensor, self.layout))
    }

    pub fn predict(&self, tensor: &FeatureTensor) -> Result<u8, CnnError> {
        Ok(self.label_for(self.forward(tensor)?))
    }

    /// 1 iff `probability >= threshold`.
    pub fn label_for(&self, probability: f64) -> u8 {
        u8::from(probability >= self.threshold)
    }
}

/// Probability of the higher candidate for a standardized tensor.
pub fn forward(bundle: &WeightBundle, tensor: &FeatureTensor) -> Result<f64, CnnError> {
    bundle.forward(tensor)
}

pub fn predict(bundle: &WeightBundle, tensor: &FeatureTensor) -> Result<u8, CnnError> {
    bundle.predict(tensor)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn tiny_net() -> ConvNet {
        ConvNet {
            layers: vec![
                ConvLayer {
                    in_channels: 2,
                    out_channels: 2,
                    kernel_size: 3,
                    weights: vec![0.5, -0.25, 0.1, 0.3, 0.2, -0.4, -0.6, 0.05, 0.7, 0.2, -0.1, 0.15],
                    bias: vec![0.1, -0.3],
                },
                ConvLayer {
                    in_channels: 2,
                    out_channels: 1,
                    kernel_size: 3,
                    weights: vec![0.4, -0.2, 0.3, -0.5, 0.6, 0.1],
                    bias: vec![0.05],
                },
            ],
            leaky_slope: 0.1,
        }
    }

    /// Straight-line forward pass with explicit padding, no shared helpers.
    fn hand_forward(net: &ConvNet, x: &[Vec<f64>]) -> f64 {
        let mut cur: Vec<Vec<f64>> = x.to_vec();
        for (li, layer) in net.layers.iter().enumerate() {
            let len = cur[0].len();
            let mut next = vec![vec![0.0; len]; layer.out_channels];
            for o in 0..layer.out_channels {
                for i in 0..len {
                    let mut acc = layer.bias[o];
                    for c in 0..layer.in_channels {
                        let padded: Vec<f64> =
                            std::iter::once(0.0).chain(cur[c].iter().cloned()).chain(std::iter::once(0.0)).collect();
                        for j in 0..3 {
                            acc += layer.weights[(o * layer.in_channels + c) * 3 + j] * padded[i + j];
                        }
                    }
                    next[o][i] = if li + 1 < net.layers.len() && acc < 0.0 { acc * net.leaky_slope } else { acc };
                }
            }
            cur = next;
        }
        let m = cur[0].iter().sum::<f64>() / cur[0].len() as f64;
        1.0 / (1.0 + (-m).exp())
    }

    #[test]
    fn forward_matches_hand_trace() {
        let net = tiny_net();
        let x = vec![vec![1.0, -2.0, 0.5, 3.0], vec![-1.0, 0.25, 2.0, -0.5]];
        let sig = Signal::from_vec(2, 4, x.concat()).unwrap();
        let got = net.forward(&sig).unwrap();
        assert!((got - hand_forward(&net, &x)).abs() < 1e-15);
    }

    #[test]
    fn zero_network_gives_half() {
        let mut net = ConvNet::init(&Architecture::default_for(Layout::FramesAsChannels), &mut ChaCha8Rng::seed_from_u64(1));
        net.params_mut().for_each(|p| *p = 0.0);
        let t = FeatureTensor::zeros();
        assert_eq!(net.forward(&flatten_input(&t, Layout::FramesAsChannels)).unwrap(), 0.5);
    }

    #[test]
    fn bce_values() {
        assert!((bce_loss(0.5, 1) - std::f64::consts::LN_2).abs() < 1e-15);
        assert!((bce_loss(0.5, 0) - std::f64::consts::LN_2).abs() < 1e-15);
        let near_perfect = bce_loss(1.0, 1);
        assert!((near_perfect - 1e-7).abs() < 1e-12, "{near_perfect}");
        assert!(bce_loss(0.0, 1).is_finite());
    }

    #[test]
    fn final_bias_gradient_is_p_minus_y() {
        let net = tiny_net();
        let x = Signal::from_vec(2, 4, vec![1.0, -2.0, 0.5, 3.0, -1.0, 0.25, 2.0, -0.5]).unwrap();
        let p = net.forward(&x).unwrap();
        for y in [0u8, 1] {
            let (g, _) = net.backward(&[(&x, y)]).unwrap();
            let db = g.layers[1].bias[0];
            assert!((db - (p - f64::from(y))).abs() < 1e-15);
        }
    }

    #[test]
    fn zero_input_with_zero_bias_has_zero_weight_gradients() {
        let mut net = ConvNet::init(
            &Architecture { in_channels: 3, hidden: vec![4, 4], kernel_size: 3, leaky_slope: 0.01 },
            &mut ChaCha8Rng::seed_from_u64(9),
        );
        for l in &mut net.layers {
            l.bias.iter_mut().for_each(|b| *b = 0.0);
        }
        let x = Signal::zeros(3, 6);
        let (g, _) = net.backward(&[(&x, 1)]).unwrap();
        for l in &g.layers {
            assert!(l.weights.iter().all(|&w| w == 0.0));
        }
        assert!(g.layers.last().unwrap().bias[0] != 0.0);
        assert!(g.layers.iter().flat_map(|l| l.bias.iter()).any(|&b| b != 0.0));
    }

    #[test]
    fn duplicated_example_keeps_mean_gradient() {
        let net = tiny_net();
        let x = Signal::from_vec(2, 4, vec![0.3, -0.7, 1.1, 0.2, 0.9, -0.4, 0.0, 0.6]).unwrap();
        let (g1, l1) = net.backward(&[(&x, 1)]).unwrap();
        let (g2, l2) = net.backward(&[(&x, 1), (&x, 1)]).unwrap();
        assert!((l1 - l2).abs() < 1e-15);
        for (a, b) in g1.values().zip(g2.values()) {
            assert!((a - b).abs() < 1e-15);
        }
        assert_eq!(net.backward(&[]).unwrap_err(), CnnError::EmptyBatch);
    }

    #[test]
    fn flatten_layouts() {
        let mut t = FeatureTensor::zeros();
        t.set(3, 2, 5, 7.5);
        let a = flatten_input(&t, Layout::FramesAsChannels);
        assert_eq!((a.channels(), a.len()), (60, 119));
        assert_eq!(a.get(3, 39), 7.5);
        assert_eq!(a.as_slice().iter().filter(|&&v| v != 0.0).count(), 1);

        let zero = flatten_input(&FeatureTensor::zeros(), Layout::FramesAsChannels);
        assert!(zero.as_slice().iter().all(|&v| v == 0.0));

        let mut full = FeatureTensor::zeros();
        for fr in 0..60 {
            for f in 0..7 {
                for p in 0..17 {
                    full.set(fr, f, p, (fr * 1000 + f * 100 + p) as f64);
                }
            }
        }
        let a = flatten_input(&full, Layout::FramesAsChannels);
        let b = flatten_input(&full, Layout::FeaturesAsChannels);
        assert_eq!((b.channels(), b.len()), (119, 60));
        for c in 0..60 {
            for q in 0..119 {
                assert_eq!(a.get(c, q), b.get(q, c));
            }
        }
    }

    #[test]
    fn threshold_semantics() {
        let net = ConvNet::init(&Architecture::default_for(Layout::FramesAsChannels), &mut ChaCha8Rng::seed_from_u64(3));
        let bundle = WeightBundle {
            net,
            layout: Layout::FramesAsChannels,
            normalization: Normalization::default(),
            zone_id: 2,
            threshold: DEFAULT_THRESHOLD,
        };
        bundle.validate().unwrap();
        assert_eq!(bundle.label_for(0.7), 1);
        assert_eq!(bundle.label_for(0.3), 0);
        assert_eq!(bundle.label_for(0.5), 1);
        assert_eq!(bundle.label_for(0.5 - 1e-12), 0);
        let p = forward(&bundle, &FeatureTensor::zeros()).unwrap();
        assert!(p > 0.0 && p < 1.0);
        assert_eq!(predict(&bundle, &FeatureTensor::zeros()).unwrap(), bundle.label_for(p));
    }

    #[test]
    fn bundle_validation_catches_layout_and_threshold() {
        let net = ConvNet::init(&Architecture::default_for(Layout::FramesAsChannels), &mut ChaCha8Rng::seed_from_u64(3));
        let mut b = WeightBundle {
            net,
            layout: Layout::FeaturesAsChannels,
            normalization: Normalization::default(),
            zone_id: 0,
            threshold: 0.5,
        };
        assert!(b.validate().is_err());
        b.layout = Layout::FramesAsChannels;
        b.threshold = 1.0;
        assert_eq!(b.validate(), Err(CnnError::InvalidThreshold(1.0)));
    }

    #[test]
    fn output_in_open_interval_and_same_length() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for seed in 0..20u64 {
            let arch = Architecture {
                in_channels: 1 + (seed as usize % 4),
                hidden: vec![1 + (seed as usize % 5); 1 + (seed as usize % 3)],
                kernel_size: [1, 3, 5][seed as usize % 3],
                leaky_slope: 0.01,
            };
            let net = ConvNet::init(&arch, &mut rng);
            let len = 1 + (seed as usize * 7) % 13;
            let x = Signal::from_vec(
                arch.in_channels,
                len,
                (0..arch.in_channels * len).map(|_| rng.random_range(-50.0..50.0)).collect(),
            )
            .unwrap();
            let mut cur = x.clone();
            for l in &net.layers {
                cur = conv1d_forward(&cur, l).unwrap();
                assert_eq!(cur.len(), len);
            }
            let p = net.forward(&x).unwrap();
            assert!(p > 0.0 && p < 1.0);
        }
    }
}
