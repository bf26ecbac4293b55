//! Finite-difference verification of [`ConvNet::backward`].

use super::layer::Signal;
use super::network::{bce_loss, ConvNet};
use super::CnnError;

pub const DEFAULT_GRADCHECK_EPS: f64 = 1e-4;

/// Per-parameter comparison of analytic and central-difference gradients.
#[derive(Clone, Debug)]
pub struct GradCheckReport {
    pub analytic: Vec<f64>,
    pub numeric: Vec<f64>,
    pub max_relative_error: f64,
}

fn loss_at(net: &ConvNet, input: &Signal, label: u8) -> Result<f64, CnnError> {
    Ok(bce_loss(net.forward(input)?, label))
}

/// `|a − n| / max(|a|, |n|, 1e-8)`.
pub fn relative_error(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(1e-8)
}

/// Max relative error between analytic gradients and central differences
/// with step `eps`, over every weight and bias.
pub fn grad_check(net: &ConvNet, input: &Signal, label: u8, eps: f64) -> Result<f64, CnnError> {
    Ok(grad_check_report(net, input, label, eps)?.max_relative_error)
}

pub fn grad_check_report(net: &ConvNet, input: &Signal, label: u8, eps: f64) -> Result<GradCheckReport, CnnError> {
    let (grads, _) = net.backward(&[(input, label)])?;
    let analytic: Vec<f64> = grads.values().copied().collect();
    let mut probe = net.clone();
    let mut numeric = Vec::with_capacity(analytic.len());
    for k in 0..analytic.len() {
        let original = *probe.params_mut().nth(k).expect("index in range");
        *probe.params_mut().nth(k).expect("index in range") = original + eps;
        let up = loss_at(&probe, input, label)?;
        *probe.params_mut().nth(k).expect("index in range") = original - eps;
        let down = loss_at(&probe, input, label)?;
        *probe.params_mut().nth(k).expect("index in range") = original;
        numeric.push((up - down) / (2.0 * eps));
    }
    let max_relative_error = analytic
        .iter()
        .zip(&numeric)
        .map(|(&a, &n)| relative_error(a, n))
        .fold(0.0, f64::max);
    Ok(GradCheckReport { analytic, numeric, max_relative_error })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cnn::network::Architecture;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_case(seed: u64, slope: f64) -> (ConvNet, Signal, u8) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let in_channels = rng.random_range(1..=4);
        let depth = rng.random_range(1..=2);
        let hidden = (0..depth).map(|_| rng.random_range(1..=8)).collect();
        let arch = Architecture { in_channels, hidden, kernel_size: 3, leaky_slope: slope };
        let mut net = ConvNet::init(&arch, &mut rng);
        for l in &mut net.layers {
            l.bias.iter_mut().for_each(|b| *b = rng.random_range(-0.5..0.5));
        }
        let len = rng.random_range(3..=8);
        let x = Signal::from_vec(
            in_channels,
            len,
            (0..in_channels * len).map(|_| rng.random_range(-1.0..1.0)).collect(),
        )
        .unwrap();
        (net, x, rng.random_range(0..=1))
    }

    #[test]
    fn random_miniatures_agree() {
        for seed in 0..10 {
            let (net, x, y) = random_case(seed, 0.01);
            let err = grad_check(&net, &x, y, DEFAULT_GRADCHECK_EPS).unwrap();
            assert!(err < 1e-4, "seed {seed}: {err}");
        }
    }

    #[test]
    fn linear_network_is_near_exact() {
        for seed in 100..105 {
            let (net, x, y) = random_case(seed, 1.0);
            let err = grad_check(&net, &x, y, DEFAULT_GRADCHECK_EPS).unwrap();
            assert!(err < 1e-6, "seed {seed}: {err}");
        }
    }
}
