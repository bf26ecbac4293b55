use super::network::{ConvNet, Gradients};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig { lr: 1e-3, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

/// First/second moment estimates and the step counter.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub step: u64,
}

impl AdamState {
    pub fn new(param_count: usize) -> Self {
        AdamState { m: vec![0.0; param_count], v: vec![0.0; param_count], step: 0 }
    }
}

/// One bias-corrected Adam update over flat parameter and gradient slices.
pub fn adam_step(params: &mut [f64], grads: &[f64], state: &mut AdamState, hyper: &AdamConfig) {
    assert_eq!(params.len(), grads.len(), "parameter/gradient length mismatch");
    assert_eq!(params.len(), state.m.len(), "optimizer state length mismatch");
    adam_update(params.iter_mut(), grads.iter(), state, hyper);
}

fn adam_update<'a, 'b>(
    params: impl Iterator<Item = &'a mut f64>,
    grads: impl Iterator<Item = &'b f64>,
    state: &mut AdamState,
    hyper: &AdamConfig,
) {
    state.step += 1;
    let t = state.step as i32;
    let c1 = 1.0 - hyper.beta1.powi(t);
    let c2 = 1.0 - hyper.beta2.powi(t);
    for (((p, &g), m), v) in params.zip(grads).zip(state.m.iter_mut()).zip(state.v.iter_mut()) {
        *m = hyper.beta1 * *m + (1.0 - hyper.beta1) * g;
        *v = hyper.beta2 * *v + (1.0 - hyper.beta2) * g * g;
        let m_hat = *m / c1;
        let v_hat = *v / c2;
        *p -= hyper.lr * m_hat / (v_hat.sqrt() + hyper.eps);
    }
}

/// Applies one Adam step to every parameter of `net`.
pub fn adam_step_net(net: &mut ConvNet, grads: &Gradients, state: &mut AdamState, hyper: &AdamConfig) {
    assert_eq!(net.param_count(), state.m.len(), "optimizer state length mismatch");
    adam_update(net.params_mut(), grads.values(), state, hyper);
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_step_moves_by_lr_against_gradient_sign() {
        let hyper = AdamConfig::default();
        let mut p = vec![1.0, 1.0, 1.0];
        let g = vec![0.3, -5.0, 1e-3];
        let mut s = AdamState::new(3);
        adam_step(&mut p, &g, &mut s, &hyper);
        for (pi, gi) in p.iter().zip(&g) {
            let step = pi - 1.0;
            // |g| / (|g| + eps) ≈ 1
            let expected = -hyper.lr * gi.signum() * gi.abs() / (gi.abs() + hyper.eps);
            assert!((step - expected).abs() < 1e-15, "{step} vs {expected}");
        }
    }

    #[test]
    fn zero_gradient_leaves_weights() {
        let mut p = vec![0.25, -3.0];
        let mut s = AdamState::new(2);
        for _ in 0..100 {
            adam_step(&mut p, &[0.0, 0.0], &mut s, &AdamConfig::default());
        }
        assert_eq!(p, vec![0.25, -3.0]);
        assert_eq!(s.step, 100);
    }

    #[test]
    fn step_one_is_scale_invariant() {
        let mut p = vec![0.0, 0.0];
        let mut s = AdamState::new(2);
        adam_step(&mut p, &[0.2, 0.4], &mut s, &AdamConfig::default());
        assert!((p[0].abs() - p[1].abs()).abs() < 1e-9);
    }

    #[test]
    fn later_steps_use_bias_correction() {
        let hyper = AdamConfig::default();
        let mut p = vec![0.0];
        let mut s = AdamState::new(1);
        for _ in 0..5 {
            adam_step(&mut p, &[2.0], &mut s, &hyper);
        }
        // constant gradient: m_hat = g, v_hat = g^2 each step
        assert!((p[0] + 5.0 * hyper.lr * 2.0 / (2.0 + hyper.eps)).abs() < 1e-12);
    }
}
