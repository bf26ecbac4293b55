use serde::{Deserialize, Serialize};

use super::CnnError;

/// A channels × length matrix, row-major (one row per channel).
#[derive(Clone, Debug, PartialEq)]
pub struct Signal {
    channels: usize,
    len: usize,
    data: Vec<f64>,
}

impl Signal {
    pub fn zeros(channels: usize, len: usize) -> Self {
        Signal { channels, len, data: vec![0.0; channels * len] }
    }

    pub fn from_vec(channels: usize, len: usize, data: Vec<f64>) -> Result<Self, CnnError> {
        if data.len() != channels * len {
            return Err(CnnError::ShapeMismatch(format!(
                "{} values for a {channels}x{len} signal",
                data.len()
            )));
        }
        Ok(Signal { channels, len, data })
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn row(&self, c: usize) -> &[f64] {
        &self.data[c * self.len..(c + 1) * self.len]
    }

    pub fn row_mut(&mut self, c: usize) -> &mut [f64] {
        &mut self.data[c * self.len..(c + 1) * self.len]
    }

    pub fn get(&self, c: usize, i: usize) -> f64 {
        self.data[c * self.len + i]
    }

    pub fn set(&mut self, c: usize, i: usize, v: f64) {
        self.data[c * self.len + i] = v;
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }
}

/// 1-D convolution with stride 1 and "same" zero padding.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvLayer {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel_size: usize,
    /// `out × in × kernel`, row-major.
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl ConvLayer {
    pub fn zeros(in_channels: usize, out_channels: usize, kernel_size: usize) -> Self {
        ConvLayer {
            in_channels,
            out_channels,
            kernel_size,
            weights: vec![0.0; out_channels * in_channels * kernel_size],
            bias: vec![0.0; out_channels],
        }
    }

    pub fn validate(&self) -> Result<(), CnnError> {
        if self.kernel_size.is_multiple_of(2) {
            return Err(CnnError::ShapeMismatch(format!("kernel size {} is even", self.kernel_size)));
        }
        if self.in_channels == 0 || self.out_channels == 0 {
            return Err(CnnError::ShapeMismatch("layer has zero channels".into()));
        }
        if self.weights.len() != self.out_channels * self.in_channels * self.kernel_size {
            return Err(CnnError::ShapeMismatch(format!(
                "{} weights for {}x{}x{}",
                self.weights.len(),
                self.out_channels,
                self.in_channels,
                self.kernel_size
            )));
        }
        if self.bias.len() != self.out_channels {
            return Err(CnnError::ShapeMismatch(format!(
                "{} biases for {} output channels",
                self.bias.len(),
                self.out_channels
            )));
        }
        Ok(())
    }

    pub fn weight(&self, o: usize, c: usize, j: usize) -> f64 {
        self.weights[(o * self.in_channels + c) * self.kernel_size + j]
    }

    fn kernel(&self, o: usize, c: usize) -> &[f64] {
        let start = (o * self.in_channels + c) * self.kernel_size;
        &self.weights[start..start + self.kernel_size]
    }

    pub fn param_count(&self) -> usize {
        self.weights.len() + self.bias.len()
    }
}

/// For kernel tap `j`, output positions `[lo, hi)` read input `i + j - pad`.
#[inline]
fn tap_range(j: usize, pad: usize, len: usize) -> (usize, usize) {
    let lo = pad.saturating_sub(j);
    let hi = (len + pad).saturating_sub(j).min(len);
    (lo, hi)
}

/// Cross-correlation with zero padding of `(kernel - 1) / 2` on each side:
/// `out[o][i] = bias[o] + Σ_c Σ_j w[o][c][j] · in[c][i + j - pad]`.
pub fn conv1d_forward(input: &Signal, layer: &ConvLayer) -> Result<Signal, CnnError> {
    if input.channels() != layer.in_channels {
        return Err(CnnError::ChannelMismatch { expected: layer.in_channels, found: input.channels() });
    }
    let len = input.len();
    let pad = (layer.kernel_size - 1) / 2;
    let mut out = Signal::zeros(layer.out_channels, len);
    for o in 0..layer.out_channels {
        let row = out.row_mut(o);
        row.fill(layer.bias[o]);
        for c in 0..layer.in_channels {
            let x = input.row(c);
            for (j, &w) in layer.kernel(o, c).iter().enumerate() {
                if w == 0.0 {
                    continue;
                }
                let (lo, hi) = tap_range(j, pad, len);
                if hi <= lo {
                    continue;
                }
                let src = &x[lo + j - pad..hi + j - pad];
                for (y, &v) in row[lo..hi].iter_mut().zip(src) {
                    *y += w * v;
                }
            }
        }
    }
    Ok(out)
}

/// Gradients of one convolution given the upstream gradient `grad_out`.
/// Weight and bias gradients are accumulated into `grad_w` / `grad_b`; the
/// input gradient is returned when `want_input` is set.
pub(crate) fn conv1d_backward(
    input: &Signal,
    layer: &ConvLayer,
    grad_out: &Signal,
    grad_w: &mut [f64],
    grad_b: &mut [f64],
    want_input: bool,
) -> Option<Signal> {
    let len = input.len();
    let k = layer.kernel_size;
    let pad = (k - 1) / 2;
    let mut grad_in = want_input.then(|| Signal::zeros(layer.in_channels, len));
    for o in 0..layer.out_channels {
        let g = grad_out.row(o);
        grad_b[o] += g.iter().sum::<f64>();
        for c in 0..layer.in_channels {
            let x = input.row(c);
            let base = (o * layer.in_channels + c) * k;
            for j in 0..k {
                let (lo, hi) = tap_range(j, pad, len);
                if hi <= lo {
                    continue;
                }
                let src = &x[lo + j - pad..hi + j - pad];
                grad_w[base + j] += g[lo..hi].iter().zip(src).map(|(a, b)| a * b).sum::<f64>();
                if let Some(gi) = grad_in.as_mut() {
                    let w = layer.weights[base + j];
                    if w != 0.0 {
                        let dst = &mut gi.row_mut(c)[lo + j - pad..hi + j - pad];
                        for (d, &v) in dst.iter_mut().zip(&g[lo..hi]) {
                            *d += w * v;
                        }
                    }
                }
            }
        }
    }
    grad_in
}

/// `x` for `x >= 0`, `slope * x` otherwise.
pub fn leaky_relu(x: &[f64], slope: f64) -> Vec<f64> {
    x.iter().map(|&v| leaky(v, slope)).collect()
}

#[inline]
pub(crate) fn leaky(v: f64, slope: f64) -> f64 {
    if v >= 0.0 {
        v
    } else {
        slope * v
    }
}
