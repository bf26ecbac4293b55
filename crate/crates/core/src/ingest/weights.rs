//! Binary weight-bundle container.
//!
//! Layout (little-endian):
//!
//! ```text
//! magic    "CAEW"
//! version  u32 = 1
//! sha256   32 bytes over everything that follows
//! zone_id  u8
//! layout   u8 (0 frames-as-channels, 1 features-as-channels)
//! slope    f64
//! thresh   f64
//! norm     7 × (mean f64, std f64)
//! layers   u32 count, then per layer:
//!          in u32, out u32, kernel u32, out·in·kernel f64 weights, out f64 biases
//! ```

use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::cnn::{ConvLayer, ConvNet, Layout, WeightBundle};
use crate::features::{Normalization, FEATURES};

pub const WEIGHTS_MAGIC: &[u8; 4] = b"CAEW";
pub const WEIGHTS_VERSION: u32 = 1;
const HEADER_LEN: usize = 4 + 4 + 32;
/// Guards against absurd allocations when a count field is garbage.
const MAX_LAYER_ELEMENTS: usize = 1 << 26;

#[derive(Debug, Error)]
pub enum WeightsError {
    #[error("not a weight bundle (bad magic)")]
    BadMagic,
    #[error("unsupported weight bundle version {0}")]
    UnsupportedVersion(u32),
    #[error("weight bundle shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("weight bundle checksum mismatch")]
    CorruptPayload,
    #[error("invalid weight bundle: {0}")]
    Invalid(#[from] crate::cnn::CnnError),
}

/// Serializes a validated bundle.
pub fn save_weights(bundle: &WeightBundle) -> Result<Vec<u8>, WeightsError> {
    bundle.validate()?;
    let mut body = Vec::new();
    body.push(bundle.zone_id);
    body.push(bundle.layout.tag());
    put_f64(&mut body, bundle.net.leaky_slope);
    put_f64(&mut body, bundle.threshold);
    for f in 0..FEATURES {
        put_f64(&mut body, bundle.normalization.mean[f]);
        put_f64(&mut body, bundle.normalization.std[f]);
    }
    put_u32(&mut body, bundle.net.layers.len() as u32);
    for layer in &bundle.net.layers {
        put_u32(&mut body, layer.in_channels as u32);
        put_u32(&mut body, layer.out_channels as u32);
        put_u32(&mut body, layer.kernel_size as u32);
        layer.weights.iter().for_each(|w| put_f64(&mut body, *w));
        layer.bias.iter().for_each(|b| put_f64(&mut body, *b));
    }

    let mut out = Vec::with_capacity(HEADER_LEN + body.len());
    out.extend_from_slice(WEIGHTS_MAGIC);
    put_u32(&mut out, WEIGHTS_VERSION);
    out.extend_from_slice(&Sha256::digest(&body));
    out.extend_from_slice(&body);
    Ok(out)
}

/// Parses and verifies a bundle written by [`save_weights`].
pub fn load_weights(bytes: &[u8]) -> Result<WeightBundle, WeightsError> {
    if bytes.len() < 8 || &bytes[..4] != WEIGHTS_MAGIC {
        return Err(WeightsError::BadMagic);
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes"));
    if version != WEIGHTS_VERSION {
        return Err(WeightsError::UnsupportedVersion(version));
    }
    if bytes.len() < HEADER_LEN {
        return Err(WeightsError::ShapeMismatch("header truncated".into()));
    }
    let digest = &bytes[8..HEADER_LEN];
    let body = &bytes[HEADER_LEN..];
    let bundle = parse_body(body)?;
    if Sha256::digest(body).as_slice() != digest {
        return Err(WeightsError::CorruptPayload);
    }
    bundle.validate()?;
    Ok(bundle)
}

fn parse_body(body: &[u8]) -> Result<WeightBundle, WeightsError> {
    let mut r = Reader { buf: body, pos: 0 };
    let zone_id = r.u8()?;
    let tag = r.u8()?;
    let layout =
        Layout::from_tag(tag).ok_or_else(|| WeightsError::ShapeMismatch(format!("unknown layout tag {tag}")))?;
    let leaky_slope = r.f64()?;
    let threshold = r.f64()?;
    let mut normalization = Normalization::default();
    for f in 0..FEATURES {
        normalization.mean[f] = r.f64()?;
        normalization.std[f] = r.f64()?;
    }
    let n_layers = r.u32()? as usize;
    let mut layers = Vec::new();
    for i in 0..n_layers {
        let in_channels = r.u32()? as usize;
        let out_channels = r.u32()? as usize;
        let kernel_size = r.u32()? as usize;
        let n_weights = out_channels
            .checked_mul(in_channels)
            .and_then(|v| v.checked_mul(kernel_size))
            .filter(|&v| v <= MAX_LAYER_ELEMENTS)
            .ok_or_else(|| WeightsError::ShapeMismatch(format!("layer {i} is implausibly large")))?;
        let weights = (0..n_weights).map(|_| r.f64()).collect::<Result<Vec<_>, _>>()?;
        let bias = (0..out_channels).map(|_| r.f64()).collect::<Result<Vec<_>, _>>()?;
        layers.push(ConvLayer { in_channels, out_channels, kernel_size, weights, bias });
    }
    if r.pos != body.len() {
        return Err(WeightsError::ShapeMismatch(format!("{} trailing bytes", body.len() - r.pos)));
    }
    Ok(WeightBundle { net: ConvNet { layers, leaky_slope }, layout, normalization, zone_id, threshold })
}

fn put_u32(buf: &mut Vec<u8>, v: u32) {
    buf.extend_from_slice(&v.to_le_bytes());
}

fn put_f64(buf: &mut Vec<u8>, v: f64) {
    buf.extend_from_slice(&v.to_le_bytes());
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], WeightsError> {
        let end = self.pos + n;
        if end > self.buf.len() {
            return Err(WeightsError::ShapeMismatch(format!("payload truncated at byte {}", self.pos)));
        }
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8, WeightsError> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32, WeightsError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn f64(&mut self) -> Result<f64, WeightsError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cnn::Architecture;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn bundle(seed: u64, layout: Layout) -> WeightBundle {
        let arch = Architecture { hidden: vec![4, 3], ..Architecture::default_for(layout) };
        let net = ConvNet::init(&arch, &mut ChaCha8Rng::seed_from_u64(seed));
        let mut normalization = Normalization::default();
        for f in 0..FEATURES {
            normalization.mean[f] = f as f64 * 1.5 - 2.0;
            normalization.std[f] = 0.25 + f as f64;
        }
        WeightBundle { net, layout, normalization, zone_id: (seed % 4) as u8, threshold: 0.4 }
    }

    #[test]
    fn round_trip_is_exact() {
        for layout in [Layout::FramesAsChannels, Layout::FeaturesAsChannels] {
            let b = bundle(3, layout);
            let bytes = save_weights(&b).unwrap();
            assert_eq!(load_weights(&bytes).unwrap(), b);
            assert_eq!(save_weights(&load_weights(&bytes).unwrap()).unwrap(), bytes);
        }
    }

    #[test]
    fn truncated_final_layer_is_shape_mismatch() {
        let bytes = save_weights(&bundle(1, Layout::FramesAsChannels)).unwrap();
        let cut = &bytes[..bytes.len() - 16];
        assert!(matches!(load_weights(cut), Err(WeightsError::ShapeMismatch(_))));
    }

    #[test]
    fn unknown_version_is_rejected() {
        let mut bytes = save_weights(&bundle(1, Layout::FramesAsChannels)).unwrap();
        bytes[4..8].copy_from_slice(&999u32.to_le_bytes());
        assert!(matches!(load_weights(&bytes), Err(WeightsError::UnsupportedVersion(999))));
    }

    #[test]
    fn flipped_weight_byte_fails_checksum() {
        let mut bytes = save_weights(&bundle(1, Layout::FramesAsChannels)).unwrap();
        let last = bytes.len() - 1;
        bytes[last] ^= 0x40;
        assert!(matches!(load_weights(&bytes), Err(WeightsError::CorruptPayload)));
    }

    #[test]
    fn bad_magic_and_invalid_bundles() {
        assert!(matches!(load_weights(b"nope"), Err(WeightsError::BadMagic)));
        let mut b = bundle(1, Layout::FramesAsChannels);
        b.threshold = 1.0;
        assert!(matches!(save_weights(&b), Err(WeightsError::Invalid(_))));
    }

    proptest! {
        #[test]
        fn random_bundles_round_trip(seed in any::<u64>(), threshold in 0.01f64..0.99, slope in 0.0f64..1.0) {
            let mut b = bundle(seed, Layout::FramesAsChannels);
            b.threshold = threshold;
            b.net.leaky_slope = slope;
            let bytes = save_weights(&b).unwrap();
            prop_assert_eq!(load_weights(&bytes).unwrap(), b);
        }
    }
}
