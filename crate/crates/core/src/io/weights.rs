//! `RDNW` weights file.
//!
//! ```text
//! "RDNW" | u32 version = 1 | u32 layer count
//! per layer: u32 out, u32 in, u32 kh, u32 kw, u32 dilation,
//!            out*in*kh*kw f32 kernel, out f32 bias
//! u32 CRC32 of all preceding bytes
//! ```
//! All integers and reals little-endian.

use std::path::Path;

use super::binary::{Reader, Writer};
use crate::error::{DecodeError, Error, Result};
use crate::model::{RdnConfig, RdnWeights};
use crate::tensor::ConvLayer;

pub const WEIGHTS_MAGIC: &[u8; 4] = b"RDNW";
pub const WEIGHTS_VERSION: u32 = 1;

pub fn encode_weights(weights: &RdnWeights) -> Vec<u8> {
    let layers: Vec<&ConvLayer> = weights.layers().collect();
    let mut w = Writer::new(WEIGHTS_MAGIC, WEIGHTS_VERSION);
    w.u32(layers.len() as u32);
    for layer in layers {
        w.u32(layer.out_channels() as u32);
        w.u32(layer.in_channels() as u32);
        w.u32(layer.kernel_size() as u32);
        w.u32(layer.kernel_size() as u32);
        w.u32(layer.dilation() as u32);
        for &v in &layer.kernel {
            w.f32(v as f32);
        }
        for &v in &layer.bias {
            w.f32(v as f32);
        }
    }
    w.finish()
}

/// Decodes a weights file and checks it against `config`. Nothing is
/// returned unless the whole file parses and its checksum matches.
pub fn decode_weights(bytes: &[u8], config: &RdnConfig) -> Result<RdnWeights, DecodeError> {
    let mut r = Reader::open(bytes, WEIGHTS_MAGIC, WEIGHTS_VERSION)?;
    let count = r.u32()? as usize;
    // smallest possible layer record is 5 u32 + one kernel + one bias value
    r.require(count, 28)?;
    let mut raw = Vec::with_capacity(count);
    for _ in 0..count {
        let out_c = r.u32()? as usize;
        let in_c = r.u32()? as usize;
        let kh = r.u32()? as usize;
        let kw = r.u32()? as usize;
        let dilation = r.u32()? as usize;
        let kernel = r.f32_vec(out_c.saturating_mul(in_c).saturating_mul(kh).saturating_mul(kw))?;
        let bias = r.f32_vec(out_c)?;
        raw.push((out_c, in_c, kh, kw, dilation, kernel, bias));
    }
    r.finish()?;

    let expected = config.layer_shapes();
    if raw.len() != expected.len() {
        return Err(DecodeError::ShapeMismatch(format!(
            "file has {} layers, config expects {}",
            raw.len(),
            expected.len()
        )));
    }
    let mut layers = Vec::with_capacity(raw.len());
    for (i, ((out_c, in_c, kh, kw, dil, kernel, bias), want)) in raw.into_iter().zip(expected).enumerate() {
        if kh != kw || (out_c, in_c, kh, dil) != want {
            return Err(DecodeError::ShapeMismatch(format!(
                "layer {i}: file ({out_c}, {in_c}, {kh}x{kw}, dilation {dil}) vs config {want:?}"
            )));
        }
        let layer = ConvLayer::new(
            out_c,
            in_c,
            kh,
            dil,
            kernel.into_iter().map(f64::from).collect(),
            bias.into_iter().map(f64::from).collect(),
        )
        .map_err(|e| DecodeError::ShapeMismatch(e.to_string()))?;
        layers.push(layer);
    }
    RdnWeights::from_layers(layers).map_err(|e| DecodeError::ShapeMismatch(e.to_string()))
}

pub fn save_weights(weights: &RdnWeights, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, encode_weights(weights)).map_err(|e| Error::io(path, e))
}

pub fn load_weights(path: impl AsRef<Path>, config: &RdnConfig) -> Result<RdnWeights> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_weights(&bytes, config).map_err(|e| Error::decode(path, e))
}
