//! `RDND` sparse descriptor file.
//!
//! ```text
//! "RDND" | u32 version = 1 | u32 N | u32 D
//! N records: f32 x, f32 y, D f32 descriptor
//! u32 CRC32 of all preceding bytes
//! ```

use std::path::Path;

use super::binary::{Reader, Writer};
use crate::error::{ensure, DecodeError, Error, Result};

pub const DESCRIPTORS_MAGIC: &[u8; 4] = b"RDND";
pub const DESCRIPTORS_VERSION: u32 = 1;

/// Descriptors sampled at a set of image locations.
#[derive(Clone, Debug, PartialEq)]
pub struct DescriptorSet {
    dim: usize,
    points: Vec<[f64; 2]>,
    descriptors: Vec<Vec<f64>>,
}

impl DescriptorSet {
    pub fn new(dim: usize, points: Vec<[f64; 2]>, descriptors: Vec<Vec<f64>>) -> Result<Self> {
        ensure!(
            points.len() == descriptors.len(),
            "{} points but {} descriptors",
            points.len(),
            descriptors.len()
        );
        ensure!(descriptors.iter().all(|d| d.len() == dim), "descriptor dimensions differ from {dim}");
        Ok(Self {
            dim,
            points,
            descriptors,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[[f64; 2]] {
        &self.points
    }

    pub fn descriptors(&self) -> &[Vec<f64>] {
        &self.descriptors
    }

    /// The set as stored on disk: every value rounded through `f32`.
    pub fn quantized(&self) -> Self {
        let q = |v: &f64| f64::from(*v as f32);
        Self {
            dim: self.dim,
            points: self.points.iter().map(|p| [q(&p[0]), q(&p[1])]).collect(),
            descriptors: self.descriptors.iter().map(|d| d.iter().map(q).collect()).collect(),
        }
    }
}

pub fn encode_descriptors(set: &DescriptorSet) -> Vec<u8> {
    let mut w = Writer::new(DESCRIPTORS_MAGIC, DESCRIPTORS_VERSION);
    w.u32(set.len() as u32);
    w.u32(set.dim as u32);
    for (p, d) in set.points.iter().zip(&set.descriptors) {
        w.f32(p[0] as f32);
        w.f32(p[1] as f32);
        for &v in d {
            w.f32(v as f32);
        }
    }
    w.finish()
}

pub fn decode_descriptors(bytes: &[u8]) -> Result<DescriptorSet, DecodeError> {
    let mut r = Reader::open(bytes, DESCRIPTORS_MAGIC, DESCRIPTORS_VERSION)?;
    let n = r.u32()? as usize;
    let dim = r.u32()? as usize;
    r.require(n, dim.saturating_add(2).saturating_mul(4))?;
    let mut points = Vec::with_capacity(n);
    let mut descriptors = Vec::with_capacity(n);
    for _ in 0..n {
        let x = r.f32()?;
        let y = r.f32()?;
        points.push([f64::from(x), f64::from(y)]);
        descriptors.push(r.f32_vec(dim)?.into_iter().map(f64::from).collect());
    }
    r.finish()?;
    Ok(DescriptorSet {
        dim,
        points,
        descriptors,
    })
}

pub fn save_descriptors(set: &DescriptorSet, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, encode_descriptors(set)).map_err(|e| Error::io(path, e))
}

pub fn load_descriptors(path: impl AsRef<Path>) -> Result<DescriptorSet> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_descriptors(&bytes).map_err(|e| Error::decode(path, e))
}
