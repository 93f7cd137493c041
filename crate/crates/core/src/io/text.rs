//! Tab-separated text formats: match lists, model files, correspondence
//! lists, pair manifests and loss curves. Blank lines and lines starting with
//! `#` are skipped when reading.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::error::{DecodeError, Error, Result};
use crate::geometry::{ModelKind, PlanarModel};
use crate::matcher::{Keypoint, Match};
use crate::trainer::{Correspondence, EpochStats};

fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Non-empty, non-comment lines with their 1-based line numbers.
fn content_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim_end_matches('\r')))
        .filter(|(_, l)| !l.trim().is_empty() && !l.trim_start().starts_with('#'))
}

fn malformed(line: usize, detail: impl Into<String>) -> DecodeError {
    DecodeError::Malformed {
        line,
        detail: detail.into(),
    }
}

fn fields<'a>(line: usize, text: &'a str, expected: usize) -> Result<Vec<&'a str>, DecodeError> {
    let f: Vec<&str> = text.split('\t').collect();
    if f.len() != expected {
        return Err(malformed(line, format!("expected {expected} tab-separated fields, found {}", f.len())));
    }
    Ok(f)
}

fn real(line: usize, s: &str) -> Result<f64, DecodeError> {
    match s.trim().parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        _ => Err(malformed(line, format!("not a finite number: {s:?}"))),
    }
}

fn index(line: usize, s: &str) -> Result<usize, DecodeError> {
    s.trim()
        .parse::<usize>()
        .map_err(|_| malformed(line, format!("not a non-negative integer: {s:?}")))
}

/// One line of a match file: indices, both pixel positions and the
/// descriptor distance.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MatchRecord {
    pub idx_a: usize,
    pub idx_b: usize,
    pub a: [f64; 2],
    pub b: [f64; 2],
    pub distance: f64,
}

impl MatchRecord {
    pub fn from_match(m: &Match, kps_a: &[Keypoint], kps_b: &[Keypoint]) -> Self {
        Self {
            idx_a: m.idx_a,
            idx_b: m.idx_b,
            a: kps_a[m.idx_a].as_point(),
            b: kps_b[m.idx_b].as_point(),
            distance: m.distance,
        }
    }
}

pub fn format_matches(records: &[MatchRecord]) -> String {
    let mut out = String::new();
    for r in records {
        let _ = writeln!(
            out,
            "{}\t{}\t{:.6}\t{:.6}\t{:.6}\t{:.6}\t{:.6}",
            r.idx_a, r.idx_b, r.a[0], r.a[1], r.b[0], r.b[1], r.distance
        );
    }
    out
}

pub fn parse_matches(text: &str) -> Result<Vec<MatchRecord>, DecodeError> {
    content_lines(text)
        .map(|(n, l)| {
            let f = fields(n, l, 7)?;
            Ok(MatchRecord {
                idx_a: index(n, f[0])?,
                idx_b: index(n, f[1])?,
                a: [real(n, f[2])?, real(n, f[3])?],
                b: [real(n, f[4])?, real(n, f[5])?],
                distance: real(n, f[6])?,
            })
        })
        .collect()
}

pub fn write_matches(path: impl AsRef<Path>, records: &[MatchRecord]) -> Result<()> {
    write_text(path.as_ref(), &format_matches(records))
}

pub fn read_matches(path: impl AsRef<Path>) -> Result<Vec<MatchRecord>> {
    let path = path.as_ref();
    parse_matches(&read_text(path)?).map_err(|e| Error::decode(path, e))
}

/// Kind on the first line, then the three matrix rows with 12 significant digits.
pub fn format_model(model: &PlanarModel) -> String {
    let mut out = format!("{}\n", model.kind().name());
    for row in model.matrix() {
        let _ = writeln!(out, "{:.11e} {:.11e} {:.11e}", row[0], row[1], row[2]);
    }
    out
}

pub fn parse_model(text: &str) -> Result<PlanarModel, DecodeError> {
    let mut lines = content_lines(text);
    let (n, header) = lines.next().ok_or_else(|| malformed(1, "empty model file"))?;
    let kind: ModelKind = header
        .trim()
        .parse()
        .map_err(|_| malformed(n, format!("unknown model kind {:?}", header.trim())))?;
    let mut m = [[0.0; 3]; 3];
    for row in &mut m {
        let (n, l) = lines.next().ok_or_else(|| malformed(n + 1, "expected 3 matrix rows"))?;
        let vals: Vec<&str> = l.split_whitespace().collect();
        if vals.len() != 3 {
            return Err(malformed(n, format!("expected 3 reals, found {}", vals.len())));
        }
        for (cell, v) in row.iter_mut().zip(vals) {
            *cell = real(n, v)?;
        }
    }
    if let Some((n, _)) = lines.next() {
        return Err(malformed(n, "unexpected content after matrix"));
    }
    PlanarModel::from_kind(kind, m).map_err(|e| malformed(1, e.to_string()))
}

pub fn write_model(path: impl AsRef<Path>, model: &PlanarModel) -> Result<()> {
    write_text(path.as_ref(), &format_model(model))
}

pub fn read_model(path: impl AsRef<Path>) -> Result<PlanarModel> {
    let path = path.as_ref();
    parse_model(&read_text(path)?).map_err(|e| Error::decode(path, e))
}

pub fn format_correspondences(c: &[Correspondence]) -> String {
    let mut out = String::new();
    for c in c {
        let _ = writeln!(out, "{}\t{}\t{}\t{}", c.p1.x, c.p1.y, c.p2.x, c.p2.y);
    }
    out
}

/// Coordinates must be non-negative integers; correspondences live on the pixel grid.
pub fn parse_correspondences(text: &str) -> Result<Vec<Correspondence>, DecodeError> {
    content_lines(text)
        .map(|(n, l)| {
            let f = fields(n, l, 4)?;
            let mut v = [0usize; 4];
            for (slot, s) in v.iter_mut().zip(&f) {
                let r = real(n, s)?;
                if r < 0.0 || r.fract() != 0.0 {
                    return Err(malformed(n, format!("not a pixel coordinate: {s:?}")));
                }
                *slot = r as usize;
            }
            Ok(Correspondence {
                p1: Keypoint::new(v[0], v[1]),
                p2: Keypoint::new(v[2], v[3]),
            })
        })
        .collect()
}

pub fn write_correspondences(path: impl AsRef<Path>, c: &[Correspondence]) -> Result<()> {
    write_text(path.as_ref(), &format_correspondences(c))
}

pub fn read_correspondences(path: impl AsRef<Path>) -> Result<Vec<Correspondence>> {
    let path = path.as_ref();
    parse_correspondences(&read_text(path)?).map_err(|e| Error::decode(path, e))
}

/// One pair of a manifest. Relative paths are resolved against the
/// manifest's directory when read.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ManifestEntry {
    pub image1: PathBuf,
    pub image2: PathBuf,
    pub model: PathBuf,
    pub correspondences: PathBuf,
}

pub fn format_manifest(entries: &[ManifestEntry]) -> String {
    let mut out = String::new();
    for e in entries {
        let _ = writeln!(
            out,
            "{}\t{}\t{}\t{}",
            e.image1.display(),
            e.image2.display(),
            e.model.display(),
            e.correspondences.display()
        );
    }
    out
}

pub fn parse_manifest(text: &str, base: &Path) -> Result<Vec<ManifestEntry>, DecodeError> {
    content_lines(text)
        .map(|(n, l)| {
            let f = fields(n, l, 4)?;
            if f.iter().any(|s| s.trim().is_empty()) {
                return Err(malformed(n, "empty path"));
            }
            let p = |s: &str| base.join(s.trim());
            Ok(ManifestEntry {
                image1: p(f[0]),
                image2: p(f[1]),
                model: p(f[2]),
                correspondences: p(f[3]),
            })
        })
        .collect()
}

pub fn write_manifest(path: impl AsRef<Path>, entries: &[ManifestEntry]) -> Result<()> {
    write_text(path.as_ref(), &format_manifest(entries))
}

pub fn read_manifest(path: impl AsRef<Path>) -> Result<Vec<ManifestEntry>> {
    let path = path.as_ref();
    let base = path.parent().unwrap_or(Path::new(""));
    parse_manifest(&read_text(path)?, base).map_err(|e| Error::decode(path, e))
}

pub fn format_loss_curve(curve: &[EpochStats]) -> String {
    let mut out = String::new();
    for s in curve {
        let _ = writeln!(out, "{}\t{}\t{}", s.epoch, s.mean_loss, s.lr);
    }
    out
}

/// `(epoch, mean loss, learning rate)` per line.
pub fn parse_loss_curve(text: &str) -> Result<Vec<(usize, f64, f64)>, DecodeError> {
    content_lines(text)
        .map(|(n, l)| {
            let f = fields(n, l, 3)?;
            Ok((index(n, f[0])?, real(n, f[1])?, real(n, f[2])?))
        })
        .collect()
}

pub fn write_loss_curve(path: impl AsRef<Path>, curve: &[EpochStats]) -> Result<()> {
    write_text(path.as_ref(), &format_loss_curve(curve))
}
