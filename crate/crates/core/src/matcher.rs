//! Uniform-grid keypoints, brute-force nearest-neighbour descriptor matching
//! and matching-accuracy evaluation against a known homography.

use crate::error::{ensure, Error, Result};
use crate::geometry::PlanarModel;

/// Integer pixel coordinate: `x` is the column, `y` the row.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Keypoint {
    pub x: usize,
    pub y: usize,
}

impl Keypoint {
    pub const fn new(x: usize, y: usize) -> Self {
        Self { x, y }
    }

    pub fn chebyshev(&self, other: &Keypoint) -> usize {
        self.x.abs_diff(other.x).max(self.y.abs_diff(other.y))
    }

    pub fn as_point(&self) -> [f64; 2] {
        [self.x as f64, self.y as f64]
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Match {
    pub idx_a: usize,
    pub idx_b: usize,
    pub distance: f64,
}

/// Keypoints at `(margin + i * stride, margin + j * stride)` strictly inside
/// the band `[margin, H - margin) x [margin, W - margin)`, row-major.
pub fn uniform_grid(height: usize, width: usize, stride: usize, margin: usize) -> Result<Vec<Keypoint>> {
    ensure!(stride >= 1, "grid stride must be positive");
    let (ys, xs) = (height.saturating_sub(margin), width.saturating_sub(margin));
    let mut out = Vec::new();
    for y in (margin..ys).step_by(stride) {
        for x in (margin..xs).step_by(stride) {
            out.push(Keypoint::new(x, y));
        }
    }
    Ok(out)
}

#[inline]
pub fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

#[derive(Clone, Debug)]
pub struct MatchOptions {
    /// Keep a pair only when each side is the other's nearest neighbour.
    pub mutual: bool,
    /// Lowe ratio: keep when `best < ratio * second_best` (distances, A side).
    pub ratio: Option<f64>,
}

impl Default for MatchOptions {
    fn default() -> Self {
        Self {
            mutual: true,
            ratio: None,
        }
    }
}

fn check_sets(a: &[Vec<f64>], b: &[Vec<f64>]) -> Result<usize> {
    ensure!(!a.is_empty() && !b.is_empty(), "descriptor sets must be non-empty");
    let d = a[0].len();
    ensure!(
        a.iter().chain(b).all(|v| v.len() == d),
        "descriptor dimensions differ"
    );
    Ok(d)
}

/// Nearest neighbour in `B` for every descriptor in `A` by exact squared
/// Euclidean distance; ties go to the lowest index. Each entry is
/// `(index, best squared distance, second-best squared distance)`.
fn nearest(a: &[Vec<f64>], b: &[Vec<f64>]) -> Vec<(usize, f64, f64)> {
    a.iter()
        .map(|q| {
            let mut best = (0, f64::INFINITY, f64::INFINITY);
            for (j, c) in b.iter().enumerate() {
                let d = squared_distance(q, c);
                if d < best.1 {
                    best = (j, d, best.1);
                } else if d < best.2 {
                    best.2 = d;
                }
            }
            best
        })
        .collect()
}

pub fn match_descriptors(a: &[Vec<f64>], b: &[Vec<f64>], options: &MatchOptions) -> Result<Vec<Match>> {
    check_sets(a, b)?;
    let forward = nearest(a, b);
    let backward = if options.mutual { Some(nearest(b, a)) } else { None };
    let mut out = Vec::new();
    for (ia, &(ib, d2, second)) in forward.iter().enumerate() {
        if let Some(back) = &backward {
            if back[ib].0 != ia {
                continue;
            }
        }
        if let Some(r) = options.ratio {
            if !(d2.sqrt() < r * second.sqrt()) {
                continue;
            }
        }
        out.push(Match {
            idx_a: ia,
            idx_b: ib,
            distance: d2.sqrt(),
        });
    }
    Ok(out)
}

/// Mutual nearest-neighbour matches sorted by `idx_a`.
pub fn mutual_nn_match(a: &[Vec<f64>], b: &[Vec<f64>]) -> Result<Vec<Match>> {
    match_descriptors(a, b, &MatchOptions::default())
}

#[derive(Clone, Debug, PartialEq)]
pub struct AccuracyReport {
    pub thresholds: Vec<f64>,
    /// Matches within each threshold.
    pub correct: Vec<usize>,
    pub total: usize,
    /// Set when there were no matches; accuracies are then reported as 0.
    pub empty: bool,
}

impl AccuracyReport {
    pub fn accuracy(&self) -> Vec<f64> {
        self.correct
            .iter()
            .map(|&c| if self.total == 0 { 0.0 } else { c as f64 / self.total as f64 })
            .collect()
    }
}

/// Reprojection error of each match under the ground-truth homography.
pub fn match_errors(matches: &[Match], kps_a: &[Keypoint], kps_b: &[Keypoint], truth: &PlanarModel) -> Result<Vec<f64>> {
    matches
        .iter()
        .map(|m| {
            let (Some(a), Some(b)) = (kps_a.get(m.idx_a), kps_b.get(m.idx_b)) else {
                return Err(Error::Contract(format!(
                    "match ({}, {}) indexes past the keypoint lists",
                    m.idx_a, m.idx_b
                )));
            };
            let p = truth.project(a.as_point());
            let e = (p[0] - b.x as f64).hypot(p[1] - b.y as f64);
            Ok(if e.is_finite() { e } else { f64::INFINITY })
        })
        .collect()
}

/// Fraction of matches whose ground-truth reprojection error is at most each threshold.
pub fn matching_accuracy(
    matches: &[Match],
    kps_a: &[Keypoint],
    kps_b: &[Keypoint],
    truth: &PlanarModel,
    thresholds: &[f64],
) -> Result<AccuracyReport> {
    ensure!(
        truth.kind() == crate::geometry::ModelKind::Homography,
        "ground truth must be a homography"
    );
    truth.inverse()?;
    let errors = match_errors(matches, kps_a, kps_b, truth)?;
    let correct = thresholds
        .iter()
        .map(|&t| errors.iter().filter(|&&e| e <= t).count())
        .collect();
    Ok(AccuracyReport {
        thresholds: thresholds.to_vec(),
        correct,
        total: matches.len(),
        empty: matches.is_empty(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn grid_examples() {
        let g = uniform_grid(64, 64, 8, 0).unwrap();
        assert_eq!(g.len(), 64);
        assert_eq!(g[0], Keypoint::new(0, 0));
        assert_eq!(*g.last().unwrap(), Keypoint::new(56, 56));
        assert_eq!(uniform_grid(64, 64, 8, 16).unwrap().len(), 16);
        assert!(uniform_grid(64, 64, 8, 32).unwrap().is_empty());
        assert!(uniform_grid(64, 64, 0, 0).is_err());
        // row-major
        let g = uniform_grid(20, 30, 10, 0).unwrap();
        assert_eq!(g[1], Keypoint::new(10, 0));
    }

    #[test]
    fn self_match_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let a: Vec<Vec<f64>> = (0..30).map(|_| (0..8).map(|_| rng.random()).collect()).collect();
        let m = mutual_nn_match(&a, &a).unwrap();
        assert_eq!(m.len(), 30);
        for (i, mm) in m.iter().enumerate() {
            assert_eq!((mm.idx_a, mm.idx_b, mm.distance), (i, i, 0.0));
        }
    }

    #[test]
    fn dimension_mismatch() {
        let a = vec![vec![0.0; 3]];
        let b = vec![vec![0.0; 4]];
        assert!(mutual_nn_match(&a, &b).is_err());
        assert!(mutual_nn_match(&a, &[]).is_err());
    }

    #[test]
    fn ties_go_to_lowest_index() {
        let a = vec![vec![0.0, 0.0]];
        let b = vec![vec![1.0, 0.0], vec![0.0, 1.0]];
        let m = match_descriptors(&a, &b, &MatchOptions { mutual: false, ratio: None }).unwrap();
        assert_eq!(m[0].idx_b, 0);
    }

    #[test]
    fn ratio_test_drops_ambiguous() {
        let a = vec![vec![0.0, 0.0]];
        let b = vec![vec![1.0, 0.0], vec![0.0, 1.01]];
        let opts = MatchOptions {
            mutual: false,
            ratio: Some(0.8),
        };
        assert!(match_descriptors(&a, &b, &opts).unwrap().is_empty());
    }

    #[test]
    fn accuracy_hand_built() {
        let truth = PlanarModel::translation(2.0, 1.0);
        let kps_a: Vec<Keypoint> = (0..4).map(|i| Keypoint::new(10 * i, 5)).collect();
        let mut kps_b: Vec<Keypoint> = kps_a.iter().map(|k| Keypoint::new(k.x + 2, k.y + 1)).collect();
        kps_b[3].x += 5;
        let matches: Vec<Match> = (0..4).map(|i| Match { idx_a: i, idx_b: i, distance: 0.0 }).collect();
        let r = matching_accuracy(&matches, &kps_a, &kps_b, &truth, &[3.0, 5.0]).unwrap();
        assert_eq!(r.accuracy(), vec![0.75, 1.0]);
        let empty = matching_accuracy(&[], &kps_a, &kps_b, &truth, &[3.0]).unwrap();
        assert!(empty.empty);
        assert_eq!(empty.accuracy(), vec![0.0]);
    }

    #[test]
    fn singular_truth_rejected() {
        let f = PlanarModel::fundamental([[0.0, 0.0, 0.0], [0.0, 0.0, -1.0], [0.0, 1.0, 0.0]]).unwrap();
        assert!(matching_accuracy(&[], &[], &[], &f, &[1.0]).is_err());
    }
}
