//! Two-view geometric verification: normalized DLT homography, normalized
//! eight-point fundamental matrix, Sampson distance and seeded RANSAC.

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{ensure, Error, Result};
use crate::linalg::{
    mat3_apply, mat3_det, mat3_frobenius, mat3_from_slice, mat3_inverse, mat3_mul, mat3_scale, mat3_transpose,
    mat3_to_vec, svd, Mat3,
};

pub type Point = [f64; 2];

/// A point in image 1 and its counterpart in image 2.
pub type PointPair = (Point, Point);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ModelKind {
    Homography,
    Fundamental,
}

impl ModelKind {
    pub fn minimal_sample(self) -> usize {
        match self {
            ModelKind::Homography => 4,
            ModelKind::Fundamental => 8,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Homography => "homography",
            ModelKind::Fundamental => "fundamental",
        }
    }
}

impl std::str::FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "homography" => Ok(ModelKind::Homography),
            "fundamental" => Ok(ModelKind::Fundamental),
            other => Err(Error::Contract(format!("unknown model kind {other:?}"))),
        }
    }
}

/// A 3x3 model with unit Frobenius norm and its largest-magnitude entry positive.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PlanarModel {
    m: Mat3,
    kind: ModelKind,
}

/// Scales to unit Frobenius norm and flips sign so the largest-magnitude
/// entry (first one on ties) is positive.
fn canonical(m: &Mat3) -> Option<Mat3> {
    let n = mat3_frobenius(m);
    if n == 0.0 || !n.is_finite() {
        return None;
    }
    let mut largest = m[0][0];
    for &v in m.iter().flatten() {
        if v.abs() > largest.abs() {
            largest = v;
        }
    }
    Some(mat3_scale(m, largest.signum() / n))
}

impl PlanarModel {
    pub fn homography(m: Mat3) -> Result<Self> {
        let m = canonical(&m).ok_or_else(|| Error::Degenerate("zero or non-finite homography".into()))?;
        // unit Frobenius norm bounds the entries, so an absolute floor works here
        if mat3_det(&m).abs() < 1e-14 {
            return Err(Error::Degenerate("homography is singular".into()));
        }
        Ok(Self {
            m,
            kind: ModelKind::Homography,
        })
    }

    pub fn fundamental(m: Mat3) -> Result<Self> {
        let m = canonical(&m).ok_or_else(|| Error::Degenerate("zero or non-finite fundamental matrix".into()))?;
        Ok(Self {
            m,
            kind: ModelKind::Fundamental,
        })
    }

    pub fn identity() -> Self {
        Self::homography(crate::linalg::IDENTITY).expect("identity is invertible")
    }

    pub fn translation(tx: f64, ty: f64) -> Self {
        Self::homography([[1.0, 0.0, tx], [0.0, 1.0, ty], [0.0, 0.0, 1.0]]).expect("translation is invertible")
    }

    pub fn from_kind(kind: ModelKind, m: Mat3) -> Result<Self> {
        match kind {
            ModelKind::Homography => Self::homography(m),
            ModelKind::Fundamental => Self::fundamental(m),
        }
    }

    pub fn matrix(&self) -> &Mat3 {
        &self.m
    }

    pub fn kind(&self) -> ModelKind {
        self.kind
    }

    /// Maps a point through a homography. The result is non-finite for points
    /// on the line at infinity.
    pub fn project(&self, p: Point) -> Point {
        let q = mat3_apply(&self.m, [p[0], p[1], 1.0]);
        [q[0] / q[2], q[1] / q[2]]
    }

    pub fn inverse(&self) -> Result<Self> {
        ensure!(self.kind == ModelKind::Homography, "only homographies are invertible");
        let inv = mat3_inverse(&self.m).ok_or_else(|| Error::Contract("singular homography".into()))?;
        Self::homography(inv)
    }

    /// `self` applied after `first`.
    pub fn compose(&self, first: &PlanarModel) -> Result<Self> {
        ensure!(
            self.kind == ModelKind::Homography && first.kind == ModelKind::Homography,
            "only homographies compose"
        );
        Self::homography(mat3_mul(&self.m, &first.m))
    }

    /// Max absolute entry difference after canonical scaling of both.
    pub fn max_entry_difference(&self, other: &PlanarModel) -> f64 {
        self.m
            .iter()
            .flatten()
            .zip(other.m.iter().flatten())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    /// Largest displacement between the images of the four frame corners
    /// under `self` and `other`.
    pub fn corner_error(&self, other: &PlanarModel, width: f64, height: f64) -> f64 {
        let corners = [[0.0, 0.0], [width, 0.0], [0.0, height], [width, height]];
        corners
            .iter()
            .map(|&c| {
                let (a, b) = (self.project(c), other.project(c));
                (a[0] - b[0]).hypot(a[1] - b[1])
            })
            .fold(0.0, f64::max)
    }
}

/// Hartley normalization: translates the centroid to the origin and scales
/// so the mean distance from it is `sqrt(2)`.
pub fn normalize_points(points: &[Point]) -> Result<(Vec<Point>, Mat3)> {
    ensure!(points.len() >= 2, "normalization needs at least 2 points, got {}", points.len());
    let n = points.len() as f64;
    let cx = points.iter().map(|p| p[0]).sum::<f64>() / n;
    let cy = points.iter().map(|p| p[1]).sum::<f64>() / n;
    let mean_dist = points.iter().map(|p| (p[0] - cx).hypot(p[1] - cy)).sum::<f64>() / n;
    if mean_dist == 0.0 || !mean_dist.is_finite() {
        return Err(Error::Degenerate("all points coincide".into()));
    }
    let s = std::f64::consts::SQRT_2 / mean_dist;
    let t = [[s, 0.0, -s * cx], [0.0, s, -s * cy], [0.0, 0.0, 1.0]];
    let out = points.iter().map(|p| [s * (p[0] - cx), s * (p[1] - cy)]).collect();
    Ok((out, t))
}

/// Relative size of the second-smallest singular value below which a
/// linear system is treated as having a multi-dimensional null space.
const RANK_GAP: f64 = 1e-10;

/// Null vector of the stacked system plus a rank-deficiency check.
fn null_vector(rows: &[[f64; 9]]) -> Result<Vec<f64>> {
    let flat: Vec<f64> = rows.iter().flatten().copied().collect();
    let s = svd(&flat, rows.len(), 9);
    let sv = &s.singular_values;
    if sv[0] == 0.0 || sv[7] <= RANK_GAP * sv[0] {
        return Err(Error::Degenerate(format!(
            "rank-deficient system (sigma_8 / sigma_1 = {:e})",
            sv[7] / sv[0]
        )));
    }
    Ok(s.v[8].clone())
}

fn cross2(o: Point, a: Point, b: Point) -> f64 {
    (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])
}

/// True when some three of the points are collinear up to `tol` times the
/// squared spread of the set.
pub fn has_collinear_triple(points: &[Point], tol: f64) -> bool {
    let spread = points
        .iter()
        .flat_map(|a| points.iter().map(move |b| (a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)))
        .fold(0.0, f64::max);
    for i in 0..points.len() {
        for j in i + 1..points.len() {
            for k in j + 1..points.len() {
                if cross2(points[i], points[j], points[k]).abs() <= tol * spread {
                    return true;
                }
            }
        }
    }
    false
}

pub fn dlt_homography(pairs: &[PointPair]) -> Result<PlanarModel> {
    dlt_homography_with(pairs, true)
}

/// Least-squares DLT homography, optionally with Hartley normalization.
pub fn dlt_homography_with(pairs: &[PointPair], normalize: bool) -> Result<PlanarModel> {
    ensure!(pairs.len() >= 4, "homography needs at least 4 pairs, got {}", pairs.len());
    let src: Vec<Point> = pairs.iter().map(|p| p.0).collect();
    let dst: Vec<Point> = pairs.iter().map(|p| p.1).collect();
    if pairs.len() == 4 && has_collinear_triple(&src, 1e-12) {
        return Err(Error::Degenerate("three source points are collinear".into()));
    }
    let (src_n, t1, dst_n, t2) = if normalize {
        let (s, t1) = normalize_points(&src)?;
        let (d, t2) = normalize_points(&dst)?;
        (s, t1, d, t2)
    } else {
        (src, crate::linalg::IDENTITY, dst, crate::linalg::IDENTITY)
    };
    let mut rows = Vec::with_capacity(2 * pairs.len());
    for (p, q) in src_n.iter().zip(&dst_n) {
        let (x, y, u, v) = (p[0], p[1], q[0], q[1]);
        rows.push([-x, -y, -1.0, 0.0, 0.0, 0.0, u * x, u * y, u]);
        rows.push([0.0, 0.0, 0.0, -x, -y, -1.0, v * x, v * y, v]);
    }
    let h = mat3_from_slice(&null_vector(&rows)?);
    let t2_inv = mat3_inverse(&t2).ok_or_else(|| Error::Degenerate("normalizing transform is singular".into()))?;
    PlanarModel::homography(mat3_mul(&t2_inv, &mat3_mul(&h, &t1)))
}

/// Normalized eight-point algorithm with rank-2 enforcement. Pairs are
/// `(x1, x2)` with `x2^T F x1 = 0`.
pub fn eight_point_fundamental(pairs: &[PointPair]) -> Result<PlanarModel> {
    ensure!(pairs.len() >= 8, "fundamental matrix needs at least 8 pairs, got {}", pairs.len());
    let src: Vec<Point> = pairs.iter().map(|p| p.0).collect();
    let dst: Vec<Point> = pairs.iter().map(|p| p.1).collect();
    let (src_n, t1) = normalize_points(&src)?;
    let (dst_n, t2) = normalize_points(&dst)?;
    let rows: Vec<[f64; 9]> = src_n
        .iter()
        .zip(&dst_n)
        .map(|(p, q)| {
            let (x, y, u, v) = (p[0], p[1], q[0], q[1]);
            [u * x, u * y, u, v * x, v * y, v, x, y, 1.0]
        })
        .collect();
    let f = enforce_rank2(&mat3_from_slice(&null_vector(&rows)?));
    let f = mat3_mul(&mat3_transpose(&t2), &mat3_mul(&f, &t1));
    // denormalization preserves rank in exact arithmetic; project again so the
    // returned matrix is rank 2 to working precision
    PlanarModel::fundamental(enforce_rank2(&f))
}

/// Zeroes the smallest singular value: `sum over the top two k of (F v_k) v_k^T`.
fn enforce_rank2(f: &Mat3) -> Mat3 {
    let s = svd(&mat3_to_vec(f), 3, 3);
    let mut out = [[0.0; 3]; 3];
    for k in 0..2 {
        for (i, row) in out.iter_mut().enumerate() {
            for (j, cell) in row.iter_mut().enumerate() {
                *cell += s.av[k][i] * s.v[k][j];
            }
        }
    }
    out
}

/// First-order geometric error of a pair under a fundamental matrix, in
/// squared pixels: `(x2^T F x1)^2 / ((F x1)_1^2 + (F x1)_2^2 + (F^T x2)_1^2 + (F^T x2)_2^2)`.
pub fn sampson_distance(model: &PlanarModel, pair: &PointPair) -> Result<f64> {
    ensure!(
        model.kind == ModelKind::Fundamental,
        "sampson distance needs a fundamental matrix"
    );
    sampson_raw(&model.m, pair)
}

pub(crate) fn sampson_raw(f: &Mat3, pair: &PointPair) -> Result<f64> {
    let x1 = [pair.0[0], pair.0[1], 1.0];
    let x2 = [pair.1[0], pair.1[1], 1.0];
    let fx1 = mat3_apply(f, x1);
    let ftx2 = mat3_apply(&mat3_transpose(f), x2);
    let num = x2[0] * fx1[0] + x2[1] * fx1[1] + x2[2] * fx1[2];
    let den = fx1[0] * fx1[0] + fx1[1] * fx1[1] + ftx2[0] * ftx2[0] + ftx2[1] * ftx2[1];
    if den == 0.0 {
        return Err(Error::Degenerate("sampson denominator is zero".into()));
    }
    Ok(num * num / den)
}

/// Pixel residual of one pair: reprojection distance for homographies,
/// square root of the Sampson distance for fundamental matrices.
pub fn residual(model: &PlanarModel, pair: &PointPair) -> f64 {
    match model.kind {
        ModelKind::Homography => {
            let p = model.project(pair.0);
            let r = (p[0] - pair.1[0]).hypot(p[1] - pair.1[1]);
            if r.is_finite() {
                r
            } else {
                f64::INFINITY
            }
        }
        ModelKind::Fundamental => sampson_raw(&model.m, pair).map_or(f64::INFINITY, f64::sqrt),
    }
}

pub fn fit(kind: ModelKind, pairs: &[PointPair]) -> Result<PlanarModel> {
    match kind {
        ModelKind::Homography => dlt_homography(pairs),
        ModelKind::Fundamental => eight_point_fundamental(pairs),
    }
}

#[derive(Clone, Debug)]
pub struct RansacParams {
    /// Inlier threshold in pixels.
    pub threshold: f64,
    pub max_iterations: usize,
    /// Success probability for the adaptive stopping rule.
    pub confidence: f64,
    pub seed: u64,
}

impl RansacParams {
    pub fn for_kind(kind: ModelKind) -> Self {
        Self {
            threshold: match kind {
                ModelKind::Homography => 3.0,
                ModelKind::Fundamental => 1.0,
            },
            max_iterations: 2000,
            confidence: 0.99,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug)]
pub struct RansacResult {
    pub model: PlanarModel,
    /// Sorted indices into the input pairs.
    pub inliers: Vec<usize>,
    pub iterations: usize,
}

fn inliers_of(model: &PlanarModel, pairs: &[PointPair], threshold: f64) -> Vec<usize> {
    (0..pairs.len()).filter(|&i| residual(model, &pairs[i]) <= threshold).collect()
}

/// Iterations needed so that an all-inlier sample is drawn with probability
/// `confidence`: `log(1 - confidence) / log(1 - w^s)`.
fn required_iterations(inlier_ratio: f64, sample: usize, confidence: f64, cap: usize) -> usize {
    let good = inlier_ratio.powi(sample as i32);
    if good >= 1.0 {
        return 1;
    }
    if good <= 0.0 {
        return cap;
    }
    let k = (1.0 - confidence).ln() / (-good).ln_1p();
    if !k.is_finite() || k >= cap as f64 {
        cap
    } else {
        k.ceil().max(1.0) as usize
    }
}

/// Rng for RANSAC iteration `i`: ChaCha8 keyed by `seed`, stream `i`. Each
/// iteration's sample depends only on `(seed, i)`.
fn iteration_rng(seed: u64, i: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(i as u64);
    rng
}

pub fn ransac(pairs: &[PointPair], kind: ModelKind, params: &RansacParams) -> Result<RansacResult> {
    let s = kind.minimal_sample();
    ensure!(
        pairs.len() >= s,
        "{} needs at least {s} matches, got {}",
        kind.name(),
        pairs.len()
    );
    ensure!(params.threshold > 0.0, "threshold must be positive");
    let n = pairs.len();
    let mut best: Option<(PlanarModel, Vec<usize>)> = None;
    let mut needed = params.max_iterations;
    let mut iterations = 0;
    let mut sample = Vec::with_capacity(s);
    for i in 0..params.max_iterations {
        if i >= needed {
            break;
        }
        iterations = i + 1;
        let mut rng = iteration_rng(params.seed, i);
        sample.clear();
        sample.extend(index::sample(&mut rng, n, s).into_iter().map(|j| pairs[j]));
        let Ok(model) = fit(kind, &sample) else {
            continue;
        };
        let inliers = inliers_of(&model, pairs, params.threshold);
        if best.as_ref().is_none_or(|(_, b)| inliers.len() > b.len()) {
            needed = required_iterations(inliers.len() as f64 / n as f64, s, params.confidence, params.max_iterations);
            best = Some((model, inliers));
        }
    }
    let (mut model, mut inliers) = best.ok_or(Error::NoConsensus {
        inliers: 0,
        required: s + 1,
    })?;
    if inliers.len() < s + 1 {
        return Err(Error::NoConsensus {
            inliers: inliers.len(),
            required: s + 1,
        });
    }
    // refit on the consensus set until it stops changing
    for _ in 0..10 {
        let subset: Vec<PointPair> = inliers.iter().map(|&i| pairs[i]).collect();
        let Ok(refit) = fit(kind, &subset) else {
            break;
        };
        let next = inliers_of(&refit, pairs, params.threshold);
        if next.len() < s + 1 {
            break;
        }
        model = refit;
        if next == inliers {
            break;
        }
        inliers = next;
    }
    let inliers = inliers_of(&model, pairs, params.threshold);
    Ok(RansacResult {
        model,
        inliers,
        iterations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn normalize_two_points() {
        let (pts, t) = normalize_points(&[[0.0, 0.0], [2.0, 0.0]]).unwrap();
        let s = std::f64::consts::SQRT_2;
        assert!((t[0][0] - s).abs() < 1e-15);
        assert!((t[0][2] + s).abs() < 1e-15);
        assert!((pts[0][0] + s).abs() < 1e-15 && (pts[1][0] - s).abs() < 1e-15);
        assert!(matches!(normalize_points(&[[1.0, 1.0]; 3]), Err(Error::Degenerate(_))));
    }

    #[test]
    fn normalize_fixed_point_is_near_identity() {
        let r = 1.0;
        let pts = [[r, r], [-r, r], [-r, -r], [r, -r]];
        let (_, t) = normalize_points(&pts).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                assert!((t[i][j] - crate::linalg::IDENTITY[i][j]).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn identity_and_translation_dlt() {
        let src = [[0.0, 0.0], [10.0, 0.0], [0.0, 10.0], [10.0, 12.0]];
        let id: Vec<PointPair> = src.iter().map(|&p| (p, p)).collect();
        let h = dlt_homography(&id).unwrap();
        assert!(h.max_entry_difference(&PlanarModel::identity()) < 1e-12);
        let tr: Vec<PointPair> = src.iter().map(|&p| (p, [p[0] + 2.0, p[1] + 3.0])).collect();
        let h = dlt_homography(&tr).unwrap();
        assert!(h.max_entry_difference(&PlanarModel::translation(2.0, 3.0)) < 1e-10);
    }

    #[test]
    fn collinear_minimal_sample_is_degenerate() {
        let src = [[0.0, 0.0], [1.0, 1.0], [2.0, 2.0], [0.0, 5.0]];
        let pairs: Vec<PointPair> = src.iter().map(|&p| (p, p)).collect();
        assert!(matches!(dlt_homography(&pairs), Err(Error::Degenerate(_))));
        assert!(matches!(dlt_homography(&pairs[..3]), Err(Error::Contract(_))));
    }

    #[test]
    fn seven_pairs_rejected() {
        let pairs = vec![([0.0, 0.0], [1.0, 1.0]); 7];
        assert!(matches!(eight_point_fundamental(&pairs), Err(Error::Contract(_))));
    }

    #[test]
    fn sampson_scale_invariance_and_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let m: Vec<f64> = (0..9).map(|_| rng.random_range(-1.0..1.0)).collect();
        let f = PlanarModel::fundamental(mat3_from_slice(&m)).unwrap();
        let pair = ([3.0, -2.0], [1.5, 4.0]);
        let d = sampson_distance(&f, &pair).unwrap();
        let scaled = mat3_scale(f.matrix(), -7.5);
        let d2 = sampson_raw(&scaled, &pair).unwrap();
        assert!((d - d2).abs() <= 1e-12 * d.abs());
        assert!(sampson_distance(&PlanarModel::identity(), &pair).is_err());
    }

    #[test]
    fn required_iterations_shape() {
        assert_eq!(required_iterations(1.0, 4, 0.99, 2000), 1);
        assert_eq!(required_iterations(0.0, 4, 0.99, 2000), 2000);
        let k = required_iterations(0.5, 4, 0.99, 2000);
        // (1 - 0.0625)^k < 0.01
        assert_eq!(k, 72);
    }
}
