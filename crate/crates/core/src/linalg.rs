//! Small dense linear algebra: one-sided Jacobi SVD and 3x3 helpers.

pub type Mat3 = [[f64; 3]; 3];

pub const IDENTITY: Mat3 = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];

/// Result of [`svd`]: singular values in descending order, the matching
/// right singular vectors, and `A V` (columns are `sigma_k u_k`).
#[derive(Clone, Debug)]
pub struct Svd {
    pub singular_values: Vec<f64>,
    /// `v[k]` is the k-th right singular vector.
    pub v: Vec<Vec<f64>>,
    /// `av[k]` is `A v_k`, of length `rows`.
    pub av: Vec<Vec<f64>>,
}

const MAX_SWEEPS: usize = 80;
const ORTHOGONALITY_TOL: f64 = 1e-15;

/// One-sided (Hestenes) Jacobi SVD of a row-major `rows x cols` matrix.
///
/// Plane rotations are applied to pairs of columns until every pair is
/// orthogonal to within `1e-15` relative; the column norms are then the
/// singular values and the accumulated rotations the right singular vectors.
pub fn svd(a: &[f64], rows: usize, cols: usize) -> Svd {
    assert_eq!(a.len(), rows * cols, "svd: matrix size mismatch");
    // column-major working copy
    let mut u: Vec<Vec<f64>> = (0..cols).map(|j| (0..rows).map(|i| a[i * cols + j]).collect()).collect();
    let mut v: Vec<Vec<f64>> = (0..cols)
        .map(|j| (0..cols).map(|i| if i == j { 1.0 } else { 0.0 }).collect())
        .collect();

    for _ in 0..MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..cols {
            for q in p + 1..cols {
                let alpha: f64 = u[p].iter().map(|x| x * x).sum();
                let beta: f64 = u[q].iter().map(|x| x * x).sum();
                let gamma: f64 = u[p].iter().zip(&u[q]).map(|(x, y)| x * y).sum();
                if gamma == 0.0 || gamma.abs() <= ORTHOGONALITY_TOL * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let t = if zeta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                for k in 0..rows {
                    let (x, y) = (u[p][k], u[q][k]);
                    u[p][k] = c * x - s * y;
                    u[q][k] = s * x + c * y;
                }
                for k in 0..cols {
                    let (x, y) = (v[p][k], v[q][k]);
                    v[p][k] = c * x - s * y;
                    v[q][k] = s * x + c * y;
                }
            }
        }
        if !rotated {
            break;
        }
    }

    let norms: Vec<f64> = u.iter().map(|col| col.iter().map(|x| x * x).sum::<f64>().sqrt()).collect();
    let mut order: Vec<usize> = (0..cols).collect();
    order.sort_by(|&i, &j| norms[j].total_cmp(&norms[i]).then(i.cmp(&j)));
    Svd {
        singular_values: order.iter().map(|&i| norms[i]).collect(),
        v: order.iter().map(|&i| v[i].clone()).collect(),
        av: order.iter().map(|&i| u[i].clone()).collect(),
    }
}

pub fn mat3_from_slice(v: &[f64]) -> Mat3 {
    [[v[0], v[1], v[2]], [v[3], v[4], v[5]], [v[6], v[7], v[8]]]
}

pub fn mat3_to_vec(m: &Mat3) -> Vec<f64> {
    m.iter().flatten().copied().collect()
}

pub fn mat3_mul(a: &Mat3, b: &Mat3) -> Mat3 {
    let mut out = [[0.0; 3]; 3];
    for (i, row) in out.iter_mut().enumerate() {
        for (j, cell) in row.iter_mut().enumerate() {
            *cell = (0..3).map(|k| a[i][k] * b[k][j]).sum();
        }
    }
    out
}

pub fn mat3_transpose(a: &Mat3) -> Mat3 {
    let mut out = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            out[i][j] = a[j][i];
        }
    }
    out
}

pub fn mat3_apply(a: &Mat3, v: [f64; 3]) -> [f64; 3] {
    [
        a[0][0] * v[0] + a[0][1] * v[1] + a[0][2] * v[2],
        a[1][0] * v[0] + a[1][1] * v[1] + a[1][2] * v[2],
        a[2][0] * v[0] + a[2][1] * v[1] + a[2][2] * v[2],
    ]
}

pub fn mat3_det(a: &Mat3) -> f64 {
    a[0][0] * (a[1][1] * a[2][2] - a[1][2] * a[2][1]) - a[0][1] * (a[1][0] * a[2][2] - a[1][2] * a[2][0])
        + a[0][2] * (a[1][0] * a[2][1] - a[1][1] * a[2][0])
}

pub fn mat3_frobenius(a: &Mat3) -> f64 {
    a.iter().flatten().map(|x| x * x).sum::<f64>().sqrt()
}

pub fn mat3_scale(a: &Mat3, s: f64) -> Mat3 {
    let mut out = *a;
    for v in out.iter_mut().flatten() {
        *v *= s;
    }
    out
}

/// Adjugate-based inverse; `None` when the determinant is zero or not finite.
pub fn mat3_inverse(a: &Mat3) -> Option<Mat3> {
    let det = mat3_det(a);
    if det == 0.0 || !det.is_finite() {
        return None;
    }
    let inv_det = 1.0 / det;
    let c = |r0: usize, c0: usize, r1: usize, c1: usize| a[r0][c0] * a[r1][c1] - a[r0][c1] * a[r1][c0];
    Some([
        [c(1, 1, 2, 2) * inv_det, -c(0, 1, 2, 2) * inv_det, c(0, 1, 1, 2) * inv_det],
        [-c(1, 0, 2, 2) * inv_det, c(0, 0, 2, 2) * inv_det, -c(0, 0, 1, 2) * inv_det],
        [c(1, 0, 2, 1) * inv_det, -c(0, 0, 2, 1) * inv_det, c(0, 0, 1, 1) * inv_det],
    ])
}

/// Singular values of a 3x3 matrix, descending.
pub fn mat3_singular_values(a: &Mat3) -> [f64; 3] {
    let s = svd(&mat3_to_vec(a), 3, 3).singular_values;
    [s[0], s[1], s[2]]
}
