//! Central finite-difference verification of analytic gradients.

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{ensure, Error, Result};

/// Value of the objective at one parameter setting, plus an opaque tag for
/// the differentiable piece it was evaluated on (ReLU sign pattern, argmin
/// choices). Probes whose `+h` and `-h` evaluations land on different pieces
/// straddle a kink and are excluded from comparison.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Probe {
    pub value: f64,
    pub regime: u64,
}

impl Probe {
    pub fn smooth(value: f64) -> Self {
        Self { value, regime: 0 }
    }
}

#[derive(Clone, Debug)]
pub struct GradCheckOptions {
    pub step: f64,
    pub tolerance: f64,
    /// Entries probed per block; `None` probes every entry.
    pub max_probes_per_block: Option<usize>,
    pub seed: u64,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        Self {
            step: 1e-5,
            tolerance: 1e-4,
            max_probes_per_block: None,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug)]
pub struct BlockReport {
    pub name: String,
    pub probed: usize,
    /// Probes dropped because the step crossed a non-differentiable point.
    pub skipped: usize,
    pub max_relative_error: f64,
    pub worst_index: Option<usize>,
    pub passed: bool,
}

#[derive(Clone, Debug)]
pub struct GradCheckReport {
    pub blocks: Vec<BlockReport>,
    pub tolerance: f64,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.blocks.iter().all(|b| b.passed)
    }

    pub fn max_relative_error(&self) -> f64 {
        self.blocks
            .iter()
            .map(|b| b.max_relative_error)
            .fold(0.0, f64::max)
    }
}

/// `|a - n| / max(1e-8, |a| + |n|)`
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / (analytic.abs() + numeric.abs()).max(1e-8)
}

/// Compares `analytic[b][i]` against `(f(x + h e_i) - f(x - h e_i)) / 2h` for
/// every probed entry of every named parameter block.
pub fn grad_check<F>(
    mut forward: F,
    params: &mut [(String, Vec<f64>)],
    analytic: &[Vec<f64>],
    options: &GradCheckOptions,
) -> Result<GradCheckReport>
where
    F: FnMut(&[(String, Vec<f64>)]) -> Result<Probe>,
{
    ensure!(
        params.len() == analytic.len(),
        "{} parameter blocks but {} gradient blocks",
        params.len(),
        analytic.len()
    );
    for ((name, p), g) in params.iter().zip(analytic) {
        ensure!(p.len() == g.len(), "block {name}: {} params vs {} grads", p.len(), g.len());
        ensure!(p.iter().all(|v| v.is_finite()), "block {name} has non-finite parameters");
    }
    let h = options.step;
    let mut blocks = Vec::with_capacity(params.len());
    for b in 0..params.len() {
        let len = params[b].1.len();
        let mut indices: Vec<usize> = match options.max_probes_per_block {
            Some(k) if k < len => {
                let mut rng = ChaCha8Rng::seed_from_u64(options.seed ^ (b as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15));
                index::sample(&mut rng, len, k).into_vec()
            }
            _ => (0..len).collect(),
        };
        indices.sort_unstable();

        let mut report = BlockReport {
            name: params[b].0.clone(),
            probed: 0,
            skipped: 0,
            max_relative_error: 0.0,
            worst_index: None,
            passed: true,
        };
        for i in indices {
            let original = params[b].1[i];
            params[b].1[i] = original + h;
            let plus = forward(params);
            params[b].1[i] = original - h;
            let minus = forward(params);
            params[b].1[i] = original;
            let (plus, minus) = (plus?, minus?);
            for v in [plus.value, minus.value] {
                if !v.is_finite() {
                    return Err(Error::NonFinite(v));
                }
            }
            if plus.regime != minus.regime {
                report.skipped += 1;
                continue;
            }
            let numeric = (plus.value - minus.value) / (2.0 * h);
            let err = relative_error(analytic[b][i], numeric);
            report.probed += 1;
            if err > report.max_relative_error || report.worst_index.is_none() {
                report.max_relative_error = err;
                report.worst_index = Some(i);
            }
        }
        report.passed = report.max_relative_error <= options.tolerance;
        blocks.push(report);
    }
    Ok(GradCheckReport {
        blocks,
        tolerance: options.tolerance,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_at_three() {
        let mut params = vec![("x".to_string(), vec![3.0])];
        let analytic = vec![vec![6.0]];
        let opts = GradCheckOptions {
            tolerance: 1e-8,
            ..Default::default()
        };
        let report = grad_check(|p| Ok(Probe::smooth(p[0].1[0].powi(2))), &mut params, &analytic, &opts).unwrap();
        assert!(report.passed());
        assert!(report.max_relative_error() < 1e-8);
        assert_eq!(params[0].1[0], 3.0);
    }

    #[test]
    fn wrong_gradient_fails() {
        let mut params = vec![("x".to_string(), vec![3.0])];
        let report = grad_check(
            |p| Ok(Probe::smooth(p[0].1[0].powi(2))),
            &mut params,
            &[vec![5.0]],
            &GradCheckOptions::default(),
        )
        .unwrap();
        assert!(!report.passed());
    }

    #[test]
    fn relu_kink_is_excluded() {
        // relu probed exactly at 0: the +h and -h sides report different regimes
        let mut params = vec![("x".to_string(), vec![0.0, 1.0])];
        let f = |p: &[(String, Vec<f64>)]| {
            let v: f64 = p[0].1.iter().map(|x| x.max(0.0)).sum();
            let regime = p[0].1.iter().fold(0u64, |acc, &x| acc * 2 + u64::from(x > 0.0));
            Ok(Probe { value: v, regime })
        };
        let report = grad_check(f, &mut params, &[vec![0.0, 1.0]], &GradCheckOptions::default()).unwrap();
        assert_eq!(report.blocks[0].skipped, 1);
        assert_eq!(report.blocks[0].probed, 1);
        assert!(report.passed());
    }

    #[test]
    fn non_finite_forward_is_an_error() {
        let mut params = vec![("x".to_string(), vec![0.0])];
        let r = grad_check(
            |p| Ok(Probe::smooth(1.0 / p[0].1[0].abs().min(0.0))),
            &mut params,
            &[vec![0.0]],
            &GradCheckOptions::default(),
        );
        assert!(matches!(r, Err(Error::NonFinite(_))));
    }
}
