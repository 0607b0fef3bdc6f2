//! Empirical verification of the quantities the recovery guarantees are
//! stated in: restricted strong convexity/smoothness constants estimated by
//! brute force over small supports, the empirical noise level, and the
//! guarantee clauses themselves on instances where everything is
//! computable.
//!
//! For a quadratic loss the restricted Hessian does not depend on the probe
//! point and the estimated constants are exact. For the logistic loss they
//! are local certificates at the supplied probe points only.

use std::fmt::Write as _;

use itertools::Itertools;
use thiserror::Error;

use crate::greedy::GreedyResult;
use crate::greedy::ParamVector;
use crate::linalg::symmetric_eigenvalues;
use crate::losses::SmoothLoss;

/// Largest dimension for which support enumeration is allowed.
pub const MAX_ENUMERATION_DIM: usize = 20;

#[derive(Debug, Error)]
pub enum DiagnosticsError {
    #[error("support enumeration limited to {MAX_ENUMERATION_DIM} coordinates, got {0}")]
    TooLarge(usize),
    #[error("sparsity level must be between 1 and the dimension, got {0}")]
    BadSparsityLevel(usize),
    #[error("no probe points supplied")]
    NoProbes,
    #[error("constants are unusable: {0}")]
    MissingConstants(String),
}

/// Constants the guarantees are stated in.
#[derive(Debug, Clone, Copy)]
pub struct TheoryConstants {
    /// Restricted strong convexity constant (smallest restricted curvature).
    pub kappa_l: f64,
    /// Restricted smoothness constant (largest restricted curvature).
    pub kappa_u: f64,
    /// Measured noise level `‖∇L(θ*)‖_∞`.
    pub lambda_n: f64,
    /// Sparsity inflation factor.
    pub eta: f64,
    /// True sparsity.
    pub s_star: usize,
}

impl TheoryConstants {
    pub fn rho(&self) -> f64 {
        self.kappa_u / self.kappa_l
    }

    fn validate(&self) -> Result<(), DiagnosticsError> {
        if !(self.kappa_l > 0.0) || !self.kappa_l.is_finite() {
            return Err(DiagnosticsError::MissingConstants(format!(
                "kappa_l = {}",
                self.kappa_l
            )));
        }
        if !(self.kappa_u >= self.kappa_l) || !self.kappa_u.is_finite() {
            return Err(DiagnosticsError::MissingConstants(format!(
                "kappa_u = {} with kappa_l = {}",
                self.kappa_u, self.kappa_l
            )));
        }
        if !self.lambda_n.is_finite() || self.lambda_n < 0.0 {
            return Err(DiagnosticsError::MissingConstants(format!(
                "lambda_n = {}",
                self.lambda_n
            )));
        }
        Ok(())
    }
}

/// Smallest admissible sparsity inflation factor for a curvature ratio
/// `rho` and sparsity `s_star`: `2 + 4ρ²(√((ρ²−ρ)/s*) + √2)²`. With an
/// empty true support the requirement is vacuous and the floor of 2 is
/// returned.
pub fn eta_lower_bound(rho: f64, s_star: usize) -> f64 {
    if s_star == 0 {
        return 2.0;
    }
    let excess = ((rho * rho - rho) / s_star as f64).max(0.0).sqrt();
    2.0 + 4.0 * rho * rho * (excess + 2.0f64.sqrt()).powi(2)
}

/// Enumeration sparsity level for checking curvature at inflated supports:
/// `η·s*` capped at the dimension. The cap loses nothing because every
/// support is contained in the full coordinate set, so restricted curvature
/// at levels beyond `p` coincides with the level-`p` value.
pub fn enumeration_level(eta: f64, s_star: usize, dim: usize) -> usize {
    if s_star == 0 {
        return dim.min(1).max(1.min(dim));
    }
    ((eta * s_star as f64).ceil() as usize).min(dim).max(1)
}

/// Extreme eigenvalues of the restricted Hessian over every support of size
/// at most `level` and every probe point: the smallest is the restricted
/// strong convexity constant and the largest the restricted smoothness
/// constant (exact for quadratic losses, local certificates otherwise).
///
/// By Cauchy eigenvalue interlacing the extremes over supports of size at
/// most `level` are attained at size exactly `min(level, dim)`, so only
/// that size is enumerated.
pub fn estimate_rsc_rss<L: SmoothLoss + ?Sized>(
    loss: &L,
    level: usize,
    probes: &[Vec<f64>],
) -> Result<(f64, f64), DiagnosticsError> {
    let dim = loss.dim();
    if dim > MAX_ENUMERATION_DIM {
        return Err(DiagnosticsError::TooLarge(dim));
    }
    if level == 0 || level > dim {
        return Err(DiagnosticsError::BadSparsityLevel(level));
    }
    if probes.is_empty() {
        return Err(DiagnosticsError::NoProbes);
    }
    let mut kappa_l = f64::INFINITY;
    let mut kappa_u = f64::NEG_INFINITY;
    for support in (0..dim).combinations(level) {
        for probe in probes {
            let hessian = loss.restricted_hessian(probe, &support);
            let eigs = symmetric_eigenvalues(&hessian);
            kappa_l = kappa_l.min(eigs[0]);
            kappa_u = kappa_u.max(eigs[eigs.len() - 1]);
        }
    }
    Ok((kappa_l, kappa_u))
}

/// Default probe set for local curvature certificates: the supplied special
/// points plus sparse random points with entries bounded by 1.
pub fn default_probes(
    dim: usize,
    special: &[&[f64]],
    sparsity: usize,
    seed: u64,
) -> Vec<Vec<f64>> {
    use rand::{Rng, SeedableRng};
    let mut probes: Vec<Vec<f64>> = special.iter().map(|s| s.to_vec()).collect();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let k = sparsity.clamp(1, dim);
    for _ in 0..10 {
        let mut point = vec![0.0; dim];
        for _ in 0..k {
            let j = rng.random_range(0..dim);
            point[j] = rng.random_range(-1.0..1.0);
        }
        probes.push(point);
    }
    probes
}

/// Measured noise level: the sup-norm of the gradient at the target
/// parameter.
pub fn measure_noise_level<L: SmoothLoss + ?Sized>(loss: &L, theta_star: &ParamVector) -> f64 {
    loss.gradient(theta_star.coeffs())
        .iter()
        .fold(0.0f64, |acc, g| acc.max(g.abs()))
}

/// Outcome of checking the recovery guarantee on one instance: each
/// hypothesis evaluated, each conclusion evaluated, and the combination
/// that counts as a hard failure (hypotheses satisfied, conclusion not).
#[derive(Debug, Clone)]
pub struct TheoremReport {
    pub hypothesis_eta: bool,
    pub hypothesis_threshold: bool,
    pub hypothesis_min_signal: bool,
    pub error_bound_lhs: f64,
    pub error_bound_rhs: f64,
    pub error_bound_holds: bool,
    pub false_exclusions: Vec<usize>,
    pub false_inclusions: Vec<usize>,
    pub constants: TheoryConstants,
    pub stop_threshold: f64,
}

impl TheoremReport {
    pub fn hypotheses_hold(&self) -> bool {
        self.hypothesis_eta && self.hypothesis_threshold && self.hypothesis_min_signal
    }

    pub fn no_false_exclusions(&self) -> bool {
        self.false_exclusions.is_empty()
    }

    pub fn no_false_inclusions(&self) -> bool {
        self.false_inclusions.is_empty()
    }

    pub fn conclusions_hold(&self) -> bool {
        self.error_bound_holds && self.no_false_exclusions() && self.no_false_inclusions()
    }

    /// True when the hypotheses are satisfied but a conclusion is violated.
    pub fn hard_failure(&self) -> bool {
        self.hypotheses_hold() && !self.conclusions_hold()
    }

    /// Structured `key: value` text for archiving alongside experiment
    /// outputs.
    pub fn render(&self) -> String {
        let mut out = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(out, "{k}: {v}");
        };
        kv("kappa_l", format!("{:.6e}", self.constants.kappa_l));
        kv("kappa_u", format!("{:.6e}", self.constants.kappa_u));
        kv("rho", format!("{:.6e}", self.constants.rho()));
        kv("lambda_n", format!("{:.6e}", self.constants.lambda_n));
        kv("eta", format!("{:.6e}", self.constants.eta));
        kv("s_star", format!("{}", self.constants.s_star));
        kv("stop_threshold", format!("{:.6e}", self.stop_threshold));
        kv("hypothesis_eta", format!("{}", self.hypothesis_eta));
        kv(
            "hypothesis_threshold",
            format!("{}", self.hypothesis_threshold),
        );
        kv(
            "hypothesis_min_signal",
            format!("{}", self.hypothesis_min_signal),
        );
        kv("hypotheses_hold", format!("{}", self.hypotheses_hold()));
        kv("error_bound_lhs", format!("{:.6e}", self.error_bound_lhs));
        kv("error_bound_rhs", format!("{:.6e}", self.error_bound_rhs));
        kv("error_bound_holds", format!("{}", self.error_bound_holds));
        kv(
            "false_exclusions",
            format!("{:?}", self.false_exclusions),
        );
        kv(
            "false_inclusions",
            format!("{:?}", self.false_inclusions),
        );
        kv("conclusions_hold", format!("{}", self.conclusions_hold()));
        kv("hard_failure", format!("{}", self.hard_failure()));
        out
    }
}

/// Evaluates the recovery-guarantee clauses on a finished greedy run:
/// hypotheses (inflation factor large enough, stop threshold above the
/// noise-driven floor, minimum signal above the threshold-driven floor) and
/// conclusions (parameter error bound, no false exclusions, no false
/// inclusions).
pub fn check_theorem1(
    result: &GreedyResult,
    theta_star: &ParamVector,
    constants: &TheoryConstants,
    stop_threshold: f64,
) -> Result<TheoremReport, DiagnosticsError> {
    constants.validate()?;
    let rho = constants.rho();
    let s_star = constants.s_star;

    let hypothesis_eta = constants.eta >= eta_lower_bound(rho, s_star) - 1e-12;
    let hypothesis_threshold = stop_threshold
        >= (8.0 * rho * constants.eta / constants.kappa_l)
            * s_star as f64
            * constants.lambda_n
            * constants.lambda_n;
    let signal_floor = (32.0 * rho * stop_threshold / constants.kappa_l).sqrt();
    let min_signal = theta_star
        .support()
        .iter()
        .map(|&j| theta_star.get(j).abs())
        .fold(f64::INFINITY, f64::min);
    let hypothesis_min_signal = theta_star.support().is_empty() || min_signal > signal_floor;

    let lhs = result.theta_hat.l2_distance(theta_star);
    let rhs = (2.0 / constants.kappa_l)
        * (s_star as f64).sqrt()
        * (constants.lambda_n * constants.eta.sqrt()
            + (2.0 * constants.kappa_u * stop_threshold).sqrt());
    let error_bound_holds = lhs <= rhs + 1e-12;

    let estimated = result.theta_hat.support();
    let false_exclusions: Vec<usize> = theta_star
        .support()
        .difference(estimated)
        .copied()
        .collect();
    let false_inclusions: Vec<usize> = estimated
        .difference(theta_star.support())
        .copied()
        .collect();

    Ok(TheoremReport {
        hypothesis_eta,
        hypothesis_threshold,
        hypothesis_min_signal,
        error_bound_lhs: lhs,
        error_bound_rhs: rhs,
        error_bound_holds,
        false_exclusions,
        false_inclusions,
        constants: *constants,
        stop_threshold,
    })
}

/// Stopping-size consequence: when restricted strong convexity holds at the
/// inflated level, the terminal support has at most `(η − 1)·s*`
/// coordinates.
pub fn check_stopping_size(result: &GreedyResult, constants: &TheoryConstants) -> bool {
    let cap = (constants.eta - 1.0) * constants.s_star as f64;
    (result.theta_hat.support_len() as f64) <= cap + 1e-12
}

/// Terminal backward-step consequence (for backward factor 1/2): the
/// squared error mass on spurious coordinates is at least
/// `ε/κ_u · |Ŝ − S*|`. The smoothness constant is inflated by 1.1 to absorb
/// estimation slack.
pub fn check_backward_stop(
    result: &GreedyResult,
    theta_star: &ParamVector,
    kappa_u: f64,
    stop_threshold: f64,
) -> bool {
    let spurious: Vec<usize> = result
        .theta_hat
        .support()
        .difference(theta_star.support())
        .copied()
        .collect();
    if spurious.is_empty() {
        return true;
    }
    let mass: f64 = spurious
        .iter()
        .map(|&j| {
            let d = result.theta_hat.get(j) - theta_star.get(j);
            d * d
        })
        .sum();
    mass >= (stop_threshold / (1.1 * kappa_u)) * spurious.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::losses::{NodeConditionalLogisticLoss, SquaredLoss};
    use ndarray::{Array1, Array2};

    fn orthonormal_squared(dim: usize, theta_star: &[f64]) -> SquaredLoss {
        let n = dim;
        let mut x = Array2::<f64>::zeros((n, dim));
        let scale = (n as f64).sqrt();
        for j in 0..dim {
            x[[j, j]] = scale;
        }
        let mut y = Array1::<f64>::zeros(n);
        for j in 0..dim {
            y[j] = scale * theta_star[j];
        }
        SquaredLoss::new(x, y).unwrap()
    }

    #[test]
    fn orthonormal_design_has_unit_constants() {
        let loss = orthonormal_squared(5, &[0.0; 5]);
        for level in 1..=4 {
            let (kl, ku) = estimate_rsc_rss(&loss, level, &[vec![0.0; 5]]).unwrap();
            assert!((kl - 1.0).abs() < 1e-10);
            assert!((ku - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn scaled_columns_give_principal_curvatures() {
        // column second moments 1 and 4: at level 1 the constants are (1, 4)
        let x = ndarray::array![[1.0, 0.0], [0.0, 2.0]];
        let x = {
            let mut xs = x.clone();
            xs.mapv_inplace(|v| v * 2.0f64.sqrt());
            xs
        };
        let y = Array1::zeros(2);
        let loss = SquaredLoss::new(x, y).unwrap();
        let (kl, ku) = estimate_rsc_rss(&loss, 1, &[vec![0.0, 0.0]]).unwrap();
        assert!((kl - 1.0).abs() < 1e-12);
        assert!((ku - 4.0).abs() < 1e-12);
    }

    #[test]
    fn logistic_at_zero_quarter_gram() {
        // orthogonal ±1 regressor columns: restricted Hessian at 0 is I/4
        let data = crate::ising::SampleMatrix::from_rows(vec![
            vec![1, 1, 1],
            vec![1, 1, -1],
            vec![1, -1, 1],
            vec![1, -1, -1],
            vec![-1, 1, 1],
            vec![-1, 1, -1],
            vec![-1, -1, 1],
            vec![-1, -1, -1],
        ])
        .unwrap();
        let loss = NodeConditionalLogisticLoss::new(&data, 0, false).unwrap();
        let (kl, ku) = estimate_rsc_rss(&loss, 2, &[vec![0.0, 0.0]]).unwrap();
        assert!((kl - 0.25).abs() < 1e-12);
        assert!((ku - 0.25).abs() < 1e-12);
    }

    #[test]
    fn enumeration_matches_exhaustive_small_case() {
        // oracle: brute force over every support size, not just the top one
        let x = ndarray::array![
            [1.0, 0.4, -0.2, 0.9, 0.0],
            [-0.3, 1.2, 0.5, -0.1, 0.7],
            [0.8, -0.6, 1.1, 0.2, -0.4],
            [0.1, 0.3, -0.9, 1.4, 0.6],
            [-0.5, 0.8, 0.2, -0.7, 1.3],
            [0.9, -0.2, 0.6, 0.3, -1.1],
        ];
        let y = Array1::zeros(6);
        let loss = SquaredLoss::new(x, y).unwrap();
        let probes = vec![vec![0.0; 5]];
        let (kl, ku) = estimate_rsc_rss(&loss, 3, &probes).unwrap();
        let mut kl_brute = f64::INFINITY;
        let mut ku_brute = f64::NEG_INFINITY;
        for size in 1..=3usize {
            for support in (0..5).combinations(size) {
                let h = loss.restricted_hessian(&probes[0], &support);
                let eigs = symmetric_eigenvalues(&h);
                kl_brute = kl_brute.min(eigs[0]);
                ku_brute = ku_brute.max(eigs[eigs.len() - 1]);
            }
        }
        assert!((kl - kl_brute).abs() < 1e-12);
        assert!((ku - ku_brute).abs() < 1e-12);
    }

    #[test]
    fn enumeration_guards() {
        let loss = orthonormal_squared(5, &[0.0; 5]);
        assert!(matches!(
            estimate_rsc_rss(&loss, 0, &[vec![0.0; 5]]),
            Err(DiagnosticsError::BadSparsityLevel(0))
        ));
        assert!(matches!(
            estimate_rsc_rss(&loss, 6, &[vec![0.0; 5]]),
            Err(DiagnosticsError::BadSparsityLevel(6))
        ));
        assert!(matches!(
            estimate_rsc_rss(&loss, 1, &[]),
            Err(DiagnosticsError::NoProbes)
        ));
    }

    #[test]
    fn noise_level_zero_on_interpolating_fit() {
        let loss = orthonormal_squared(4, &[0.5, -0.25, 0.0, 0.0]);
        let star = ParamVector::from_coeffs(vec![0.5, -0.25, 0.0, 0.0]);
        assert!(measure_noise_level(&loss, &star) < 1e-14);
    }

    #[test]
    fn eta_bound_formula() {
        // rho = 1: 2 + 4 (0 + √2)² = 10 regardless of sparsity
        assert!((eta_lower_bound(1.0, 3) - 10.0).abs() < 1e-12);
        assert_eq!(eta_lower_bound(1.0, 0), 2.0);
        assert!(eta_lower_bound(2.0, 2) > 10.0);
    }
}
