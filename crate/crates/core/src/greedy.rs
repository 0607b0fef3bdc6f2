//! Forward-backward greedy optimization of a smooth loss.
//!
//! Starting from the zero vector, each round adds the single coordinate
//! whose optimal one-dimensional move most decreases the loss, refits on the
//! enlarged support, and then repeatedly removes coordinates whose deletion
//! costs no more than `backward_factor` times the forward gain recorded at
//! the current support size, refitting after every removal. The run stops
//! when the best available forward gain drops to `stop_threshold` or below.
//!
//! Forward gains are bookkept per support size: the threshold used by a
//! backward step at size `k` is the gain of the most recent forward step
//! that reached size `k`. Every round therefore improves the loss by at
//! least `(1 − backward_factor) · stop_threshold`, which bounds the number
//! of steps; the trace records enough to re-verify this after the fact.

use std::collections::BTreeSet;

use thiserror::Error;

use crate::linalg::{cholesky, cholesky_solve};
use crate::losses::{CoordProbe, SmoothLoss};

/// Coefficient magnitude beyond which a non-converging inner solve is
/// reported as likely-separable data.
pub const SEPARABLE_COEF_BOUND: f64 = 30.0;

/// Slack allowed when re-checking the per-round progress guarantee.
pub const PROGRESS_SLACK: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum GreedyError {
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("no inactive coordinate available for a forward step")]
    NoInactiveCoordinate,
    #[error("backward scan requires a non-empty support")]
    EmptySupport,
    #[error(
        "inner solve failed on support {support:?} after {iterations} iterations \
         (max |coefficient| = {max_coefficient:.3}; above {SEPARABLE_COEF_BOUND} \
         this indicates separable or degenerate data)"
    )]
    InnerSolveFailure {
        support: Vec<usize>,
        iterations: usize,
        max_coefficient: f64,
    },
    #[error("one-dimensional minimization diverged on coordinate {coord} (step {alpha:.1})")]
    LineSearchDiverged { coord: usize, alpha: f64 },
    #[error("greedy contract violated: {0}")]
    ContractViolation(String),
}

/// Deterministic tie-breaking rule for equal gains. Only one rule exists;
/// it is part of the config so that runs are reproducible by construction.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum TieBreak {
    #[default]
    LowestIndex,
}

/// Configuration of a greedy run.
#[derive(Debug, Clone)]
pub struct GreedyConfig {
    /// Minimum forward gain required to continue (`ε` in the trace checks).
    pub stop_threshold: f64,
    /// Backward step factor in `(0, 1)`; a coordinate is removed while its
    /// deletion increases the loss by at most this fraction of the recorded
    /// forward gain.
    pub backward_factor: f64,
    /// Cap on the selected support size; `None` means the full dimension.
    pub max_support: Option<usize>,
    /// Sup-norm gradient tolerance of the restricted refits.
    pub inner_tol: f64,
    /// Iteration cap of the restricted refits.
    pub inner_max_iter: usize,
    /// Derivative tolerance of the one-dimensional forward line search.
    pub line_search_tol: f64,
    pub tie_break: TieBreak,
}

impl GreedyConfig {
    pub fn new(stop_threshold: f64, backward_factor: f64) -> Self {
        GreedyConfig {
            stop_threshold,
            backward_factor,
            max_support: None,
            inner_tol: 1e-8,
            inner_max_iter: 100,
            line_search_tol: 1e-8,
            tie_break: TieBreak::LowestIndex,
        }
    }

    /// Caps the support at four times the expected sparsity.
    pub fn with_expected_sparsity(mut self, sparsity: usize) -> Self {
        self.max_support = Some(4 * sparsity.max(1));
        self
    }

    pub fn validate(&self, dim: usize) -> Result<(), GreedyError> {
        if !(self.stop_threshold > 0.0) {
            return Err(GreedyError::InvalidConfig(format!(
                "stop_threshold must be positive, got {}",
                self.stop_threshold
            )));
        }
        if !(self.backward_factor > 0.0 && self.backward_factor < 1.0) {
            return Err(GreedyError::InvalidConfig(format!(
                "backward_factor must lie in (0, 1), got {}",
                self.backward_factor
            )));
        }
        if let Some(cap) = self.max_support {
            if cap == 0 || cap > dim {
                return Err(GreedyError::InvalidConfig(format!(
                    "max_support {cap} out of range 1..={dim}"
                )));
            }
        }
        if !(self.inner_tol > 0.0) {
            return Err(GreedyError::InvalidConfig("inner_tol must be positive".into()));
        }
        if self.inner_max_iter == 0 {
            return Err(GreedyError::InvalidConfig(
                "inner_max_iter must be at least 1".into(),
            ));
        }
        if !(self.line_search_tol > 0.0) {
            return Err(GreedyError::InvalidConfig(
                "line_search_tol must be positive".into(),
            ));
        }
        Ok(())
    }

    fn effective_max_support(&self, dim: usize) -> usize {
        self.max_support.unwrap_or(dim).min(dim)
    }
}

/// Dense coefficient vector with its tracked support set. The support is,
/// by construction, exactly the set of nonzero coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamVector {
    coeffs: Vec<f64>,
    support: BTreeSet<usize>,
}

impl ParamVector {
    pub fn zeros(dim: usize) -> Self {
        ParamVector {
            coeffs: vec![0.0; dim],
            support: BTreeSet::new(),
        }
    }

    pub fn from_coeffs(coeffs: Vec<f64>) -> Self {
        let support = coeffs
            .iter()
            .enumerate()
            .filter(|(_, &c)| c != 0.0)
            .map(|(j, _)| j)
            .collect();
        ParamVector { coeffs, support }
    }

    pub fn dim(&self) -> usize {
        self.coeffs.len()
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn support(&self) -> &BTreeSet<usize> {
        &self.support
    }

    pub fn support_len(&self) -> usize {
        self.support.len()
    }

    pub fn get(&self, coord: usize) -> f64 {
        self.coeffs[coord]
    }

    pub fn set(&mut self, coord: usize, value: f64) {
        self.coeffs[coord] = value;
        if value != 0.0 {
            self.support.insert(coord);
        } else {
            self.support.remove(&coord);
        }
    }

    pub fn l2_distance(&self, other: &ParamVector) -> f64 {
        assert_eq!(self.dim(), other.dim());
        self.coeffs
            .iter()
            .zip(&other.coeffs)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }

    pub fn norm2(&self) -> f64 {
        self.coeffs.iter().map(|c| c * c).sum::<f64>().sqrt()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepKind {
    Forward,
    Backward,
}

/// One recorded optimizer step, after its refit.
#[derive(Debug, Clone)]
pub struct TraceStep {
    pub kind: StepKind,
    /// Coordinate added or removed.
    pub index: usize,
    /// Support size after the step (pinned coordinates excluded).
    pub support_size: usize,
    /// Forward gain of the step; `None` for backward steps.
    pub forward_gain: Option<f64>,
    /// Loss value after the refit that followed the step.
    pub loss_after: f64,
}

/// Per-iteration record of a greedy run.
#[derive(Debug, Clone, Default)]
pub struct GreedyTrace {
    pub steps: Vec<TraceStep>,
    /// Most recent forward gain recorded at each support size (index = size).
    pub gain_by_size: Vec<Option<f64>>,
    /// Loss at the starting point, before any step.
    pub initial_loss: f64,
}

impl GreedyTrace {
    fn new(dim: usize, initial_loss: f64) -> Self {
        GreedyTrace {
            steps: Vec::new(),
            gain_by_size: vec![None; dim + 1],
            initial_loss,
        }
    }

    pub fn forward_steps(&self) -> usize {
        self.steps
            .iter()
            .filter(|s| s.kind == StepKind::Forward)
            .count()
    }

    pub fn backward_steps(&self) -> usize {
        self.steps
            .iter()
            .filter(|s| s.kind == StepKind::Backward)
            .count()
    }

    pub fn final_loss(&self) -> f64 {
        self.steps
            .last()
            .map(|s| s.loss_after)
            .unwrap_or(self.initial_loss)
    }

    /// Re-checks the bookkeeping guarantees: every recorded forward gain
    /// exceeds the stop threshold, every round (a forward step plus its
    /// trailing backward steps) decreased the loss by at least
    /// `(1 − ν) · ε` up to [`PROGRESS_SLACK`], and the total number of
    /// forward steps respects the implied termination bound.
    pub fn check_contract(&self, config: &GreedyConfig) -> Result<(), GreedyError> {
        let eps = config.stop_threshold;
        let nu = config.backward_factor;
        for step in &self.steps {
            if step.kind == StepKind::Forward {
                let gain = step.forward_gain.ok_or_else(|| {
                    GreedyError::ContractViolation("forward step without a gain".into())
                })?;
                if gain <= eps {
                    return Err(GreedyError::ContractViolation(format!(
                        "recorded forward gain {gain} at or below threshold {eps}"
                    )));
                }
            }
        }
        let min_round_decrease = (1.0 - nu) * eps - PROGRESS_SLACK;
        let mut round_start = self.initial_loss;
        let mut idx = 0;
        while idx < self.steps.len() {
            debug_assert_eq!(self.steps[idx].kind, StepKind::Forward);
            let mut end = idx + 1;
            while end < self.steps.len() && self.steps[end].kind == StepKind::Backward {
                end += 1;
            }
            let round_end = self.steps[end - 1].loss_after;
            if round_start - round_end < min_round_decrease {
                return Err(GreedyError::ContractViolation(format!(
                    "round ending at step {} decreased the loss by {:.3e}, \
                     below the guaranteed {:.3e}",
                    end - 1,
                    round_start - round_end,
                    min_round_decrease
                )));
            }
            round_start = round_end;
            idx = end;
        }
        let total_decrease = self.initial_loss - self.final_loss();
        let bound = total_decrease / ((1.0 - nu) * eps) + 1.0;
        if (self.forward_steps() as f64) > bound + 1e-9 {
            return Err(GreedyError::ContractViolation(format!(
                "{} forward steps exceed the termination bound {:.3}",
                self.forward_steps(),
                bound
            )));
        }
        Ok(())
    }
}

/// Output of [`run_greedy`].
#[derive(Debug, Clone)]
pub struct GreedyResult {
    pub theta_hat: ParamVector,
    pub trace: GreedyTrace,
    /// The sub-threshold forward gain that triggered termination; `None`
    /// when the run stopped at the support cap instead.
    pub terminal_forward_gain: Option<f64>,
    /// True when the run stopped because the support cap was reached.
    pub support_capped: bool,
}

impl GreedyResult {
    /// Selected support excluding pinned coordinates.
    pub fn selected_support(&self, loss: &dyn SmoothLoss) -> BTreeSet<usize> {
        let pinned: BTreeSet<usize> = loss.pinned_coords().into_iter().collect();
        self.theta_hat
            .support()
            .iter()
            .copied()
            .filter(|j| !pinned.contains(j))
            .collect()
    }
}

/// Best single-coordinate move from `theta`.
#[derive(Debug, Clone, Copy)]
pub struct ForwardStep {
    pub index: usize,
    pub step: f64,
    pub gain: f64,
}

/// Cheapest single-coordinate removal from `theta`.
#[derive(Debug, Clone, Copy)]
pub struct BackwardStep {
    pub index: usize,
    pub increase: f64,
}

/// Minimizes the one-dimensional restriction along `coord` by safeguarded
/// Newton steps inside a sign-change bracket of the derivative, falling back
/// to bisection. Both provided losses are convex along coordinates, so the
/// bracket always contains the minimizer when one exists.
fn minimize_coordinate(
    probe: &dyn CoordProbe,
    coord: usize,
    tol: f64,
) -> Result<(f64, f64), GreedyError> {
    let at0 = probe.eval(coord, 0.0);
    if at0.d1.abs() <= tol {
        return Ok((0.0, at0.value));
    }
    // Expand away from zero until the derivative changes sign. The first
    // probe is a Newton step, which is already the minimizer for quadratic
    // restrictions.
    let dir = -at0.d1.signum();
    let max_step = 2.0 * SEPARABLE_COEF_BOUND;
    let mut step = if at0.d2 > 0.0 {
        (at0.d1.abs() / at0.d2).clamp(1e-3, max_step)
    } else {
        1.0
    };
    let (mut lo, mut hi);
    let mut lo_eval;
    let mut hi_eval;
    loop {
        let alpha = dir * step;
        let eval = probe.eval(coord, alpha);
        if eval.d1.abs() <= tol {
            return Ok((alpha, eval.value));
        }
        if eval.d1.signum() != at0.d1.signum() {
            if dir > 0.0 {
                lo = 0.0;
                lo_eval = at0;
                hi = alpha;
                hi_eval = eval;
            } else {
                lo = alpha;
                lo_eval = eval;
                hi = 0.0;
                hi_eval = at0;
            }
            break;
        }
        step *= 2.0;
        if step > max_step {
            return Err(GreedyError::LineSearchDiverged {
                coord,
                alpha: dir * step,
            });
        }
    }
    // lo_eval.d1 < 0 < hi_eval.d1 up to the stopping tolerance.
    let mut best = if lo_eval.value < hi_eval.value {
        (lo, lo_eval)
    } else {
        (hi, hi_eval)
    };
    for _ in 0..200 {
        let (alpha_c, eval_c) = best;
        let newton = if eval_c.d2 > 0.0 {
            alpha_c - eval_c.d1 / eval_c.d2
        } else {
            f64::NAN
        };
        let alpha = if newton.is_finite() && newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
        let eval = probe.eval(coord, alpha);
        if eval.d1.abs() <= tol {
            return Ok((alpha, eval.value));
        }
        if eval.d1 < 0.0 {
            lo = alpha;
            lo_eval = eval;
        } else {
            hi = alpha;
            hi_eval = eval;
        }
        best = if lo_eval.value < hi_eval.value {
            (lo, lo_eval)
        } else {
            (hi, hi_eval)
        };
        if hi - lo < 1e-15 * (1.0 + lo.abs().max(hi.abs())) {
            // Bracket collapsed to machine precision; the best endpoint is
            // the minimizer for all practical purposes.
            return Ok((best.0, best.1.value));
        }
    }
    Ok((best.0, best.1.value))
}

/// Finds the inactive coordinate whose optimal one-dimensional move most
/// decreases the loss. Pinned coordinates are never candidates; ties are
/// broken toward the lowest index.
pub fn forward_search<L: SmoothLoss + ?Sized>(
    loss: &L,
    theta: &ParamVector,
    config: &GreedyConfig,
) -> Result<ForwardStep, GreedyError> {
    let pinned: BTreeSet<usize> = loss.pinned_coords().into_iter().collect();
    let probe = loss.probe(theta.coeffs());
    let base = probe.base_value();
    let mut best: Option<ForwardStep> = None;
    for coord in 0..loss.dim() {
        if theta.support().contains(&coord) || pinned.contains(&coord) {
            continue;
        }
        let (alpha, value) = minimize_coordinate(probe.as_ref(), coord, config.line_search_tol)?;
        let gain = (base - value).max(0.0);
        if best.map_or(true, |b| gain > b.gain) {
            best = Some(ForwardStep {
                index: coord,
                step: alpha,
                gain,
            });
        }
    }
    best.ok_or(GreedyError::NoInactiveCoordinate)
}

/// Finds the active coordinate whose removal (zeroing, without refit)
/// increases the loss the least. Pinned coordinates are not candidates;
/// ties are broken toward the lowest index.
pub fn backward_scan<L: SmoothLoss + ?Sized>(
    loss: &L,
    theta: &ParamVector,
) -> Result<BackwardStep, GreedyError> {
    let pinned: BTreeSet<usize> = loss.pinned_coords().into_iter().collect();
    let probe = loss.probe(theta.coeffs());
    let base = probe.base_value();
    let mut best: Option<BackwardStep> = None;
    for &coord in theta.support() {
        if pinned.contains(&coord) {
            continue;
        }
        let removed = probe.eval(coord, -theta.get(coord)).value;
        let increase = removed - base;
        if best.map_or(true, |b| increase < b.increase) {
            best = Some(BackwardStep {
                index: coord,
                increase,
            });
        }
    }
    best.ok_or(GreedyError::EmptySupport)
}

/// Minimizes the loss over the given support (plus any pinned coordinates)
/// by damped Newton iteration with a halving line search. The returned
/// vector is zero off the support and its restricted gradient satisfies the
/// configured sup-norm tolerance.
pub fn refit<L: SmoothLoss + ?Sized>(
    loss: &L,
    support: &BTreeSet<usize>,
    config: &GreedyConfig,
) -> Result<ParamVector, GreedyError> {
    if support.is_empty() && loss.pinned_coords().is_empty() {
        return Err(GreedyError::EmptySupport);
    }
    refit_from(loss, support, &ParamVector::zeros(loss.dim()), config)
}

/// As [`refit`], warm-started at `start` (which must be supported inside
/// `support` plus the pinned coordinates).
fn refit_from<L: SmoothLoss + ?Sized>(
    loss: &L,
    support: &BTreeSet<usize>,
    start: &ParamVector,
    config: &GreedyConfig,
) -> Result<ParamVector, GreedyError> {
    let mut coords: Vec<usize> = support.iter().copied().collect();
    for pin in loss.pinned_coords() {
        if !support.contains(&pin) {
            coords.push(pin);
        }
    }
    coords.sort_unstable();
    if coords.is_empty() {
        return Ok(ParamVector::zeros(loss.dim()));
    }

    let mut theta = ParamVector::zeros(loss.dim());
    for &j in &coords {
        theta.set(j, start.get(j));
    }
    let mut value = loss.value(theta.coeffs());
    let fail = |theta: &ParamVector, iterations: usize| GreedyError::InnerSolveFailure {
        support: coords.clone(),
        iterations,
        max_coefficient: theta
            .coeffs()
            .iter()
            .fold(0.0f64, |acc, c| acc.max(c.abs())),
    };
    for iter in 0..config.inner_max_iter {
        let grad = loss.gradient(theta.coeffs());
        let restricted: Vec<f64> = coords.iter().map(|&j| grad[j]).collect();
        let gnorm = restricted.iter().fold(0.0f64, |acc, g| acc.max(g.abs()));
        if gnorm <= config.inner_tol {
            return Ok(theta);
        }
        let hessian = loss.restricted_hessian(theta.coeffs(), &coords);
        let factor = cholesky(&hessian).ok_or_else(|| fail(&theta, iter))?;
        let neg_g: Vec<f64> = restricted.iter().map(|g| -g).collect();
        let direction = cholesky_solve(&factor, &neg_g);
        let slope: f64 = restricted
            .iter()
            .zip(&direction)
            .map(|(g, d)| g * d)
            .sum();
        // Halving line search with an Armijo-style sufficient decrease. The
        // slack keeps the final Newton steps acceptable once the remaining
        // decrease falls below the summation noise of the loss value; the
        // gradient check above is what actually terminates the iteration.
        let rounding = 1e-11 * (1.0 + value.abs());
        let mut step = 1.0;
        let mut accepted = false;
        while step >= 1e-14 {
            let mut candidate = theta.clone();
            for (&j, &d) in coords.iter().zip(&direction) {
                candidate.set(j, theta.get(j) + step * d);
            }
            let cand_value = loss.value(candidate.coeffs());
            if cand_value <= value + 1e-4 * step * slope + rounding {
                theta = candidate;
                value = cand_value;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            return Err(fail(&theta, iter));
        }
    }
    Err(fail(&theta, config.inner_max_iter))
}

/// Runs the forward-backward greedy optimizer from the zero vector.
///
/// When the loss pins coordinates (an intercept), those are fitted before
/// the first forward step and stay active throughout. Stopping at the
/// support cap is reported through [`GreedyResult::support_capped`] with the
/// best-so-far estimate rather than as an error.
pub fn run_greedy<L: SmoothLoss + ?Sized>(
    loss: &L,
    config: &GreedyConfig,
) -> Result<GreedyResult, GreedyError> {
    let dim = loss.dim();
    config.validate(dim)?;
    let pinned = loss.pinned_coords();
    let empty = BTreeSet::new();
    let mut theta = if pinned.is_empty() {
        ParamVector::zeros(dim)
    } else {
        refit_from(loss, &empty, &ParamVector::zeros(dim), config)?
    };
    let initial_loss = loss.value(theta.coeffs());
    let mut trace = GreedyTrace::new(dim, initial_loss);
    let mut active: BTreeSet<usize> = BTreeSet::new();
    let max_support = config.effective_max_support(dim - pinned.len());
    let step_cap = 100 * dim + 1000;

    let mut terminal_forward_gain = None;
    let mut support_capped = false;
    loop {
        if active.len() >= max_support {
            support_capped = true;
            break;
        }
        let fwd = forward_search(loss, &theta, config)?;
        if fwd.gain <= config.stop_threshold {
            terminal_forward_gain = Some(fwd.gain);
            break;
        }
        active.insert(fwd.index);
        let size = active.len();
        trace.gain_by_size[size] = Some(fwd.gain);
        let mut warm = theta.clone();
        warm.set(fwd.index, fwd.step);
        theta = refit_from(loss, &active, &warm, config)?;
        trace.steps.push(TraceStep {
            kind: StepKind::Forward,
            index: fwd.index,
            support_size: size,
            forward_gain: Some(fwd.gain),
            loss_after: loss.value(theta.coeffs()),
        });

        while !active.is_empty() {
            let size = active.len();
            let gain_here = trace.gain_by_size[size]
                .expect("every size below the current one was reached by a forward step");
            let bwd = backward_scan(loss, &theta)?;
            if bwd.increase > config.backward_factor * gain_here {
                break;
            }
            active.remove(&bwd.index);
            let mut warm = theta.clone();
            warm.set(bwd.index, 0.0);
            theta = if active.is_empty() && pinned.is_empty() {
                ParamVector::zeros(dim)
            } else {
                refit_from(loss, &active, &warm, config)?
            };
            trace.steps.push(TraceStep {
                kind: StepKind::Backward,
                index: bwd.index,
                support_size: active.len(),
                forward_gain: None,
                loss_after: loss.value(theta.coeffs()),
            });
        }

        if trace.steps.len() > step_cap {
            return Err(GreedyError::ContractViolation(format!(
                "{} steps without termination",
                trace.steps.len()
            )));
        }
    }

    trace.check_contract(config)?;
    // Terminal backward condition: with a non-empty support, the cheapest
    // removal must cost more than the backward threshold at the final size.
    if !active.is_empty() {
        let size = active.len();
        let gain_here = trace.gain_by_size[size].expect("size reached by a forward step");
        let bwd = backward_scan(loss, &theta)?;
        if bwd.increase <= config.backward_factor * gain_here {
            return Err(GreedyError::ContractViolation(format!(
                "terminal backward condition violated: removal of {} costs {:.3e} \
                 with threshold {:.3e}",
                bwd.index,
                bwd.increase,
                config.backward_factor * gain_here
            )));
        }
    }
    Ok(GreedyResult {
        theta_hat: theta,
        trace,
        terminal_forward_gain,
        support_capped,
    })
}
