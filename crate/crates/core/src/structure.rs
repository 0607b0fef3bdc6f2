//! Graph structure estimation: per-node neighborhood fits combined into an
//! edge-set estimate.
//!
//! The primary estimator runs the forward-backward greedy on each node's
//! conditional logistic loss and unions (or intersects) the recovered
//! neighborhoods. An ℓ1-regularized logistic baseline solved by accelerated
//! proximal gradient is provided for comparison.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rayon::prelude::*;
use thiserror::Error;

use crate::greedy::{run_greedy, GreedyConfig, GreedyError, GreedyTrace};
use crate::ising::SampleMatrix;
use crate::losses::{LossError, NodeConditionalLogisticLoss, SmoothLoss};

#[derive(Debug, Error)]
pub enum StructureError {
    #[error("edge ({0}, {1}) is a self-loop")]
    SelfLoop(usize, usize),
    #[error("node index {index} out of range for {p} nodes")]
    NodeOutOfRange { index: usize, p: usize },
    #[error("missing neighborhood estimate for node {0}")]
    MissingNode(usize),
    #[error("node {node}: {source}")]
    NodeFailure {
        node: usize,
        #[source]
        source: GreedyError,
    },
    #[error("{} node fits failed: {}", .0.len(), render_failures(.0))]
    NodeFailures(Vec<(usize, GreedyError)>),
    #[error("loss construction failed: {0}")]
    Loss(#[from] LossError),
    #[error(
        "l1 solver exceeded {max_iterations} iterations on node {node} \
         (optimality residual {residual:.3e})"
    )]
    MaxIterationsExceeded {
        node: usize,
        max_iterations: usize,
        residual: f64,
    },
    #[error("regularization weight must be positive, got {0}")]
    NonPositiveLambda(f64),
    #[error("no candidate constants supplied")]
    EmptyCandidates,
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

fn render_failures(failures: &[(usize, GreedyError)]) -> String {
    failures
        .iter()
        .map(|(node, err)| format!("node {node}: {err}"))
        .collect::<Vec<_>>()
        .join("; ")
}

/// How per-node neighborhoods are merged into one edge set.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CombineRule {
    /// Edge present if either endpoint claims it.
    Or,
    /// Edge present only if both endpoints claim it.
    And,
}

impl std::str::FromStr for CombineRule {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "or" => Ok(CombineRule::Or),
            "and" => Ok(CombineRule::And),
            other => Err(format!("unknown combine rule {other:?} (expected or|and)")),
        }
    }
}

/// Undirected edges over `p` nodes, stored canonically as `(min, max)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EdgeSet {
    p: usize,
    edges: BTreeSet<(usize, usize)>,
}

/// Difference between an estimated edge set and a reference.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EdgeComparison {
    pub missed: Vec<(usize, usize)>,
    pub extra: Vec<(usize, usize)>,
    pub exact: bool,
}

impl EdgeSet {
    pub fn new(p: usize) -> Self {
        EdgeSet {
            p,
            edges: BTreeSet::new(),
        }
    }

    pub fn from_edges<I>(p: usize, edges: I) -> Result<Self, StructureError>
    where
        I: IntoIterator<Item = (usize, usize)>,
    {
        let mut set = EdgeSet::new(p);
        for (r, t) in edges {
            set.insert(r, t)?;
        }
        Ok(set)
    }

    pub fn insert(&mut self, r: usize, t: usize) -> Result<(), StructureError> {
        if r == t {
            return Err(StructureError::SelfLoop(r, t));
        }
        let hi = r.max(t);
        if hi >= self.p {
            return Err(StructureError::NodeOutOfRange {
                index: hi,
                p: self.p,
            });
        }
        self.edges.insert((r.min(t), hi));
        Ok(())
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn len(&self) -> usize {
        self.edges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.edges.is_empty()
    }

    pub fn contains(&self, r: usize, t: usize) -> bool {
        self.edges.contains(&(r.min(t), r.max(t)))
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.edges.iter().copied()
    }

    /// Missed and extra edges of `self` relative to `truth`.
    pub fn compare(&self, truth: &EdgeSet) -> EdgeComparison {
        let missed: Vec<_> = truth.edges.difference(&self.edges).copied().collect();
        let extra: Vec<_> = self.edges.difference(&truth.edges).copied().collect();
        let exact = missed.is_empty() && extra.is_empty();
        EdgeComparison {
            missed,
            extra,
            exact,
        }
    }

    pub fn is_subset(&self, other: &EdgeSet) -> bool {
        self.edges.is_subset(&other.edges)
    }

    /// Text serialization: one `r t` pair per line, sorted.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (r, t) in &self.edges {
            let _ = writeln!(out, "{r} {t}");
        }
        out
    }

    pub fn write_to(&self, path: &Path) -> Result<(), StructureError> {
        fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn parse(p: usize, text: &str) -> Result<Self, StructureError> {
        let mut set = EdgeSet::new(p);
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut fields = line.split_whitespace();
            let parse_field = |field: Option<&str>| -> Result<usize, StructureError> {
                field
                    .and_then(|f| f.parse().ok())
                    .ok_or(StructureError::Parse {
                        line: lineno + 1,
                        message: format!("expected two node indices, got {line:?}"),
                    })
            };
            let r = parse_field(fields.next())?;
            let t = parse_field(fields.next())?;
            set.insert(r, t)?;
        }
        Ok(set)
    }

    pub fn read_from(p: usize, path: &Path) -> Result<Self, StructureError> {
        let text = fs::read_to_string(path)?;
        Self::parse(p, &text)
    }

    /// Image of the edge set under a node relabeling `perm` (new label of
    /// node `i` is `perm[i]`).
    pub fn relabel(&self, perm: &[usize]) -> Result<EdgeSet, StructureError> {
        assert_eq!(perm.len(), self.p);
        EdgeSet::from_edges(self.p, self.edges.iter().map(|&(r, t)| (perm[r], perm[t])))
    }
}

/// Solver log attached to a neighborhood estimate.
#[derive(Debug, Clone)]
pub enum FitLog {
    Greedy(GreedyTrace),
    L1(L1Summary),
}

/// Convergence summary of one ℓ1 fit.
#[derive(Debug, Clone)]
pub struct L1Summary {
    pub iterations: usize,
    pub objective: f64,
    pub optimality_residual: f64,
    pub lambda: f64,
}

/// One node's estimated neighborhood with its fitted coefficients in the
/// node-local layout of [`NodeConditionalLogisticLoss`].
#[derive(Debug, Clone)]
pub struct NeighborhoodEstimate {
    pub node: usize,
    pub neighbors: BTreeSet<usize>,
    pub coefficients: Vec<f64>,
    pub log: FitLog,
}

/// Runs the greedy optimizer on the conditional logistic loss of one node
/// and maps the selected coordinates back to global node indices.
pub fn greedy_neighborhood(
    data: &SampleMatrix,
    node: usize,
    config: &GreedyConfig,
) -> Result<NeighborhoodEstimate, StructureError> {
    let loss = NodeConditionalLogisticLoss::new(data, node, false)?;
    let result = run_greedy(&loss, config)
        .map_err(|source| StructureError::NodeFailure { node, source })?;
    let neighbors = result
        .theta_hat
        .support()
        .iter()
        .filter_map(|&coord| loss.var_for_coord(coord))
        .collect();
    Ok(NeighborhoodEstimate {
        node,
        neighbors,
        coefficients: result.theta_hat.coeffs().to_vec(),
        log: FitLog::Greedy(result.trace),
    })
}

/// Merges per-node neighborhood estimates into an edge set. Requires one
/// estimate per node, in node order.
pub fn combine(
    estimates: &[NeighborhoodEstimate],
    p: usize,
    rule: CombineRule,
) -> Result<EdgeSet, StructureError> {
    let mut by_node: Vec<Option<&NeighborhoodEstimate>> = vec![None; p];
    for est in estimates {
        if est.node >= p {
            return Err(StructureError::NodeOutOfRange {
                index: est.node,
                p,
            });
        }
        by_node[est.node] = Some(est);
    }
    for (node, est) in by_node.iter().enumerate() {
        if est.is_none() {
            return Err(StructureError::MissingNode(node));
        }
    }
    let claims = |r: usize, t: usize| by_node[r].unwrap().neighbors.contains(&t);
    let mut edges = EdgeSet::new(p);
    for r in 0..p {
        for t in (r + 1)..p {
            let keep = match rule {
                CombineRule::Or => claims(r, t) || claims(t, r),
                CombineRule::And => claims(r, t) && claims(t, r),
            };
            if keep {
                edges.insert(r, t)?;
            }
        }
    }
    Ok(edges)
}

/// Greedy neighborhood estimation for every node (in parallel), combined
/// into an edge-set estimate. Any node failure fails the whole run with a
/// node-attributed report.
pub fn learn_structure(
    data: &SampleMatrix,
    config: &GreedyConfig,
    rule: CombineRule,
) -> Result<(EdgeSet, Vec<NeighborhoodEstimate>), StructureError> {
    let p = data.p();
    let results: Vec<Result<NeighborhoodEstimate, StructureError>> = (0..p)
        .into_par_iter()
        .map(|node| greedy_neighborhood(data, node, config))
        .collect();
    let mut estimates = Vec::with_capacity(p);
    let mut failures = Vec::new();
    for result in results {
        match result {
            Ok(est) => estimates.push(est),
            Err(StructureError::NodeFailure { node, source }) => failures.push((node, source)),
            Err(other) => return Err(other),
        }
    }
    if !failures.is_empty() {
        return Err(StructureError::NodeFailures(failures));
    }
    let edges = combine(&estimates, p, rule)?;
    Ok((edges, estimates))
}

/// Options of the ℓ1-logistic baseline solver.
#[derive(Debug, Clone)]
pub struct L1Options {
    /// Sup-norm tolerance on the subgradient optimality residual.
    pub tolerance: f64,
    pub max_iterations: usize,
    /// Coefficients at or below this magnitude are read as zero.
    pub support_threshold: f64,
    pub include_intercept: bool,
}

impl Default for L1Options {
    fn default() -> Self {
        L1Options {
            tolerance: 1e-7,
            max_iterations: 5000,
            support_threshold: 1e-6,
            include_intercept: false,
        }
    }
}

/// Sup-norm violation of the ℓ1 subgradient optimality conditions at
/// `theta` (the intercept coordinate, when present, is unpenalized).
pub fn l1_optimality_residual(
    loss: &NodeConditionalLogisticLoss<'_>,
    theta: &[f64],
    lambda: f64,
) -> f64 {
    let grad = loss.gradient(theta);
    let intercept = loss.intercept_coord();
    grad.iter()
        .enumerate()
        .map(|(j, &g)| {
            if Some(j) == intercept {
                g.abs()
            } else if theta[j] == 0.0 {
                (g.abs() - lambda).max(0.0)
            } else {
                (g + lambda * theta[j].signum()).abs()
            }
        })
        .fold(0.0f64, f64::max)
}

fn soft_threshold(v: f64, tau: f64) -> f64 {
    if v > tau {
        v - tau
    } else if v < -tau {
        v + tau
    } else {
        0.0
    }
}

/// Minimizes `L(θ) + λ‖θ‖₁` (intercept unpenalized) by accelerated proximal
/// gradient with backtracking and restart on non-monotone objectives, then
/// reads the neighborhood off the thresholded support.
pub fn l1_logistic_neighborhood(
    data: &SampleMatrix,
    node: usize,
    lambda: f64,
    opts: &L1Options,
) -> Result<NeighborhoodEstimate, StructureError> {
    if !(lambda > 0.0) {
        return Err(StructureError::NonPositiveLambda(lambda));
    }
    let loss = NodeConditionalLogisticLoss::new(data, node, opts.include_intercept)?;
    let dim = loss.dim();
    let intercept = loss.intercept_coord();
    let objective = |theta: &[f64]| -> f64 {
        let penalty: f64 = theta
            .iter()
            .enumerate()
            .filter(|(j, _)| Some(*j) != intercept)
            .map(|(_, c)| c.abs())
            .sum();
        loss.value(theta) + lambda * penalty
    };
    let prox = |point: &[f64], grad: &[f64], step: f64| -> Vec<f64> {
        (0..dim)
            .map(|j| {
                let moved = point[j] - step * grad[j];
                if Some(j) == intercept {
                    moved
                } else {
                    soft_threshold(moved, step * lambda)
                }
            })
            .collect()
    };

    let mut x = vec![0.0; dim];
    let mut y = x.clone();
    let mut fx = objective(&x);
    // For ±1 regressors every column has unit second-moment, so the
    // logistic curvature is at most 1/4 and step 4 is a safe starting point.
    let mut step = 4.0;
    let mut momentum = 1.0f64;
    for iter in 0..opts.max_iterations {
        let gy = loss.gradient(&y);
        let ly = loss.value(&y);
        let mut next;
        loop {
            next = prox(&y, &gy, step);
            let ln = loss.value(&next);
            let mut quad = ly;
            let mut dist2 = 0.0;
            for j in 0..dim {
                let d = next[j] - y[j];
                quad += gy[j] * d;
                dist2 += d * d;
            }
            quad += dist2 / (2.0 * step);
            if ln <= quad + 1e-12 || step < 1e-12 {
                break;
            }
            step *= 0.5;
        }
        let f_next = objective(&next);
        let residual = l1_optimality_residual(&loss, &next, lambda);
        if residual <= opts.tolerance {
            let summary = L1Summary {
                iterations: iter + 1,
                objective: f_next,
                optimality_residual: residual,
                lambda,
            };
            return Ok(finish_l1(&loss, node, next, opts, summary));
        }
        let new_momentum = 0.5 * (1.0 + (1.0 + 4.0 * momentum * momentum).sqrt());
        if f_next > fx {
            // restart the momentum sequence
            momentum = 1.0;
            y = next.clone();
        } else {
            let beta = (momentum - 1.0) / new_momentum;
            y = (0..dim)
                .map(|j| next[j] + beta * (next[j] - x[j]))
                .collect();
            momentum = new_momentum;
        }
        x = next;
        fx = f_next.min(fx);
    }
    let residual = l1_optimality_residual(&loss, &x, lambda);
    Err(StructureError::MaxIterationsExceeded {
        node,
        max_iterations: opts.max_iterations,
        residual,
    })
}

fn finish_l1(
    loss: &NodeConditionalLogisticLoss<'_>,
    node: usize,
    mut coefficients: Vec<f64>,
    opts: &L1Options,
    summary: L1Summary,
) -> NeighborhoodEstimate {
    let intercept = loss.intercept_coord();
    for (j, c) in coefficients.iter_mut().enumerate() {
        if Some(j) != intercept && c.abs() <= opts.support_threshold {
            *c = 0.0;
        }
    }
    let neighbors = coefficients
        .iter()
        .enumerate()
        .filter(|(_, &c)| c != 0.0)
        .filter_map(|(j, _)| loss.var_for_coord(j))
        .collect();
    NeighborhoodEstimate {
        node,
        neighbors,
        coefficients,
        log: FitLog::L1(summary),
    }
}

/// ℓ1 neighborhood estimation for every node, combined into an edge set.
pub fn l1_structure(
    data: &SampleMatrix,
    lambda: f64,
    rule: CombineRule,
    opts: &L1Options,
) -> Result<(EdgeSet, Vec<NeighborhoodEstimate>), StructureError> {
    let p = data.p();
    let results: Vec<Result<NeighborhoodEstimate, StructureError>> = (0..p)
        .into_par_iter()
        .map(|node| l1_logistic_neighborhood(data, node, lambda, opts))
        .collect();
    let mut estimates = Vec::with_capacity(p);
    for result in results {
        estimates.push(result?);
    }
    let edges = combine(&estimates, p, rule)?;
    Ok((edges, estimates))
}

/// Candidate constants for the ℓ1 regularization sweep.
pub const L1_CONSTANT_CANDIDATES: [f64; 5] = [0.25, 0.5, 1.0, 2.0, 4.0];

/// Picks the constant `c'` in `λ = c'·√(log p / n)` by a deterministic
/// 80/20 split: fits every node on the first 80% of the rows for each
/// candidate and keeps the candidate with the highest held-out conditional
/// log-likelihood (ties go to the smaller constant). Rows are i.i.d. by
/// construction, so the split is by row index with no shuffle.
pub fn sweep_l1_constant(
    data: &SampleMatrix,
    candidates: &[f64],
    opts: &L1Options,
) -> Result<f64, StructureError> {
    if candidates.is_empty() {
        return Err(StructureError::EmptyCandidates);
    }
    let n = data.n();
    let n_train = ((n as f64) * 0.8).ceil() as usize;
    if n_train == 0 || n_train >= n {
        // Too few rows to split; fall back to the middle candidate.
        return Ok(candidates[candidates.len() / 2]);
    }
    let train = data.head(n_train);
    let p = data.p() as f64;
    let mut best: Option<(f64, f64)> = None; // (constant, held-out log-likelihood)
    for &c in candidates {
        let lambda = c * (p.ln() / n_train as f64).sqrt();
        let mut holdout_ll = 0.0;
        let mut failed = false;
        for node in 0..data.p() {
            match l1_logistic_neighborhood(&train, node, lambda, opts) {
                Ok(est) => {
                    let full_loss = NodeConditionalLogisticLoss::new(
                        data,
                        node,
                        opts.include_intercept,
                    )?;
                    for i in n_train..n {
                        holdout_ll -= full_loss.per_sample_nll(&est.coefficients, i);
                    }
                }
                Err(_) => {
                    failed = true;
                    break;
                }
            }
        }
        if failed {
            continue;
        }
        if best.map_or(true, |(_, ll)| holdout_ll > ll) {
            best = Some((c, holdout_ll));
        }
    }
    best.map(|(c, _)| c)
        .ok_or(StructureError::EmptyCandidates)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn estimate(node: usize, neighbors: &[usize]) -> NeighborhoodEstimate {
        NeighborhoodEstimate {
            node,
            neighbors: neighbors.iter().copied().collect(),
            coefficients: Vec::new(),
            log: FitLog::L1(L1Summary {
                iterations: 0,
                objective: 0.0,
                optimality_residual: 0.0,
                lambda: 1.0,
            }),
        }
    }

    #[test]
    fn edge_set_canonicalizes_and_validates() {
        let mut e = EdgeSet::new(4);
        e.insert(3, 1).unwrap();
        assert!(e.contains(1, 3));
        assert!(e.contains(3, 1));
        assert!(matches!(e.insert(2, 2), Err(StructureError::SelfLoop(2, 2))));
        assert!(matches!(
            e.insert(0, 4),
            Err(StructureError::NodeOutOfRange { index: 4, p: 4 })
        ));
    }

    #[test]
    fn edge_set_text_round_trip_and_compare() {
        let e = EdgeSet::from_edges(5, [(0, 1), (3, 2)]).unwrap();
        let text = e.to_text();
        assert_eq!(text, "0 1\n2 3\n");
        let back = EdgeSet::parse(5, &text).unwrap();
        assert_eq!(back, e);

        let truth = EdgeSet::from_edges(5, [(0, 1), (1, 2)]).unwrap();
        let cmp = e.compare(&truth);
        assert_eq!(cmp.missed, vec![(1, 2)]);
        assert_eq!(cmp.extra, vec![(2, 3)]);
        assert!(!cmp.exact);
        assert!(e.compare(&e).exact);
    }

    #[test]
    fn combine_or_and_semantics() {
        // N(0) = {1}, N(1) = {} : OR keeps the edge, AND drops it
        let ests = vec![estimate(0, &[1]), estimate(1, &[])];
        let or = combine(&ests, 2, CombineRule::Or).unwrap();
        assert!(or.contains(0, 1));
        let and = combine(&ests, 2, CombineRule::And).unwrap();
        assert!(and.is_empty());

        // symmetric, correct neighborhoods: OR = AND
        let sym = vec![estimate(0, &[1]), estimate(1, &[0])];
        let or = combine(&sym, 2, CombineRule::Or).unwrap();
        let and = combine(&sym, 2, CombineRule::And).unwrap();
        assert_eq!(or, and);
    }

    #[test]
    fn combine_requires_every_node() {
        let ests = vec![estimate(0, &[1])];
        assert!(matches!(
            combine(&ests, 2, CombineRule::Or),
            Err(StructureError::MissingNode(1))
        ));
    }

    #[test]
    fn l1_rejects_bad_lambda() {
        let data = SampleMatrix::from_rows(vec![vec![1, -1], vec![-1, 1]]).unwrap();
        assert!(matches!(
            l1_logistic_neighborhood(&data, 0, 0.0, &L1Options::default()),
            Err(StructureError::NonPositiveLambda(_))
        ));
    }

    #[test]
    fn l1_large_lambda_gives_empty_neighborhood() {
        let data = SampleMatrix::from_rows(vec![
            vec![1, 1, -1],
            vec![-1, 1, 1],
            vec![1, -1, 1],
            vec![-1, -1, -1],
        ])
        .unwrap();
        // lambda at least ‖∇L(0)‖_∞ keeps the solution at zero
        let est = l1_logistic_neighborhood(&data, 0, 1.0, &L1Options::default()).unwrap();
        assert!(est.neighbors.is_empty());
        assert!(est.coefficients.iter().all(|&c| c == 0.0));
    }

    #[test]
    fn combine_rule_parses() {
        assert_eq!("or".parse::<CombineRule>().unwrap(), CombineRule::Or);
        assert_eq!("AND".parse::<CombineRule>().unwrap(), CombineRule::And);
        assert!("xor".parse::<CombineRule>().is_err());
    }

    #[test]
    fn relabel_permutes_edges() {
        let e = EdgeSet::from_edges(3, [(0, 1)]).unwrap();
        let perm = vec![2, 0, 1]; // node 0 -> 2, node 1 -> 0
        let relabeled = e.relabel(&perm).unwrap();
        assert!(relabeled.contains(0, 2));
        assert_eq!(relabeled.len(), 1);
    }
}
