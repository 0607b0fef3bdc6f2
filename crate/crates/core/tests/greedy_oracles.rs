//! Oracle checks for the greedy optimizer: exhaustive grid search for the
//! forward step, coordinate bisection for the restricted fits, direct
//! re-evaluation for the backward scan, and best-subset enumeration for
//! whole runs.

mod common;

use std::collections::BTreeSet;

use greedygm::greedy::{
    backward_scan, forward_search, refit, run_greedy, GreedyConfig, ParamVector, StepKind,
};
use greedygm::ising::{assign_couplings, gibbs_sample, make_chain, GibbsSettings, SampleMatrix};
use greedygm::losses::{NodeConditionalLogisticLoss, SmoothLoss, SquaredLoss};
use ndarray::{Array1, Array2};
use rand::Rng;

/// Fixed ±1 design for the logistic grid-search oracle: three variables,
/// eight samples, distinct spin-product statistics for the two candidate
/// coordinates of node 0.
fn logistic_fixture() -> SampleMatrix {
    SampleMatrix::from_rows(vec![
        vec![1, 1, 1],
        vec![1, 1, -1],
        vec![1, -1, 1],
        vec![-1, -1, 1],
        vec![-1, -1, -1],
        vec![-1, 1, 1],
        vec![1, 1, 1],
        vec![1, 1, 1],
    ])
    .unwrap()
}

/// Six-sample ±1 fixture for the two-dimensional refit oracle (edge
/// coefficient plus intercept for node 0).
fn refit_fixture() -> SampleMatrix {
    SampleMatrix::from_rows(vec![
        vec![1, 1],
        vec![1, 1],
        vec![1, -1],
        vec![-1, -1],
        vec![-1, -1],
        vec![-1, 1],
    ])
    .unwrap()
}

#[test]
fn forward_search_matches_grid_oracle_on_logistic_fixture() {
    let data = logistic_fixture();
    let loss = NodeConditionalLogisticLoss::new(&data, 0, false).unwrap();
    let cfg = GreedyConfig::new(1e-6, 0.5);
    let theta = ParamVector::zeros(loss.dim());

    // oracle: exhaustive search over a 1e-4-spaced grid on [-5, 5] per coord
    let mut oracle_best: Option<(usize, f64, f64)> = None;
    let base = loss.value(theta.coeffs());
    for coord in 0..loss.dim() {
        let mut best_alpha = 0.0;
        let mut best_value = base;
        let steps = 100_000;
        for k in 0..=steps {
            let alpha = -5.0 + 10.0 * (k as f64) / (steps as f64);
            let mut probe = vec![0.0; loss.dim()];
            probe[coord] = alpha;
            let value = loss.value(&probe);
            if value < best_value {
                best_value = value;
                best_alpha = alpha;
            }
        }
        let gain = base - best_value;
        if oracle_best.map_or(true, |(_, _, g)| gain > g) {
            oracle_best = Some((coord, best_alpha, gain));
        }
    }
    let (oracle_j, oracle_alpha, oracle_gain) = oracle_best.unwrap();

    let fwd = forward_search(&loss, &theta, &cfg).unwrap();
    assert_eq!(fwd.index, oracle_j);
    assert!(
        (fwd.step - oracle_alpha).abs() < 1e-3,
        "step {} vs grid {}",
        fwd.step,
        oracle_alpha
    );
    assert!(
        (fwd.gain - oracle_gain).abs() < 1e-7,
        "gain {} vs grid {}",
        fwd.gain,
        oracle_gain
    );
    // this fixture has its optimum at sigma(alpha) = 3/4, i.e. alpha = ln 3
    assert!((fwd.step - 3.0f64.ln()).abs() < 1e-6);
}

#[test]
fn flat_direction_has_zero_gain() {
    // spin products of node 0 with variable 1 are exactly balanced
    let data = SampleMatrix::from_rows(vec![
        vec![1, 1],
        vec![1, -1],
        vec![-1, 1],
        vec![-1, -1],
    ])
    .unwrap();
    let loss = NodeConditionalLogisticLoss::new(&data, 0, false).unwrap();
    let cfg = GreedyConfig::new(1e-6, 0.5);
    let fwd = forward_search(&loss, &ParamVector::zeros(1), &cfg).unwrap();
    assert!(fwd.gain <= cfg.line_search_tol);

    let result = run_greedy(&loss, &cfg).unwrap();
    assert!(result.theta_hat.support().is_empty());
}

#[test]
fn refit_matches_coordinate_bisection_oracle() {
    let data = refit_fixture();
    let loss = NodeConditionalLogisticLoss::new(&data, 0, true).unwrap();
    assert_eq!(loss.dim(), 2); // edge coefficient + intercept
    let cfg = GreedyConfig::new(1e-6, 0.5);
    let support: BTreeSet<usize> = [0].into_iter().collect();
    let fit = refit(&loss, &support, &cfg).unwrap();

    // oracle: Gauss-Seidel sweeps, each solving one stationarity condition
    // by bisection on the partial derivative
    let mut oracle = vec![0.0f64, 0.0];
    for _sweep in 0..400 {
        let mut delta: f64 = 0.0;
        for coord in 0..2 {
            let (mut lo, mut hi) = (-40.0f64, 40.0f64);
            let partial = |v: f64, oracle: &[f64]| {
                let mut point = oracle.to_vec();
                point[coord] = v;
                loss.gradient(&point)[coord]
            };
            assert!(partial(lo, &oracle) < 0.0 && partial(hi, &oracle) > 0.0);
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if partial(mid, &oracle) < 0.0 {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            let new = 0.5 * (lo + hi);
            delta = delta.max((new - oracle[coord]).abs());
            oracle[coord] = new;
        }
        if delta < 1e-12 {
            break;
        }
    }

    assert!(
        (fit.get(0) - oracle[0]).abs() < 1e-6,
        "edge {} vs oracle {}",
        fit.get(0),
        oracle[0]
    );
    assert!(
        (fit.get(1) - oracle[1]).abs() < 1e-6,
        "intercept {} vs oracle {}",
        fit.get(1),
        oracle[1]
    );

    // idempotence: refitting the same support returns the same vector
    let again = refit(&loss, &support, &cfg).unwrap();
    assert!(fit.l2_distance(&again) < 1e-10);
}

#[test]
fn backward_scan_matches_direct_reevaluation() {
    let data = logistic_fixture();
    let loss = NodeConditionalLogisticLoss::new(&data, 0, false).unwrap();
    let cfg = GreedyConfig::new(1e-6, 0.5);
    let support: BTreeSet<usize> = [0, 1].into_iter().collect();
    let fit = refit(&loss, &support, &cfg).unwrap();

    let base = loss.value(fit.coeffs());
    let mut oracle: Option<(usize, f64)> = None;
    for &coord in fit.support() {
        let mut removed = fit.coeffs().to_vec();
        removed[coord] = 0.0;
        let increase = loss.value(&removed) - base;
        if oracle.map_or(true, |(_, inc)| increase < inc) {
            oracle = Some((coord, increase));
        }
    }
    let (oracle_j, oracle_increase) = oracle.unwrap();

    let bwd = backward_scan(&loss, &fit).unwrap();
    assert_eq!(bwd.index, oracle_j);
    assert!((bwd.increase - oracle_increase).abs() < 1e-12);
}

#[test]
fn greedy_equals_best_subset_on_100_noiseless_orthonormal_instances() {
    let mut rng = common::rng(20_240_001);
    let cfg = GreedyConfig::new(0.01, 0.5);
    for trial in 0..100 {
        let p = 6 + (trial % 7); // 6..=12
        let s_star = 1 + (trial % 3); // 1..=3
        let n = 2 * p;
        let x = common::orthonormal_design(n, p, &mut rng);
        let mut theta_star = vec![0.0; p];
        for j in 0..s_star {
            let magnitude = 0.5 + rng.random::<f64>();
            let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
            theta_star[j] = sign * magnitude;
        }
        // scatter the support around
        for j in (0..p).rev() {
            let k = rng.random_range(0..=j);
            theta_star.swap(j, k);
        }
        let y: Array1<f64> = {
            let mut y = Array1::<f64>::zeros(n);
            for i in 0..n {
                let mut v = 0.0;
                for j in 0..p {
                    v += x[[i, j]] * theta_star[j];
                }
                y[i] = v;
            }
            y
        };
        let loss = SquaredLoss::new(x.clone(), y.clone()).unwrap();
        let result = run_greedy(&loss, &cfg).unwrap();
        let (oracle_support, _) = common::best_subset(&x, &y, 3, 1e-10);
        assert_eq!(
            result.theta_hat.support(),
            &oracle_support,
            "trial {trial}: greedy {:?} vs oracle {:?}",
            result.theta_hat.support(),
            oracle_support
        );
    }
}

/// Correlated design built so that the greedy provably adds a decoy
/// column and removes it again: the decoy is `0.8·(e1+e2)/√2 + 0.6·e3`
/// over an orthonormal basis, and the response lives in span(e1, e2).
fn backward_engagement_instance() -> (Array2<f64>, Array1<f64>) {
    let n = 64;
    let p = 6;
    let mut rng = common::rng(77_031);
    let basis = common::orthonormal_design(n, p, &mut rng); // columns √n-scaled
    let mut x = Array2::<f64>::zeros((n, p));
    for i in 0..n {
        let e = |j: usize| basis[[i, j]];
        x[[i, 0]] = e(0);
        x[[i, 1]] = e(1);
        x[[i, 2]] = 0.8 * (e(0) + e(1)) / 2.0f64.sqrt() + 0.6 * e(2);
        x[[i, 3]] = e(3);
        x[[i, 4]] = e(4);
        x[[i, 5]] = e(5);
    }
    let mut y = Array1::<f64>::zeros(n);
    for i in 0..n {
        y[i] = x[[i, 0]] + x[[i, 1]];
    }
    (x, y)
}

#[test]
fn backward_step_engages_and_final_support_is_optimal() {
    let (x, y) = backward_engagement_instance();
    let loss = SquaredLoss::new(x.clone(), y.clone()).unwrap();
    let cfg = GreedyConfig::new(0.01, 0.5);
    let result = run_greedy(&loss, &cfg).unwrap();

    assert!(
        result.trace.backward_steps() >= 1,
        "expected at least one backward step, trace: {:?}",
        result
            .trace
            .steps
            .iter()
            .map(|s| (s.kind, s.index))
            .collect::<Vec<_>>()
    );
    // the decoy (column 2) is added first and later removed
    assert_eq!(result.trace.steps[0].index, 2);
    assert_eq!(result.trace.steps[0].kind, StepKind::Forward);

    let terminal_size = result.theta_hat.support_len();
    let (oracle_support, _) = common::best_subset_exact_size(&x, &y, terminal_size);
    assert_eq!(result.theta_hat.support(), &oracle_support);
    let expected: BTreeSet<usize> = [0, 1].into_iter().collect();
    assert_eq!(result.theta_hat.support(), &expected);
}

/// Re-verifies every run-level guarantee through the public API alone:
/// terminal conditions by fresh scans, per-round progress and the
/// termination bound from the trace, and refit stationarity from an
/// independent gradient evaluation.
fn verify_run_contract<L: SmoothLoss + ?Sized>(
    loss: &L,
    cfg: &GreedyConfig,
    result: &greedygm::greedy::GreedyResult,
) {
    let eps = cfg.stop_threshold;
    let nu = cfg.backward_factor;

    // terminal forward condition
    if let Some(gain) = result.terminal_forward_gain {
        assert!(gain <= eps + 1e-12);
    }
    if !result.support_capped && result.theta_hat.support_len() < loss.dim() {
        let fwd = forward_search(loss, &result.theta_hat, cfg).unwrap();
        assert!(
            fwd.gain <= eps + cfg.line_search_tol,
            "terminal forward gain {} exceeds {}",
            fwd.gain,
            eps
        );
    }

    // terminal backward condition
    if !result.theta_hat.support().is_empty() {
        let size = result.theta_hat.support_len();
        let gain = result.trace.gain_by_size[size].unwrap();
        let bwd = backward_scan(loss, &result.theta_hat).unwrap();
        assert!(
            bwd.increase > nu * gain,
            "terminal backward increase {} within threshold {}",
            bwd.increase,
            nu * gain
        );
    }

    // per-round monotone progress
    let steps = &result.trace.steps;
    let mut round_start = result.trace.initial_loss;
    let mut idx = 0;
    while idx < steps.len() {
        let mut end = idx + 1;
        while end < steps.len() && steps[end].kind == StepKind::Backward {
            end += 1;
        }
        let decrease = round_start - steps[end - 1].loss_after;
        assert!(
            decrease >= (1.0 - nu) * eps - 1e-9,
            "round decrease {decrease} below the guarantee"
        );
        round_start = steps[end - 1].loss_after;
        idx = end;
    }

    // termination bound
    let total = result.trace.initial_loss - result.trace.final_loss();
    assert!(
        (result.trace.forward_steps() as f64) <= total / ((1.0 - nu) * eps) + 1.0 + 1e-9
    );

    // refit stationarity, rechecked by an independent gradient evaluation
    let grad = loss.gradient(result.theta_hat.coeffs());
    for &j in result.theta_hat.support() {
        assert!(
            grad[j].abs() <= cfg.inner_tol,
            "restricted gradient {} at {j} above inner_tol",
            grad[j]
        );
    }
}

#[test]
fn run_contract_holds_on_squared_and_logistic_batches() {
    // squared-loss batch: correlated designs with mild noise
    let mut rng = common::rng(555_002);
    for trial in 0..15 {
        let n = 40;
        let p = 8;
        let x = common::orthonormal_design(n, p, &mut rng);
        let mut y = Array1::<f64>::zeros(n);
        for i in 0..n {
            y[i] = 0.9 * x[[i, 0]] - 0.7 * x[[i, 3]] + 0.05 * common::gaussian(&mut rng);
        }
        let loss = SquaredLoss::new(x, y).unwrap();
        let cfg = GreedyConfig::new(0.01, 0.5);
        let result = run_greedy(&loss, &cfg).unwrap();
        verify_run_contract(&loss, &cfg, &result);
        assert!(result.trace.forward_steps() >= 1, "trial {trial} took no steps");
    }

    // logistic batch: chain-model data at several sample sizes
    for trial in 0..6 {
        let skeleton = make_chain(6).unwrap();
        let model = assign_couplings(&skeleton, 0.5, 900 + trial).unwrap();
        let data = gibbs_sample(&model, 400 + 200 * trial as usize, &GibbsSettings::with_seed(17 + trial))
            .unwrap();
        let eps = (data.n() as f64 * data.p() as f64).ln() / data.n() as f64;
        let cfg = GreedyConfig::new(eps, 0.5);
        for node in 0..3 {
            let loss = NodeConditionalLogisticLoss::new(&data, node, false).unwrap();
            let result = run_greedy(&loss, &cfg).unwrap();
            verify_run_contract(&loss, &cfg, &result);
        }
    }
}
