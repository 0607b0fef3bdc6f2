//! Gibbs sampler correctness against exact enumeration: pairwise moments,
//! total-variation distance at small node counts, and exact agreement
//! between the sampler's conditional and the logistic loss formula.

mod common;

use std::collections::BTreeMap;

use greedygm::ising::{
    assign_couplings, gibbs_sample, make_chain, make_star, GibbsSettings, IsingModel,
};
use greedygm::losses::NodeConditionalLogisticLoss;
use rand::Rng;

fn pair_model(coupling: f64) -> IsingModel {
    let mut c = BTreeMap::new();
    c.insert((0, 1), coupling);
    IsingModel::new(2, vec![0.0; 2], c).unwrap()
}

#[test]
fn independent_spins_have_near_zero_means() {
    let model = IsingModel::new(5, vec![0.0; 5], BTreeMap::new()).unwrap();
    let n = 10_000;
    let data = gibbs_sample(&model, n, &GibbsSettings::with_seed(2)).unwrap();
    let bound = 4.0 / (n as f64).sqrt();
    for node in 0..5 {
        let mean = data.column_mean(node);
        assert!(mean.abs() <= bound, "node {node} mean {mean}");
    }
}

#[test]
fn coupled_pair_moment_matches_tanh() {
    let model = pair_model(0.5);
    let settings = GibbsSettings {
        burn_in_sweeps: 200,
        thin_sweeps: 10,
        seed: 91,
    };
    let data = gibbs_sample(&model, 10_000, &settings).unwrap();
    let moment = data.pair_moment(0, 1);
    let exact = 0.5f64.tanh();
    assert!(
        (moment - exact).abs() <= 0.02,
        "moment {moment} vs tanh(0.5) = {exact}"
    );
}

#[test]
fn chain_pairwise_moments_match_enumeration() {
    let skeleton = make_chain(4).unwrap();
    let model = assign_couplings(&skeleton, 0.5, 5).unwrap();
    let data = gibbs_sample(&model, 10_000, &GibbsSettings::with_seed(23)).unwrap();
    for r in 0..4 {
        for t in (r + 1)..4 {
            let exact = model.exact_pair_moment(r, t).unwrap();
            let empirical = data.pair_moment(r, t);
            assert!(
                (empirical - exact).abs() <= 0.03,
                "pair ({r}, {t}): {empirical} vs exact {exact}"
            );
        }
    }
}

fn total_variation(model: &IsingModel, samples: usize, seed: u64) -> f64 {
    let p = model.p();
    let exact = model.exact_distribution().unwrap();
    let data = gibbs_sample(model, samples, &GibbsSettings::with_seed(seed)).unwrap();
    let mut counts = vec![0usize; 1 << p];
    for i in 0..data.n() {
        let mut state = 0usize;
        for node in 0..p {
            if data.get(i, node) == 1 {
                state |= 1 << node;
            }
        }
        counts[state] += 1;
    }
    let n = data.n() as f64;
    exact
        .iter()
        .zip(&counts)
        .map(|(ex, &c)| (ex - c as f64 / n).abs())
        .sum::<f64>()
        / 2.0
}

#[test]
fn small_model_distributions_are_close_in_total_variation() {
    let fixtures: Vec<IsingModel> = vec![
        pair_model(0.5),
        assign_couplings(&make_chain(4).unwrap(), 0.5, 11).unwrap(),
        assign_couplings(&make_chain(6).unwrap(), 0.5, 12).unwrap(),
        assign_couplings(&make_star(5, 2).unwrap(), 0.5, 13).unwrap(),
    ];
    for (idx, model) in fixtures.iter().enumerate() {
        let tv = total_variation(model, 100_000, 40 + idx as u64);
        assert!(tv <= 0.02, "fixture {idx}: TV distance {tv}");
    }
}

#[test]
fn sampler_conditional_equals_logistic_loss_formula() {
    // The per-sample conditional negative log-likelihood computed by the
    // loss at twice the model parameters must equal -log of the sampler's
    // conditional for the observed spin, configuration by configuration.
    let mut rng = common::rng(314);
    for _ in 0..20 {
        let p = 5;
        let skeleton = make_chain(p).unwrap();
        let mut model = assign_couplings(&skeleton, 0.5, rng.random()).unwrap();
        // random fields exercise the intercept path too
        let fields: Vec<f64> = (0..p).map(|_| rng.random_range(-0.5..0.5)).collect();
        model = IsingModel::new(
            p,
            fields,
            (0..p - 1).map(|i| ((i, i + 1), model.coupling(i, i + 1))).collect(),
        )
        .unwrap();
        let data = gibbs_sample(&model, 8, &GibbsSettings::with_seed(rng.random())).unwrap();
        for r in 0..p {
            let loss = NodeConditionalLogisticLoss::new(&data, r, true).unwrap();
            let target = model.node_loss_target(r, true);
            for i in 0..data.n() {
                let state: Vec<i8> = (0..p).map(|t| data.get(i, t)).collect();
                let p_plus = model.conditional_plus(r, &state);
                let p_observed = if state[r] == 1 { p_plus } else { 1.0 - p_plus };
                let nll = loss.per_sample_nll(&target, i);
                assert!(
                    (nll + p_observed.ln()).abs() < 1e-12,
                    "node {r}, sample {i}: loss {nll} vs -log p {}",
                    -p_observed.ln()
                );
            }
        }
    }
}

#[test]
fn seeded_runs_are_reproducible_and_streams_differ() {
    let model = assign_couplings(&make_chain(5).unwrap(), 0.5, 3).unwrap();
    let a = gibbs_sample(&model, 100, &GibbsSettings::with_seed(10)).unwrap();
    let b = gibbs_sample(&model, 100, &GibbsSettings::with_seed(10)).unwrap();
    let c = gibbs_sample(&model, 100, &GibbsSettings::with_seed(11)).unwrap();
    assert_eq!(a, b);
    assert_ne!(a, c);
}
