//! Trial and sweep execution: seeded model generation, shared per-trial
//! data for every method, success accounting, and the CSV/metadata/plot
//! outputs.
//!
//! Randomness layout: every `(β index, trial)` pair owns stream
//! `s = β_index · trials + trial`; the model couplings draw from
//! `derive_seed(seed, 2s)` and the Gibbs sampler from
//! `derive_seed(seed, 2s + 1)`. Methods never consume randomness, so both
//! methods in a trial see the identical sample matrix.

use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::Path;
use std::time::Instant;

use greedygm::greedy::GreedyConfig;
use greedygm::ising::{derive_seed, gibbs_sample, GibbsSettings, IsingModel, SampleMatrix};
use greedygm::structure::{
    l1_structure, learn_structure, sweep_l1_constant, EdgeSet, L1Options,
    L1_CONSTANT_CANDIDATES,
};

use crate::config::{ExperimentConfig, Method, Topology, GREEDY_CONSTANT_CANDIDATES};
use crate::plot::{render_plot, PlotSeries};
use crate::{fmt_sig, HarnessError};

/// Outcome of one method on one trial's data.
#[derive(Debug, Clone)]
pub struct TrialRecord {
    pub method: Method,
    pub beta: f64,
    pub n: usize,
    pub trial: usize,
    /// Stream index owning this trial's randomness.
    pub stream: u64,
    pub success: bool,
    pub missed: usize,
    pub extra: usize,
    /// True when the solver failed outright (counted as an unsuccessful
    /// trial, never a crash).
    pub failed: bool,
    pub seconds: f64,
    /// The ℓ1 constant actually used (after a sweep), when applicable.
    pub cprime_used: Option<f64>,
}

/// Aggregate over the trials of one `(method, β)` grid point.
#[derive(Debug, Clone)]
pub struct PointSummary {
    pub method: Method,
    pub beta: f64,
    pub n: usize,
    pub trials: usize,
    pub successes: usize,
    pub mean_seconds: f64,
}

impl PointSummary {
    pub fn success_rate(&self) -> f64 {
        self.successes as f64 / self.trials as f64
    }
}

#[derive(Debug, Clone)]
pub struct SweepResult {
    pub points: Vec<PointSummary>,
    pub trials: Vec<TrialRecord>,
}

impl SweepResult {
    pub fn points_for(&self, method: Method) -> Vec<&PointSummary> {
        self.points.iter().filter(|p| p.method == method).collect()
    }
}

pub const CSV_HEADER: &str = "method,beta,n,p,d,trials,successes,success_rate,mean_seconds";

/// Greedy stopping threshold for a sample size: `ε = c·log(np)/n`.
pub fn greedy_threshold(c: f64, n: usize, p: usize) -> f64 {
    c * ((n * p) as f64).ln() / n as f64
}

/// ℓ1 regularization weight for a sample size: `λ = c'·√(log p / n)`.
pub fn l1_lambda(cprime: f64, n: usize, p: usize) -> f64 {
    cprime * ((p as f64).ln() / n as f64).sqrt()
}

fn model_for_trial(config: &ExperimentConfig, stream: u64) -> Result<IsingModel, HarnessError> {
    let skeleton = config.topology.skeleton(config.p)?;
    greedygm::ising::assign_couplings(&skeleton, config.omega, derive_seed(config.seed, 2 * stream))
        .map_err(|e| HarnessError::Model(e.to_string()))
}

fn data_for_trial(
    config: &ExperimentConfig,
    model: &IsingModel,
    stream: u64,
    n: usize,
) -> Result<SampleMatrix, HarnessError> {
    let settings = GibbsSettings {
        burn_in_sweeps: config.burn_in_sweeps,
        thin_sweeps: config.thin_sweeps,
        seed: derive_seed(config.seed, 2 * stream + 1),
    };
    gibbs_sample(model, n, &settings).map_err(|e| HarnessError::Model(e.to_string()))
}

/// Fits one method on prepared data, returning the estimated edges and the
/// ℓ1 constant used (when the method swept for one).
fn fit_method(
    config: &ExperimentConfig,
    method: Method,
    data: &SampleMatrix,
    n: usize,
) -> (Result<EdgeSet, String>, Option<f64>) {
    match method {
        Method::Greedy => {
            let eps = greedy_threshold(config.c, n, config.p);
            let greedy_cfg = GreedyConfig::new(eps, config.nu);
            (
                learn_structure(data, &greedy_cfg, config.rule)
                    .map(|(edges, _)| edges)
                    .map_err(|e| e.to_string()),
                None,
            )
        }
        Method::L1 => {
            let opts = L1Options::default();
            let cprime = match config.cprime {
                crate::config::L1Constant::Fixed(cp) => cp,
                crate::config::L1Constant::Sweep => {
                    match sweep_l1_constant(data, &L1_CONSTANT_CANDIDATES, &opts) {
                        Ok(cp) => cp,
                        Err(e) => return (Err(e.to_string()), None),
                    }
                }
            };
            let lambda = l1_lambda(cprime, n, config.p);
            (
                l1_structure(data, lambda, config.rule, &opts)
                    .map(|(edges, _)| edges)
                    .map_err(|e| e.to_string()),
                Some(cprime),
            )
        }
    }
}

/// The model and sample matrix owned by a `(β, trial)` cell. Methods never
/// consume randomness, so every method of the trial sees these exact
/// samples.
pub fn trial_data(
    config: &ExperimentConfig,
    beta_index: usize,
    trial: usize,
) -> Result<(IsingModel, SampleMatrix), HarnessError> {
    let beta = *config
        .betas
        .get(beta_index)
        .ok_or_else(|| HarnessError::Config(format!("beta index {beta_index} out of range")))?;
    let n = config.n_for_beta(beta)?;
    let stream = (beta_index * config.trials + trial) as u64;
    let model = model_for_trial(config, stream)?;
    let data = data_for_trial(config, &model, stream, n)?;
    Ok((model, data))
}

/// Runs a single `(β, trial, method)` cell from scratch.
pub fn run_trial(
    config: &ExperimentConfig,
    beta_index: usize,
    trial: usize,
    method: Method,
) -> Result<TrialRecord, HarnessError> {
    let beta = config.betas[beta_index];
    let n = config.n_for_beta(beta)?;
    let stream = (beta_index * config.trials + trial) as u64;
    let (model, data) = trial_data(config, beta_index, trial)?;
    let truth = model.edge_set();

    let start = Instant::now();
    let (outcome, cprime_used) = fit_method(config, method, &data, n);
    let seconds = start.elapsed().as_secs_f64();
    let record = match outcome {
        Ok(edges) => {
            let cmp = edges.compare(&truth);
            TrialRecord {
                method,
                beta,
                n,
                trial,
                stream,
                success: cmp.exact,
                missed: cmp.missed.len(),
                extra: cmp.extra.len(),
                failed: false,
                seconds,
                cprime_used,
            }
        }
        Err(_) => TrialRecord {
            method,
            beta,
            n,
            trial,
            stream,
            success: false,
            missed: truth.len(),
            extra: 0,
            failed: true,
            seconds,
            cprime_used,
        },
    };
    Ok(record)
}

/// Runs all trials of one β grid point, in parallel over trials.
fn run_point(
    config: &ExperimentConfig,
    beta_index: usize,
) -> Result<Vec<TrialRecord>, HarnessError> {
    use rayon::prelude::*;
    let mut records: Vec<TrialRecord> = (0..config.trials)
        .into_par_iter()
        .map(|trial| -> Result<Vec<TrialRecord>, HarnessError> {
            let beta = config.betas[beta_index];
            let n = config.n_for_beta(beta)?;
            let stream = (beta_index * config.trials + trial) as u64;
            let model = model_for_trial(config, stream)?;
            let data = data_for_trial(config, &model, stream, n)?;
            let truth = model.edge_set();
            let mut out = Vec::with_capacity(config.methods.len());
            for &method in &config.methods {
                let start = Instant::now();
                let (outcome, cprime_used) = fit_method(config, method, &data, n);
                let seconds = start.elapsed().as_secs_f64();
                let record = match outcome {
                    Ok(edges) => {
                        let cmp = edges.compare(&truth);
                        TrialRecord {
                            method,
                            beta,
                            n,
                            trial,
                            stream,
                            success: cmp.exact,
                            missed: cmp.missed.len(),
                            extra: cmp.extra.len(),
                            failed: false,
                            seconds,
                            cprime_used,
                        }
                    }
                    Err(_) => TrialRecord {
                        method,
                        beta,
                        n,
                        trial,
                        stream,
                        success: false,
                        missed: truth.len(),
                        extra: 0,
                        failed: true,
                        seconds,
                        cprime_used,
                    },
                };
                out.push(record);
            }
            Ok(out)
        })
        .collect::<Result<Vec<_>, _>>()?
        .into_iter()
        .flatten()
        .collect();
    // deterministic order regardless of the thread schedule
    records.sort_by(|a, b| (a.trial, a.method).cmp(&(b.trial, b.method)));
    Ok(records)
}

fn summarize(
    config: &ExperimentConfig,
    method: Method,
    beta: f64,
    n: usize,
    records: &[TrialRecord],
) -> PointSummary {
    let mine: Vec<&TrialRecord> = records
        .iter()
        .filter(|r| r.method == method && r.beta == beta)
        .collect();
    PointSummary {
        method,
        beta,
        n,
        trials: config.trials,
        successes: mine.iter().filter(|r| r.success).count(),
        mean_seconds: mine.iter().map(|r| r.seconds).sum::<f64>() / mine.len().max(1) as f64,
    }
}

fn csv_row(config: &ExperimentConfig, d: usize, point: &PointSummary) -> String {
    let seconds = if config.record_timings {
        fmt_sig(point.mean_seconds)
    } else {
        "0".to_string()
    };
    format!(
        "{},{},{},{},{},{},{},{},{}",
        point.method,
        fmt_sig(point.beta),
        point.n,
        config.p,
        d,
        point.trials,
        point.successes,
        fmt_sig(point.success_rate()),
        seconds
    )
}

/// Full CSV for a finished sweep (also assembled incrementally on disk by
/// [`run_sweep`]).
pub fn csv_text(config: &ExperimentConfig, points: &[PointSummary]) -> Result<String, HarnessError> {
    let d = config.max_degree()?;
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for point in points {
        out.push_str(&csv_row(config, d, point));
        out.push('\n');
    }
    Ok(out)
}

fn metadata_text(config: &ExperimentConfig, result: &SweepResult) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "tool: {} {}",
        env!("CARGO_PKG_NAME"),
        env!("CARGO_PKG_VERSION")
    );
    out.push_str(&config.echo());
    for point in &result.points {
        let _ = writeln!(
            out,
            "point: method={} beta={} n={} trials={} successes={} rate={} mean_seconds={:.6}",
            point.method,
            fmt_sig(point.beta),
            point.n,
            point.trials,
            point.successes,
            fmt_sig(point.success_rate()),
            point.mean_seconds
        );
    }
    for r in &result.trials {
        let cprime = r
            .cprime_used
            .map(|c| format!(" cprime={c}"))
            .unwrap_or_default();
        let _ = writeln!(
            out,
            "trial: method={} beta={} n={} trial={} stream={} model_seed={} sampler_seed={} \
             success={} missed={} extra={} failed={} seconds={:.6}{}",
            r.method,
            fmt_sig(r.beta),
            r.n,
            r.trial,
            r.stream,
            derive_seed(config.seed, 2 * r.stream),
            derive_seed(config.seed, 2 * r.stream + 1),
            r.success as u8,
            r.missed,
            r.extra,
            r.failed as u8,
            r.seconds,
            cprime
        );
    }
    out
}

/// Runs the full sweep: the Cartesian product of `(β, trial, method)` with
/// trials in parallel, writing `results.csv` incrementally (one β point at
/// a time, so an interrupted run leaves a valid prefix), then `plot.svg`
/// and `metadata.txt`.
pub fn run_sweep(config: &ExperimentConfig) -> Result<SweepResult, HarnessError> {
    config.validate()?;
    fs::create_dir_all(&config.out_dir)?;
    let d = config.max_degree()?;
    let csv_path = config.out_dir.join("results.csv");
    let mut csv = fs::File::create(&csv_path)?;
    writeln!(csv, "{CSV_HEADER}")?;

    let mut all_trials = Vec::new();
    let mut points = Vec::new();
    for beta_index in 0..config.betas.len() {
        let beta = config.betas[beta_index];
        let n = config.n_for_beta(beta)?;
        let records = run_point(config, beta_index)?;
        for &method in &config.methods {
            let point = summarize(config, method, beta, n, &records);
            writeln!(csv, "{}", csv_row(config, d, &point))?;
            points.push(point);
        }
        csv.flush()?;
        all_trials.extend(records);
    }
    drop(csv);

    let result = SweepResult {
        points,
        trials: all_trials,
    };

    let series: Vec<PlotSeries> = config
        .methods
        .iter()
        .map(|&method| PlotSeries {
            label: method.to_string(),
            points: result
                .points_for(method)
                .iter()
                .map(|p| (p.beta, p.success_rate()))
                .collect(),
        })
        .collect();
    let svg = render_plot(&series)?;
    fs::write(config.out_dir.join("plot.svg"), svg)?;
    fs::write(
        config.out_dir.join("metadata.txt"),
        metadata_text(config, &result),
    )?;
    Ok(result)
}

/// Calibrates the greedy threshold constant: the smallest candidate with
/// zero false-positive edges on every zero-coupling trial (16 nodes, the
/// β = 3 chain sample size). Falls back to the largest candidate if none
/// is clean.
pub fn calibrate_greedy_constant(
    candidates: &[f64],
    trials: usize,
    seed: u64,
) -> Result<f64, HarnessError> {
    let p = 16;
    let config = ExperimentConfig {
        topology: Topology::Chain,
        p,
        seed,
        ..ExperimentConfig::default()
    };
    let n = config.n_for_beta(3.0)?;
    let null_model = IsingModel::new(p, vec![0.0; p], Default::default())
        .map_err(|e| HarnessError::Model(e.to_string()))?;
    let mut datasets = Vec::with_capacity(trials);
    for trial in 0..trials {
        let settings = GibbsSettings {
            burn_in_sweeps: config.burn_in_sweeps,
            thin_sweeps: config.thin_sweeps,
            seed: derive_seed(seed, trial as u64),
        };
        datasets.push(
            gibbs_sample(&null_model, n, &settings)
                .map_err(|e| HarnessError::Model(e.to_string()))?,
        );
    }
    let mut sorted = candidates.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    for &c in &sorted {
        let eps = greedy_threshold(c, n, p);
        let greedy_cfg = GreedyConfig::new(eps, config.nu);
        let clean = datasets.iter().all(|data| {
            learn_structure(data, &greedy_cfg, config.rule)
                .map(|(edges, _)| edges.is_empty())
                .unwrap_or(false)
        });
        if clean {
            return Ok(c);
        }
    }
    Ok(*sorted.last().expect("candidate list is non-empty"))
}

/// Reruns the recorded calibration protocol (20 trials, seed 1).
pub fn default_calibration() -> Result<f64, HarnessError> {
    calibrate_greedy_constant(&GREEDY_CONSTANT_CANDIDATES, 20, 1)
}

/// Writes a sample matrix with its sidecar metadata and true edge list:
/// `<base>.csv`, `<base>.meta`, `<base>.edges`.
pub fn write_simulation(
    base: &Path,
    data: &SampleMatrix,
    truth: &EdgeSet,
) -> Result<(), HarnessError> {
    let csv = base.with_extension("csv");
    let meta = base.with_extension("meta");
    let edges = base.with_extension("edges");
    data.write_csv(&csv)
        .map_err(|e| HarnessError::Model(e.to_string()))?;
    data.write_metadata(&meta)
        .map_err(|e| HarnessError::Model(e.to_string()))?;
    truth
        .write_to(&edges)
        .map_err(|e| HarnessError::Model(e.to_string()))?;
    Ok(())
}
