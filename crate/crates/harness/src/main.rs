use std::collections::BTreeSet;
use std::fs;
use std::path::PathBuf;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};

use greedygm::diagnostics::{
    check_stopping_size, check_theorem1, default_probes, estimate_rsc_rss, eta_lower_bound,
    measure_noise_level, TheoryConstants, MAX_ENUMERATION_DIM,
};
use greedygm::greedy::{run_greedy, GreedyConfig, ParamVector};
use greedygm::ising::{
    assign_couplings, derive_seed, gibbs_sample, make_star, GibbsSettings, Provenance,
    SampleMatrix,
};
use greedygm::losses::{NodeConditionalLogisticLoss, SmoothLoss};
use greedygm::structure::{
    l1_structure, learn_structure, sweep_l1_constant, CombineRule, EdgeSet, L1Options,
    L1_CONSTANT_CANDIDATES,
};
use greedygm_harness::config::star_hub_degree;
use greedygm_harness::experiment::{greedy_threshold, l1_lambda, write_simulation};
use greedygm_harness::{
    kvfile, run_sweep, ExperimentConfig, HarnessError, L1Constant, Method, Topology,
};

#[derive(Parser)]
#[command(
    name = "greedygm",
    version,
    about = "Structure learning experiments for pairwise binary graphical models"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a model and Gibbs samples; writes <out>.csv, <out>.meta,
    /// <out>.edges
    Simulate(SimulateArgs),
    /// Learn an edge set from a ±1 sample CSV
    Learn(LearnArgs),
    /// Run a success-probability sweep over a β grid
    Sweep(SweepArgs),
    /// Estimate curvature constants and check the recovery guarantees on
    /// one instance
    Diagnose(DiagnoseArgs),
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long, default_value = "chain")]
    topology: Topology,
    #[arg(long, default_value_t = 16)]
    p: usize,
    /// Coupling magnitude; signs are random
    #[arg(long, default_value_t = 0.5)]
    omega: f64,
    /// Star hub degree (defaults to one tenth of the node count, rounded up)
    #[arg(long)]
    hub_degree: Option<usize>,
    #[arg(long)]
    n: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 200)]
    burn_in: usize,
    #[arg(long, default_value_t = 10)]
    thin: usize,
    /// Output base path (extensions are appended)
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct LearnArgs {
    /// ±1 sample CSV, one sample per row
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value = "greedy")]
    method: Method,
    /// Greedy threshold constant in ε = c·log(np)/n
    #[arg(long)]
    c: Option<f64>,
    #[arg(long, default_value_t = 0.5)]
    nu: f64,
    /// ℓ1 constant in λ = c'·√(log p / n), or "sweep"
    #[arg(long, default_value = "sweep")]
    cprime: L1Constant,
    #[arg(long, default_value = "or")]
    rule: CombineRule,
    #[arg(long)]
    out: PathBuf,
    /// Optional true edge list for a comparison report
    #[arg(long)]
    truth: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    /// key=value config file; flags below override its values
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    topology: Option<Topology>,
    #[arg(long)]
    p: Option<usize>,
    #[arg(long)]
    omega: Option<f64>,
    /// Comma-separated β grid
    #[arg(long)]
    betas: Option<String>,
    #[arg(long)]
    trials: Option<usize>,
    /// Comma-separated subset of {greedy, l1}
    #[arg(long)]
    methods: Option<String>,
    #[arg(long)]
    c: Option<f64>,
    #[arg(long)]
    nu: Option<f64>,
    #[arg(long)]
    cprime: Option<L1Constant>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    rule: Option<CombineRule>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
    #[arg(long)]
    burn_in: Option<usize>,
    #[arg(long)]
    thin: Option<usize>,
    /// Write measured wall times into the CSV (disables byte-level
    /// reproducibility of results.csv)
    #[arg(long, default_value_t = false)]
    timings: bool,
}

#[derive(Args)]
struct DiagnoseArgs {
    /// Analyze an existing ±1 sample CSV instead of generating data
    #[arg(long, conflicts_with_all = ["topology", "omega", "n", "seed"])]
    data: Option<PathBuf>,
    #[arg(long, default_value = "chain")]
    topology: Topology,
    #[arg(long, default_value_t = 8)]
    p: usize,
    #[arg(long, default_value_t = 0.5)]
    omega: f64,
    /// Sample count for the generated instance (default 2000)
    #[arg(long)]
    n: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Node whose conditional loss is analyzed
    #[arg(long, default_value_t = 0)]
    node: usize,
    /// Support size for the curvature enumeration
    #[arg(long, default_value_t = 4)]
    level: usize,
    /// Greedy threshold constant for the companion run
    #[arg(long)]
    c: Option<f64>,
    /// Write the report here instead of stdout
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> anyhow::Result<()> {
    let cli = Cli::parse();
    match cli.command {
        Command::Simulate(args) => simulate(args),
        Command::Learn(args) => learn(args),
        Command::Sweep(args) => sweep(args),
        Command::Diagnose(args) => diagnose(args),
    }
}

fn simulate(args: SimulateArgs) -> anyhow::Result<()> {
    let skeleton = match args.topology {
        Topology::Star => {
            let hub = args.hub_degree.unwrap_or_else(|| star_hub_degree(args.p));
            make_star(args.p, hub)?
        }
        _ => {
            if args.hub_degree.is_some() {
                bail!("--hub-degree only applies to the star topology");
            }
            args.topology.skeleton(args.p)?
        }
    };
    let model = assign_couplings(&skeleton, args.omega, derive_seed(args.seed, 0))?;
    let settings = GibbsSettings {
        burn_in_sweeps: args.burn_in,
        thin_sweeps: args.thin,
        seed: derive_seed(args.seed, 1),
    };
    let mut data = gibbs_sample(&model, args.n, &settings)?;
    data.set_provenance(Provenance {
        graph: Some(args.topology.to_string()),
        magnitude: Some(args.omega),
        seed: settings.seed,
        burn_in_sweeps: settings.burn_in_sweeps,
        thin_sweeps: settings.thin_sweeps,
    });
    write_simulation(&args.out, &data, &model.edge_set())?;
    println!(
        "wrote {} samples over {} nodes ({} true edges, d = {}) to {}.csv/.meta/.edges",
        args.n,
        args.p,
        model.edge_set().len(),
        model.max_degree(),
        args.out.display()
    );
    Ok(())
}

fn learn(args: LearnArgs) -> anyhow::Result<()> {
    let data = SampleMatrix::read_csv(&args.data)
        .with_context(|| format!("reading {}", args.data.display()))?;
    let n = data.n();
    let p = data.p();
    let edges = match args.method {
        Method::Greedy => {
            let c = args.c.unwrap_or(greedygm_harness::config::DEFAULT_GREEDY_CONSTANT);
            let eps = greedy_threshold(c, n, p);
            let cfg = GreedyConfig::new(eps, args.nu);
            let (edges, _) = learn_structure(&data, &cfg, args.rule)?;
            eprintln!("greedy: epsilon = {eps:.6e} (c = {c})");
            edges
        }
        Method::L1 => {
            let opts = L1Options::default();
            let cprime = match args.cprime {
                L1Constant::Fixed(cp) => cp,
                L1Constant::Sweep => {
                    let cp = sweep_l1_constant(&data, &L1_CONSTANT_CANDIDATES, &opts)?;
                    eprintln!("l1: held-out sweep selected cprime = {cp}");
                    cp
                }
            };
            let lambda = l1_lambda(cprime, n, p);
            let (edges, _) = l1_structure(&data, lambda, args.rule, &opts)?;
            eprintln!("l1: lambda = {lambda:.6e} (cprime = {cprime})");
            edges
        }
    };
    edges.write_to(&args.out)?;
    println!("wrote {} edges to {}", edges.len(), args.out.display());
    if let Some(truth_path) = args.truth {
        let truth = EdgeSet::read_from(p, &truth_path)?;
        let cmp = edges.compare(&truth);
        println!(
            "comparison: missed = {:?}, extra = {:?}, exact = {}",
            cmp.missed, cmp.extra, cmp.exact
        );
    }
    Ok(())
}

fn sweep(args: SweepArgs) -> anyhow::Result<()> {
    let mut cfg = ExperimentConfig::default();
    if let Some(path) = &args.config {
        let text = fs::read_to_string(path)
            .with_context(|| format!("reading {}", path.display()))?;
        cfg.apply_file(&kvfile::parse(&text)?)?;
    }
    // flags win over file values
    if let Some(v) = args.topology {
        cfg.topology = v;
    }
    if let Some(v) = args.p {
        cfg.p = v;
    }
    if let Some(v) = args.omega {
        cfg.omega = v;
    }
    if let Some(v) = &args.betas {
        cfg.betas = v
            .split(',')
            .map(|b| b.trim().parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|e| HarnessError::Config(format!("bad betas: {e}")))?;
    }
    if let Some(v) = args.trials {
        cfg.trials = v;
    }
    if let Some(v) = &args.methods {
        cfg.methods = v
            .split(',')
            .map(|m| m.trim().parse())
            .collect::<Result<_, _>>()?;
    }
    if let Some(v) = args.c {
        cfg.c = v;
    }
    if let Some(v) = args.nu {
        cfg.nu = v;
    }
    if let Some(v) = args.cprime {
        cfg.cprime = v;
    }
    if let Some(v) = args.seed {
        cfg.seed = v;
    }
    if let Some(v) = args.rule {
        cfg.rule = v;
    }
    if let Some(v) = args.out_dir {
        cfg.out_dir = v;
    }
    if let Some(v) = args.burn_in {
        cfg.burn_in_sweeps = v;
    }
    if let Some(v) = args.thin {
        cfg.thin_sweeps = v;
    }
    cfg.record_timings = args.timings;

    let result = run_sweep(&cfg)?;
    for point in &result.points {
        println!(
            "method={} beta={} n={} success={}/{} ({:.2}) mean_seconds={:.4}",
            point.method,
            point.beta,
            point.n,
            point.successes,
            point.trials,
            point.success_rate(),
            point.mean_seconds
        );
    }
    println!(
        "outputs: {}/results.csv, plot.svg, metadata.txt",
        cfg.out_dir.display()
    );
    Ok(())
}

fn diagnose(args: DiagnoseArgs) -> anyhow::Result<()> {
    let mut report = String::new();
    match &args.data {
        Some(path) => {
            let data = SampleMatrix::read_csv(path)?;
            let loss = NodeConditionalLogisticLoss::new(&data, args.node, false)?;
            let dim = loss.dim();
            if dim > MAX_ENUMERATION_DIM {
                bail!("node loss has {dim} coordinates; enumeration is limited to {MAX_ENUMERATION_DIM}");
            }
            let level = args.level.clamp(1, dim);
            let probes = default_probes(dim, &[&vec![0.0; dim]], level, 7);
            let (kappa_l, kappa_u) = estimate_rsc_rss(&loss, level, &probes)?;
            let grad0 = measure_noise_level(&loss, &ParamVector::zeros(dim));
            report.push_str(&format!(
                "source: {}\nnode: {}\nn: {}\np: {}\nlevel: {}\nkappa_l: {:.6e}\nkappa_u: {:.6e}\nrho: {:.6e}\ngradient_at_zero: {:.6e}\n",
                path.display(),
                args.node,
                data.n(),
                data.p(),
                level,
                kappa_l,
                kappa_u,
                kappa_u / kappa_l,
                grad0
            ));
        }
        None => {
            let n = args.n.unwrap_or(2000);
            let skeleton = args.topology.skeleton(args.p)?;
            let model = assign_couplings(&skeleton, args.omega, derive_seed(args.seed, 0))?;
            let settings = GibbsSettings {
                seed: derive_seed(args.seed, 1),
                ..GibbsSettings::default()
            };
            let data = gibbs_sample(&model, n, &settings)?;
            let loss = NodeConditionalLogisticLoss::new(&data, args.node, false)?;
            let dim = loss.dim();
            if dim > MAX_ENUMERATION_DIM {
                bail!("node loss has {dim} coordinates; enumeration is limited to {MAX_ENUMERATION_DIM}");
            }
            // target of the conditional loss: twice the model parameters
            let target = ParamVector::from_coeffs(model.node_loss_target(args.node, false));
            let s_star = target.support_len();
            let c = args.c.unwrap_or(greedygm_harness::config::DEFAULT_GREEDY_CONSTANT);
            let eps = greedy_threshold(c, n, args.p);
            let greedy_cfg = GreedyConfig::new(eps, 0.5);
            let result = run_greedy(&loss, &greedy_cfg)?;

            let level = args.level.clamp(1, dim);
            let special: Vec<Vec<f64>> = vec![
                vec![0.0; dim],
                target.coeffs().to_vec(),
                result.theta_hat.coeffs().to_vec(),
            ];
            let special_refs: Vec<&[f64]> = special.iter().map(|v| v.as_slice()).collect();
            let probes = default_probes(dim, &special_refs, s_star.max(1), 7);
            let (kappa_l, kappa_u) = estimate_rsc_rss(&loss, level, &probes)?;
            let lambda_n = measure_noise_level(&loss, &target);
            let constants = TheoryConstants {
                kappa_l,
                kappa_u,
                lambda_n,
                eta: eta_lower_bound(kappa_u / kappa_l, s_star),
                s_star,
            };
            let theorem = check_theorem1(&result, &target, &constants, eps)?;
            let selected: BTreeSet<usize> = result
                .theta_hat
                .support()
                .iter()
                .filter_map(|&coord| loss.var_for_coord(coord))
                .collect();
            let truth: BTreeSet<usize> =
                model.neighbors(args.node).iter().map(|&(t, _)| t).collect();
            report.push_str(&format!(
                "topology: {}\nnode: {}\nn: {}\np: {}\nlevel: {}\nepsilon: {:.6e}\n",
                args.topology, args.node, n, args.p, level, eps
            ));
            report.push_str(&theorem.render());
            report.push_str(&format!(
                "stopping_size_ok: {}\nselected_neighbors: {:?}\ntrue_neighbors: {:?}\n",
                check_stopping_size(&result, &constants),
                selected,
                truth
            ));
        }
    }
    match &args.out {
        Some(path) => {
            fs::write(path, &report)?;
            println!("wrote report to {}", path.display());
        }
        None => print!("{report}"),
    }
    Ok(())
}
