use anyhow::{anyhow, bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use lanetune::data::{generate_synthetic_dataset, split_train_test, Dataset, GeneratorConfig};
use lanetune::experiment::{relative_change_pct, run_experiment, ExperimentConfig, ExperimentReport};
use lanetune::simulator::{run_closed_loop, simulation_cost, write_trace_csv, DesiredCostParams};
use lanetune::tuner::{evaluate_cfp, tune, TuningReport};
use lanetune::CostParams;

#[derive(Parser)]
#[command(name = "lanetune", version, about = "Simulate and tune an MPC lane-keeping planner against noisy lane estimates")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset.
    Generate(GenerateArgs),
    /// Tune the planner's cost parameters for one set of desired weights.
    Tune(TuneArgs),
    /// Compare a CFP against the desired weights used as planner weights.
    Evaluate(EvaluateArgs),
    /// Write the per-step closed-loop trace of one section as CSV.
    Trace(TraceArgs),
    /// Tune several random desired weightings and report train/test costs.
    Experiment(ExperimentArgs),
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Split {
    Train,
    Test,
    All,
}

#[derive(Args)]
struct Common {
    /// TOML or JSON configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Worker threads (0 = all cores).
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(Args)]
struct GenerateArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct TuneArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    dataset: PathBuf,
    /// Desired weights `q_d,q_theta,q_kappa,q_kappa_dot,r_u`.
    #[arg(long)]
    dcfp: String,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_enum, default_value = "train")]
    split: Split,
    #[arg(long)]
    population: Option<usize>,
    #[arg(long)]
    generations: Option<usize>,
    /// Include the wall time in the report (makes it non-reproducible).
    #[arg(long)]
    record_timing: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct CfpSource {
    /// Planner parameters `w_d,w_theta,w_kappa,w_kappa_dot,w_u,lambda`.
    #[arg(long, conflicts_with = "report")]
    cfp: Option<String>,
    /// Tuning report providing the CFP (and the desired weights if `--dcfp` is absent).
    #[arg(long)]
    report: Option<PathBuf>,
    #[arg(long)]
    dcfp: Option<String>,
}

#[derive(Args)]
struct EvaluateArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    dataset: PathBuf,
    #[command(flatten)]
    source: CfpSource,
    #[arg(long, value_enum, default_value = "test")]
    split: Split,
    /// Also write the table as JSON.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct TraceArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long)]
    section: String,
    #[command(flatten)]
    source: CfpSource,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ExperimentArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    dataset: PathBuf,
    /// Number of desired weight sets.
    #[arg(long)]
    sets: Option<usize>,
    /// Base DE seed.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    dcfp_seed: Option<u64>,
    #[arg(long)]
    population: Option<usize>,
    #[arg(long)]
    generations: Option<usize>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default)]
struct Config {
    generator: GeneratorConfig,
    experiment: ExperimentConfig,
}

/// Input or usage problem, as opposed to a numerical failure.
#[derive(Debug)]
struct UsageError(anyhow::Error);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{:#}", self.0)
    }
}

impl std::error::Error for UsageError {}

fn usage<T>(r: anyhow::Result<T>) -> anyhow::Result<T> {
    r.map_err(|e| UsageError(e).into())
}

fn load_config(common: &Common) -> anyhow::Result<Config> {
    // --workers sizes the global pool in main and is kept out of reports
    match &common.config {
        None => Ok(Config::default()),
        Some(path) => usage(read_config(path)),
    }
}

fn read_config(path: &Path) -> anyhow::Result<Config> {
    let text = fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
    let cfg = if path.extension().is_some_and(|e| e == "json") {
        serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?
    } else {
        toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))?
    };
    Ok(cfg)
}

fn parse_floats<const N: usize>(text: &str, what: &str) -> anyhow::Result<[f64; N]> {
    let values = text
        .split(',')
        .map(|t| t.trim().parse::<f64>())
        .collect::<Result<Vec<_>, _>>()
        .with_context(|| format!("parsing {what} '{text}'"))?;
    values
        .try_into()
        .map_err(|v: Vec<f64>| anyhow!("{what} needs {N} comma-separated values, got {}", v.len()))
}

fn parse_dcfp(text: &str) -> anyhow::Result<DesiredCostParams> {
    Ok(DesiredCostParams::new(parse_floats::<5>(text, "--dcfp")?)?)
}

fn load_dataset(path: &Path, horizon: usize) -> anyhow::Result<Dataset> {
    let ds = Dataset::load(path)?;
    ds.validate(horizon)?;
    Ok(ds)
}

fn select_split(ds: &Dataset, split: Split, cfg: &ExperimentConfig) -> anyhow::Result<Dataset> {
    Ok(match split {
        Split::All => ds.clone(),
        Split::Train => split_train_test(ds, cfg.test_fraction, cfg.split_seed)?.0,
        Split::Test => split_train_test(ds, cfg.test_fraction, cfg.split_seed)?.1,
    })
}

fn resolve_source(source: &CfpSource) -> anyhow::Result<(CostParams, DesiredCostParams)> {
    let report: Option<TuningReport> = match &source.report {
        Some(path) => {
            let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            Some(serde_json::from_str(&text).with_context(|| format!("parsing report {}", path.display()))?)
        }
        None => None,
    };
    let dcfp = match (&source.dcfp, &report) {
        (Some(text), _) => parse_dcfp(text)?,
        (None, Some(r)) => r.dcfp,
        (None, None) => bail!("--dcfp is required unless a tuning report is given"),
    };
    let cfp = match (&source.cfp, &report) {
        (Some(text), _) => {
            let v = parse_floats::<6>(text, "--cfp")?;
            CostParams::new([v[0], v[1], v[2], v[3], v[4]], v[5])?
        }
        (None, Some(r)) => r.outcome.best_cfp,
        (None, None) => dcfp.normalized_cfp(),
    };
    Ok((cfp, dcfp))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> anyhow::Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn cmd_generate(args: GenerateArgs) -> anyhow::Result<()> {
    let mut cfg = load_config(&args.common)?.generator;
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    let ds = usage(generate_synthetic_dataset(&cfg).map_err(Into::into))?;
    ds.save(&args.out)?;
    let speeds = ds.sections.iter().flat_map(|s| s.profile.iter().map(|p| p.v));
    let (lo, hi) = speeds.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    println!(
        "wrote {} sections, {:.1} s total, speeds {:.2}-{:.2} m/s to {}",
        ds.sections.len(),
        ds.total_duration(),
        lo,
        hi,
        args.out.display()
    );
    Ok(())
}

fn cmd_tune(args: TuneArgs) -> anyhow::Result<()> {
    let cfg = load_config(&args.common)?.experiment;
    let mut de = cfg.de;
    if let Some(seed) = args.seed {
        de.rng_seed = seed;
    }
    if let Some(p) = args.population {
        de.population_size = p;
    }
    if let Some(g) = args.generations {
        de.max_generations = g;
    }
    let (dcfp, train) = usage((|| {
        let dcfp = parse_dcfp(&args.dcfp)?;
        let ds = load_dataset(&args.dataset, cfg.sim.horizon)?;
        Ok((dcfp, select_split(&ds, args.split, &cfg)?))
    })())?;
    let start = Instant::now();
    let outcome = tune(&train.sections, &dcfp, &de, &cfg.sim)?;
    let report = TuningReport {
        dcfp,
        de,
        sim: cfg.sim,
        train_sections: train.sections.iter().map(|s| s.id.clone()).collect(),
        outcome,
        wall_time_s: args.record_timing.then(|| start.elapsed().as_secs_f64()),
    };
    write_json(&args.out, &report)?;
    let o = &report.outcome;
    println!(
        "train cost {:.6e} -> {:.6e} ({:+.3} %) after {} evaluations",
        o.seed_cost,
        o.best_cost,
        relative_change_pct(o.seed_cost, o.best_cost)?,
        o.evaluations
    );
    println!("best cfp {:?} lambda {}", o.best_cfp.theta0, o.best_cfp.lambda);
    Ok(())
}

#[derive(Serialize)]
struct EvaluationTable {
    sections: Vec<String>,
    baseline: Vec<f64>,
    candidate: Vec<f64>,
    baseline_total: f64,
    candidate_total: f64,
    relative_change_pct: f64,
}

fn cmd_evaluate(args: EvaluateArgs) -> anyhow::Result<()> {
    let cfg = load_config(&args.common)?.experiment;
    let (cfp, dcfp, ds) = usage((|| {
        let (cfp, dcfp) = resolve_source(&args.source)?;
        let ds = load_dataset(&args.dataset, cfg.sim.horizon)?;
        Ok((cfp, dcfp, select_split(&ds, args.split, &cfg)?))
    })())?;
    let fail = |e: &lanetune::tuner::CostEvaluation| -> anyhow::Result<()> {
        match e.failures.first() {
            Some((id, msg)) => Err(lanetune::Error::Tuning(format!("section '{id}': {msg}")).into()),
            None => Ok(()),
        }
    };
    let base = evaluate_cfp(&ds.sections, &dcfp.normalized_cfp(), &dcfp, &cfg.sim)?;
    fail(&base)?;
    let cand = evaluate_cfp(&ds.sections, &cfp, &dcfp, &cfg.sim)?;
    fail(&cand)?;
    println!("{:<16} {:>16} {:>16}", "section", "baseline", "candidate");
    for (i, s) in ds.sections.iter().enumerate() {
        println!("{:<16} {:>16.8e} {:>16.8e}", s.id, base.per_section[i], cand.per_section[i]);
    }
    let change = relative_change_pct(base.total, cand.total)?;
    println!("{:<16} {:>16.8e} {:>16.8e}", "total", base.total, cand.total);
    println!("relative change {change:+.3} %");
    if let Some(out) = &args.out {
        write_json(
            out,
            &EvaluationTable {
                sections: ds.sections.iter().map(|s| s.id.clone()).collect(),
                baseline: base.per_section,
                candidate: cand.per_section,
                baseline_total: base.total,
                candidate_total: cand.total,
                relative_change_pct: change,
            },
        )?;
    }
    Ok(())
}

fn plot_spec(csv: &Path) -> serde_json::Value {
    let name = csv.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    let panel = |y: &str, label: &str| {
        let des = format!("{y}_des");
        serde_json::json!({ "y": [y, des], "label": label })
    };
    serde_json::json!({
        "data": name,
        "x": "t",
        "panels": [
            panel("d", "lateral offset [m]"),
            panel("theta", "orientation [rad]"),
            panel("kappa", "curvature [1/m]"),
            panel("kappa_dot", "curvature rate [1/(m s)]"),
            { "y": ["u"], "label": "input [1/(m s^2)]" },
        ],
    })
}

fn cmd_trace(args: TraceArgs) -> anyhow::Result<()> {
    let cfg = load_config(&args.common)?.experiment;
    let (cfp, dcfp, ds) = usage((|| {
        let (cfp, dcfp) = resolve_source(&args.source)?;
        Ok((cfp, dcfp, load_dataset(&args.dataset, cfg.sim.horizon)?))
    })())?;
    let section = usage(
        ds.section(&args.section)
            .ok_or_else(|| anyhow!("no section '{}' in {}", args.section, args.dataset.display())),
    )?;
    let result = run_closed_loop(section, &cfp, &cfg.sim)?;
    let mut csv = Vec::new();
    write_trace_csv(&mut csv, &result, section, &dcfp)?;
    fs::write(&args.out, csv).with_context(|| format!("writing {}", args.out.display()))?;
    let spec_path = args.out.with_extension("plot.json");
    write_json(&spec_path, &plot_spec(&args.out))?;
    let cost = simulation_cost(&result, section, &dcfp)?;
    println!(
        "section {}: {} steps, cost {:.8e}; wrote {} and {}",
        section.id,
        result.inputs.len(),
        cost.total,
        args.out.display(),
        spec_path.display()
    );
    Ok(())
}

fn print_report(r: &ExperimentReport) {
    println!(
        "train {} sections ({:.1} s), test {} sections ({:.1} s)",
        r.train_sections.len(),
        r.train_duration,
        r.test_sections.len(),
        r.test_duration
    );
    println!("{:<4} {:>14} {:>14} {:>10}", "set", "test DCFP", "test opt", "change %");
    for row in &r.rows {
        println!(
            "{:<4} {:>14.6e} {:>14.6e} {:>+10.3}",
            row.label, row.test_cost_baseline, row.test_cost_optimized, row.test_change_pct
        );
    }
    println!("mean relative change on test {:+.3} %", r.mean_test_change_pct);
}

fn cmd_experiment(args: ExperimentArgs) -> anyhow::Result<()> {
    let mut cfg = load_config(&args.common)?.experiment;
    if let Some(n) = args.sets {
        cfg.n_sets = n;
    }
    if let Some(s) = args.seed {
        cfg.de.rng_seed = s;
    }
    if let Some(s) = args.dcfp_seed {
        cfg.dcfp_seed = s;
    }
    if let Some(p) = args.population {
        cfg.de.population_size = p;
    }
    if let Some(g) = args.generations {
        cfg.de.max_generations = g;
    }
    let ds = usage(load_dataset(&args.dataset, cfg.sim.horizon))?;
    let report = run_experiment(&ds, &cfg)?;
    write_json(&args.out, &report)?;
    print_report(&report);
    Ok(())
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Generate(a) => cmd_generate(a),
        Command::Tune(a) => cmd_tune(a),
        Command::Evaluate(a) => cmd_evaluate(a),
        Command::Trace(a) => cmd_trace(a),
        Command::Experiment(a) => cmd_experiment(a),
    }
}

fn exit_code(err: &anyhow::Error) -> u8 {
    if err.downcast_ref::<UsageError>().is_some() {
        return 2;
    }
    match err.downcast_ref::<lanetune::Error>() {
        Some(e) if e.is_numerical() => 3,
        _ => 2,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let workers = match &cli.command {
        Command::Generate(a) => a.common.workers,
        Command::Tune(a) => a.common.workers,
        Command::Evaluate(a) => a.common.workers,
        Command::Trace(a) => a.common.workers,
        Command::Experiment(a) => a.common.workers,
    };
    if let Some(w) = workers.filter(|&w| w > 0) {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(w).build_global() {
            log::warn!("could not size the thread pool: {e}");
        }
    }
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
