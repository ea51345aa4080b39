//! Command-line driver: single tracking runs, CRB sweeps and Monte Carlo
//! studies over a JSON scenario.

mod output;

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use leoris::channel::Region;
use leoris::filter::BeliefMode;
use leoris::scenario::{
    build_world, crb_sweep, observe, run_monte_carlo, run_variant, summarize, CrbGrid, FilterVariant, RunVariant,
    ScenarioConfig, ScenarioError, TrialRun,
};

const EXIT_CONFIG: u8 = 2;
const EXIT_RUNTIME: u8 = 3;

#[derive(Parser)]
#[command(name = "leoris", version, about = "9D tracking from LEO-satellite and RIS channel parameters")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one filter over one trial and write track.csv and summary.json.
    Track(TrackArgs),
    /// Bound on the RIS departure angles over a frame-size grid; writes crb.csv.
    CrbSweep(CrbArgs),
    /// Run many trials of several variants; writes metrics.csv, cdf.csv and summary.json.
    Montecarlo(MonteCarloArgs),
}

#[derive(Args)]
struct Common {
    /// Scenario JSON; fields left out take the desk defaults.
    #[arg(long)]
    scenario: Option<PathBuf>,
    /// Use the full profile (5 satellites, 2 RISs, 3000 subcarriers, 32 transmissions).
    #[arg(long, conflicts_with = "scenario")]
    paper_scale: bool,
    /// Root seed; overrides the scenario's.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory, created if missing.
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum FilterArg {
    Riemannian,
    Euclidean,
}

impl From<FilterArg> for FilterVariant {
    fn from(f: FilterArg) -> Self {
        match f {
            FilterArg::Riemannian => FilterVariant::Riemannian,
            FilterArg::Euclidean => FilterVariant::Euclidean,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum BeliefArg {
    Identity,
    #[value(name = "fim_approx")]
    FimApprox,
    Oracle,
}

impl From<BeliefArg> for BeliefMode {
    fn from(b: BeliefArg) -> Self {
        match b {
            BeliefArg::Identity => BeliefMode::Identity,
            BeliefArg::FimApprox => BeliefMode::FimApprox,
            BeliefArg::Oracle => BeliefMode::Oracle,
        }
    }
}

#[derive(Args)]
struct TrackArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long, value_enum, default_value = "riemannian")]
    variant: FilterArg,
    #[arg(long, value_enum, default_value = "fim_approx")]
    belief: BeliefArg,
    /// Number of RISs taken into the observation (default: all).
    #[arg(long)]
    ris: Option<usize>,
    /// Trial index whose random streams are used.
    #[arg(long, default_value_t = 0)]
    trial: usize,
}

#[derive(Args)]
struct CrbArgs {
    #[command(flatten)]
    common: Common,
    /// Transmissions per frame.
    #[arg(long, value_delimiter = ',', default_values_t = [4, 8, 16, 32])]
    transmissions: Vec<usize>,
    /// Satellite counts (prefixes of the scenario's list; default: all counts).
    #[arg(long, value_delimiter = ',')]
    sats: Option<Vec<usize>>,
    /// Subcarrier counts (default: the scenario's).
    #[arg(long, value_delimiter = ',')]
    subcarriers: Option<Vec<usize>>,
    #[arg(long, value_delimiter = ',', default_values = ["rural", "urban"])]
    regions: Vec<RegionArg>,
}

#[derive(Clone, Copy, ValueEnum)]
enum RegionArg {
    Rural,
    Suburban,
    Urban,
}

impl From<RegionArg> for Region {
    fn from(r: RegionArg) -> Self {
        match r {
            RegionArg::Rural => Region::Rural,
            RegionArg::Suburban => Region::Suburban,
            RegionArg::Urban => Region::Urban,
        }
    }
}

#[derive(Args)]
struct MonteCarloArgs {
    #[command(flatten)]
    common: Common,
    /// Trial count; overrides the scenario's.
    #[arg(long)]
    trials: Option<usize>,
    /// Filters to run (comma separated).
    #[arg(long, value_enum, value_delimiter = ',', default_values = ["riemannian"])]
    variant: Vec<FilterArg>,
    /// Belief modes to run (comma separated).
    #[arg(long, value_enum, value_delimiter = ',', default_values = ["identity", "fim_approx", "oracle"])]
    belief: Vec<BeliefArg>,
    /// RIS counts to run (comma separated; default: 0 and all).
    #[arg(long, value_delimiter = ',')]
    ris: Option<Vec<usize>>,
}

/// Failure carrying the process exit status.
struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn config(message: impl Into<String>) -> Self {
        Self { code: EXIT_CONFIG, message: message.into() }
    }

    fn runtime(message: impl Into<String>) -> Self {
        Self { code: EXIT_RUNTIME, message: message.into() }
    }
}

impl From<ScenarioError> for Failure {
    fn from(e: ScenarioError) -> Self {
        match e {
            ScenarioError::Config(_) | ScenarioError::EmptyGrid => Failure::config(e.to_string()),
            other => Failure::runtime(other.to_string()),
        }
    }
}

impl From<output::OutputError> for Failure {
    fn from(e: output::OutputError) -> Self {
        Failure::config(e.to_string())
    }
}

fn load(common: &Common) -> Result<ScenarioConfig, Failure> {
    let mut cfg = match (&common.scenario, common.paper_scale) {
        (Some(path), _) => ScenarioConfig::from_path(path)?,
        (None, true) => ScenarioConfig::paper_scale(),
        (None, false) => ScenarioConfig::desk(),
    };
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn prepare_out(dir: &Path) -> Result<(), Failure> {
    std::fs::create_dir_all(dir).map_err(|e| Failure::config(format!("cannot create {}: {e}", dir.display())))
}

fn ris_count(cfg: &ScenarioConfig, requested: Option<usize>) -> Result<usize, Failure> {
    let n = requested.unwrap_or(cfg.riss.len());
    if n > cfg.riss.len() {
        return Err(Failure::config(format!("--ris {n} exceeds the {} RISs of the scenario", cfg.riss.len())));
    }
    Ok(n)
}

fn cmd_track(args: &TrackArgs) -> Result<(), Failure> {
    let cfg = load(&args.common)?;
    prepare_out(&args.common.out)?;
    let variant =
        RunVariant { filter: args.variant.into(), belief: args.belief.into(), ris_count: ris_count(&cfg, args.ris)? };
    let started = Instant::now();
    let world = build_world(&cfg, args.trial)?;
    let observed = observe(&cfg, &world, variant.ris_count)?;
    let records = run_variant(&cfg, &world, &observed, variant).map_err(|e| Failure::runtime(e.to_string()))?;
    let runtime = started.elapsed().as_secs_f64();
    output::write_track(&args.common.out.join("track.csv"), &world.labels.truth.states, &records)?;
    let run = TrialRun { trial: args.trial, variant, outcome: Ok(records) };
    let summary = summarize(std::slice::from_ref(&run), &[variant]).remove(0);
    let doc =
        output::TrackSummary { scenario: &cfg.name, seed: cfg.seed, trial: args.trial, runtime_s: runtime, summary };
    output::write_json(&args.common.out.join("summary.json"), &doc)?;
    Ok(())
}

fn cmd_crb_sweep(args: &CrbArgs) -> Result<(), Failure> {
    let cfg = load(&args.common)?;
    prepare_out(&args.common.out)?;
    let grid = CrbGrid {
        transmissions: args.transmissions.clone(),
        sats: args.sats.clone().unwrap_or_else(|| (1..=cfg.satellites.len()).collect()),
        subcarriers: args.subcarriers.clone().unwrap_or_else(|| vec![cfg.frame.subcarriers]),
        regions: args.regions.iter().map(|&r| r.into()).collect(),
    };
    let rows = crb_sweep(&cfg, &grid)?;
    output::write_crb(&args.common.out.join("crb.csv"), &rows)?;
    Ok(())
}

fn cmd_montecarlo(args: &MonteCarloArgs) -> Result<(), Failure> {
    let mut cfg = load(&args.common)?;
    if let Some(t) = args.trials {
        cfg.trials = t;
    }
    cfg.validate()?;
    prepare_out(&args.common.out)?;
    let counts = match &args.ris {
        Some(c) => c.iter().map(|&n| ris_count(&cfg, Some(n))).collect::<Result<Vec<_>, _>>()?,
        None if cfg.riss.is_empty() => vec![0],
        None => vec![0, cfg.riss.len()],
    };
    let mut variants = Vec::new();
    for &filter in &args.variant {
        for &belief in &args.belief {
            for &ris_count in &counts {
                let v = RunVariant { filter: filter.into(), belief: belief.into(), ris_count };
                if !variants.contains(&v) {
                    variants.push(v);
                }
            }
        }
    }
    let runs = run_monte_carlo(&cfg, cfg.trials, &variants);
    // all file writes happen after the parallel phase
    output::write_metrics(&args.common.out.join("metrics.csv"), &runs)?;
    output::write_cdf(&args.common.out.join("cdf.csv"), &runs, &variants)?;
    let summaries = summarize(&runs, &variants);
    let doc =
        output::MonteCarloSummary { scenario: &cfg.name, seed: cfg.seed, trials: cfg.trials, variants: summaries };
    output::write_json(&args.common.out.join("summary.json"), &doc)?;
    for r in runs.iter().filter_map(|r| r.outcome.as_ref().err().map(|e| (r, e))) {
        eprintln!("trial {} {}: {}", r.0.trial, r.0.variant.label(), r.1);
    }
    if runs.iter().all(|r| r.outcome.is_err()) {
        return Err(Failure::runtime("every trial failed"));
    }
    Ok(())
}

fn init_threads() -> Result<(), Failure> {
    let Ok(v) = std::env::var("MT_THREADS") else { return Ok(()) };
    let n: usize = v.parse().ok().filter(|&n| n > 0).ok_or_else(|| Failure::config(format!("MT_THREADS={v}")))?;
    rayon::ThreadPoolBuilder::new().num_threads(n).build_global().map_err(|e| Failure::config(e.to_string()))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = init_threads().and_then(|()| match &cli.command {
        Command::Track(a) => cmd_track(a),
        Command::CrbSweep(a) => cmd_crb_sweep(a),
        Command::Montecarlo(a) => cmd_montecarlo(a),
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
