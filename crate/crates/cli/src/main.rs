use std::fmt::Display;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use monolab_core::experiments::{
    self, write_csv_file, write_sidecar, BoundsSpec, EfficiencySpec, ExperimentError, LambdaSpec, RunRecord,
    ThresholdGridSpec, TracksSpec,
};
use monolab_core::harvest::{HarvestError, Timing};
use monolab_core::{
    fabricate, harvest, load_oracle, run, save_oracle, DatafileError, FabricationConfig, HarvestSettings,
    PotentialKind, SimError, SimulationConfig, StartPoint,
};
use serde::de::DeserializeOwned;
use serde::Serialize;

/// Seed used when `--seed` is not given.
const DEFAULT_SEED: u64 = 24301;
const THREADS_ENV: &str = "MONOLAB_THREADS";

#[derive(Parser, Debug)]
#[command(name = "monolab", version, about = "Monodromy solver laboratory")]
#[command(after_help = "Set MONOLAB_THREADS to size the worker pool used for parallel trials.")]
struct Cli {
    /// Print progress and summaries to stderr.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Fabricate an oracle datafile under the uniform-correspondence model.
    Fabricate(FabricateArgs),
    /// Harvest an oracle datafile by tracking a random univariate instance.
    Harvest(HarvestArgs),
    /// Replay the parallel solver against an oracle datafile.
    Simulate(SimulateArgs),
    /// Run an experiment sweep described by a TOML file.
    Sweep(SweepArgs),
}

#[derive(Args, Debug)]
struct FabricateArgs {
    /// Number of nodes of the complete graph.
    #[arg(long)]
    nodes: usize,
    /// Solutions per node.
    #[arg(long)]
    degree: usize,
    /// Parallel edges per node pair.
    #[arg(long, default_value_t = 1)]
    multiplicity: usize,
    /// Per-task success probability.
    #[arg(long, default_value_t = 1.0)]
    alpha: f64,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    seed: u64,
    /// Negative-binomial success target for durations.
    #[arg(long, default_value_t = monolab_core::fabricate::DEFAULT_NB_SUCCESSES)]
    nb_successes: u32,
    /// Negative-binomial success probability for durations.
    #[arg(long, default_value_t = monolab_core::fabricate::DEFAULT_NB_P)]
    nb_p: f64,
    /// Output datafile.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum TimingArg {
    /// Wall-clock microseconds per track.
    Measured,
    /// Predictor steps plus corrector iterations (reproducible).
    WorkUnits,
}

#[derive(Args, Debug)]
struct HarvestArgs {
    #[arg(long)]
    degree: usize,
    #[arg(long)]
    nodes: usize,
    #[arg(long, default_value_t = 1)]
    multiplicity: usize,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    seed: u64,
    /// Minimum tracker step size.
    #[arg(long)]
    min_step: Option<f64>,
    #[arg(long, value_enum, default_value_t = TimingArg::Measured)]
    timing: TimingArg,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum PotentialArg {
    /// Expected increase of known solutions.
    #[value(name = "E")]
    Greedy,
    /// Node-order potential.
    #[value(name = "ord")]
    Ordinal,
    /// Weighted increment; needs --lambda.
    #[value(name = "omega")]
    Weighted,
    /// Weighted increment in the limit of large lambda.
    #[value(name = "omega_inf")]
    MaxKnown,
}

impl PotentialArg {
    fn label(self) -> &'static str {
        match self {
            PotentialArg::Greedy => "E",
            PotentialArg::Ordinal => "ord",
            PotentialArg::Weighted => "omega",
            PotentialArg::MaxKnown => "omega_inf",
        }
    }
}

#[derive(Args, Debug)]
struct SimulateArgs {
    /// Oracle datafile.
    #[arg(long)]
    oracle: PathBuf,
    /// Virtual threads.
    #[arg(long, default_value_t = 1)]
    threads: usize,
    #[arg(long, value_enum, default_value_t = PotentialArg::Greedy)]
    potential: PotentialArg,
    /// Weight exponent for the omega potential.
    #[arg(long)]
    lambda: Option<f64>,
    /// Seed choosing the starting node and solution.
    #[arg(long, default_value_t = DEFAULT_SEED)]
    seed: u64,
    /// Track budget; defaults to 100 N d.
    #[arg(long)]
    budget: Option<u64>,
    /// Success rate assumed by the potentials; defaults to the oracle's alpha.
    #[arg(long)]
    model_alpha: Option<f64>,
    /// Identifier written in the CSV row.
    #[arg(long, default_value = "run-0")]
    run_id: String,
    /// Write the metrics row to this CSV file.
    #[arg(long)]
    metrics_out: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum SweepKind {
    Efficiency,
    Threshold,
    Tracks,
    Lambda,
    Bounds,
}

#[derive(Args, Debug)]
struct SweepArgs {
    #[arg(value_enum)]
    kind: SweepKind,
    /// TOML file whose keys mirror the sweep's spec; missing keys take defaults.
    #[arg(long)]
    config: PathBuf,
    /// Output directory, created if missing.
    #[arg(long)]
    out: PathBuf,
}

/// Error with its exit code: 3 for I/O, 4 for invalid input.
struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn io(message: impl Display) -> Self {
        Failure { code: 3, message: message.to_string() }
    }

    fn invalid(message: impl Display) -> Self {
        Failure { code: 4, message: message.to_string() }
    }

    fn file(path: &Path, err: std::io::Error) -> Self {
        if err.kind() == std::io::ErrorKind::NotFound {
            Failure::io(format!("{}: file not found", path.display()))
        } else {
            Failure::io(format!("{}: {err}", path.display()))
        }
    }
}

fn datafile_failure(path: &Path, err: DatafileError) -> Failure {
    match err {
        DatafileError::Io(e) => Failure::file(path, e),
        other => Failure::invalid(format!("{}: {other}", path.display())),
    }
}

fn experiment_failure(err: ExperimentError) -> Failure {
    match err {
        ExperimentError::Io(_) | ExperimentError::Csv(_) => Failure::io(err),
        other => Failure::invalid(other),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Err(f) = configure_pool() {
        eprintln!("monolab: {}", f.message);
        return ExitCode::from(f.code);
    }
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("monolab: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

fn configure_pool() -> Result<(), Failure> {
    let Ok(value) = std::env::var(THREADS_ENV) else { return Ok(()) };
    let threads: usize = value
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| Failure::invalid(format!("{THREADS_ENV} must be a positive integer, got {value:?}")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| Failure::invalid(format!("cannot size worker pool: {e}")))
}

fn dispatch(cli: Cli) -> Result<(), Failure> {
    let verbose = cli.verbose > 0;
    match cli.command {
        Command::Fabricate(a) => fabricate_cmd(a, verbose),
        Command::Harvest(a) => harvest_cmd(a, verbose),
        Command::Simulate(a) => simulate_cmd(a),
        Command::Sweep(a) => sweep_cmd(a, verbose),
    }
}

fn fabricate_cmd(a: FabricateArgs, verbose: bool) -> Result<(), Failure> {
    let config = FabricationConfig {
        nb_successes: a.nb_successes,
        nb_p: a.nb_p,
        ..FabricationConfig::new(a.nodes, a.degree, a.multiplicity, a.alpha, a.seed)
    };
    let data = fabricate(&config).map_err(Failure::invalid)?;
    save_oracle(&data, &a.out).map_err(|e| datafile_failure(&a.out, e))?;
    if verbose {
        eprintln!(
            "wrote {} ({} edges, d = {})",
            a.out.display(),
            data.graph.edge_count(),
            data.graph.degree()
        );
    }
    Ok(())
}

fn harvest_cmd(a: HarvestArgs, verbose: bool) -> Result<(), Failure> {
    let mut settings = HarvestSettings::default();
    if let Some(step) = a.min_step {
        settings.track.min_step = step;
    }
    settings.timing = match a.timing {
        TimingArg::Measured => Timing::Measured,
        TimingArg::WorkUnits => Timing::WorkUnits,
    };
    let data = harvest(a.degree, a.nodes, a.multiplicity, &settings, a.seed).map_err(|e| match e {
        HarvestError::Settings(_) | HarvestError::Graph(_) => Failure::invalid(e),
        other => Failure::invalid(format!("harvest failed: {other}")),
    })?;
    save_oracle(&data, &a.out).map_err(|e| datafile_failure(&a.out, e))?;
    if verbose {
        let failed = data.success.iter().flatten().filter(|&&f| !f).count();
        let total: usize = data.success.iter().map(Vec::len).sum();
        eprintln!("wrote {} ({failed}/{total} failed tracks)", a.out.display());
    }
    Ok(())
}

fn simulate_cmd(a: SimulateArgs) -> Result<(), Failure> {
    let oracle = load_oracle(&a.oracle).map_err(|e| datafile_failure(&a.oracle, e))?;
    let potential = PotentialKind::from_label(a.potential.label(), a.lambda).map_err(Failure::invalid)?;
    let config = SimulationConfig {
        budget: a.budget,
        model_alpha: a.model_alpha,
        ..SimulationConfig::new(a.threads, potential)
    };
    let start = StartPoint::from_seed(a.seed, &oracle.graph);
    let outcome = run(&oracle, &config, start).map_err(|e| match e {
        SimError::Oracle(inner) => datafile_failure(&a.oracle, inner),
        other => Failure::invalid(other),
    })?;
    let m = &outcome.metrics;
    println!(
        "status={} wall_time={} tracks={} successes={} failures={} idle_fraction={:.6} start={}:{}",
        m.status, m.wall_time, m.tracks, m.successes, m.failures, m.idle_fraction(), start.node, start.solution
    );
    if let Some(path) = &a.metrics_out {
        let record = RunRecord::new(a.run_id.clone(), a.seed, &oracle, &config, m);
        write_csv_file(&[record], path).map_err(experiment_failure)?;
    }
    Ok(())
}

fn read_config<T: DeserializeOwned>(path: &Path) -> Result<T, Failure> {
    let text = fs::read_to_string(path).map_err(|e| Failure::file(path, e))?;
    toml::from_str(&text).map_err(|e| Failure::invalid(format!("{}: {e}", path.display())))
}

fn emit<T: Serialize>(dir: &Path, name: &str, rows: &[T], files: &mut Vec<String>) -> Result<(), Failure> {
    write_csv_file(rows, dir.join(name)).map_err(experiment_failure)?;
    files.push(name.to_string());
    Ok(())
}

fn sidecar<S: Serialize>(dir: &Path, name: &str, spec: &S, files: Vec<String>, notes: Vec<String>) -> Result<(), Failure> {
    write_sidecar(dir.join(format!("{name}.provenance.json")), name, spec, files, notes).map_err(experiment_failure)
}

fn sweep_cmd(a: SweepArgs, verbose: bool) -> Result<(), Failure> {
    fs::create_dir_all(&a.out).map_err(|e| Failure::file(&a.out, e))?;
    let dir = a.out.as_path();
    let mut files = Vec::new();
    match a.kind {
        SweepKind::Efficiency => {
            let spec: EfficiencySpec = read_config(&a.config)?;
            let table = experiments::efficiency_table(&spec).map_err(experiment_failure)?;
            emit(dir, "efficiency.csv", &table.rows, &mut files)?;
            emit(dir, "efficiency_cells.csv", &table.cells, &mut files)?;
            if verbose {
                for c in &table.cells {
                    eprintln!("d={} p={} efficiency={:.2}%", c.d, c.threads, c.efficiency);
                }
            }
            sidecar(dir, "efficiency", &spec, files, vec!["sequential baseline shares each trial's oracle and start".into()])
        }
        SweepKind::Threshold => {
            let spec: ThresholdGridSpec = read_config(&a.config)?;
            let (rows, probes) = experiments::threshold_table(&spec).map_err(experiment_failure)?;
            emit(dir, "threshold.csv", &rows, &mut files)?;
            emit(dir, "threshold_probes.csv", &probes, &mut files)?;
            if verbose {
                for r in &rows {
                    eprintln!("N={} d={} m={} alpha*={:.4}", r.nodes, r.d, r.m, r.alpha_star);
                }
            }
            sidecar(dir, "threshold", &spec, files, vec!["threshold = alpha at which half the runs saturate a node".into()])
        }
        SweepKind::Tracks => {
            let spec: TracksSpec = read_config(&a.config)?;
            let (rows, summary) = experiments::tracks_vs_alpha_sweep(&spec).map_err(experiment_failure)?;
            emit(dir, "tracks.csv", &rows, &mut files)?;
            emit(dir, "tracks_summary.csv", &summary, &mut files)?;
            sidecar(dir, "tracks", &spec, files, vec!["window_low = 1/(3m), window_high = log10(d)/m".into()])
        }
        SweepKind::Lambda => {
            let spec: LambdaSpec = read_config(&a.config)?;
            let (rows, summary) = experiments::lambda_comparison(&spec).map_err(experiment_failure)?;
            emit(dir, "lambda.csv", &rows, &mut files)?;
            emit(dir, "lambda_summary.csv", &summary, &mut files)?;
            sidecar(dir, "lambda", &spec, files, vec![])
        }
        SweepKind::Bounds => {
            let spec: BoundsSpec = read_config(&a.config)?;
            let rows = experiments::bounds_sweep(&spec).map_err(experiment_failure)?;
            emit(dir, "bounds.csv", &rows, &mut files)?;
            sidecar(dir, "bounds", &spec, files, vec![])
        }
    }
}
