//! Drivers for the efficiency, threshold, track-count, bound and weighting
//! studies.
//!
//! Every trial draws a fresh fabricated oracle. Its seed is derived from the
//! sweep seed and the trial's coordinates and written on each CSV row, so
//! `fabricate --seed S` followed by `simulate --seed S` replays a row.
//! Trials run in parallel; rows come back in a fixed order.

use std::fs;
use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fabricate::{fabricate, FabricationConfig, FabricationError};
use crate::model::{OracleData, RunMetrics};
use crate::potential::PotentialKind;
use crate::seed;
use crate::sim::{compute_metrics, run, SimError, SimulationConfig, StartPoint};

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Fabrication(#[from] FabricationError),
    #[error(transparent)]
    Simulation(#[from] SimError),
    #[error("invalid sweep: {0}")]
    Config(String),
    #[error("degenerate bracket: {successes}/{trials} successes at alpha = {alpha}")]
    DegenerateBracket { alpha: f64, successes: usize, trials: usize },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

fn config_error(msg: impl Into<String>) -> ExperimentError {
    ExperimentError::Config(msg.into())
}

fn check_alpha(alpha: f64) -> Result<(), ExperimentError> {
    if (0.0..=1.0).contains(&alpha) {
        Ok(())
    } else {
        Err(config_error(format!("alpha {alpha} outside [0, 1]")))
    }
}

fn check_trials(trials: usize) -> Result<(), ExperimentError> {
    if trials == 0 {
        Err(config_error("trial count must be at least 1"))
    } else {
        Ok(())
    }
}

/// Fabricates the oracle for `run_seed` and runs it from the start point
/// drawn from the same seed.
pub fn fabricated_run(
    nodes: usize,
    degree: usize,
    multiplicity: usize,
    alpha: f64,
    config: &SimulationConfig,
    run_seed: u64,
) -> Result<(OracleData, RunMetrics), ExperimentError> {
    let oracle = fabricate(&FabricationConfig::new(nodes, degree, multiplicity, alpha, run_seed))?;
    let metrics = simulate_seeded(&oracle, config, run_seed)?;
    Ok((oracle, metrics))
}

/// Runs `oracle` from `StartPoint::from_seed(run_seed)`.
pub fn simulate_seeded(oracle: &OracleData, config: &SimulationConfig, run_seed: u64) -> Result<RunMetrics, SimError> {
    let start = StartPoint::from_seed(run_seed, &oracle.graph);
    Ok(run(oracle, config, start)?.metrics)
}

/// One simulation row.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub run_id: String,
    pub seed: u64,
    #[serde(rename = "N")]
    pub nodes: usize,
    pub d: usize,
    pub m: Option<usize>,
    pub alpha: Option<f64>,
    pub threads: usize,
    pub potential: String,
    pub lambda: Option<f64>,
    pub wall_time: u64,
    pub tracks: u64,
    pub successes: u64,
    pub failures: u64,
    pub status: String,
    pub idle_fraction: f64,
}

impl RunRecord {
    pub fn new(run_id: impl Into<String>, seed: u64, oracle: &OracleData, config: &SimulationConfig, metrics: &RunMetrics) -> Self {
        RunRecord {
            run_id: run_id.into(),
            seed,
            nodes: oracle.graph.node_count(),
            d: oracle.graph.degree(),
            m: oracle.graph.multiplicity(),
            alpha: oracle.provenance.alpha,
            threads: config.threads,
            potential: config.potential.label().into(),
            lambda: config.potential.lambda(),
            wall_time: metrics.wall_time,
            tracks: metrics.tracks,
            successes: metrics.successes,
            failures: metrics.failures,
            status: metrics.status.label().into(),
            idle_fraction: metrics.idle_fraction(),
        }
    }
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn std_dev(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let mu = mean(xs);
    (xs.iter().map(|x| (x - mu).powi(2)).sum::<f64>() / (xs.len() - 1) as f64).sqrt()
}

/// Median (midpoint of the two central values for even counts).
pub fn median(xs: &[f64]) -> f64 {
    quantile(xs, 0.5)
}

/// Linear-interpolation quantile of an unsorted sample.
pub fn quantile(xs: &[f64], q: f64) -> f64 {
    assert!(!xs.is_empty(), "quantile of an empty sample");
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let pos = q.clamp(0.0, 1.0) * (v.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    v[lo] + (v[hi] - v[lo]) * (pos - lo as f64)
}

// ---------------------------------------------------------------- efficiency

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EfficiencySpec {
    pub nodes: usize,
    pub multiplicity: usize,
    pub alpha: f64,
    pub degrees: Vec<usize>,
    pub threads: Vec<usize>,
    pub trials: usize,
    pub potential: PotentialKind,
    pub seed: u64,
}

impl Default for EfficiencySpec {
    fn default() -> Self {
        EfficiencySpec {
            nodes: 5,
            multiplicity: 1,
            alpha: 1.0,
            degrees: vec![100, 1000, 10000],
            threads: vec![1, 2, 4, 8, 16, 32, 64, 128],
            trials: 20,
            potential: PotentialKind::Greedy,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EfficiencyRow {
    pub seed: u64,
    #[serde(rename = "N")]
    pub nodes: usize,
    pub d: usize,
    pub m: usize,
    pub alpha: f64,
    pub threads: usize,
    pub potential: String,
    pub lambda: Option<f64>,
    pub trial: usize,
    pub sequential_time: u64,
    pub wall_time: u64,
    pub tracks: u64,
    pub speedup: f64,
    pub efficiency: f64,
    pub idle_percent: f64,
    pub status: String,
}

/// Mean over the trials of one `(d, threads)` cell.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EfficiencyCell {
    pub d: usize,
    pub threads: usize,
    pub trials: usize,
    pub efficiency: f64,
    pub efficiency_sd: f64,
    pub speedup: f64,
    pub idle_percent: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EfficiencyTable {
    pub rows: Vec<EfficiencyRow>,
    pub cells: Vec<EfficiencyCell>,
}

impl EfficiencyTable {
    pub fn cell(&self, d: usize, threads: usize) -> Option<&EfficiencyCell> {
        self.cells.iter().find(|c| c.d == d && c.threads == threads)
    }
}

/// Speedup and efficiency of `k` threads against one thread on the same
/// oracle and start point.
pub fn efficiency_table(spec: &EfficiencySpec) -> Result<EfficiencyTable, ExperimentError> {
    check_alpha(spec.alpha)?;
    check_trials(spec.trials)?;
    if spec.threads.contains(&0) {
        return Err(config_error("thread counts must be positive"));
    }
    let jobs: Vec<(usize, usize)> = spec
        .degrees
        .iter()
        .flat_map(|&d| (0..spec.trials).map(move |t| (d, t)))
        .collect();
    let per_job: Vec<Vec<EfficiencyRow>> = jobs
        .par_iter()
        .map(|&(d, trial)| -> Result<Vec<EfficiencyRow>, ExperimentError> {
            let run_seed = seed::derive(spec.seed, "efficiency", &[spec.nodes as u64, d as u64, trial as u64]);
            let sequential = SimulationConfig::new(1, spec.potential);
            let (oracle, base) =
                fabricated_run(spec.nodes, d, spec.multiplicity, spec.alpha, &sequential, run_seed)?;
            spec.threads
                .iter()
                .map(|&k| {
                    let metrics = if k == 1 {
                        base.clone()
                    } else {
                        simulate_seeded(&oracle, &SimulationConfig::new(k, spec.potential), run_seed)?
                    };
                    let pm = compute_metrics(&metrics, base.wall_time)?;
                    Ok(EfficiencyRow {
                        seed: run_seed,
                        nodes: spec.nodes,
                        d,
                        m: spec.multiplicity,
                        alpha: spec.alpha,
                        threads: k,
                        potential: spec.potential.label().into(),
                        lambda: spec.potential.lambda(),
                        trial,
                        sequential_time: base.wall_time,
                        wall_time: metrics.wall_time,
                        tracks: metrics.tracks,
                        speedup: pm.speedup,
                        efficiency: pm.efficiency,
                        idle_percent: 100.0 * pm.idle_fraction,
                        status: metrics.status.label().into(),
                    })
                })
                .collect()
        })
        .collect::<Result<_, _>>()?;
    let mut rows: Vec<EfficiencyRow> = per_job.into_iter().flatten().collect();
    rows.sort_by_key(|r| (r.d, r.threads, r.trial));

    let mut cells = Vec::new();
    for &d in &spec.degrees {
        for &k in &spec.threads {
            let group: Vec<&EfficiencyRow> = rows.iter().filter(|r| r.d == d && r.threads == k).collect();
            let eff: Vec<f64> = group.iter().map(|r| r.efficiency).collect();
            let speed: Vec<f64> = group.iter().map(|r| r.speedup).collect();
            let idle: Vec<f64> = group.iter().map(|r| r.idle_percent).collect();
            cells.push(EfficiencyCell {
                d,
                threads: k,
                trials: group.len(),
                efficiency: mean(&eff),
                efficiency_sd: std_dev(&eff),
                speedup: mean(&speed),
                idle_percent: mean(&idle),
            });
        }
    }
    Ok(EfficiencyTable { rows, cells })
}

// ----------------------------------------------------------------- threshold

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ThresholdSpec {
    pub nodes: usize,
    pub degree: usize,
    pub multiplicity: usize,
    pub threads: usize,
    pub potential: PotentialKind,
    /// Trials per probe.
    pub trials: usize,
    /// Bisection stops once the bracket is narrower than this.
    pub tolerance: f64,
    pub seed: u64,
}

impl Default for ThresholdSpec {
    fn default() -> Self {
        ThresholdSpec {
            nodes: 4,
            degree: 16,
            multiplicity: 1,
            threads: 1,
            potential: PotentialKind::Greedy,
            trials: 40,
            tolerance: 0.005,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Probe {
    pub alpha: f64,
    pub successes: usize,
    pub trials: usize,
}

impl Probe {
    pub fn rate(&self) -> f64 {
        self.successes as f64 / self.trials as f64
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ThresholdEstimate {
    /// Midpoint of the final bracket.
    pub alpha_star: f64,
    /// Largest probed alpha with success rate below one half.
    pub low: f64,
    /// Smallest probed alpha with success rate at least one half.
    pub high: f64,
    pub probes: Vec<Probe>,
}

/// Seed of trial `t` in a threshold study. Probes at different alphas reuse
/// the same seeds, so a trial that succeeds at some alpha succeeds at every
/// larger one.
pub fn threshold_trial_seed(spec: &ThresholdSpec, trial: usize) -> u64 {
    seed::derive(
        spec.seed,
        "threshold",
        &[spec.nodes as u64, spec.degree as u64, spec.multiplicity as u64, trial as u64],
    )
}

/// Success count over the spec's trials at one alpha.
pub fn success_probe(spec: &ThresholdSpec, alpha: f64) -> Result<Probe, ExperimentError> {
    check_alpha(alpha)?;
    let config = SimulationConfig::new(spec.threads, spec.potential);
    let wins: Vec<bool> = (0..spec.trials)
        .into_par_iter()
        .map(|t| {
            let run_seed = threshold_trial_seed(spec, t);
            fabricated_run(spec.nodes, spec.degree, spec.multiplicity, alpha, &config, run_seed)
                .map(|(_, m)| m.status.is_success())
        })
        .collect::<Result<_, _>>()?;
    Ok(Probe { alpha, successes: wins.iter().filter(|&&w| w).count(), trials: spec.trials })
}

/// Bisection for the alpha at which half the runs saturate a node.
pub fn threshold_estimate(spec: &ThresholdSpec) -> Result<ThresholdEstimate, ExperimentError> {
    check_trials(spec.trials)?;
    if !(spec.tolerance > 0.0 && spec.tolerance < 1.0) {
        return Err(config_error("tolerance must lie in (0, 1)"));
    }
    let half = |p: &Probe| 2 * p.successes >= p.trials;
    let mut probes = Vec::new();
    let bottom = success_probe(spec, 0.0)?;
    let degenerate = half(&bottom);
    probes.push(bottom);
    if degenerate {
        let p = &probes[0];
        return Err(ExperimentError::DegenerateBracket { alpha: 0.0, successes: p.successes, trials: p.trials });
    }
    let top = success_probe(spec, 1.0)?;
    if !half(&top) {
        return Err(ExperimentError::DegenerateBracket { alpha: 1.0, successes: top.successes, trials: top.trials });
    }
    probes.push(top);
    let (mut low, mut high) = (0.0f64, 1.0f64);
    while high - low > spec.tolerance {
        let mid = 0.5 * (low + high);
        let probe = success_probe(spec, mid)?;
        if half(&probe) {
            high = mid;
        } else {
            low = mid;
        }
        probes.push(probe);
    }
    Ok(ThresholdEstimate { alpha_star: 0.5 * (low + high), low, high, probes })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ThresholdGridSpec {
    pub nodes: Vec<usize>,
    pub degrees: Vec<usize>,
    pub multiplicities: Vec<usize>,
    pub threads: usize,
    pub potential: PotentialKind,
    pub trials: usize,
    pub tolerance: f64,
    pub seed: u64,
}

impl Default for ThresholdGridSpec {
    fn default() -> Self {
        let single = ThresholdSpec::default();
        ThresholdGridSpec {
            nodes: vec![4, 5, 6, 7, 8, 9],
            degrees: vec![16, 32, 64, 128, 256, 512],
            multiplicities: vec![1],
            threads: single.threads,
            potential: single.potential,
            trials: single.trials,
            tolerance: single.tolerance,
            seed: 0,
        }
    }
}

impl ThresholdGridSpec {
    /// The single-cell spec for `(N, d, m)`; its seed is on the CSV row.
    pub fn cell(&self, nodes: usize, degree: usize, multiplicity: usize) -> ThresholdSpec {
        ThresholdSpec {
            nodes,
            degree,
            multiplicity,
            threads: self.threads,
            potential: self.potential,
            trials: self.trials,
            tolerance: self.tolerance,
            seed: seed::derive(self.seed, "threshold-cell", &[nodes as u64, degree as u64, multiplicity as u64]),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThresholdRow {
    pub seed: u64,
    #[serde(rename = "N")]
    pub nodes: usize,
    pub d: usize,
    pub m: usize,
    pub threads: usize,
    pub potential: String,
    pub trials: usize,
    pub tolerance: f64,
    pub alpha_star: f64,
    pub alpha_low: f64,
    pub alpha_high: f64,
    pub probes: usize,
    /// Empty when the bracket was degenerate.
    pub note: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbeRow {
    pub seed: u64,
    #[serde(rename = "N")]
    pub nodes: usize,
    pub d: usize,
    pub m: usize,
    pub step: usize,
    pub alpha: f64,
    pub successes: usize,
    pub trials: usize,
}

/// Threshold estimates over a grid. Degenerate cells are reported with a
/// note and NaN estimates instead of aborting the sweep.
pub fn threshold_table(spec: &ThresholdGridSpec) -> Result<(Vec<ThresholdRow>, Vec<ProbeRow>), ExperimentError> {
    let mut rows = Vec::new();
    let mut probe_rows = Vec::new();
    for &n in &spec.nodes {
        for &d in &spec.degrees {
            for &m in &spec.multiplicities {
                let cell = spec.cell(n, d, m);
                let base = ThresholdRow {
                    seed: cell.seed,
                    nodes: n,
                    d,
                    m,
                    threads: cell.threads,
                    potential: cell.potential.label().into(),
                    trials: cell.trials,
                    tolerance: cell.tolerance,
                    alpha_star: f64::NAN,
                    alpha_low: f64::NAN,
                    alpha_high: f64::NAN,
                    probes: 0,
                    note: String::new(),
                };
                match threshold_estimate(&cell) {
                    Ok(est) => {
                        for (step, p) in est.probes.iter().enumerate() {
                            probe_rows.push(ProbeRow {
                                seed: cell.seed,
                                nodes: n,
                                d,
                                m,
                                step,
                                alpha: p.alpha,
                                successes: p.successes,
                                trials: p.trials,
                            });
                        }
                        rows.push(ThresholdRow {
                            alpha_star: est.alpha_star,
                            alpha_low: est.low,
                            alpha_high: est.high,
                            probes: est.probes.len(),
                            ..base
                        });
                    }
                    Err(e @ ExperimentError::DegenerateBracket { .. }) => {
                        rows.push(ThresholdRow { note: e.to_string(), ..base });
                    }
                    Err(e) => return Err(e),
                }
            }
        }
    }
    Ok((rows, probe_rows))
}

// -------------------------------------------------------------- tracks sweep

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TracksSpec {
    pub nodes: usize,
    pub degree: usize,
    pub multiplicities: Vec<usize>,
    pub alphas: Vec<f64>,
    pub trials: usize,
    pub potential: PotentialKind,
    pub seed: u64,
}

impl Default for TracksSpec {
    fn default() -> Self {
        TracksSpec {
            nodes: 3,
            degree: 1000,
            multiplicities: vec![1, 2, 3, 4],
            alphas: (1..=50).map(|i| i as f64 / 50.0).collect(),
            trials: 20,
            potential: PotentialKind::Greedy,
            seed: 0,
        }
    }
}

/// Lower end of the failure-threshold window, `1 / (3m)`.
pub fn window_low(multiplicity: usize) -> f64 {
    1.0 / (3.0 * multiplicity as f64)
}

/// Upper end of the failure-threshold window, `log10(d) / m`.
pub fn window_high(degree: usize, multiplicity: usize) -> f64 {
    (degree as f64).log10() / multiplicity as f64
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TracksRow {
    pub seed: u64,
    #[serde(rename = "N")]
    pub nodes: usize,
    pub d: usize,
    pub m: usize,
    pub alpha: f64,
    pub trial: usize,
    pub tracks: u64,
    pub successes: u64,
    pub failures: u64,
    pub status: String,
    /// Tracks available in the whole graph: directed edges times `d`.
    pub max_tracks: u64,
    pub window_low: f64,
    pub window_high: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TracksSummary {
    pub m: usize,
    pub alpha: f64,
    pub trials: usize,
    pub success_rate: f64,
    pub median_tracks: f64,
    pub p10_tracks: f64,
    pub p90_tracks: f64,
    pub max_tracks: u64,
    pub window_low: f64,
    pub window_high: f64,
}

/// Total tracks per single-threaded run over an alpha grid, one panel per
/// multiplicity.
pub fn tracks_vs_alpha_sweep(spec: &TracksSpec) -> Result<(Vec<TracksRow>, Vec<TracksSummary>), ExperimentError> {
    check_trials(spec.trials)?;
    for &a in &spec.alphas {
        check_alpha(a)?;
    }
    let config = SimulationConfig::new(1, spec.potential);
    let jobs: Vec<(usize, usize, usize)> = spec
        .multiplicities
        .iter()
        .flat_map(|&m| (0..spec.alphas.len()).flat_map(move |a| (0..spec.trials).map(move |t| (m, a, t))))
        .collect();
    let rows: Vec<TracksRow> = jobs
        .par_iter()
        .map(|&(m, ai, trial)| -> Result<TracksRow, ExperimentError> {
            let alpha = spec.alphas[ai];
            let run_seed = seed::derive(spec.seed, "tracks", &[spec.nodes as u64, spec.degree as u64, m as u64, trial as u64]);
            let (oracle, metrics) = fabricated_run(spec.nodes, spec.degree, m, alpha, &config, run_seed)?;
            Ok(TracksRow {
                seed: run_seed,
                nodes: spec.nodes,
                d: spec.degree,
                m,
                alpha,
                trial,
                tracks: metrics.tracks,
                successes: metrics.successes,
                failures: metrics.failures,
                status: metrics.status.label().into(),
                max_tracks: (oracle.graph.directed_count() * spec.degree) as u64,
                window_low: window_low(m),
                window_high: window_high(spec.degree, m),
            })
        })
        .collect::<Result<_, _>>()?;

    let mut summary = Vec::new();
    for &m in &spec.multiplicities {
        for &alpha in &spec.alphas {
            let group: Vec<&TracksRow> = rows.iter().filter(|r| r.m == m && r.alpha == alpha).collect();
            let tracks: Vec<f64> = group.iter().map(|r| r.tracks as f64).collect();
            let wins = group.iter().filter(|r| r.status == "saturated").count();
            summary.push(TracksSummary {
                m,
                alpha,
                trials: group.len(),
                success_rate: wins as f64 / group.len() as f64,
                median_tracks: median(&tracks),
                p10_tracks: quantile(&tracks, 0.1),
                p90_tracks: quantile(&tracks, 0.9),
                max_tracks: group[0].max_tracks,
                window_low: window_low(m),
                window_high: window_high(spec.degree, m),
            });
        }
    }
    Ok((rows, summary))
}

// -------------------------------------------------------------------- bounds

/// Upper and lower bounds on the probability that some node saturates.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    pub upper: f64,
    pub lower: f64,
}

/// `upper = 1 - (1 - (alpha N m)^d)^N` while `alpha N m < 1` and 1 beyond;
/// `lower = (1 - exp(-alpha m))^(N d)`. Both clamped to `[0, 1]`.
pub fn bound_curves(nodes: usize, degree: usize, multiplicity: usize, alpha: f64) -> Bounds {
    let x = alpha * nodes as f64 * multiplicity as f64;
    let upper = if x < 1.0 {
        // 1 - (1 - y)^N computed without cancellation for small y.
        let y = x.powi(degree as i32);
        -(nodes as f64 * (-y).ln_1p()).exp_m1()
    } else {
        1.0
    };
    let lower = (-(-alpha * multiplicity as f64).exp()).ln_1p() * (nodes * degree) as f64;
    Bounds {
        upper: upper.clamp(0.0, 1.0),
        lower: lower.exp().clamp(0.0, 1.0),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BoundsSpec {
    pub nodes: usize,
    pub degrees: Vec<usize>,
    pub multiplicities: Vec<usize>,
    pub alphas: Vec<f64>,
    /// Simulated runs per point; 0 evaluates the curves only.
    pub trials: usize,
    pub potential: PotentialKind,
    pub seed: u64,
}

impl Default for BoundsSpec {
    fn default() -> Self {
        BoundsSpec {
            nodes: 3,
            degrees: vec![8, 16],
            multiplicities: vec![2, 4],
            alphas: (1..=10).map(|i| i as f64 / 10.0).collect(),
            trials: 500,
            potential: PotentialKind::Greedy,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundsRow {
    pub seed: u64,
    #[serde(rename = "N")]
    pub nodes: usize,
    pub d: usize,
    pub m: usize,
    pub alpha: f64,
    pub lower: f64,
    pub upper: f64,
    pub trials: usize,
    pub successes: usize,
    /// Empirical success frequency; empty without trials.
    pub frequency: Option<f64>,
    /// Binomial standard error of `frequency`, from `(s + 1/2) / (n + 1)`.
    pub std_error: Option<f64>,
}

impl BoundsRow {
    /// Whether the frequency lies in `[lower - z se, min(1, upper) + z se]`.
    pub fn within(&self, z: f64) -> Option<bool> {
        let f = self.frequency?;
        let se = self.std_error?;
        Some(f >= self.lower - z * se && f <= self.upper.min(1.0) + z * se)
    }
}

/// Bound curves over a grid, with empirical success frequencies from
/// single-threaded runs started at a random node.
pub fn bounds_sweep(spec: &BoundsSpec) -> Result<Vec<BoundsRow>, ExperimentError> {
    for &a in &spec.alphas {
        check_alpha(a)?;
    }
    let mut points = Vec::new();
    for &d in &spec.degrees {
        for &m in &spec.multiplicities {
            for &alpha in &spec.alphas {
                points.push((d, m, alpha));
            }
        }
    }
    let config = SimulationConfig::new(1, spec.potential);
    points
        .par_iter()
        .map(|&(d, m, alpha)| {
            let b = bound_curves(spec.nodes, d, m, alpha);
            let point_seed = seed::derive(spec.seed, "bounds", &[spec.nodes as u64, d as u64, m as u64, alpha.to_bits()]);
            let mut successes = 0;
            for t in 0..spec.trials {
                let run_seed = seed::derive(point_seed, "trial", &[t as u64]);
                let (_, metrics) = fabricated_run(spec.nodes, d, m, alpha, &config, run_seed)?;
                successes += usize::from(metrics.status.is_success());
            }
            let (frequency, std_error) = if spec.trials > 0 {
                let n = spec.trials as f64;
                let f = successes as f64 / n;
                // Continuity-corrected so a count of 0 or n keeps a nonzero spread.
                let p = (successes as f64 + 0.5) / (n + 1.0);
                (Some(f), Some((p * (1.0 - p) / n).sqrt()))
            } else {
                (None, None)
            };
            Ok(BoundsRow {
                seed: point_seed,
                nodes: spec.nodes,
                d,
                m,
                alpha,
                lower: b.lower,
                upper: b.upper,
                trials: spec.trials,
                successes,
                frequency,
                std_error,
            })
        })
        .collect()
}

// -------------------------------------------------------------------- lambda

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LambdaSpec {
    pub nodes: usize,
    pub degree: usize,
    pub multiplicity: usize,
    /// Alpha values to compare under; 1 means no failures.
    pub alphas: Vec<f64>,
    /// Weight exponents; `inf` selects the max-known ordering.
    pub lambdas: Vec<f64>,
    pub threads: usize,
    pub trials: usize,
    pub normalizer: crate::potential::WeightNormalizer,
    pub seed: u64,
}

impl Default for LambdaSpec {
    fn default() -> Self {
        LambdaSpec {
            nodes: 5,
            degree: 1000,
            multiplicity: 1,
            alphas: vec![1.0, 0.8],
            lambdas: vec![0.0, 1.0, 4.0, 16.0, 64.0, f64::INFINITY],
            threads: 4,
            trials: 30,
            normalizer: crate::potential::WeightNormalizer::Degree,
            seed: 0,
        }
    }
}

impl LambdaSpec {
    pub fn potential(&self, lambda: f64) -> PotentialKind {
        if lambda == f64::INFINITY {
            PotentialKind::MaxKnown
        } else {
            PotentialKind::Weighted { lambda, normalizer: self.normalizer }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LambdaSummary {
    pub alpha: f64,
    pub lambda: f64,
    pub trials: usize,
    pub success_rate: f64,
    pub median_tracks: f64,
    pub mean_tracks: f64,
    pub median_wall_time: f64,
    pub mean_wall_time: f64,
}

/// Runs every lambda on the same oracles and start points.
pub fn lambda_comparison(spec: &LambdaSpec) -> Result<(Vec<RunRecord>, Vec<LambdaSummary>), ExperimentError> {
    check_trials(spec.trials)?;
    for &a in &spec.alphas {
        check_alpha(a)?;
    }
    for &l in &spec.lambdas {
        spec.potential(l).validate().map_err(SimError::from)?;
    }
    let jobs: Vec<(usize, usize)> =
        (0..spec.alphas.len()).flat_map(|a| (0..spec.trials).map(move |t| (a, t))).collect();
    let per_job: Vec<Vec<RunRecord>> = jobs
        .par_iter()
        .map(|&(ai, trial)| -> Result<Vec<RunRecord>, ExperimentError> {
            let alpha = spec.alphas[ai];
            let run_seed = seed::derive(spec.seed, "lambda", &[spec.nodes as u64, spec.degree as u64, trial as u64]);
            let oracle = fabricate(&FabricationConfig::new(spec.nodes, spec.degree, spec.multiplicity, alpha, run_seed))?;
            spec.lambdas
                .iter()
                .enumerate()
                .map(|(li, &lambda)| {
                    let config = SimulationConfig::new(spec.threads, spec.potential(lambda));
                    let metrics = simulate_seeded(&oracle, &config, run_seed)?;
                    let id = format!("lambda-a{ai}-l{li}-t{trial}");
                    Ok(RunRecord::new(id, run_seed, &oracle, &config, &metrics))
                })
                .collect()
        })
        .collect::<Result<_, _>>()?;
    let records: Vec<RunRecord> = per_job.into_iter().flatten().collect();

    let mut summary = Vec::new();
    for &alpha in &spec.alphas {
        for &lambda in &spec.lambdas {
            let group: Vec<&RunRecord> = records
                .iter()
                .filter(|r| r.alpha == Some(alpha) && r.lambda == Some(lambda))
                .collect();
            let tracks: Vec<f64> = group.iter().map(|r| r.tracks as f64).collect();
            let wall: Vec<f64> = group.iter().map(|r| r.wall_time as f64).collect();
            summary.push(LambdaSummary {
                alpha,
                lambda,
                trials: group.len(),
                success_rate: group.iter().filter(|r| r.status == "saturated").count() as f64 / group.len() as f64,
                median_tracks: median(&tracks),
                mean_tracks: mean(&tracks),
                median_wall_time: median(&wall),
                mean_wall_time: mean(&wall),
            });
        }
    }
    Ok((records, summary))
}

// ---------------------------------------------------------------- output

/// Writes rows as CSV with a header line.
pub fn write_csv<T: Serialize, W: Write>(rows: &[T], writer: W) -> Result<(), ExperimentError> {
    let mut w = csv::Writer::from_writer(writer);
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_csv_file<T: Serialize>(rows: &[T], path: impl AsRef<Path>) -> Result<(), ExperimentError> {
    write_csv(rows, fs::File::create(path)?)
}

/// Provenance written next to each CSV.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Sidecar<'a, S: Serialize> {
    pub sweep: &'a str,
    pub generator: &'a str,
    pub version: &'a str,
    pub spec: &'a S,
    pub files: Vec<String>,
    pub notes: Vec<String>,
}

pub fn write_sidecar<S: Serialize>(
    path: impl AsRef<Path>,
    sweep: &str,
    spec: &S,
    files: Vec<String>,
    notes: Vec<String>,
) -> Result<(), ExperimentError> {
    let sidecar = Sidecar {
        sweep,
        generator: "monolab",
        version: env!("CARGO_PKG_VERSION"),
        spec,
        files,
        notes,
    };
    let mut text = serde_json::to_string_pretty(&sidecar)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quantiles() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
        assert_eq!(quantile(&[0.0, 10.0], 0.1), 1.0);
    }

    #[test]
    fn window_markers() {
        assert!((window_low(4) - 1.0 / 12.0).abs() < 1e-15);
        assert!((window_high(1000, 4) - 0.75).abs() < 1e-15);
    }

    #[test]
    fn bound_examples() {
        let b = bound_curves(3, 4, 2, 0.0);
        assert_eq!((b.lower, b.upper), (0.0, 0.0));
        let b = bound_curves(3, 4, 2, 0.05);
        let want = 1.0 - (1.0 - 0.3f64.powi(4)).powi(3);
        assert!((b.upper - want).abs() < 1e-12);
        assert!((b.upper - 0.0241).abs() < 1e-4);
        assert!(bound_curves(3, 4, 50, 1.0).lower > 1.0 - 1e-12);
        assert_eq!(bound_curves(3, 4, 2, 0.2).upper, 1.0);
    }

    #[test]
    fn single_thread_efficiency_is_exact() {
        let spec = EfficiencySpec { degrees: vec![20], threads: vec![1, 4], trials: 3, ..Default::default() };
        let table = efficiency_table(&spec).unwrap();
        assert_eq!(table.cell(20, 1).unwrap().efficiency, 100.0);
        assert_eq!(table.rows.len(), 6);
        assert!(table.rows.iter().all(|r| r.sequential_time > 0));
    }

    #[test]
    fn degenerate_brackets() {
        let spec = ThresholdSpec { nodes: 2, degree: 1, trials: 4, ..Default::default() };
        assert!(matches!(
            threshold_estimate(&spec),
            Err(ExperimentError::DegenerateBracket { alpha, .. }) if alpha == 0.0
        ));
    }

    #[test]
    fn threshold_probe_history_brackets_the_estimate() {
        let spec = ThresholdSpec { nodes: 4, degree: 8, trials: 10, tolerance: 0.05, ..Default::default() };
        let est = threshold_estimate(&spec).unwrap();
        assert!(est.high - est.low <= 0.05);
        assert!(est.low < est.alpha_star && est.alpha_star < est.high);
        assert_eq!(est.probes[1].alpha, 1.0);
        for p in &est.probes[2..] {
            let above = 2 * p.successes >= p.trials;
            assert_eq!(above, p.alpha >= est.high);
        }
    }

    #[test]
    fn lambda_zero_matches_greedy() {
        let spec = LambdaSpec { degree: 30, lambdas: vec![0.0], alphas: vec![1.0], trials: 3, ..Default::default() };
        let (records, _) = lambda_comparison(&spec).unwrap();
        for r in records {
            let oracle = fabricate(&FabricationConfig::new(5, 30, 1, 1.0, r.seed)).unwrap();
            let greedy = simulate_seeded(&oracle, &SimulationConfig::new(4, PotentialKind::Greedy), r.seed).unwrap();
            assert_eq!((greedy.tracks, greedy.wall_time), (r.tracks, r.wall_time));
        }
    }

    #[test]
    fn csv_has_header_and_rows() {
        let spec = TracksSpec { degree: 10, multiplicities: vec![1], alphas: vec![1.0], trials: 2, ..Default::default() };
        let (rows, summary) = tracks_vs_alpha_sweep(&spec).unwrap();
        let mut buf = Vec::new();
        write_csv(&rows, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("seed,N,d,m,alpha,trial,tracks,"));
        assert_eq!(text.lines().count(), 3);
        assert_eq!(summary[0].max_tracks, 60);
    }
}
