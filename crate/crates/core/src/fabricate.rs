//! Fabricated oracle data under the uniform-correspondence and
//! independent-failure model.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Geometric};
use rayon::prelude::*;
use thiserror::Error;

use crate::model::{DurationModel, GraphError, HomotopyGraph, OracleData, Provenance, Source};
use crate::seed;

/// Default negative-binomial success target.
pub const DEFAULT_NB_SUCCESSES: u32 = 10;
/// Default negative-binomial success probability.
pub const DEFAULT_NB_P: f64 = 0.3;

#[derive(Clone, Debug, PartialEq)]
pub struct FabricationConfig {
    pub nodes: usize,
    pub degree: usize,
    pub multiplicity: usize,
    /// Per-task success probability.
    pub alpha: f64,
    pub nb_successes: u32,
    pub nb_p: f64,
    pub seed: u64,
}

impl FabricationConfig {
    pub fn new(nodes: usize, degree: usize, multiplicity: usize, alpha: f64, seed: u64) -> Self {
        FabricationConfig {
            nodes,
            degree,
            multiplicity,
            alpha,
            nb_successes: DEFAULT_NB_SUCCESSES,
            nb_p: DEFAULT_NB_P,
            seed,
        }
    }

    pub fn validate(&self) -> Result<(), FabricationError> {
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(FabricationError::Alpha(self.alpha));
        }
        if self.nb_successes == 0 {
            return Err(FabricationError::NbSuccesses);
        }
        if !(self.nb_p > 0.0 && self.nb_p <= 1.0) {
            return Err(FabricationError::NbProbability(self.nb_p));
        }
        Ok(())
    }

    pub fn duration_model(&self) -> DurationModel {
        DurationModel::NegativeBinomial {
            successes: self.nb_successes,
            p: self.nb_p,
            unit: "ticks".into(),
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum FabricationError {
    #[error("alpha must lie in [0, 1], got {0}")]
    Alpha(f64),
    #[error("negative-binomial success target must be at least 1")]
    NbSuccesses,
    #[error("negative-binomial probability must lie in (0, 1], got {0}")]
    NbProbability(f64),
    #[error(transparent)]
    Graph(#[from] GraphError),
}

/// Negative-binomial track duration: the number of Bernoulli(`p`) trials
/// needed to collect `successes` successes. Always at least `successes`.
#[derive(Clone, Copy, Debug)]
pub struct DurationSampler {
    successes: u32,
    failures: Option<Geometric>,
}

impl DurationSampler {
    pub fn new(successes: u32, p: f64) -> Self {
        assert!(successes >= 1 && p > 0.0 && p <= 1.0, "invalid negative-binomial parameters");
        let failures = if p < 1.0 { Some(Geometric::new(p).expect("p in (0, 1)")) } else { None };
        DurationSampler { successes, failures }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> u64 {
        let base = u64::from(self.successes);
        match &self.failures {
            None => base,
            Some(g) => base + (0..self.successes).map(|_| g.sample(rng)).sum::<u64>(),
        }
    }
}

/// Draws one duration in ticks.
pub fn sample_duration<R: Rng + ?Sized>(rng: &mut R, successes: u32, p: f64) -> u64 {
    DurationSampler::new(successes, p).sample(rng)
}

struct EdgeDraw {
    permutation: Vec<u32>,
    flags: [Vec<bool>; 2],
    durations: [Vec<u64>; 2],
}

fn draw_edge(config: &FabricationConfig, edge: usize, sampler: &DurationSampler) -> EdgeDraw {
    let d = config.degree;
    let mut rng = seed::rng_for(config.seed, "fabricate-edge", &[edge as u64]);
    let mut permutation: Vec<u32> = (0..d as u32).collect();
    permutation.shuffle(&mut rng);
    // One uniform draw per flag regardless of alpha, so the same seed at a
    // larger alpha only turns failures into successes.
    let mut flags = || (0..d).map(|_| rng.random::<f64>() < config.alpha).collect::<Vec<_>>();
    let flags = [flags(), flags()];
    let mut durations = || (0..d).map(|_| sampler.sample(&mut rng)).collect::<Vec<_>>();
    let durations = [durations(), durations()];
    EdgeDraw { permutation, flags, durations }
}

/// Fabricates a complete-graph oracle. Each edge draws from its own stream
/// derived from `(seed, edge id)`, so the result does not depend on how
/// edges are scheduled across worker threads.
pub fn fabricate(config: &FabricationConfig) -> Result<OracleData, FabricationError> {
    config.validate()?;
    let graph = HomotopyGraph::complete(config.nodes, config.degree, config.multiplicity)?;
    let sampler = DurationSampler::new(config.nb_successes, config.nb_p);
    let draws: Vec<EdgeDraw> = (0..graph.edge_count())
        .into_par_iter()
        .map(|e| draw_edge(config, e, &sampler))
        .collect();

    let mut permutations = Vec::with_capacity(draws.len());
    let mut success = Vec::with_capacity(2 * draws.len());
    let mut durations = Vec::with_capacity(2 * draws.len());
    for EdgeDraw { permutation, flags, durations: t } in draws {
        permutations.push(permutation);
        success.extend(flags);
        durations.extend(t);
    }
    Ok(OracleData {
        graph,
        permutations,
        success,
        durations,
        provenance: Provenance {
            seed: config.seed,
            alpha: Some(config.alpha),
            duration_model: config.duration_model(),
            source: Source::Fabricated,
            note: None,
        },
        solutions: None,
    })
}
