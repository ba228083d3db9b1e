//! Oracle data harvested from real homotopies.
//!
//! The parametric family is the monic univariate polynomials
//! `F_p(x) = x^d + a_{d-1} x^{d-1} + ... + a_0` with `p = (a_0, ..., a_{d-1})`.
//! Each edge carries a pair `(gamma1, gamma2)` on the unit circle and the
//! segment homotopy `H(x, t) = (1 - t) gamma1 F_p(x) + t gamma2 F_q(x)`;
//! the reverse direction walks the same segment backwards.

mod roots;
mod track;

use std::collections::BTreeMap;
use std::f64::consts::TAU;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{
    DirectedEdge, DurationModel, GraphError, HomotopyGraph, OracleData, Provenance, Source,
};
use crate::seed;

pub use roots::{eval_monic, from_roots, reference_roots, residual_scale, RootError};
pub use track::{track_path, SettingsError, TrackFailure, TrackReport, TrackSettings};

/// Per-node coefficient vectors of a monic univariate family.
#[derive(Clone, Debug, PartialEq)]
pub struct UnivariateFamily {
    degree: usize,
    nodes: Vec<Vec<Complex64>>,
}

impl UnivariateFamily {
    pub fn new(degree: usize, nodes: Vec<Vec<Complex64>>) -> Result<Self, HarvestError> {
        if degree == 0 {
            return Err(HarvestError::Graph(GraphError::ZeroDegree));
        }
        if let Some(v) = nodes.iter().position(|p| p.len() != degree) {
            return Err(HarvestError::CoefficientCount { node: v, degree });
        }
        for (v, p) in nodes.iter().enumerate() {
            if nodes[..v].contains(p) {
                return Err(HarvestError::RepeatedNode(v));
            }
        }
        Ok(UnivariateFamily { degree, nodes })
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn coefficients(&self, node: usize) -> &[Complex64] {
        &self.nodes[node]
    }

    pub fn eval(&self, node: usize, x: Complex64) -> Complex64 {
        eval_monic(&self.nodes[node], x).0
    }
}

/// A family on a graph, with per-edge gammas and one known solution at node 0.
#[derive(Clone, Debug, PartialEq)]
pub struct Instance {
    pub family: UnivariateFamily,
    pub graph: HomotopyGraph,
    /// `(gamma1, gamma2)` per undirected edge, attached to its low and high node.
    pub gammas: Vec<(Complex64, Complex64)>,
    pub seed_solution: Complex64,
}

impl Instance {
    /// Tracks `start` along a directed edge.
    pub fn track(&self, dir: DirectedEdge, start: Complex64, settings: &TrackSettings) -> TrackReport {
        let (g_low, g_high) = self.gammas[dir.edge as usize];
        let tail = dir.tail(&self.graph);
        let head = dir.head(&self.graph);
        let (g_tail, g_head) = if dir.reversed { (g_high, g_low) } else { (g_low, g_high) };
        track_path(
            self.family.coefficients(tail),
            self.family.coefficients(head),
            g_tail,
            g_head,
            start,
            settings,
        )
    }
}

fn complex_normal<R: Rng + ?Sized>(rng: &mut R) -> Complex64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

fn unit_circle<R: Rng + ?Sized>(rng: &mut R) -> Complex64 {
    Complex64::from_polar(1.0, rng.random::<f64>() * TAU)
}

/// Random instance on the complete multigraph: the solution is drawn first
/// and node 0's constant term is solved for.
pub fn seed_instance<R: Rng + ?Sized>(
    degree: usize,
    nodes: usize,
    multiplicity: usize,
    rng: &mut R,
) -> Result<Instance, HarvestError> {
    let graph = HomotopyGraph::complete(nodes, degree, multiplicity)?;
    let draw = |rng: &mut R| -> Vec<Complex64> { (0..degree).map(|_| complex_normal(rng)).collect() };
    let x0 = complex_normal(rng);
    let mut p0 = draw(rng);
    p0[0] = Complex64::new(0.0, 0.0);
    p0[0] = -eval_monic(&p0, x0).0;
    let mut params = vec![p0];
    for _ in 1..nodes {
        params.push(draw(rng));
    }
    let gammas = (0..graph.edge_count()).map(|_| (unit_circle(rng), unit_circle(rng))).collect();

    let (value, slope) = eval_monic(&params[0], x0);
    let seed_solution = if slope.norm() > 0.0 { x0 - value / slope } else { x0 };
    let family = UnivariateFamily::new(degree, params)?;
    let graph = graph.with_parameters(family.nodes.clone())?;
    Ok(Instance { family, graph, gammas, seed_solution })
}

/// The cubic family `x^3 + c` with three values of `c` around the origin
/// joined by plain segments (`gamma = 1`).
pub fn triangle_instance() -> Instance {
    let zero = Complex64::new(0.0, 0.0);
    let corners = [Complex64::new(1.0, 0.1), Complex64::new(-0.6, 0.9), Complex64::new(-0.5, -0.95)];
    let params: Vec<Vec<Complex64>> = corners.iter().map(|&c| vec![c, zero, zero]).collect();
    let family = UnivariateFamily::new(3, params.clone()).expect("distinct corners");
    let graph = HomotopyGraph::complete(3, 3, 1)
        .and_then(|g| g.with_parameters(params))
        .expect("triangle graph");
    let one = Complex64::new(1.0, 0.0);
    let seed_solution = (-corners[0]).powf(1.0 / 3.0);
    Instance { family, graph, gammas: vec![(one, one); 3], seed_solution }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Match {
    Existing(u32),
    New(u32),
}

impl Match {
    pub fn index(self) -> u32 {
        match self {
            Match::Existing(i) | Match::New(i) => i,
        }
    }
}

/// Finds `x` among `known` within `tolerance * max(1, |y|)`, registering it
/// as a new solution when nothing matches.
pub fn match_solution(
    x: Complex64,
    known: &mut Vec<Complex64>,
    tolerance: f64,
) -> Result<Match, HarvestError> {
    let mut hits = known
        .iter()
        .enumerate()
        .filter(|(_, y)| (x - **y).norm() <= tolerance * y.norm().max(1.0))
        .map(|(i, _)| i as u32);
    match (hits.next(), hits.next()) {
        (Some(a), Some(b)) => Err(HarvestError::Ambiguous { first: a, second: b }),
        (Some(a), None) => Ok(Match::Existing(a)),
        _ => {
            known.push(x);
            Ok(Match::New(known.len() as u32 - 1))
        }
    }
}

/// How harvested durations are recorded.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Timing {
    /// Wall-clock microseconds per track.
    #[default]
    Measured,
    /// Predictor steps plus corrector iterations; reproducible.
    WorkUnits,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HarvestSettings {
    pub track: TrackSettings,
    pub timing: Timing,
}

#[derive(Debug, Error, PartialEq)]
pub enum HarvestError {
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Settings(#[from] SettingsError),
    #[error("node {node} needs {degree} coefficients")]
    CoefficientCount { node: usize, degree: usize },
    #[error("node {0} repeats the parameters of an earlier node")]
    RepeatedNode(usize),
    #[error("endpoint matches known solutions {first} and {second}; tolerances are too loose for this instance")]
    Ambiguous { first: u32, second: u32 },
    #[error("node {node} reached only {found} of {degree} solutions; the loops of this graph do not connect every root to the seed (try more parallel edges or another seed)")]
    Unpopulated { node: usize, found: usize, degree: usize },
    #[error("node {node} collected more than {degree} distinct endpoints")]
    Overfull { node: usize, degree: usize },
}

/// Tally of a harvest.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct HarvestReport {
    pub tracks: usize,
    /// Failed tracks by reason.
    pub failures: BTreeMap<&'static str, usize>,
    /// Successful tracks discarded because they contradict another track.
    pub conflicts: usize,
    /// Registered coordinates per node, in index order.
    pub solutions: Vec<Vec<Complex64>>,
}

impl HarvestReport {
    pub fn failed_flags(&self) -> usize {
        self.failures.values().sum::<usize>() + self.conflicts
    }
}

/// Seeds a random instance and harvests it.
pub fn harvest(
    degree: usize,
    nodes: usize,
    multiplicity: usize,
    settings: &HarvestSettings,
    seed: u64,
) -> Result<OracleData, HarvestError> {
    let mut rng = seed::rng_for(seed, "harvest-instance", &[]);
    let instance = seed_instance(degree, nodes, multiplicity, &mut rng)?;
    harvest_instance(&instance, settings, seed).map(|(data, _)| data)
}

/// Tracks every known solution along every directed edge until nothing new
/// appears, then turns the endpoints into permutations, flags and durations.
pub fn harvest_instance(
    instance: &Instance,
    settings: &HarvestSettings,
    seed: u64,
) -> Result<(OracleData, HarvestReport), HarvestError> {
    settings.track.validate()?;
    let graph = &instance.graph;
    let d = graph.degree();
    let tol = settings.track.matching_tolerance;

    let mut known: Vec<Vec<Complex64>> = vec![Vec::new(); graph.node_count()];
    known[0].push(instance.seed_solution);
    // Per directed edge and start: endpoint index or failure reason.
    let mut outcomes: Vec<Vec<Option<Result<u32, TrackFailure>>>> =
        vec![vec![None; d]; graph.directed_count()];
    let mut cost: Vec<Vec<u64>> = vec![vec![0; d]; graph.directed_count()];

    loop {
        let mut progress = false;
        for dir in graph.directed_edges() {
            let tail = dir.tail(graph);
            let head = dir.head(graph);
            let pending: Vec<usize> =
                (0..known[tail].len()).filter(|&s| outcomes[dir.id()][s].is_none()).collect();
            if pending.is_empty() {
                continue;
            }
            progress = true;
            let reports: Vec<TrackReport> = pending
                .par_iter()
                .map(|&s| instance.track(dir, known[tail][s], &settings.track))
                .collect();
            for (s, rep) in pending.into_iter().zip(reports) {
                cost[dir.id()][s] = match settings.timing {
                    Timing::Measured => rep.micros,
                    Timing::WorkUnits => rep.work_units(),
                };
                outcomes[dir.id()][s] = Some(match rep.outcome {
                    Ok(end) => {
                        let m = match_solution(end, &mut known[head], tol)?;
                        if known[head].len() > d {
                            return Err(HarvestError::Overfull { node: head, degree: d });
                        }
                        Ok(m.index())
                    }
                    Err(why) => Err(why),
                });
            }
        }
        if !progress {
            break;
        }
    }
    for (node, sols) in known.iter().enumerate() {
        if sols.len() < d {
            return Err(HarvestError::Unpopulated { node, found: sols.len(), degree: d });
        }
    }

    let mut report = HarvestReport { tracks: graph.directed_count() * d, ..Default::default() };
    for o in outcomes.iter().flatten() {
        if let Some(Err(why)) = o {
            *report.failures.entry(why.label()).or_default() += 1;
        }
    }
    let mut permutations = Vec::with_capacity(graph.edge_count());
    let mut success = vec![vec![false; d]; graph.directed_count()];
    for e in 0..graph.edge_count() as u32 {
        let fwd = DirectedEdge::forward(e);
        let rev = fwd.reverse();
        let (sigma, ok_fwd, ok_rev, conflicts) =
            assemble(&outcomes[fwd.id()], &outcomes[rev.id()], d);
        report.conflicts += conflicts;
        permutations.push(sigma);
        success[fwd.id()] = ok_fwd;
        success[rev.id()] = ok_rev;
    }

    let duration_model = match settings.timing {
        Timing::Measured => DurationModel::Measured { unit: "microseconds".into() },
        Timing::WorkUnits => DurationModel::WorkUnits { unit: "steps".into() },
    };
    let data = OracleData {
        graph: graph.clone(),
        permutations,
        success,
        durations: cost,
        provenance: Provenance {
            seed,
            alpha: None,
            duration_model,
            source: Source::Harvested,
            note: Some(
                "permutation entries under a failed flag were completed arbitrarily and carry no information"
                    .into(),
            ),
        },
        solutions: Some(known.clone()),
    };
    report.solutions = known;
    Ok((data, report))
}

type Outcomes = [Option<Result<u32, TrackFailure>>];

/// Builds `sigma` (low index to high index) from both directions. Forward
/// endpoints take precedence; tracks that collide or contradict are marked
/// failed and the leftover entries are paired in increasing order.
fn assemble(fwd: &Outcomes, rev: &Outcomes, d: usize) -> (Vec<u32>, Vec<bool>, Vec<bool>, usize) {
    const NONE: u32 = u32::MAX;
    let hits = |side: &Outcomes| {
        let mut count = vec![0usize; d];
        for o in side.iter().flatten().flatten() {
            count[*o as usize] += 1;
        }
        count
    };
    let fwd_hits = hits(fwd);
    let rev_hits = hits(rev);
    let target = |o: &Option<Result<u32, TrackFailure>>| match o {
        Some(Ok(b)) => Some(*b),
        _ => None,
    };

    let mut sigma = vec![NONE; d];
    let mut inverse = vec![NONE; d];
    let mut ok_fwd = vec![false; d];
    let mut ok_rev = vec![false; d];
    let mut conflicts = 0;
    for a in 0..d {
        match target(&fwd[a]) {
            Some(b) if fwd_hits[b as usize] == 1 => {
                sigma[a] = b;
                inverse[b as usize] = a as u32;
                ok_fwd[a] = true;
            }
            Some(_) => conflicts += 1,
            None => {}
        }
    }
    for b in 0..d {
        let Some(a) = target(&rev[b]) else { continue };
        let consistent = rev_hits[a as usize] == 1
            && match (sigma[a as usize], inverse[b]) {
                (NONE, NONE) => true,
                (s, _) => s == b as u32,
            };
        if consistent {
            sigma[a as usize] = b as u32;
            inverse[b] = a;
            ok_rev[b] = true;
        } else {
            conflicts += 1;
        }
    }
    let mut free = (0..d as u32).filter(|&b| inverse[b as usize] == NONE);
    for s in sigma.iter_mut().filter(|s| **s == NONE) {
        *s = free.next().expect("as many free targets as free sources");
    }
    (sigma, ok_fwd, ok_rev, conflicts)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn work_units() -> HarvestSettings {
        HarvestSettings { timing: Timing::WorkUnits, ..Default::default() }
    }

    #[test]
    fn linear_seed_solves_its_node() {
        let mut rng = seed::rng_for(1, "t", &[]);
        let inst = seed_instance(1, 2, 1, &mut rng).unwrap();
        let a0 = inst.family.coefficients(0)[0];
        assert!((inst.seed_solution + a0).norm() < 1e-15);
    }

    #[test]
    fn seeded_residual_is_tiny() {
        for s in 0..20 {
            let mut rng = seed::rng_for(s, "t", &[]);
            let inst = seed_instance(12, 3, 2, &mut rng).unwrap();
            let x = inst.seed_solution;
            assert!(inst.family.eval(0, x).norm() < 1e-12 * residual_scale(12, x));
            assert_eq!(inst.gammas.len(), 6);
            assert!(inst.gammas.iter().all(|(a, b)| (a.norm() - 1.0).abs() < 1e-15 && (b.norm() - 1.0).abs() < 1e-15));
        }
    }

    #[test]
    fn matching_rules() {
        let mut known = Vec::new();
        assert_eq!(match_solution(c(1.0, 0.0), &mut known, 1e-6).unwrap(), Match::New(0));
        assert_eq!(match_solution(c(1.0 + 1e-9, 0.0), &mut known, 1e-6).unwrap(), Match::Existing(0));
        assert_eq!(match_solution(c(1.0 + 1e-4, 0.0), &mut known, 1e-6).unwrap(), Match::New(1));
        assert_eq!(known.len(), 2);
        let err = match_solution(c(1.00005, 0.0), &mut known, 1e-4).unwrap_err();
        assert_eq!(err, HarvestError::Ambiguous { first: 0, second: 1 });
    }

    #[test]
    fn close_roots_stay_distinct() {
        let roots = [c(0.2, 0.2), c(0.2001, 0.2), c(-1.0, 0.3), c(0.5, -0.9)];
        let found = reference_roots(&from_roots(&roots)).unwrap();
        let mut known = Vec::new();
        for r in &found {
            match_solution(*r, &mut known, 1e-6).unwrap();
        }
        assert_eq!(known.len(), 4);
    }

    #[test]
    fn degenerate_linear_harvest() {
        let data = harvest(1, 2, 1, &work_units(), 3).unwrap();
        assert_eq!(data.permutations, vec![vec![0]]);
        assert_eq!(data.success.len(), 2);
        assert!(data.success.iter().flatten().all(|&f| f));
        data.check().unwrap();
    }

    #[test]
    fn triangle_harvest_is_complete() {
        let (data, report) = harvest_instance(&triangle_instance(), &work_units(), 0).unwrap();
        data.check().unwrap();
        assert_eq!(report.failed_flags(), 0);
        assert!(data.success.iter().flatten().all(|&f| f));
        // The loop 0 -> 1 -> 2 -> 0 is a 3-cycle.
        let p = &data.permutations;
        let inv2: Vec<u32> = (0..3).map(|b| p[1].iter().position(|&x| x == b).unwrap() as u32).collect();
        let around = |s: u32| inv2[p[2][p[0][s as usize] as usize] as usize];
        assert!((0..3).all(|s| around(s) != s));
    }

    #[test]
    fn harvested_solutions_match_reference_roots() {
        let data = (0..20).find_map(|s| harvest(8, 3, 2, &work_units(), s).ok()).unwrap();
        data.check().unwrap();
        let params = data.graph.parameters().unwrap();
        for (v, sols) in data.solutions.as_ref().unwrap().iter().enumerate() {
            let reference = reference_roots(&params[v]).unwrap();
            for x in sols {
                let best = reference.iter().map(|r| (r - x).norm() / r.norm().max(1.0)).fold(f64::INFINITY, f64::min);
                assert!(best < 1e-8);
            }
        }
    }

    #[test]
    fn harvest_is_reproducible_with_work_units() {
        let a = harvest(6, 3, 1, &work_units(), 5).unwrap();
        assert_eq!(a, harvest(6, 3, 1, &work_units(), 5).unwrap());
    }

    #[test]
    fn assemble_masks_contradictions() {
        let ok = |b| Some(Ok(b));
        let fail = Some(Err(TrackFailure::StepUnderflow));
        // Forward 0 and 1 collide on 2; reverse says 2 -> 1.
        let fwd = vec![ok(2), ok(2), ok(0)];
        let rev = vec![fail, fail, ok(1)];
        let (sigma, f, r, conflicts) = assemble(&fwd, &rev, 3);
        assert_eq!(sigma, vec![1, 2, 0]);
        assert_eq!(f, vec![false, false, true]);
        assert_eq!(r, vec![false, false, true]);
        assert_eq!(conflicts, 2);
    }
}
