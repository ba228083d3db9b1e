//! Expected known-solution counts and the potentials used for task selection.
//!
//! Every function here works on counts only. `d` is the number of solutions
//! per node, `c_e` the number of known pairs on the edge, `f_count` the
//! number of known failures on the directed edge and `inflight` the number of
//! tasks already running on the same directed edge (excluding the candidate).

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{DirectedEdge, HomotopyGraph, SolverState};

#[derive(Clone, Debug, Error, PartialEq)]
pub enum PotentialError {
    #[error("edge saturated: all {d} correspondences are known")]
    EdgeSaturated { d: usize },
    #[error("no capacity on directed edge (denominator {denominator})")]
    NoCapacity { denominator: i64 },
    #[error("no candidate correspondence remains on the directed edge")]
    NoCandidate,
    #[error("invalid argument: {0}")]
    Invalid(&'static str),
}

fn check_alpha(alpha: f64) -> Result<(), PotentialError> {
    if (0.0..=1.0).contains(&alpha) {
        Ok(())
    } else {
        Err(PotentialError::Invalid("alpha outside [0, 1]"))
    }
}

/// Probability that tracking an untracked correspondence lands on a solution
/// not yet known at the head: `(d - q_head) / (d - c_e)`.
pub fn new_solution_probability(d: usize, q_head: usize, c_e: usize) -> Result<f64, PotentialError> {
    if c_e >= d {
        return Err(PotentialError::EdgeSaturated { d });
    }
    if q_head > d || c_e > q_head {
        return Err(PotentialError::Invalid("need c_e <= q_head <= d"));
    }
    Ok((d - q_head) as f64 / (d - c_e) as f64)
}

/// Increase of the head's expected count from appending one task, with no
/// failures: `(d - en_v) / (d - c_e - inflight)`.
pub fn increment_no_failures(d: usize, en_v: f64, c_e: usize, inflight: usize) -> Result<f64, PotentialError> {
    let denominator = d as i64 - c_e as i64 - inflight as i64;
    if denominator <= 0 {
        return Err(PotentialError::NoCapacity { denominator });
    }
    if en_v > d as f64 {
        return Err(PotentialError::Invalid("en_v exceeds d"));
    }
    Ok((d as f64 - en_v) / denominator as f64)
}

/// Increase of the head's expected count from appending one task when each
/// task succeeds independently with probability `alpha`.
///
/// Of the `inflight` running tasks a binomial number `B` fail; the increment
/// is `alpha (d - en) (1 - (f + b) / (d - c - k + b)) / (d - c - f - k)`
/// evaluated at `b = E[B] = (1 - alpha) k`, which simplifies to
/// `alpha (d - en) / (d - c - alpha k)`. This is exact under the model and
/// does not depend on `f_count`; `f_count` only enters the precondition that
/// an untried correspondence remains.
pub fn increment_with_failures(
    d: usize,
    en_v: f64,
    c_e: usize,
    f_count: usize,
    inflight: usize,
    alpha: f64,
) -> Result<f64, PotentialError> {
    check_alpha(alpha)?;
    if d as i64 - c_e as i64 - f_count as i64 - inflight as i64 <= 0 {
        return Err(PotentialError::NoCandidate);
    }
    if en_v > d as f64 {
        return Err(PotentialError::Invalid("en_v exceeds d"));
    }
    if alpha == 1.0 {
        return Ok((d as f64 - en_v) / (d - c_e - inflight) as f64);
    }
    Ok(alpha * (d as f64 - en_v) / ((d - c_e) as f64 - alpha * inflight as f64))
}

/// The same expression as [`increment_with_failures`] but with the
/// expectation over `B ~ Bin(inflight, 1 - alpha)` summed over its full
/// support instead of evaluated at the mean.
///
/// This form treats the running tasks' outcome count and failure count as
/// independent, which they are not; it overestimates the exact increment
/// whenever `inflight > 0` and `0 < alpha < 1`. Kept for comparison only.
pub fn increment_with_failures_binomial(
    d: usize,
    en_v: f64,
    c_e: usize,
    f_count: usize,
    inflight: usize,
    alpha: f64,
) -> Result<f64, PotentialError> {
    check_alpha(alpha)?;
    let outer = d as i64 - c_e as i64 - f_count as i64 - inflight as i64;
    if outer <= 0 {
        return Err(PotentialError::NoCandidate);
    }
    let base = (d - c_e - inflight) as f64;
    let mut expectation = 0.0;
    for j in 0..=inflight {
        let pj = binomial_pmf(inflight, j, 1.0 - alpha);
        expectation += pj * (f_count + j) as f64 / (base + j as f64);
    }
    Ok(alpha * (d as f64 - en_v) * (1.0 - expectation) / outer as f64)
}

fn binomial_pmf(n: usize, k: usize, p: f64) -> f64 {
    let mut coeff = 1.0;
    for i in 0..k {
        coeff = coeff * (n - i) as f64 / (i + 1) as f64;
    }
    coeff * p.powi(k as i32) * (1.0 - p).powi((n - k) as i32)
}

/// Increase from appending `batch` tasks on one directed edge that has no
/// running tasks yet: `alpha * batch * (d - en_v) / (d - c_e)`.
pub fn increment_batch(d: usize, en_v: f64, c_e: usize, batch: usize, alpha: f64) -> Result<f64, PotentialError> {
    check_alpha(alpha)?;
    if c_e >= d {
        return Err(PotentialError::EdgeSaturated { d });
    }
    Ok(alpha * batch as f64 * (d as f64 - en_v) / (d - c_e) as f64)
}

/// Normaliser for the weighted potential.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightNormalizer {
    /// Divide by the root count `d`.
    #[default]
    Degree,
    /// Divide by the largest count known at any node.
    MaxKnown,
}

/// Score used to rank candidate tasks.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PotentialKind {
    /// Increase of the total expected known count.
    Greedy,
    /// `1 / i` for the head's position in node order.
    Ordinal,
    /// Greedy increment weighted by `(|Q_head| / norm)^lambda`.
    Weighted { lambda: f64, normalizer: WeightNormalizer },
    /// Limit of `Weighted` as lambda grows: prefer the head with the most
    /// known solutions, then the larger increment.
    MaxKnown,
}

impl PotentialKind {
    pub fn weighted(lambda: f64) -> Self {
        PotentialKind::Weighted { lambda, normalizer: WeightNormalizer::Degree }
    }

    pub fn validate(&self) -> Result<(), PotentialError> {
        match self {
            PotentialKind::Weighted { lambda, .. } if !(lambda.is_finite() && *lambda >= 0.0) => {
                Err(PotentialError::Invalid("lambda must be finite and non-negative"))
            }
            _ => Ok(()),
        }
    }

    /// Inverse of [`label`](Self::label). `omega` needs a lambda; an infinite
    /// lambda selects [`PotentialKind::MaxKnown`].
    pub fn from_label(label: &str, lambda: Option<f64>) -> Result<Self, PotentialError> {
        let kind = match (label, lambda) {
            ("E", _) => PotentialKind::Greedy,
            ("ord", _) => PotentialKind::Ordinal,
            ("omega_inf", _) => PotentialKind::MaxKnown,
            ("omega", Some(l)) if l == f64::INFINITY => PotentialKind::MaxKnown,
            ("omega", Some(l)) => PotentialKind::weighted(l),
            ("omega", None) => return Err(PotentialError::Invalid("omega needs a lambda")),
            _ => return Err(PotentialError::Invalid("potential must be one of E, ord, omega, omega_inf")),
        };
        kind.validate()?;
        Ok(kind)
    }

    /// Short label used in CSV output.
    pub fn label(&self) -> &'static str {
        match self {
            PotentialKind::Greedy => "E",
            PotentialKind::Ordinal => "ord",
            PotentialKind::Weighted { .. } => "omega",
            PotentialKind::MaxKnown => "omega_inf",
        }
    }

    pub fn lambda(&self) -> Option<f64> {
        match self {
            PotentialKind::Weighted { lambda, .. } => Some(*lambda),
            PotentialKind::MaxKnown => Some(f64::INFINITY),
            _ => None,
        }
    }
}

/// Per-node expected counts after all running tasks complete, together with
/// the counts they are derived from.
#[derive(Clone, Debug, PartialEq)]
pub struct ExpectationLedger {
    degree: usize,
    alpha: f64,
    known: Vec<usize>,
    expected: Vec<f64>,
    /// Running tasks per directed edge whose start has no known partner.
    inflight: Vec<usize>,
    pairs: Vec<usize>,
    failures: Vec<usize>,
}

impl ExpectationLedger {
    /// Ledger for an idle state with the given known counts.
    pub fn idle(graph: &HomotopyGraph, known: Vec<usize>, alpha: f64) -> Self {
        let expected = known.iter().map(|&q| q as f64).collect();
        ExpectationLedger {
            degree: graph.degree(),
            alpha,
            known,
            expected,
            inflight: vec![0; graph.directed_count()],
            pairs: vec![0; graph.edge_count()],
            failures: vec![0; graph.directed_count()],
        }
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// Expected known count at `node` once running tasks finish.
    pub fn expected(&self, node: usize) -> f64 {
        self.expected[node]
    }

    pub fn expected_all(&self) -> &[f64] {
        &self.expected
    }

    pub fn known(&self, node: usize) -> usize {
        self.known[node]
    }

    pub fn known_all(&self) -> &[usize] {
        &self.known
    }

    pub fn inflight(&self, dir: DirectedEdge) -> usize {
        self.inflight[dir.id()]
    }

    pub fn pairs(&self, edge: usize) -> usize {
        self.pairs[edge]
    }

    pub fn failures(&self, dir: DirectedEdge) -> usize {
        self.failures[dir.id()]
    }

    /// Increment to the head of `dir` from one more task on `dir`.
    pub fn increment(&self, graph: &HomotopyGraph, dir: DirectedEdge) -> Result<f64, PotentialError> {
        increment_with_failures(
            self.degree,
            self.expected[dir.head(graph)],
            self.pairs[dir.edge as usize],
            self.failures[dir.id()],
            self.inflight[dir.id()],
            self.alpha,
        )
    }

    /// Records a submitted task, updating only its head.
    pub fn submit(&mut self, graph: &HomotopyGraph, dir: DirectedEdge) -> Result<f64, PotentialError> {
        let inc = self.increment(graph, dir)?;
        self.expected[dir.head(graph)] += inc;
        self.inflight[dir.id()] += 1;
        Ok(inc)
    }

    pub(crate) fn set_known(&mut self, node: usize, count: usize) {
        self.known[node] = count;
    }

    pub(crate) fn set_pairs(&mut self, edge: usize, count: usize) {
        self.pairs[edge] = count;
    }

    pub(crate) fn set_failures(&mut self, dir: DirectedEdge, count: usize) {
        self.failures[dir.id()] = count;
    }

    pub(crate) fn retire(&mut self, dir: DirectedEdge) {
        self.inflight[dir.id()] -= 1;
    }

    /// Recomputes one node's expectation from the stored counts by folding
    /// the running tasks of each incoming directed edge in id order.
    pub fn refresh_node(&mut self, graph: &HomotopyGraph, node: usize) -> Result<(), PotentialError> {
        let mut en = self.known[node] as f64;
        for &dir in graph.in_edges(node) {
            let c = self.pairs[dir.edge as usize];
            let f = self.failures[dir.id()];
            for j in 0..self.inflight[dir.id()] {
                en += increment_with_failures(self.degree, en, c, f, j, self.alpha)?;
            }
        }
        self.expected[node] = en;
        Ok(())
    }

    pub fn refresh_all(&mut self, graph: &HomotopyGraph) -> Result<(), PotentialError> {
        (0..graph.node_count()).try_for_each(|v| self.refresh_node(graph, v))
    }
}

/// Builds the ledger for `state` from scratch: each node starts at `|Q_v|`
/// and folds in the running tasks on its incoming directed edges. Tasks
/// whose start already has a known partner cannot add anything and are
/// skipped.
pub fn recompute_ledger(
    state: &SolverState,
    graph: &HomotopyGraph,
    alpha: f64,
) -> Result<ExpectationLedger, PotentialError> {
    let mut ledger = ExpectationLedger::idle(graph, state.known.iter().map(|q| q.len()).collect(), alpha);
    for (e, pairs) in state.correspondences.iter().enumerate() {
        ledger.pairs[e] = pairs.len();
    }
    for (id, f) in state.failures.iter().enumerate() {
        ledger.failures[id] = f.len();
    }
    for t in &state.in_flight {
        if !state.tail_covered(t.edge, t.start) {
            ledger.inflight[t.edge.id()] += 1;
        }
    }
    ledger.refresh_all(graph)?;
    Ok(ledger)
}

/// Rank of each node in "order of appearance": the seed node first, then
/// the others by id. `rank[v] = i - 1` for `v = v_i`.
pub fn node_order(node_count: usize, seed_node: usize) -> Vec<usize> {
    (0..node_count)
        .map(|v| match v.cmp(&seed_node) {
            std::cmp::Ordering::Equal => 0,
            std::cmp::Ordering::Less => v + 1,
            std::cmp::Ordering::Greater => v,
        })
        .collect()
}

/// Potential of appending a task on `dir`.
///
/// Only the head's expectation moves when one task is appended, so the
/// greedy potential is the head increment.
pub fn potential_of(
    kind: &PotentialKind,
    graph: &HomotopyGraph,
    ledger: &ExpectationLedger,
    rank: &[usize],
    dir: DirectedEdge,
) -> Result<f64, PotentialError> {
    let head = dir.head(graph);
    match kind {
        PotentialKind::Greedy => ledger.increment(graph, dir),
        PotentialKind::Ordinal => Ok(1.0 / (rank[head] + 1) as f64),
        PotentialKind::Weighted { lambda, normalizer } => {
            let norm = match normalizer {
                WeightNormalizer::Degree => ledger.degree() as f64,
                WeightNormalizer::MaxKnown => ledger.known_all().iter().copied().max().unwrap_or(0).max(1) as f64,
            };
            let weight = (ledger.known(head) as f64 / norm).powf(*lambda);
            Ok(weight * ledger.increment(graph, dir)?)
        }
        PotentialKind::MaxKnown => Ok(ledger.known(head) as f64 + 0.5 * ledger.increment(graph, dir)?),
    }
}
