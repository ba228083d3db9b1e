//! Homotopy graph, solver state and the versioned oracle datafile.
//!
//! Solutions are referred to by integer index per node. A correspondence
//! `sigma_e` is stored once per undirected edge, mapping indices at the
//! lower-id endpoint to indices at the higher-id endpoint; success flags and
//! durations are stored per directed edge and start index.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Datafile schema version written by [`save_oracle`].
pub const DATAFILE_VERSION: u32 = 1;

/// An undirected edge between `low < high`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Edge {
    pub low: u32,
    pub high: u32,
}

/// An edge together with a direction.
///
/// The forward direction runs from the lower-id node to the higher-id node.
/// Directed ids are `2 * edge + reversed`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct DirectedEdge {
    pub edge: u32,
    pub reversed: bool,
}

impl DirectedEdge {
    pub fn forward(edge: u32) -> Self {
        DirectedEdge { edge, reversed: false }
    }

    pub fn from_id(id: usize) -> Self {
        DirectedEdge {
            edge: (id / 2) as u32,
            reversed: id % 2 == 1,
        }
    }

    pub fn id(self) -> usize {
        2 * self.edge as usize + usize::from(self.reversed)
    }

    pub fn reverse(self) -> Self {
        DirectedEdge {
            edge: self.edge,
            reversed: !self.reversed,
        }
    }

    pub fn tail(self, graph: &HomotopyGraph) -> usize {
        let e = graph.edges[self.edge as usize];
        if self.reversed { e.high as usize } else { e.low as usize }
    }

    pub fn head(self, graph: &HomotopyGraph) -> usize {
        self.reverse().tail(graph)
    }
}

impl fmt::Display for DirectedEdge {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}{}", self.edge, if self.reversed { "-" } else { "+" })
    }
}

/// Loopless multigraph of parameter points, each carrying `degree` solutions.
#[derive(Clone, Debug, PartialEq)]
pub struct HomotopyGraph {
    node_count: usize,
    degree: usize,
    multiplicity: Option<usize>,
    edges: Vec<Edge>,
    parameters: Option<Vec<Vec<Complex64>>>,
    out_edges: Vec<Vec<DirectedEdge>>,
    in_edges: Vec<Vec<DirectedEdge>>,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum GraphError {
    #[error("graph needs at least 2 nodes, got {0}")]
    TooFewNodes(usize),
    #[error("degree must be positive")]
    ZeroDegree,
    #[error("multiplicity must be positive")]
    ZeroMultiplicity,
    #[error("edge {index} ({a}, {b}) is a loop or out of range")]
    BadEdge { index: usize, a: u32, b: u32 },
    #[error("parameter table has {found} rows for {nodes} nodes")]
    ParameterCount { found: usize, nodes: usize },
}

impl HomotopyGraph {
    /// Complete multigraph on `nodes` nodes with `multiplicity` parallel
    /// edges per pair. Edges are listed pair by pair in lexicographic order.
    pub fn complete(nodes: usize, degree: usize, multiplicity: usize) -> Result<Self, GraphError> {
        if multiplicity == 0 {
            return Err(GraphError::ZeroMultiplicity);
        }
        let mut edges = Vec::with_capacity(multiplicity * nodes * nodes.saturating_sub(1) / 2);
        for a in 0..nodes as u32 {
            for b in a + 1..nodes as u32 {
                for _ in 0..multiplicity {
                    edges.push(Edge { low: a, high: b });
                }
            }
        }
        let mut g = Self::from_edges(nodes, degree, edges)?;
        g.multiplicity = Some(multiplicity);
        Ok(g)
    }

    /// Graph from an explicit edge list; pairs may be given in either order.
    pub fn from_edges(nodes: usize, degree: usize, pairs: Vec<Edge>) -> Result<Self, GraphError> {
        if nodes < 2 {
            return Err(GraphError::TooFewNodes(nodes));
        }
        if degree == 0 {
            return Err(GraphError::ZeroDegree);
        }
        let mut edges = Vec::with_capacity(pairs.len());
        for (index, e) in pairs.into_iter().enumerate() {
            let (a, b) = (e.low.min(e.high), e.low.max(e.high));
            if a == b || b as usize >= nodes {
                return Err(GraphError::BadEdge { index, a: e.low, b: e.high });
            }
            edges.push(Edge { low: a, high: b });
        }
        let mut out_edges = vec![Vec::new(); nodes];
        let mut in_edges = vec![Vec::new(); nodes];
        for id in 0..2 * edges.len() {
            let dir = DirectedEdge::from_id(id);
            let e = edges[dir.edge as usize];
            let (tail, head) = if dir.reversed { (e.high, e.low) } else { (e.low, e.high) };
            out_edges[tail as usize].push(dir);
            in_edges[head as usize].push(dir);
        }
        Ok(HomotopyGraph {
            node_count: nodes,
            degree,
            multiplicity: None,
            edges,
            parameters: None,
            out_edges,
            in_edges,
        })
    }

    /// Attaches per-node parameter vectors (harvested data).
    pub fn with_parameters(mut self, parameters: Vec<Vec<Complex64>>) -> Result<Self, GraphError> {
        if parameters.len() != self.node_count {
            return Err(GraphError::ParameterCount {
                found: parameters.len(),
                nodes: self.node_count,
            });
        }
        self.parameters = Some(parameters);
        Ok(self)
    }

    pub fn node_count(&self) -> usize {
        self.node_count
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    /// Parallel-edge count when the graph is a complete configuration.
    pub fn multiplicity(&self) -> Option<usize> {
        self.multiplicity
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn directed_count(&self) -> usize {
        2 * self.edges.len()
    }

    pub fn parameters(&self) -> Option<&[Vec<Complex64>]> {
        self.parameters.as_deref()
    }

    /// Directed edges whose tail is `node`, in id order.
    pub fn out_edges(&self, node: usize) -> &[DirectedEdge] {
        &self.out_edges[node]
    }

    /// Directed edges whose head is `node`, in id order.
    pub fn in_edges(&self, node: usize) -> &[DirectedEdge] {
        &self.in_edges[node]
    }

    pub fn directed_edges(&self) -> impl Iterator<Item = DirectedEdge> {
        (0..self.directed_count()).map(DirectedEdge::from_id)
    }

    /// Splits a pair stored as `(low index, high index)` into
    /// `(tail index, head index)` for `dir`.
    pub fn orient(dir: DirectedEdge, pair: (u32, u32)) -> (u32, u32) {
        if dir.reversed { (pair.1, pair.0) } else { pair }
    }
}

/// One homotopy path track: start solution `start` at the tail of `edge`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct Task {
    pub start: u32,
    #[serde(serialize_with = "ser_dir")]
    pub edge: DirectedEdge,
    pub scheduled_at: u64,
    pub duration: u64,
}

fn ser_dir<S: serde::Serializer>(d: &DirectedEdge, s: S) -> Result<S::Ok, S::Error> {
    s.serialize_u64(d.id() as u64)
}

/// Solver state `(Q, C, A, F)`.
///
/// `correspondences[e]` holds pairs `(index at low node, index at high node)`.
/// `failures` is indexed by directed-edge id.
#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub struct SolverState {
    pub known: Vec<BTreeSet<u32>>,
    pub correspondences: Vec<BTreeSet<(u32, u32)>>,
    pub in_flight: Vec<Task>,
    pub failures: Vec<BTreeSet<u32>>,
}

impl SolverState {
    /// Idle state with no known solutions.
    pub fn empty(graph: &HomotopyGraph) -> Self {
        SolverState {
            known: vec![BTreeSet::new(); graph.node_count()],
            correspondences: vec![BTreeSet::new(); graph.edge_count()],
            in_flight: Vec::new(),
            failures: vec![BTreeSet::new(); graph.directed_count()],
        }
    }

    /// Idle state knowing a single solution.
    pub fn seeded(graph: &HomotopyGraph, node: usize, solution: u32) -> Self {
        let mut s = Self::empty(graph);
        s.known[node].insert(solution);
        s
    }

    /// Whether `start` at the tail of `dir` already has a known partner.
    pub fn tail_covered(&self, dir: DirectedEdge, start: u32) -> bool {
        self.correspondences[dir.edge as usize]
            .iter()
            .any(|&p| HomotopyGraph::orient(dir, p).0 == start)
    }

    pub fn is_idle(&self) -> bool {
        self.in_flight.is_empty()
    }
}

/// A broken [`SolverState`] invariant.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Violation {
    ShapeMismatch { what: &'static str, expected: usize, found: usize },
    IndexOutOfRange { node: usize, index: u32 },
    TooManySolutions { node: usize, count: usize },
    TooManyPairs { edge: usize, count: usize },
    NotPartialBijection { edge: usize, index: u32, low_side: bool },
    PairOutsideKnown { edge: usize, pair: (u32, u32) },
    FailureWithoutKnownStart { directed: usize, start: u32 },
    FailureWithKnownCorrespondence { directed: usize, start: u32 },
    InFlightUnknownStart { directed: usize, start: u32 },
    InFlightAfterFailure { directed: usize, start: u32 },
    DuplicateInFlight { directed: usize, start: u32 },
    EdgeOutOfRange { edge: u32 },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        use Violation::*;
        match self {
            ShapeMismatch { what, expected, found } => {
                write!(f, "{what}: expected {expected} entries, found {found}")
            }
            IndexOutOfRange { node, index } => write!(f, "solution {index} at node {node} out of range"),
            TooManySolutions { node, count } => write!(f, "node {node} knows {count} solutions"),
            TooManyPairs { edge, count } => write!(f, "edge {edge} has {count} pairs"),
            NotPartialBijection { edge, index, low_side } => write!(
                f,
                "edge {edge} is not a partial bijection: index {index} repeats on the {} side",
                if *low_side { "low" } else { "high" }
            ),
            PairOutsideKnown { edge, pair } => {
                write!(f, "edge {edge} pair {pair:?} uses an unknown solution")
            }
            FailureWithoutKnownStart { directed, start } => {
                write!(f, "failure without known start: {start} on directed edge {directed}")
            }
            FailureWithKnownCorrespondence { directed, start } => {
                write!(f, "failed start {start} on directed edge {directed} has a known partner")
            }
            InFlightUnknownStart { directed, start } => {
                write!(f, "in-flight task ({start}, {directed}) starts from an unknown solution")
            }
            InFlightAfterFailure { directed, start } => {
                write!(f, "in-flight task ({start}, {directed}) repeats a known failure")
            }
            DuplicateInFlight { directed, start } => {
                write!(f, "task ({start}, {directed}) is in flight twice")
            }
            EdgeOutOfRange { edge } => write!(f, "edge {edge} does not exist"),
        }
    }
}

/// Checks every [`SolverState`] invariant against `graph`.
///
/// An in-flight task whose start gained a partner while it was running (the
/// reverse direction found the same pair first) is not reported: that
/// situation is reachable with more than one thread.
pub fn validate_state(state: &SolverState, graph: &HomotopyGraph) -> Vec<Violation> {
    let mut out = Vec::new();
    let d = graph.degree();
    let shapes = [
        ("known", graph.node_count(), state.known.len()),
        ("correspondences", graph.edge_count(), state.correspondences.len()),
        ("failures", graph.directed_count(), state.failures.len()),
    ];
    for (what, expected, found) in shapes {
        if expected != found {
            out.push(Violation::ShapeMismatch { what, expected, found });
        }
    }
    if !out.is_empty() {
        return out;
    }

    for (node, q) in state.known.iter().enumerate() {
        if q.len() > d {
            out.push(Violation::TooManySolutions { node, count: q.len() });
        }
        for &index in q.iter().filter(|&&i| i as usize >= d) {
            out.push(Violation::IndexOutOfRange { node, index });
        }
    }

    for (edge, pairs) in state.correspondences.iter().enumerate() {
        if pairs.len() > d {
            out.push(Violation::TooManyPairs { edge, count: pairs.len() });
        }
        let e = graph.edges()[edge];
        let mut lows = BTreeSet::new();
        let mut highs = BTreeSet::new();
        for &(a, b) in pairs {
            if !lows.insert(a) {
                out.push(Violation::NotPartialBijection { edge, index: a, low_side: true });
            }
            if !highs.insert(b) {
                out.push(Violation::NotPartialBijection { edge, index: b, low_side: false });
            }
            if !state.known[e.low as usize].contains(&a) || !state.known[e.high as usize].contains(&b) {
                out.push(Violation::PairOutsideKnown { edge, pair: (a, b) });
            }
        }
    }

    for (directed, failed) in state.failures.iter().enumerate() {
        let dir = DirectedEdge::from_id(directed);
        let tail = dir.tail(graph);
        for &start in failed {
            if !state.known[tail].contains(&start) {
                out.push(Violation::FailureWithoutKnownStart { directed, start });
            }
            if state.tail_covered(dir, start) {
                out.push(Violation::FailureWithKnownCorrespondence { directed, start });
            }
        }
    }

    let mut seen = BTreeSet::new();
    for t in &state.in_flight {
        if t.edge.edge as usize >= graph.edge_count() {
            out.push(Violation::EdgeOutOfRange { edge: t.edge.edge });
            continue;
        }
        let directed = t.edge.id();
        if !state.known[t.edge.tail(graph)].contains(&t.start) {
            out.push(Violation::InFlightUnknownStart { directed, start: t.start });
        }
        if state.failures[directed].contains(&t.start) {
            out.push(Violation::InFlightAfterFailure { directed, start: t.start });
        }
        if !seen.insert((directed, t.start)) {
            out.push(Violation::DuplicateInFlight { directed, start: t.start });
        }
    }
    out
}

/// How track durations were produced.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DurationModel {
    /// Trials until the `successes`-th success of Bernoulli(`p`) draws.
    NegativeBinomial { successes: u32, p: f64, unit: String },
    /// Wall-clock measurement of real tracks.
    Measured { unit: String },
    /// Deterministic work count of real tracks (predictor steps plus
    /// corrector iterations).
    WorkUnits { unit: String },
}

impl DurationModel {
    pub fn unit(&self) -> &str {
        match self {
            DurationModel::NegativeBinomial { unit, .. }
            | DurationModel::Measured { unit }
            | DurationModel::WorkUnits { unit } => unit,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Source {
    Fabricated,
    Harvested,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub seed: u64,
    /// Per-task success probability for fabricated data.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    pub duration_model: DurationModel,
    pub source: Source,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

/// Stage-one output: ground-truth correspondences, outcomes and durations.
#[derive(Clone, Debug, PartialEq)]
pub struct OracleData {
    pub graph: HomotopyGraph,
    /// Per undirected edge: index at the low node to index at the high node.
    pub permutations: Vec<Vec<u32>>,
    /// Per directed edge, per start index.
    pub success: Vec<Vec<bool>>,
    /// Per directed edge, per start index.
    pub durations: Vec<Vec<u64>>,
    pub provenance: Provenance,
    /// Solution coordinates keyed by `(node, index)`; harvested data only.
    pub solutions: Option<Vec<Vec<Complex64>>>,
}

impl OracleData {
    /// Head-side index reached from `start` along `dir`, or `None` when the
    /// track fails.
    pub fn outcome(&self, dir: DirectedEdge, start: u32) -> Option<u32> {
        if !self.success[dir.id()][start as usize] {
            return None;
        }
        Some(self.partner(dir, start))
    }

    /// Ground-truth partner of `start` along `dir`, ignoring success flags.
    pub fn partner(&self, dir: DirectedEdge, start: u32) -> u32 {
        let perm = &self.permutations[dir.edge as usize];
        if dir.reversed {
            perm.iter().position(|&x| x == start).expect("permutation is a bijection") as u32
        } else {
            perm[start as usize]
        }
    }

    pub fn duration(&self, dir: DirectedEdge, start: u32) -> u64 {
        self.durations[dir.id()][start as usize]
    }

    /// Inverse permutations, one per edge (high index to low index).
    pub fn inverses(&self) -> Vec<Vec<u32>> {
        self.permutations
            .iter()
            .map(|p| {
                let mut inv = vec![0u32; p.len()];
                for (i, &j) in p.iter().enumerate() {
                    inv[j as usize] = i as u32;
                }
                inv
            })
            .collect()
    }

    /// Checks shapes, bijectivity and durations.
    pub fn check(&self) -> Result<(), DatafileError> {
        let d = self.graph.degree();
        let edges = self.graph.edge_count();
        if self.permutations.len() != edges {
            return Err(DatafileError::Shape(format!(
                "{} permutations for {} edges",
                self.permutations.len(),
                edges
            )));
        }
        for (edge, p) in self.permutations.iter().enumerate() {
            if !is_bijection(p, d) {
                return Err(DatafileError::MalformedPermutation { edge });
            }
        }
        for directed in 0..2 * edges {
            match self.success.get(directed) {
                Some(f) if f.len() == d => {}
                _ => return Err(DatafileError::MissingFlags { directed }),
            }
            match self.durations.get(directed) {
                Some(t) if t.len() == d => {
                    if t.contains(&0) {
                        return Err(DatafileError::NonPositiveDuration { directed });
                    }
                }
                _ => return Err(DatafileError::MissingDurations { directed }),
            }
        }
        if self.success.len() != 2 * edges || self.durations.len() != 2 * edges {
            return Err(DatafileError::Shape("extra directed-edge entries".into()));
        }
        if let Some(sol) = &self.solutions {
            if sol.len() != self.graph.node_count() || sol.iter().any(|s| s.len() != d) {
                return Err(DatafileError::Shape("solution table does not match graph".into()));
            }
        }
        Ok(())
    }
}

fn is_bijection(p: &[u32], d: usize) -> bool {
    if p.len() != d {
        return false;
    }
    let mut seen = vec![false; d];
    for &x in p {
        match seen.get_mut(x as usize) {
            Some(s) if !*s => *s = true,
            _ => return false,
        }
    }
    true
}

#[derive(Debug, Error)]
pub enum DatafileError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("parse error: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("unsupported datafile version {found} (expected {DATAFILE_VERSION})")]
    VersionMismatch { found: u64 },
    #[error("missing or non-integer version tag")]
    MissingVersion,
    #[error("malformed permutation on edge {edge}: not a bijection")]
    MalformedPermutation { edge: usize },
    #[error("missing success flags for directed edge {directed}")]
    MissingFlags { directed: usize },
    #[error("missing durations for directed edge {directed}")]
    MissingDurations { directed: usize },
    #[error("non-positive duration on directed edge {directed}")]
    NonPositiveDuration { directed: usize },
    #[error("invalid graph: {0}")]
    Graph(#[from] GraphError),
    #[error("inconsistent datafile: {0}")]
    Shape(String),
}

#[derive(Serialize, Deserialize)]
struct RawGraph {
    #[serde(rename = "N")]
    nodes: usize,
    d: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    m: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    edges: Option<Vec<[u32; 2]>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    parameters: Option<Vec<Vec<Complex64>>>,
}

#[derive(Serialize, Deserialize)]
struct RawDatafile {
    version: u32,
    graph: RawGraph,
    permutations: BTreeMap<usize, Vec<u32>>,
    success_flags: BTreeMap<usize, String>,
    durations: BTreeMap<usize, Vec<u64>>,
    provenance: Provenance,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    solutions: Option<Vec<Vec<Complex64>>>,
}

impl From<&OracleData> for RawDatafile {
    fn from(o: &OracleData) -> Self {
        let g = &o.graph;
        let edges = match g.multiplicity() {
            Some(_) => None,
            None => Some(g.edges().iter().map(|e| [e.low, e.high]).collect()),
        };
        RawDatafile {
            version: DATAFILE_VERSION,
            graph: RawGraph {
                nodes: g.node_count(),
                d: g.degree(),
                m: g.multiplicity(),
                edges,
                parameters: g.parameters().map(<[_]>::to_vec),
            },
            permutations: o.permutations.iter().cloned().enumerate().collect(),
            success_flags: o
                .success
                .iter()
                .map(|f| f.iter().map(|&b| if b { '1' } else { '0' }).collect())
                .enumerate()
                .collect(),
            durations: o.durations.iter().cloned().enumerate().collect(),
            provenance: o.provenance.clone(),
            solutions: o.solutions.clone(),
        }
    }
}

impl TryFrom<RawDatafile> for OracleData {
    type Error = DatafileError;

    fn try_from(raw: RawDatafile) -> Result<Self, DatafileError> {
        if raw.version != DATAFILE_VERSION {
            return Err(DatafileError::VersionMismatch { found: raw.version.into() });
        }
        let RawGraph { nodes, d, m, edges, parameters } = raw.graph;
        let mut graph = match (m, edges) {
            (_, Some(list)) => {
                let list = list.into_iter().map(|[a, b]| Edge { low: a, high: b }).collect();
                HomotopyGraph::from_edges(nodes, d, list)?
            }
            (Some(m), None) => HomotopyGraph::complete(nodes, d, m)?,
            (None, None) => return Err(DatafileError::Shape("graph needs `m` or `edges`".into())),
        };
        if let Some(p) = parameters {
            graph = graph.with_parameters(p)?;
        }
        let edges = graph.edge_count();

        let mut permutations = Vec::with_capacity(edges);
        for edge in 0..edges {
            let p = raw.permutations.get(&edge).ok_or(DatafileError::MalformedPermutation { edge })?;
            permutations.push(p.clone());
        }
        let mut success = Vec::with_capacity(2 * edges);
        let mut durations = Vec::with_capacity(2 * edges);
        for directed in 0..2 * edges {
            let bits = raw.success_flags.get(&directed).ok_or(DatafileError::MissingFlags { directed })?;
            let flags: Option<Vec<bool>> = bits
                .chars()
                .map(|c| match c {
                    '1' => Some(true),
                    '0' => Some(false),
                    _ => None,
                })
                .collect();
            success.push(flags.ok_or(DatafileError::MissingFlags { directed })?);
            let t = raw.durations.get(&directed).ok_or(DatafileError::MissingDurations { directed })?;
            durations.push(t.clone());
        }
        if raw.permutations.len() != edges
            || raw.success_flags.len() != 2 * edges
            || raw.durations.len() != 2 * edges
        {
            return Err(DatafileError::Shape("entries for edges outside the graph".into()));
        }
        let data = OracleData {
            graph,
            permutations,
            success,
            durations,
            provenance: raw.provenance,
            solutions: raw.solutions,
        };
        data.check()?;
        Ok(data)
    }
}

/// Serialises `data` as a pretty-printed JSON datafile.
pub fn write_oracle<W: Write>(data: &OracleData, writer: W) -> Result<(), DatafileError> {
    serde_json::to_writer_pretty(writer, &RawDatafile::from(data))?;
    Ok(())
}

/// Parses a datafile, checking the version tag before anything else.
pub fn read_oracle<R: Read>(mut reader: R) -> Result<OracleData, DatafileError> {
    let mut text = String::new();
    reader.read_to_string(&mut text)?;
    oracle_from_str(&text)
}

pub fn oracle_from_str(text: &str) -> Result<OracleData, DatafileError> {
    let value: serde_json::Value = serde_json::from_str(text)?;
    match value.get("version").and_then(serde_json::Value::as_u64) {
        Some(v) if v == u64::from(DATAFILE_VERSION) => {}
        Some(found) => return Err(DatafileError::VersionMismatch { found }),
        None => return Err(DatafileError::MissingVersion),
    }
    let raw: RawDatafile = serde_json::from_value(value)?;
    raw.try_into()
}

pub fn save_oracle(data: &OracleData, path: impl AsRef<Path>) -> Result<(), DatafileError> {
    data.check()?;
    let mut buf = Vec::new();
    write_oracle(data, &mut buf)?;
    buf.push(b'\n');
    fs::write(path, buf)?;
    Ok(())
}

pub fn load_oracle(path: impl AsRef<Path>) -> Result<OracleData, DatafileError> {
    read_oracle(fs::File::open(path)?)
}

/// How a simulation ended.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Termination {
    /// Some node reached `d` known solutions.
    Saturated { node: usize },
    /// No candidate task remained and nothing was in flight.
    Exhausted,
    /// The track budget ran out first.
    BudgetExceeded,
}

impl Termination {
    pub fn is_success(self) -> bool {
        matches!(self, Termination::Saturated { .. })
    }

    pub fn label(self) -> &'static str {
        match self {
            Termination::Saturated { .. } => "saturated",
            Termination::Exhausted => "exhausted",
            Termination::BudgetExceeded => "budget_exceeded",
        }
    }
}

impl fmt::Display for Termination {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Termination::Saturated { node } => write!(f, "saturated({node})"),
            other => f.write_str(other.label()),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RunMetrics {
    pub wall_time: u64,
    /// Completed tracks; equals `successes + failures`.
    pub tracks: u64,
    pub successes: u64,
    pub failures: u64,
    /// Successful tracks whose pair had already been found from the other
    /// direction while they were running.
    pub redundant: u64,
    /// Tracks that were running when a node saturated and completed
    /// afterwards. Included in `tracks`.
    pub drained: u64,
    pub busy: Vec<u64>,
    pub idle: Vec<u64>,
    pub status: Termination,
    pub final_counts: Vec<usize>,
}

impl RunMetrics {
    pub fn idle_fraction(&self) -> f64 {
        let total: u64 = self.idle.iter().sum();
        let denom = self.wall_time as f64 * self.idle.len() as f64;
        if denom == 0.0 { 0.0 } else { total as f64 / denom }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn k3() -> HomotopyGraph {
        HomotopyGraph::complete(3, 4, 2).unwrap()
    }

    #[test]
    fn complete_graph_edge_count() {
        for (n, m) in [(2, 1), (3, 2), (5, 1), (9, 3)] {
            let g = HomotopyGraph::complete(n, 7, m).unwrap();
            assert_eq!(g.edge_count(), m * n * (n - 1) / 2);
            for v in 0..n {
                assert_eq!(g.out_edges(v).len(), m * (n - 1));
                assert_eq!(g.in_edges(v).len(), m * (n - 1));
            }
        }
    }

    #[test]
    fn graph_rejects_loops_and_small_inputs() {
        assert_eq!(HomotopyGraph::complete(1, 3, 1).unwrap_err(), GraphError::TooFewNodes(1));
        assert_eq!(HomotopyGraph::complete(3, 0, 1).unwrap_err(), GraphError::ZeroDegree);
        let err = HomotopyGraph::from_edges(3, 2, vec![Edge { low: 1, high: 1 }]).unwrap_err();
        assert!(matches!(err, GraphError::BadEdge { .. }));
    }

    #[test]
    fn directed_edge_reversal_and_endpoints() {
        let g = k3();
        for dir in g.directed_edges() {
            assert_eq!(dir.reverse().reverse(), dir);
            assert_eq!(DirectedEdge::from_id(dir.id()), dir);
            assert_eq!(dir.tail(&g), dir.reverse().head(&g));
            assert_ne!(dir.tail(&g), dir.head(&g));
        }
    }

    #[test]
    fn fresh_seeded_state_is_valid() {
        let g = k3();
        assert!(validate_state(&SolverState::seeded(&g, 0, 0), &g).is_empty());
    }

    #[test]
    fn duplicate_left_index_is_one_violation() {
        let g = HomotopyGraph::complete(3, 5, 2).unwrap();
        let mut s = SolverState::seeded(&g, 0, 1);
        s.known[1].extend([3, 4]);
        s.correspondences[0].insert((1, 3));
        s.correspondences[0].insert((1, 4));
        let v = validate_state(&s, &g);
        assert_eq!(
            v,
            vec![Violation::NotPartialBijection { edge: 0, index: 1, low_side: true }]
        );
        assert!(v[0].to_string().contains("not a partial bijection"));
    }

    #[test]
    fn failure_without_known_start_is_one_violation() {
        let g = k3();
        let mut s = SolverState::seeded(&g, 0, 0);
        s.failures[DirectedEdge::forward(0).id()].insert(2);
        let v = validate_state(&s, &g);
        assert_eq!(v, vec![Violation::FailureWithoutKnownStart { directed: 0, start: 2 }]);
        assert!(v[0].to_string().contains("failure without known start"));
    }

    #[test]
    fn in_flight_violations() {
        let g = k3();
        let mut s = SolverState::seeded(&g, 0, 0);
        let t = Task { start: 0, edge: DirectedEdge::forward(0), scheduled_at: 0, duration: 3 };
        s.in_flight.push(t);
        assert!(validate_state(&s, &g).is_empty());
        s.in_flight.push(t);
        assert_eq!(validate_state(&s, &g), vec![Violation::DuplicateInFlight { directed: 0, start: 0 }]);
        s.in_flight.pop();
        s.in_flight.push(Task { start: 1, ..t });
        assert_eq!(validate_state(&s, &g), vec![Violation::InFlightUnknownStart { directed: 0, start: 1 }]);
    }

    #[test]
    fn pair_outside_known_and_capacity() {
        let g = HomotopyGraph::complete(2, 2, 1).unwrap();
        let mut s = SolverState::seeded(&g, 0, 0);
        s.correspondences[0].insert((0, 1));
        assert_eq!(validate_state(&s, &g), vec![Violation::PairOutsideKnown { edge: 0, pair: (0, 1) }]);
        s.known[1].extend([0, 1, 5]);
        let v = validate_state(&s, &g);
        assert!(v.contains(&Violation::TooManySolutions { node: 1, count: 3 }));
        assert!(v.contains(&Violation::IndexOutOfRange { node: 1, index: 5 }));
    }

    #[test]
    fn outcome_uses_inverse_for_reverse_direction() {
        let g = HomotopyGraph::complete(2, 3, 1).unwrap();
        let o = OracleData {
            graph: g,
            permutations: vec![vec![2, 0, 1]],
            success: vec![vec![true, true, false], vec![true; 3]],
            durations: vec![vec![1; 3]; 2],
            provenance: Provenance {
                seed: 0,
                alpha: None,
                duration_model: DurationModel::WorkUnits { unit: "steps".into() },
                source: Source::Harvested,
                note: None,
            },
            solutions: None,
        };
        assert_eq!(o.outcome(DirectedEdge::forward(0), 0), Some(2));
        assert_eq!(o.outcome(DirectedEdge::forward(0), 2), None);
        assert_eq!(o.outcome(DirectedEdge::forward(0).reverse(), 2), Some(0));
        assert_eq!(o.inverses(), vec![vec![1, 2, 0]]);
    }
}
