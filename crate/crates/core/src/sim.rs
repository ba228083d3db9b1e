//! Discrete-event replay of the parallel potential-driven solver.
//!
//! `k` virtual threads pull tasks from a shared state. Whenever threads are
//! free the scheduler picks, for each free thread in id order, the candidate
//! task with the largest potential; ties go to the lowest directed-edge id
//! and then the lowest start index. Outcomes and durations come from the
//! oracle, so a run is a pure function of `(oracle, config, start)`.
//!
//! Events sharing a completion time are applied together in thread order
//! before any thread picks new work. There is no communication cost and no
//! preemption: when a node saturates, tracks already running complete
//! before their threads stop, and the wall time includes them. A failed
//! `(start, edge)` is never retried; the start remains available on other
//! directed edges.

use std::cmp::Reverse;
use std::collections::{BTreeSet, BinaryHeap};

use rand::Rng;
use serde::Serialize;
use thiserror::Error;

use crate::model::{
    validate_state, DirectedEdge, HomotopyGraph, OracleData, RunMetrics, SolverState, Task, Termination,
};
use crate::potential::{self, node_order, potential_of, ExpectationLedger, PotentialError, PotentialKind};
use crate::seed;

#[derive(Clone, Debug, PartialEq)]
pub struct SimulationConfig {
    pub threads: usize,
    pub potential: PotentialKind,
    /// Cap on scheduled tracks; `None` means `100 * N * d`.
    pub budget: Option<u64>,
    /// Success rate assumed by the potentials. `None` takes the oracle's
    /// recorded alpha, or 1 when there is none.
    pub model_alpha: Option<f64>,
    /// Check state invariants, ledger consistency and the reference task
    /// selection after every event. Slow; meant for tests.
    pub validate: bool,
    /// Keep a per-track trace in the outcome.
    pub record_trace: bool,
}

impl SimulationConfig {
    pub fn new(threads: usize, potential: PotentialKind) -> Self {
        SimulationConfig {
            threads,
            potential,
            budget: None,
            model_alpha: None,
            validate: false,
            record_trace: false,
        }
    }

    pub fn budget_for(&self, graph: &HomotopyGraph) -> u64 {
        self.budget
            .unwrap_or(100 * graph.node_count() as u64 * graph.degree() as u64)
    }
}

/// The single solution the run starts from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct StartPoint {
    pub node: usize,
    pub solution: u32,
}

impl StartPoint {
    pub fn new(node: usize, solution: u32) -> Self {
        StartPoint { node, solution }
    }

    /// Uniformly random node and solution drawn from `seed`.
    pub fn from_seed(seed: u64, graph: &HomotopyGraph) -> Self {
        let mut rng = seed::rng_for(seed, "start", &[]);
        let node = rng.random_range(0..graph.node_count());
        let solution = rng.random_range(0..graph.degree() as u32);
        StartPoint { node, solution }
    }
}

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid start point: node {node}, solution {solution}")]
    InvalidStart { node: usize, solution: u32 },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("oracle does not match its graph: {0}")]
    Oracle(#[from] crate::model::DatafileError),
    #[error(transparent)]
    Potential(#[from] PotentialError),
    #[error("invariant broken at t={time}: {detail}")]
    Invariant { time: u64, detail: String },
}

/// One completed track.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct TraceEntry {
    pub thread: usize,
    pub start: u32,
    pub directed_edge: usize,
    pub scheduled_at: u64,
    pub finished_at: u64,
    /// Head index reached, or `None` on failure.
    pub found: Option<u32>,
    /// Whether `found` was new at the head.
    pub new_solution: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunOutcome {
    pub metrics: RunMetrics,
    pub state: SolverState,
    pub trace: Vec<TraceEntry>,
}

/// A schedulable `(start, directed edge)` pair.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Candidate {
    pub start: u32,
    pub edge: DirectedEdge,
}

/// Picks the task maximising `kind` by scanning `state` directly.
///
/// A start `s` is available on `dir` when it is known at the tail, has no
/// known partner along the edge, has not failed on `dir` and is not already
/// running on `dir`.
pub fn select_task(
    state: &SolverState,
    ledger: &ExpectationLedger,
    kind: &PotentialKind,
    graph: &HomotopyGraph,
    rank: &[usize],
) -> Result<Option<Candidate>, PotentialError> {
    let mut best: Option<(f64, Candidate)> = None;
    for dir in graph.directed_edges() {
        let tail = dir.tail(graph);
        let available = state.known[tail].iter().copied().find(|&s| {
            !state.tail_covered(dir, s)
                && !state.failures[dir.id()].contains(&s)
                && !state.in_flight.iter().any(|t| t.edge == dir && t.start == s)
        });
        if let Some(start) = available {
            let p = potential_of(kind, graph, ledger, rank, dir)?;
            if best.is_none_or(|(b, _)| p > b) {
                best = Some((p, Candidate { start, edge: dir }));
            }
        }
    }
    Ok(best.map(|(_, c)| c))
}

/// Speedup, efficiency and idle share of a parallel run.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ParallelMetrics {
    pub threads: usize,
    pub speedup: f64,
    /// Percent.
    pub efficiency: f64,
    /// Fraction in [0, 1].
    pub idle_fraction: f64,
}

/// Speedup `T_seq / T_par`, efficiency `100 * S / p` and the idle share of
/// the parallel run. Both runs must share oracle, potential and start.
pub fn compute_metrics(parallel: &RunMetrics, sequential_time: u64) -> Result<ParallelMetrics, SimError> {
    if parallel.wall_time == 0 {
        return Err(SimError::Config("parallel wall time is zero".into()));
    }
    let p = parallel.busy.len();
    let speedup = sequential_time as f64 / parallel.wall_time as f64;
    Ok(ParallelMetrics {
        threads: p,
        speedup,
        efficiency: 100.0 * speedup / p as f64,
        idle_fraction: parallel.idle_fraction(),
    })
}

const NONE: u32 = u32::MAX;

struct Engine<'a> {
    oracle: &'a OracleData,
    graph: &'a HomotopyGraph,
    config: &'a SimulationConfig,
    rank: Vec<usize>,
    state: SolverState,
    ledger: ExpectationLedger,
    /// Available starts per directed edge.
    pools: Vec<BTreeSet<u32>>,
    /// Known partner at the head for each tail index, per directed edge.
    partner: Vec<Vec<u32>>,
    running: Vec<Vec<bool>>,
    heap: BinaryHeap<Reverse<(u64, usize)>>,
    slots: Vec<Option<Task>>,
    busy: Vec<u64>,
    metrics: Counters,
    trace: Vec<TraceEntry>,
}

#[derive(Default)]
struct Counters {
    scheduled: u64,
    successes: u64,
    failures: u64,
    redundant: u64,
    drained: u64,
}

impl<'a> Engine<'a> {
    fn new(oracle: &'a OracleData, config: &'a SimulationConfig, start: StartPoint) -> Result<Self, SimError> {
        let graph = &oracle.graph;
        let d = graph.degree();
        let alpha = config.model_alpha.or(oracle.provenance.alpha).unwrap_or(1.0);
        if !(0.0..=1.0).contains(&alpha) {
            return Err(SimError::Config(format!("model alpha {alpha} outside [0, 1]")));
        }
        let state = SolverState::seeded(graph, start.node, start.solution);
        let mut known = vec![0; graph.node_count()];
        known[start.node] = 1;
        let mut engine = Engine {
            oracle,
            graph,
            config,
            rank: node_order(graph.node_count(), start.node),
            state,
            ledger: ExpectationLedger::idle(graph, known, alpha),
            pools: vec![BTreeSet::new(); graph.directed_count()],
            partner: vec![vec![NONE; d]; graph.directed_count()],
            running: vec![vec![false; d]; graph.directed_count()],
            heap: BinaryHeap::with_capacity(config.threads),
            slots: vec![None; config.threads],
            busy: vec![0; config.threads],
            metrics: Counters::default(),
            trace: Vec::new(),
        };
        for &dir in graph.out_edges(start.node) {
            engine.pools[dir.id()].insert(start.solution);
        }
        Ok(engine)
    }

    fn select(&self) -> Result<Option<Candidate>, PotentialError> {
        let mut best: Option<(f64, Candidate)> = None;
        for (id, pool) in self.pools.iter().enumerate() {
            let Some(&start) = pool.first() else { continue };
            let dir = DirectedEdge::from_id(id);
            let p = potential_of(&self.config.potential, self.graph, &self.ledger, &self.rank, dir)?;
            if best.is_none_or(|(b, _)| p > b) {
                best = Some((p, Candidate { start, edge: dir }));
            }
        }
        Ok(best.map(|(_, c)| c))
    }

    fn submit(&mut self, thread: usize, now: u64, c: Candidate) -> Result<(), SimError> {
        let id = c.edge.id();
        let duration = self.oracle.duration(c.edge, c.start);
        let task = Task { start: c.start, edge: c.edge, scheduled_at: now, duration };
        self.pools[id].remove(&c.start);
        self.running[id][c.start as usize] = true;
        self.ledger.submit(self.graph, c.edge)?;
        self.state.in_flight.push(task);
        self.slots[thread] = Some(task);
        self.heap.push(Reverse((now + duration, thread)));
        self.metrics.scheduled += 1;
        Ok(())
    }

    /// Applies a completion; returns the head node when it saturates.
    fn complete(&mut self, thread: usize, now: u64) -> Result<Option<usize>, SimError> {
        let task = self.slots[thread].take().expect("completion for an idle thread");
        let graph = self.graph;
        let dir = task.edge;
        let rev = dir.reverse();
        let (id, rid) = (dir.id(), rev.id());
        let (tail, head) = (dir.tail(graph), dir.head(graph));
        let s = task.start;
        self.busy[thread] += task.duration;
        let pos = self
            .state
            .in_flight
            .iter()
            .position(|t| t.edge == dir && t.start == s)
            .expect("completed task is in flight");
        self.state.in_flight.remove(pos);
        self.running[id][s as usize] = false;

        let redundant = self.partner[id][s as usize] != NONE;
        if !redundant {
            self.ledger.retire(dir);
        }
        let outcome = self.oracle.outcome(dir, s);
        let mut new_solution = false;
        match outcome {
            None => {
                self.metrics.failures += 1;
                if !redundant {
                    self.state.failures[id].insert(s);
                    self.ledger.set_failures(dir, self.state.failures[id].len());
                }
            }
            Some(_) if redundant => {
                self.metrics.successes += 1;
                self.metrics.redundant += 1;
            }
            Some(b) => {
                self.metrics.successes += 1;
                let e = dir.edge as usize;
                let pair = HomotopyGraph::orient(dir, (s, b));
                self.state.correspondences[e].insert(pair);
                self.ledger.set_pairs(e, self.state.correspondences[e].len());
                self.partner[id][s as usize] = b;
                self.partner[rid][b as usize] = s;
                self.pools[rid].remove(&b);
                if self.state.failures[rid].remove(&b) {
                    self.ledger.set_failures(rev, self.state.failures[rid].len());
                }
                if self.running[rid][b as usize] {
                    self.ledger.retire(rev);
                }
                if self.state.known[head].insert(b) {
                    new_solution = true;
                    self.ledger.set_known(head, self.state.known[head].len());
                    for &out in graph.out_edges(head) {
                        let oid = out.id();
                        if self.partner[oid][b as usize] == NONE {
                            self.pools[oid].insert(b);
                        }
                    }
                }
            }
        }
        self.ledger.refresh_node(graph, head)?;
        self.ledger.refresh_node(graph, tail)?;

        if self.config.record_trace {
            self.trace.push(TraceEntry {
                thread,
                start: s,
                directed_edge: id,
                scheduled_at: task.scheduled_at,
                finished_at: now,
                found: outcome,
                new_solution,
            });
        }
        Ok((self.state.known[head].len() == graph.degree()).then_some(head))
    }

    fn check(&self, now: u64) -> Result<(), SimError> {
        let violations = validate_state(&self.state, self.graph);
        if !violations.is_empty() {
            let detail = violations.iter().map(ToString::to_string).collect::<Vec<_>>().join("; ");
            return Err(SimError::Invariant { time: now, detail });
        }
        let fresh = potential::recompute_ledger(&self.state, self.graph, self.ledger.alpha())?;
        for v in 0..self.graph.node_count() {
            let (a, b) = (fresh.expected(v), self.ledger.expected(v));
            if (a - b).abs() > 1e-9 || b > self.graph.degree() as f64 + 1e-9 || b + 1e-9 < fresh.known(v) as f64 {
                return Err(SimError::Invariant {
                    time: now,
                    detail: format!("ledger drift at node {v}: {b} vs recomputed {a}"),
                });
            }
        }
        let reference = select_task(&self.state, &self.ledger, &self.config.potential, self.graph, &self.rank)?;
        let fast = self.select()?;
        if reference != fast {
            return Err(SimError::Invariant {
                time: now,
                detail: format!("selection mismatch: {fast:?} vs reference {reference:?}"),
            });
        }
        Ok(())
    }

    fn run(mut self) -> Result<RunOutcome, SimError> {
        let graph = self.graph;
        let budget = self.config.budget_for(graph);
        let mut now = 0u64;
        let mut saturated = None;
        let status = 'outer: loop {
            if let Some(v) = (0..graph.node_count()).find(|&v| self.state.known[v].len() == graph.degree()) {
                break Termination::Saturated { node: v };
            }
            for thread in 0..self.config.threads {
                if self.slots[thread].is_some() {
                    continue;
                }
                if self.metrics.scheduled >= budget {
                    break;
                }
                if self.config.validate {
                    self.check(now)?;
                }
                match self.select()? {
                    Some(c) => self.submit(thread, now, c)?,
                    None => break,
                }
            }
            let Some(&Reverse((t, _))) = self.heap.peek() else {
                break if self.metrics.scheduled >= budget {
                    Termination::BudgetExceeded
                } else {
                    Termination::Exhausted
                };
            };
            now = t;
            while let Some(&Reverse((t, thread))) = self.heap.peek() {
                if t != now {
                    break;
                }
                self.heap.pop();
                if let Some(v) = self.complete(thread, now)? {
                    saturated = Some(v);
                }
            }
            if let Some(v) = saturated {
                // Running tracks finish before their threads see the guard.
                while let Some(Reverse((t, thread))) = self.heap.pop() {
                    now = t;
                    self.metrics.drained += 1;
                    self.complete(thread, now)?;
                }
                break 'outer Termination::Saturated { node: v };
            }
        };
        if self.config.validate {
            let violations = validate_state(&self.state, graph);
            if !violations.is_empty() {
                return Err(SimError::Invariant { time: now, detail: format!("{violations:?}") });
            }
        }

        let busy = self.busy;
        let idle = busy.iter().map(|&b| now - b).collect();
        let metrics = RunMetrics {
            wall_time: now,
            tracks: self.metrics.successes + self.metrics.failures,
            successes: self.metrics.successes,
            failures: self.metrics.failures,
            redundant: self.metrics.redundant,
            drained: self.metrics.drained,
            busy,
            idle,
            status,
            final_counts: self.state.known.iter().map(BTreeSet::len).collect(),
        };
        Ok(RunOutcome { metrics, state: self.state, trace: self.trace })
    }
}

/// Runs the solver on `oracle` from a single known solution.
pub fn run(oracle: &OracleData, config: &SimulationConfig, start: StartPoint) -> Result<RunOutcome, SimError> {
    let graph = &oracle.graph;
    if config.threads == 0 {
        return Err(SimError::Config("thread count must be at least 1".into()));
    }
    if config.budget == Some(0) {
        return Err(SimError::Config("track budget must be at least 1".into()));
    }
    config.potential.validate()?;
    if start.node >= graph.node_count() || start.solution as usize >= graph.degree() {
        return Err(SimError::InvalidStart { node: start.node, solution: start.solution });
    }
    oracle.check()?;
    Engine::new(oracle, config, start)?.run()
}
