#![allow(dead_code)]

use monolab_core::model::Task;
use monolab_core::{validate_state, DirectedEdge, HomotopyGraph, SolverState};
use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng;

/// All permutations of `0..d`.
pub fn permutations(d: usize) -> Vec<Vec<u32>> {
    fn go(prefix: &mut Vec<u32>, used: &mut [bool], out: &mut Vec<Vec<u32>>) {
        if prefix.len() == used.len() {
            out.push(prefix.clone());
            return;
        }
        for i in 0..used.len() {
            if !used[i] {
                used[i] = true;
                prefix.push(i as u32);
                go(prefix, used, out);
                prefix.pop();
                used[i] = false;
            }
        }
    }
    let mut out = Vec::new();
    go(&mut Vec::new(), &mut vec![false; d], &mut out);
    out
}

/// One edge of a two-node state. Index 0 of the arrays is the direction
/// from node 0 to node 1.
#[derive(Clone, Debug, Default)]
pub struct EdgeView {
    pub pairs: Vec<(u32, u32)>,
    pub failed: [Vec<u32>; 2],
    pub running: [Vec<u32>; 2],
}

#[derive(Clone, Debug)]
pub struct TwoNodeState {
    pub d: usize,
    pub known: [Vec<u32>; 2],
    pub edges: Vec<EdgeView>,
}

impl TwoNodeState {
    pub fn graph(&self) -> HomotopyGraph {
        HomotopyGraph::complete(2, self.d, self.edges.len()).unwrap()
    }

    pub fn running_count(&self) -> usize {
        self.edges.iter().map(|e| e.running[0].len() + e.running[1].len()).sum()
    }

    pub fn solver_state(&self) -> SolverState {
        let graph = self.graph();
        let mut s = SolverState::empty(&graph);
        for v in 0..2 {
            s.known[v] = self.known[v].iter().copied().collect();
        }
        for (e, view) in self.edges.iter().enumerate() {
            s.correspondences[e] = view.pairs.iter().copied().collect();
            for dir in 0..2 {
                let de = DirectedEdge { edge: e as u32, reversed: dir == 1 };
                s.failures[de.id()] = view.failed[dir].iter().copied().collect();
                for &start in &view.running[dir] {
                    s.in_flight.push(Task { start, edge: de, scheduled_at: 0, duration: 1 });
                }
            }
        }
        assert!(validate_state(&s, &graph).is_empty(), "{:?}", validate_state(&s, &graph));
        s
    }

    /// Expected `|Q_0|, |Q_1|` once every running task has finished, by
    /// averaging over all correspondences that extend the known pairs and
    /// all success patterns of the running tasks.
    pub fn exact_expectation(&self, alpha: f64) -> [f64; 2] {
        let perms = permutations(self.d);
        let per_edge: Vec<Vec<&Vec<u32>>> = self
            .edges
            .iter()
            .map(|e| perms.iter().filter(|p| e.pairs.iter().all(|&(a, b)| p[a as usize] == b)).collect())
            .collect();
        let tasks: Vec<(usize, usize, u32)> = self
            .edges
            .iter()
            .enumerate()
            .flat_map(|(e, view)| {
                (0..2).flat_map(move |dir| view.running[dir].iter().map(move |&s| (e, dir, s)))
            })
            .collect();

        let mut total = [0.0; 2];
        let mut weight_sum = 0.0;
        let mut choice = vec![0usize; self.edges.len()];
        loop {
            let sigmas: Vec<&Vec<u32>> = choice.iter().enumerate().map(|(e, &i)| per_edge[e][i]).collect();
            for pattern in 0u32..(1 << tasks.len()) {
                let mut weight = 1.0;
                let mut q = [mask(&self.known[0]), mask(&self.known[1])];
                for (i, &(e, dir, s)) in tasks.iter().enumerate() {
                    if pattern >> i & 1 == 1 {
                        weight *= alpha;
                        let sigma = sigmas[e];
                        if dir == 0 {
                            q[1] |= 1 << sigma[s as usize];
                        } else {
                            let pre = sigma.iter().position(|&b| b == s).unwrap();
                            q[0] |= 1 << pre;
                        }
                    } else {
                        weight *= 1.0 - alpha;
                    }
                }
                if weight == 0.0 {
                    continue;
                }
                total[0] += weight * q[0].count_ones() as f64;
                total[1] += weight * q[1].count_ones() as f64;
                weight_sum += weight;
            }
            // Odometer over the per-edge permutation choices.
            let mut k = 0;
            loop {
                if k == choice.len() {
                    return [total[0] / weight_sum, total[1] / weight_sum];
                }
                choice[k] += 1;
                if choice[k] < per_edge[k].len() {
                    break;
                }
                choice[k] = 0;
                k += 1;
            }
        }
    }
}

fn mask(items: &[u32]) -> u32 {
    items.iter().fold(0, |m, &x| m | 1 << x)
}

fn subsets(items: &[u32]) -> Vec<Vec<u32>> {
    (0u32..(1 << items.len()))
        .map(|mask| items.iter().enumerate().filter(|(i, _)| mask >> i & 1 == 1).map(|(_, &x)| x).collect())
        .collect()
}

/// Partial matchings between `left` and `right`.
fn matchings(left: &[u32], right: &[u32]) -> Vec<Vec<(u32, u32)>> {
    match left.split_first() {
        None => vec![vec![]],
        Some((&a, rest)) => {
            let mut out = matchings(rest, right);
            for &b in right {
                let others: Vec<u32> = right.iter().copied().filter(|&x| x != b).collect();
                for mut m in matchings(rest, &others) {
                    m.insert(0, (a, b));
                    out.push(m);
                }
            }
            out
        }
    }
}

/// Every way to mark each uncovered start as idle, failed or running.
fn start_labels(uncovered: &[u32], max_running: usize) -> Vec<(Vec<u32>, Vec<u32>)> {
    let mut out = Vec::new();
    let n = uncovered.len();
    for code in 0..3usize.pow(n as u32) {
        let (mut failed, mut running) = (Vec::new(), Vec::new());
        let mut c = code;
        for &s in uncovered {
            match c % 3 {
                1 => failed.push(s),
                2 => running.push(s),
                _ => {}
            }
            c /= 3;
        }
        if running.len() <= max_running {
            out.push((failed, running));
        }
    }
    out
}

/// Two-node states with `m` parallel edges and at most `max_running`
/// running tasks. With `canonical`, known sets are prefixes and the first
/// edge's pairs are `(i, i)`: one representative per relabelling class.
pub fn two_node_states(d: usize, m: usize, max_running: usize, canonical: bool) -> Vec<TwoNodeState> {
    let all: Vec<u32> = (0..d as u32).collect();
    let known_sets: Vec<Vec<u32>> =
        if canonical { (0..=d as u32).map(|q| (0..q).collect()).collect() } else { subsets(&all) };
    let mut out = Vec::new();
    for q0 in &known_sets {
        for q1 in &known_sets {
            let known = [q0.clone(), q1.clone()];
            let mut partial = vec![Vec::new()];
            for e in 0..m {
                let pairings: Vec<Vec<(u32, u32)>> = if canonical && e == 0 {
                    (0..=q0.len().min(q1.len()) as u32).map(|c| (0..c).map(|i| (i, i)).collect()).collect()
                } else {
                    matchings(q0, q1)
                };
                let mut next = Vec::new();
                for edges in &partial {
                    let used: usize = edges.iter().map(|v: &EdgeView| v.running[0].len() + v.running[1].len()).sum();
                    for view in edge_views(&known, &pairings, max_running - used) {
                        let mut grown = edges.clone();
                        grown.push(view);
                        next.push(grown);
                    }
                }
                partial = next;
            }
            out.extend(partial.into_iter().map(|edges| TwoNodeState { d, known: known.clone(), edges }));
        }
    }
    out
}

fn edge_views(known: &[Vec<u32>; 2], pairings: &[Vec<(u32, u32)>], max_running: usize) -> Vec<EdgeView> {
    let mut out = Vec::new();
    for pairs in pairings {
        let unc0: Vec<u32> = known[0].iter().copied().filter(|s| !pairs.iter().any(|p| p.0 == *s)).collect();
        let unc1: Vec<u32> = known[1].iter().copied().filter(|s| !pairs.iter().any(|p| p.1 == *s)).collect();
        for (f0, r0) in start_labels(&unc0, max_running) {
            for (f1, r1) in start_labels(&unc1, max_running - r0.len()) {
                out.push(EdgeView { pairs: pairs.clone(), failed: [f0.clone(), f1], running: [r0.clone(), r1] });
            }
        }
    }
    out
}

/// Random valid state on `graph` with at most `max_running` running tasks.
/// Known pairs are drawn from hidden random permutations.
pub fn random_state<R: Rng>(rng: &mut R, graph: &HomotopyGraph, max_running: usize) -> SolverState {
    let d = graph.degree();
    let mut s = SolverState::empty(graph);
    for v in 0..graph.node_count() {
        let q = rng.random_range(0..=d);
        let mut all: Vec<u32> = (0..d as u32).collect();
        all.shuffle(rng);
        s.known[v] = all[..q].iter().copied().collect();
    }
    for (e, edge) in graph.edges().iter().enumerate() {
        let mut sigma: Vec<u32> = (0..d as u32).collect();
        sigma.shuffle(rng);
        let keep = rng.random::<f64>();
        for (a, &b) in sigma.iter().enumerate() {
            let a = a as u32;
            if s.known[edge.low as usize].contains(&a) && s.known[edge.high as usize].contains(&b) && rng.random::<f64>() < keep {
                s.correspondences[e].insert((a, b));
            }
        }
    }
    let dirs: Vec<DirectedEdge> = graph.directed_edges().collect();
    for &dir in &dirs {
        let tail = dir.tail(graph);
        let open: Vec<u32> = s.known[tail].iter().copied().filter(|&x| !s.tail_covered(dir, x)).collect();
        for x in open {
            if rng.random::<f64>() < 0.2 {
                s.failures[dir.id()].insert(x);
            }
        }
    }
    let target = rng.random_range(0..=max_running);
    for _ in 0..4 * max_running {
        if s.in_flight.len() >= target {
            break;
        }
        let dir = *dirs.choose(rng).unwrap();
        let tail = dir.tail(graph);
        let open: Vec<u32> = s.known[tail]
            .iter()
            .copied()
            .filter(|&x| {
                !s.tail_covered(dir, x)
                    && !s.failures[dir.id()].contains(&x)
                    && !s.in_flight.iter().any(|t| t.edge == dir && t.start == x)
            })
            .collect();
        if let Some(&start) = open.choose(rng) {
            s.in_flight.push(Task { start, edge: dir, scheduled_at: 0, duration: 1 });
        }
    }
    assert!(validate_state(&s, graph).is_empty());
    s
}

/// Closed form of the expected known count: every unknown solution at `v`
/// stays unknown unless some running task on an incoming edge reaches it.
pub fn closed_form(state: &SolverState, graph: &HomotopyGraph, alpha: f64, v: usize) -> f64 {
    let d = graph.degree() as f64;
    let q = state.known[v].len() as f64;
    let mut miss = 1.0;
    for &dir in graph.in_edges(v) {
        let k = state
            .in_flight
            .iter()
            .filter(|t| t.edge == dir && !state.tail_covered(dir, t.start))
            .count() as f64;
        let c = state.correspondences[dir.edge as usize].len() as f64;
        if k > 0.0 {
            miss *= 1.0 - alpha * k / (d - c);
        }
    }
    d - (d - q) * miss
}
