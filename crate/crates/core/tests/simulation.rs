use std::collections::BTreeSet;

use monolab_core::sim::compute_metrics;
use monolab_core::{fabricate, run, FabricationConfig, PotentialKind, SimulationConfig, StartPoint, Termination};
use proptest::prelude::*;

fn potentials() -> [PotentialKind; 4] {
    [PotentialKind::Greedy, PotentialKind::Ordinal, PotentialKind::weighted(4.0), PotentialKind::MaxKnown]
}

fn checked_config(threads: usize, potential: PotentialKind) -> SimulationConfig {
    SimulationConfig { validate: true, record_trace: true, ..SimulationConfig::new(threads, potential) }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn runs_keep_every_invariant(
        n in 2usize..5, d in 1usize..25, m in 1usize..3, alpha in 0.0f64..=1.0,
        threads in 1usize..9, which in 0usize..4, s in any::<u64>(),
    ) {
        let oracle = fabricate(&FabricationConfig::new(n, d, m, alpha, s)).unwrap();
        let config = checked_config(threads, potentials()[which]);
        let start = StartPoint::from_seed(s, &oracle.graph);
        let out = run(&oracle, &config, start).unwrap();
        let met = &out.metrics;

        let mut seen = BTreeSet::new();
        for t in &out.trace {
            prop_assert!(seen.insert((t.start, t.directed_edge)), "duplicate track");
        }
        prop_assert_eq!(met.tracks as usize, out.trace.len());
        prop_assert_eq!(met.tracks, met.successes + met.failures);

        let pairs: usize = out.state.correspondences.iter().map(BTreeSet::len).sum();
        prop_assert_eq!(pairs as u64, met.successes - met.redundant);
        let discovered: usize = out.state.known.iter().map(BTreeSet::len).sum::<usize>() - 1;
        prop_assert_eq!(discovered, out.trace.iter().filter(|t| t.new_solution).count());

        for t in &out.trace {
            let dir = monolab_core::DirectedEdge::from_id(t.directed_edge);
            prop_assert_eq!(t.found, oracle.outcome(dir, t.start));
            prop_assert_eq!(t.finished_at - t.scheduled_at, oracle.duration(dir, t.start));
        }
        if threads == 1 {
            let total: u64 = out.trace.iter().map(|t| t.finished_at - t.scheduled_at).sum();
            prop_assert_eq!(met.wall_time, total);
        }
        if let Termination::Saturated { node } = met.status {
            let all: BTreeSet<u32> = (0..d as u32).collect();
            prop_assert_eq!(&out.state.known[node], &all);
        }
    }
}

#[test]
fn identical_inputs_give_identical_runs() {
    let oracle = fabricate(&FabricationConfig::new(5, 80, 2, 0.8, 123)).unwrap();
    for potential in potentials() {
        let config = SimulationConfig { record_trace: true, ..SimulationConfig::new(6, potential) };
        let start = StartPoint::from_seed(9, &oracle.graph);
        let a = run(&oracle, &config, start).unwrap();
        let b = run(&oracle, &config, start).unwrap();
        assert_eq!(a.metrics, b.metrics);
        assert_eq!(a.state, b.state);
        assert_eq!(a.trace, b.trace);
    }
}

#[test]
fn concurrent_runs_do_not_interfere() {
    let oracle = fabricate(&FabricationConfig::new(4, 60, 1, 1.0, 5)).unwrap();
    let config = SimulationConfig::new(3, PotentialKind::Greedy);
    let serial: Vec<_> =
        (0..8u64).map(|s| run(&oracle, &config, StartPoint::from_seed(s, &oracle.graph)).unwrap().metrics).collect();
    let parallel: Vec<_> = std::thread::scope(|scope| {
        let handles: Vec<_> = (0..8u64)
            .map(|s| {
                let (oracle, config) = (&oracle, &config);
                scope.spawn(move || run(oracle, config, StartPoint::from_seed(s, &oracle.graph)).unwrap().metrics)
            })
            .collect();
        handles.into_iter().map(|h| h.join().unwrap()).collect()
    });
    assert_eq!(serial, parallel);
}

#[test]
fn single_thread_efficiency_is_exactly_one_hundred() {
    let oracle = fabricate(&FabricationConfig::new(5, 200, 1, 1.0, 1)).unwrap();
    let config = SimulationConfig::new(1, PotentialKind::Greedy);
    let met = run(&oracle, &config, StartPoint::new(0, 0)).unwrap().metrics;
    let p = compute_metrics(&met, met.wall_time).unwrap();
    assert_eq!(p.efficiency, 100.0);
    assert_eq!(p.idle_fraction, 0.0);
}

#[test]
fn exhausted_runs_have_tried_everything() {
    let mut exhausted = 0;
    for s in 0..40 {
        let oracle = fabricate(&FabricationConfig::new(3, 30, 2, 0.35, s)).unwrap();
        let config = SimulationConfig::new(4, PotentialKind::Greedy);
        let out = run(&oracle, &config, StartPoint::from_seed(s, &oracle.graph)).unwrap();
        if out.metrics.status != Termination::Exhausted {
            continue;
        }
        exhausted += 1;
        assert!(out.state.in_flight.is_empty());
        for dir in oracle.graph.directed_edges() {
            for &x in &out.state.known[dir.tail(&oracle.graph)] {
                assert!(out.state.tail_covered(dir, x) || out.state.failures[dir.id()].contains(&x));
            }
        }
    }
    assert!(exhausted > 0);
}

#[test]
fn hopeless_runs_exhaust() {
    let oracle = fabricate(&FabricationConfig::new(3, 30, 1, 0.0, 2)).unwrap();
    let met = run(&oracle, &SimulationConfig::new(2, PotentialKind::Greedy), StartPoint::new(1, 4)).unwrap().metrics;
    assert_eq!(met.status, Termination::Exhausted);
    assert_eq!(met.successes, 0);
    assert_eq!(met.tracks, 2);
}
