use monolab_core::experiments::{
    bound_curves, bounds_sweep, fabricated_run, threshold_estimate, tracks_vs_alpha_sweep, BoundsSpec, ExperimentError,
    ThresholdSpec, TracksSpec,
};
use monolab_core::{PotentialKind, SimulationConfig};

fn alpha_star(nodes: usize, degree: usize, multiplicity: usize) -> f64 {
    let spec = ThresholdSpec { nodes, degree, multiplicity, trials: 40, ..Default::default() };
    threshold_estimate(&spec).unwrap().alpha_star
}

// Roughly two standard errors of a 40-trial bisection estimate.
const SLACK: f64 = 0.03;

#[test]
fn threshold_rises_with_degree_and_falls_with_nodes() {
    let (a, b, c, e) = (alpha_star(4, 16, 1), alpha_star(4, 64, 1), alpha_star(6, 16, 1), alpha_star(6, 64, 1));
    assert!(a <= b + SLACK && c <= e + SLACK, "degree: {a} {b} | {c} {e}");
    assert!(c <= a + SLACK && e <= b + SLACK, "nodes: {a} {c} | {b} {e}");
}

#[test]
fn threshold_falls_with_multiplicity() {
    for degree in [16, 64] {
        let (one, two) = (alpha_star(4, degree, 1), alpha_star(4, degree, 2));
        assert!(two <= one + SLACK, "d={degree}: m=1 {one}, m=2 {two}");
    }
}

#[test]
fn bisection_probes_form_a_consistent_history() {
    let spec = ThresholdSpec { trials: 30, tolerance: 0.02, ..Default::default() };
    let est = threshold_estimate(&spec).unwrap();
    assert!(est.low < est.alpha_star && est.alpha_star < est.high);
    assert!(est.high - est.low <= 0.02);
    // Trials are coupled across alphas, so success counts are monotone.
    let mut probes = est.probes.clone();
    probes.sort_by(|x, y| x.alpha.total_cmp(&y.alpha));
    assert!(probes.windows(2).all(|w| w[0].successes <= w[1].successes));
}

#[test]
fn degenerate_brackets_are_reported() {
    let trivial = ThresholdSpec { nodes: 2, degree: 1, trials: 5, ..Default::default() };
    assert!(matches!(threshold_estimate(&trivial), Err(ExperimentError::DegenerateBracket { alpha, .. }) if alpha == 0.0));
    let bad = ThresholdSpec { trials: 0, ..Default::default() };
    assert!(matches!(threshold_estimate(&bad), Err(ExperimentError::Config(_))));
}

#[test]
fn row_seeds_regenerate_their_runs() {
    let spec = TracksSpec { degree: 40, multiplicities: vec![2], alphas: vec![0.4, 0.9], trials: 4, ..Default::default() };
    let (rows, _) = tracks_vs_alpha_sweep(&spec).unwrap();
    let config = SimulationConfig::new(1, PotentialKind::Greedy);
    for r in rows {
        let (_, met) = fabricated_run(r.nodes, r.d, r.m, r.alpha, &config, r.seed).unwrap();
        assert_eq!((met.tracks, met.successes, met.failures), (r.tracks, r.successes, r.failures));
    }
}

#[test]
fn small_sandwich() {
    let spec = BoundsSpec {
        degrees: vec![4, 8],
        multiplicities: vec![1, 3],
        alphas: vec![0.05, 0.2, 0.5, 0.8, 1.0],
        trials: 200,
        ..Default::default()
    };
    for row in bounds_sweep(&spec).unwrap() {
        assert!(row.within(3.0).unwrap(), "{row:?}");
        assert!(row.lower <= row.upper);
    }
}

#[test]
fn bound_curves_are_monotone_in_alpha() {
    for (n, d, m) in [(3, 8, 2), (3, 16, 4), (5, 100, 1)] {
        let mut prev = bound_curves(n, d, m, 0.0);
        assert_eq!((prev.lower, prev.upper), (0.0, 0.0));
        for i in 1..=100 {
            let b = bound_curves(n, d, m, i as f64 / 100.0);
            assert!(b.lower >= prev.lower && b.upper >= prev.upper && b.lower <= b.upper);
            prev = b;
        }
        assert_eq!(prev.upper, 1.0);
    }
}
