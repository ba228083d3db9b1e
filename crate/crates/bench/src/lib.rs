//! Benchmark fixtures shared by the criterion targets.

use monolab_core::{fabricate, FabricationConfig, OracleData};

/// Fabricated complete-graph oracle used across benchmarks.
pub fn fixture(nodes: usize, degree: usize, multiplicity: usize, alpha: f64) -> OracleData {
    fabricate(&FabricationConfig::new(nodes, degree, multiplicity, alpha, 1)).expect("valid fixture")
}
