//! Deterministic laboratory for the monodromy solver.
//!
//! The crate is organised as a two-stage pipeline. Stage one produces an
//! [`OracleData`] datafile, either fabricated under the uniform-correspondence
//! model ([`fabricate`]) or harvested from real univariate homotopies
//! ([`harvest`]). Stage two replays the parallel potential-driven solver over
//! virtual threads against that datafile ([`sim`]), with expectation
//! bookkeeping provided by [`potential`]. The [`experiments`] module drives
//! the efficiency, threshold, track-count and weighting studies.

pub mod experiments;
pub mod fabricate;
pub mod harvest;
pub mod model;
pub mod potential;
pub mod seed;
pub mod sim;

pub use fabricate::{fabricate, FabricationConfig};
pub use model::{
    load_oracle, save_oracle, validate_state, DatafileError, DirectedEdge, Edge, HomotopyGraph,
    OracleData, RunMetrics, SolverState, Task, Termination, Violation,
};
pub use potential::{ExpectationLedger, PotentialKind, WeightNormalizer};
pub use harvest::{harvest, HarvestSettings, TrackSettings};
pub use sim::{run, SimError, SimulationConfig, StartPoint};
