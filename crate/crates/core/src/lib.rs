//! Hamilton-Jacobi safety and performance value functions on Cartesian grids, the
//! state-dependent safe-control sets that link them, closed-loop synthesis, baselines,
//! brute-force dynamic-programming oracles and a rollout benchmark harness.

pub mod baselines;
pub mod config;
pub mod controller;
pub mod convex;
pub mod error;
pub mod experiment;
pub mod field_io;
pub mod grid;
pub mod hamiltonian;
pub mod level_set;
pub mod oracle;
pub mod performance;
pub mod rollout;
pub mod safe_controls;
pub mod safety;
pub mod scheme;
pub mod system;

pub use baselines::{FilteredPolicy, MpcParams, MpcPolicy, MppiParams, MppiPolicy};
pub use controller::{synthesize, ActiveConstraint, ControlDecision, SynthesisPolicy};
pub use config::ExperimentConfig;
pub use error::{Error, Result};
pub use experiment::{Benchmark, BenchmarkReport, Fields, Method, MethodOutcome};
pub use grid::{GridSpec, Probe, ValueField};
pub use hamiltonian::{hamiltonian_max, hamiltonian_min_constrained, HamiltonianResult};
pub use performance::{solve_performance, solve_performance_with_gamma, PerformanceSolution};
pub use rollout::{compare, rollout, sample_initial_states, MethodRun, Policy, RolloutMetrics, Trajectory};
pub use safe_controls::{SafeControlSet, SafeKind};
pub use safety::solve_safety;
pub use scheme::{Dissipation, SolverSettings};
pub use system::{BenchmarkConfig, ControlSet, Obstacle, ProblemSpec, SystemModel};
