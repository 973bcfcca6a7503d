//! Benchmark problems and their solvers.

pub mod config;
pub mod models;
pub mod run;
pub mod solve2d;
pub mod solve4d;

pub use config::{InitialShape, Method, ScenarioConfig, ScenarioId};

pub use run::{
    run, run_flowmap, run_solution, DiagnosticsRecord, ErrorNorm, FinalState, NullObserver, Observer, RunOutput,
    SnapshotData,
};
