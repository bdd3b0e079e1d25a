//! Deterministic discrete-event simulator and benchmark harness for
//! GitOps reconciler behavior and intent-pipeline latency.
//!
//! The crate models a Git single source of truth, a Kubernetes-like
//! cluster with a pod-capacity ceiling, the behavior profiles of three
//! reconciliation operators and a Configuration-as-Data hydration
//! pipeline. A four-phase experiment loop drives them over a scale grid,
//! emits per-iteration KPI records and post-processes them into summary
//! statistics with IQR outlier filtering.
//!
//! Everything is reproducible: one master seed derives an independent
//! named random stream per `(scenario, profile, k, repetition, metric)`,
//! and iterations run on isolated single-timeline simulation instances
//! that merge deterministically.

pub mod cluster;
pub mod error;
pub mod git;
pub mod harness;
pub mod nephio;
pub mod preset;
pub mod reconcilers;
pub mod sim;
pub mod stats;

pub use error::{Error, Result};
pub use harness::{
    aggregate, run_scenario, AggregatedKpi, ExperimentParams, KpiRecord, RunConfig, RunOutput,
    Scenario,
};
pub use preset::Preset;
pub use reconcilers::ProfileId;
pub use sim::{Distribution, RandomSource, Simulator};
