//! Experiment orchestration: configuration parsing, the OOD-count sweep,
//! report emission, and the staged pipeline behind the CLI.
//!
//! The central protocol is the sweep ([`ood_sweep`]): hold the
//! in-distribution test set fixed, mix in k held-out OOD samples for each
//! k in a grid, and evaluate every detector on each mixture. Because an
//! OOD-incapable classifier's correct count cannot grow with k, its
//! accuracy decays as c/(N+k) while detectors that reject unfamiliar
//! samples hold their ground — the comparison the sweep table and charts
//! make visible.
//!
//! [`run_experiment`] chains the stages end to end:
//! data generation → model training → threshold calibration → sweep →
//! report, all deterministic given the config and master seed.

pub mod config;
pub mod experiment;
pub mod report;
pub mod sweep;

pub use config::{ExperimentConfig, MethodName, OodCountSpec, Seeds};
pub use experiment::{
    run_experiment, CalibratedDetectors, TrainedModels,
};
pub use report::{compare_report, render_line_chart, ChartSeries};
pub use sweep::{
    ood_sweep, SweepConfig, SweepMean, SweepMethod, SweepPoint, SweepResult, SweepRow,
};
