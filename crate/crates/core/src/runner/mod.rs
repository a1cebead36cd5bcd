//! Scenario layer: configuration, replications, comparisons, sweeps,
//! calibration, validation and report files.

mod calibrate;
mod config;
mod experiment;
mod forecast_eval;
mod output;
mod validate;

pub use calibrate::{calibrate, Achieved, CalibrationResult, CalibrationSpec, Target, Tunable};
pub use config::{CapacityConfig, ScenarioConfig, SweepSpec, BUILTIN_SCENARIOS, DIURNAL_SPIKE_TRACE};
pub use experiment::{
    compare, load_capacity, replication_seeds, run_replications, run_scenario, scalability_between, summarize, sweep,
    sweep_csv, CapacityResult, Comparison, ComparisonRow, ExperimentResult, RunResult, ScalabilityResult, Summary,
    SweepPoint, COMPARE_KPIS,
};
pub use forecast_eval::{forecast_eval, load_series, EvalOptions, EvalReport, ModelScore};
pub use output::{report_csv, write_experiment};
pub use validate::{erlang_c, validate, Check, ValidateOptions};
