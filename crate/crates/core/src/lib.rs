//! Discrete-event simulation of a travel-reservation platform deployed either
//! as a monolith or as independently scaled microservices, with a
//! forecasting/segmentation pipeline that drives predictive autoscaling and a
//! KPI layer that turns run traces into reports.
//!
//! Module map:
//!
//! - [`engine`]: event kernel, RNG streams, queueing stations, run traces.
//! - [`workload`]: arrival profiles, session expansion, behavior traces.
//! - [`topology`]: monolith and microservices service graphs and resilience policies.
//! - [`analytics`]: preprocessing, forecasting, k-means segmentation, spike detection.
//! - [`autoscale`]: reactive and predictive instance controllers.
//! - [`metrics`]: KPI formulas and per-run report assembly.
//! - [`runner`]: scenario configs, replications, comparisons, sweeps, calibration, validation.

pub mod analytics;
pub mod autoscale;
pub mod engine;
pub mod error;
pub mod metrics;
pub mod runner;
pub mod topology;
pub mod workload;

pub use error::{Error, Result};
