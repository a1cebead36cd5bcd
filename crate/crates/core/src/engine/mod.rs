//! Deterministic discrete-event kernel and the queueing stations every
//! topology is assembled from.

mod dist;
mod queue;
mod rng;
pub mod sim;
mod station;
mod time;
pub mod trace;

pub use dist::ServiceDist;
pub use queue::{run_until, EventKind, Model, Scheduled, Scheduler};
pub use rng::RngStream;
pub use sim::{RunOutput, SimInputs, Simulation};
pub use station::{
    Admission, BalancerKind, Completion, Contention, Job, Started, Station, StationSnapshot, StationSpec,
};
pub use time::SimTime;
pub use trace::{FailureReason, HopRecord, Outcome, RequestRecord, RequestType, RunTrace};
