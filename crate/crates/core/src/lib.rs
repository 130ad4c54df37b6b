//! Weighted energy balancing in populations of peer-to-peer wireless
//! chargers.
//!
//! Agents carry energy and a fixed importance weight. A scheduler picks one
//! pair per step; the pair runs an interaction protocol and may move energy,
//! losing a fixed fraction `beta` of whatever is sent. Balance is measured
//! by the total variation distance between the energy distribution and the
//! weight distribution.
//!
//! * [`model`]: population state, loss law, single transfers
//! * [`protocol`]: the interaction protocols
//! * [`scheduler`]: probabilistic and scripted pair schedules, seeded streams
//! * [`metrics`]: distributions, TVD, deviation vectors
//! * [`engine`]: simulation runs and trajectories
//! * [`oracle`]: exact one-step expectations and bound checks
//! * [`experiments`]: replicated experiment grids, aggregation, CSV output

// `!(x > 0.0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod engine;
pub mod error;
pub mod experiments;
pub mod metrics;
pub mod model;
pub mod oracle;
pub mod par;
pub mod protocol;
pub mod scheduler;

pub use error::{Error, Result};
pub use model::{AgentState, Beta, Population, TransferRecord};
pub use protocol::{Protocol, ProtocolKind, ProtocolOutcome};
