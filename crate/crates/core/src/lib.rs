//! Trace-level failure-precursor monitoring and responsibility attribution
//! for agent deployments.
//!
//! The pipeline runs from raw logs to an audited report:
//! [`adapter`] maps heterogeneous logs into [`trace::StepView`]s,
//! [`event`] turns steps into soft event distributions, [`monitors`] score
//! prefixes online and extract an inspectable automaton, and [`eval`]
//! measures prefix-warning quality. [`responsibility`] allocates
//! responsibility for a harm across the deployment chain, and [`sim`]
//! generates synthetic scenarios with known ground truth.

pub mod adapter;
pub mod autodiff;
pub mod error;
pub mod eval;
pub mod event;
pub mod hash;
pub mod monitors;
pub mod responsibility;
pub mod sim;
pub mod tensor;
pub mod trace;

pub use error::{Error, ErrorCategory, Result};
pub use trace::{Outcome, Prefix, Status, StepView, Trajectory, WarningLabel};
