//! Accelerated Q-learning: synchronous tabular learners on finite MDPs,
//! FrozenLake environments, finite-time error bounds and parametric AQL for
//! linear-quadratic regulators.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bounds;
pub mod error;
pub mod frozenlake;
pub mod harness;
pub mod learners;
pub mod lqr;
pub mod mdp;

pub use error::{Error, Result};
pub use learners::{Algorithm, LossTrajectory, Sampling, ScheduleParams, StepSize};
pub use mdp::{FiniteMdp, MdpBuilder, Policy, QTable, SampleSet};
