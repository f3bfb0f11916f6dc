//! Parametric AQL on discrete-time linear-quadratic regulators.

mod dare;
mod experiment;
mod paql;
mod quadratic;
mod replay;
mod system;

pub use dare::{
    closed_loop, dare_residual, dare_solve, exact_q_matrix, lqr_oracle, optimal_gain, riccati_map, spectral_norm,
    spectral_radius, DareSolution, LqrOracle,
};
pub use experiment::{run_lqr_experiment, write_gain_csv, GainErrorTrajectory, LqrRunSettings};
pub use paql::{direction, Hyper, PaqlState, StepRule, Variant, DIVERGENCE_NORM, LSTSQ_RCOND};
pub use quadratic::{features, param_dim, QuadraticQ};
pub use replay::{ReplayBuffer, Transition, PRIORITY_EPS};
pub use system::{build_mass_damper, LinearSystem, SystemJson, DAMPING, SPRING};
