//! Independent oracles and the reduced one-dimensional learning dynamics.

mod quadrature;
mod reduced;

pub use quadrature::{quadrature_expectation, quadrature_log_partition, GridSpec};
pub use reduced::{
    classify_trajectory, empirical_1d_dynamics, jarzynski_fixed_point, reduced_ode_trajectory,
    reduced_rhs, solve_fixed_point, EmpiricalConfig, EmpiricalOutput, HopEvent, Outcome,
    ReducedState, Regime,
};
