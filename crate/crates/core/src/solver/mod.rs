//! Nonlinear and linear solvers for the discrete state equations.

pub mod linear;
pub mod newton;

pub use linear::{
    conjugate_gradient, linear_solve, DirectLu, Ilu0, LinearConfig, LinearSolution, LinearSolver, Preconditioner,
};
pub use newton::{newton_solve, ramping_solve, solve_state, NewtonConfig, NewtonReport};
