//! Finite-element discretization of the coupled Darcy and energy equations.

pub mod assembly;
pub mod element;

pub use assembly::{
    assemble, compute_velocity, element_props, thermal_compliance, Discretization, SparseSystem, State,
};
pub use element::{
    element_jacobian, element_residual, stabilization_tau, ElementGeometry, ElementKernel, ElementProps,
    PropertyDerivatives, TauMode,
};
