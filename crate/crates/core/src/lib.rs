//! Sparse optimal control with intermediate-point constraints.
//!
//! Extremals are computed by shooting on the maximum-principle conditions
//! and solving the resulting root problem with a stochastic-approximation
//! phase followed by Newton refinement.

pub mod benchmarks;
pub mod certificate;
pub mod integrator;
pub mod pmp;
pub mod problem;
pub mod scaling;
pub mod shooting;
pub mod solver;

pub type Vector = nalgebra::DVector<f64>;
pub type Matrix = nalgebra::DMatrix<f64>;
