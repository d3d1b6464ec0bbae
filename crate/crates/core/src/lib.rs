//! Functional renormalization group flows for a Josephson junction coupled to
//! an Ohmic transmission line.
//!
//! The crate integrates local-potential-approximation flows for two junction
//! potentials:
//!
//! * a symmetric double well ([`doublewell`]), whose flow decides between a
//!   localized and a delocalized ground state, and
//! * the Josephson cosine ([`cosine`]), whose flow decides between a
//!   superconducting and an insulating ground state.
//!
//! [`scan`] locates phase boundaries by bisection and extracts the
//! susceptibility exponent; [`action`] evaluates the quadratic Matsubara
//! kernel of the dissipative action.
//!
//! All numerical code is generic over [`Real`]; the aliases below fix it to
//! `f64`.

pub mod action;
pub mod cosine;
pub mod doublewell;
pub mod flowcore;
pub mod output;
pub mod phase;
pub mod scalar;
pub mod scan;

pub use phase::{Phase, PhaseLabel};
pub use scalar::Real;

pub type FlowTraceF64 = flowcore::FlowTrace<f64>;
pub type FlowOptionsF64 = flowcore::FlowOptions<f64>;
pub type EnvironmentSpecF64 = action::EnvironmentSpec<f64>;
pub type DoubleWellStateF64 = doublewell::DoubleWellState<f64>;
pub type DoubleWellParamsF64 = doublewell::DoubleWellParams<f64>;
pub type CosinePotentialF64 = cosine::CosinePotential<f64>;
pub type CosineStateF64 = cosine::CosineState<f64>;
pub type CosineParamsF64 = cosine::CosineParams<f64>;
