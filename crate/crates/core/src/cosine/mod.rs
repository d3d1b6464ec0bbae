//! Flow of a periodic junction potential together with the running charging
//! term `τ p̄²`.
//!
//! The potential is kept on an equally spaced grid over `[0, π]` and handled
//! through its cosine series, which makes evenness and periodicity structural.

pub mod flow;
pub mod potential;

use serde::Serialize;
use thiserror::Error;

use crate::flowcore::QuadError;
use crate::scalar::Real;

pub use flow::{
    classify_cosine, gamma_nonrenormalization_check, linearized_slope, rhs_cosine, run_cosine, tau_loop,
    trajectory_rows, CosineModel, CosineRun, DEFAULT_EPS_FLOOR, DEFAULT_GROWTH_CEILING, DEFAULT_L_MAX_COSINE,
};
pub use potential::{cosine_coeffs, grid_derivatives, CosineBasis, CosinePotential, DEFAULT_GRID_N};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CosineError {
    #[error("grid needs at least 3 points, got {0}")]
    GridTooSmall(usize),
    #[error("harmonic {n_max} is not representable on a {grid_n}-point grid")]
    AboveNyquist { n_max: usize, grid_n: usize },
    #[error("convexity violated at grid point {index} (phi = {phi}): V'' + 1 = {curvature}")]
    Convexity { index: usize, phi: f64, curvature: f64 },
    #[error("tau must be positive, got {0}")]
    NonPositiveTau(f64),
    #[error("parameter `{name}` invalid: {value}")]
    InvalidParameter { name: &'static str, value: f64 },
    #[error(transparent)]
    Quadrature(#[from] QuadError),
    #[error("flow trace is empty")]
    EmptyTrace,
}

/// Running couplings at one scale.
#[derive(Debug, Clone, PartialEq)]
pub struct CosineState<T> {
    pub l: T,
    pub tau: T,
    pub potential: CosinePotential<T>,
    /// Ohmic coupling; equal to `γ` because the minima are `2π` apart.
    pub alpha: T,
}

/// Physical inputs of a cosine flow.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CosineParams<T> {
    pub alpha: T,
    pub e_j_over_lambda0: T,
    pub e_c_over_lambda0: T,
}

impl<T: Real> CosineParams<T> {
    pub fn new(alpha: T, e_j_over_lambda0: T, e_c_over_lambda0: T) -> Result<Self, CosineError> {
        for (name, value) in [
            ("alpha", alpha),
            ("e_j_over_lambda0", e_j_over_lambda0),
            ("e_c_over_lambda0", e_c_over_lambda0),
        ] {
            if !(value > T::zero()) || !value.is_finite() {
                return Err(CosineError::InvalidParameter {
                    name,
                    value: value.as_f64(),
                });
            }
        }
        Ok(Self {
            alpha,
            e_j_over_lambda0,
            e_c_over_lambda0,
        })
    }

    /// `τ = Λ₀/(2E_C)` and `V̄ = -(E_J/Λ₀) cos φ` on an `grid_n`-point grid.
    pub fn initial_state(&self, grid_n: usize) -> Result<CosineState<T>, CosineError> {
        Ok(CosineState {
            l: T::zero(),
            tau: T::one() / (T::two() * self.e_c_over_lambda0),
            potential: CosinePotential::josephson(grid_n, self.e_j_over_lambda0)?,
            alpha: self.alpha,
        })
    }
}
