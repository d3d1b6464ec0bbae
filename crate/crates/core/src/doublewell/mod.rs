//! Two-parameter flow of a symmetric double-well junction potential.
//!
//! The potential is tracked by the signed minimum position `ρ̄` and the
//! dimensionless barrier `V̂`. For `ρ̄ > 0` the minimum sits at `φ² = ρ` and the
//! junction is localized in one well; once `ρ̄` crosses zero the minimum moves
//! to the origin and the phase delocalizes.

pub mod flow;
pub mod integrals;

use serde::Serialize;
use thiserror::Error;

use crate::flowcore::QuadError;
use crate::scalar::Real;

pub use flow::{
    alpha_of, classify_double_well, rhs_double_well, run_double_well, susceptibility, trajectory_rows,
    two_level_ratio, DoubleWellRun, DEFAULT_ALPHA_SETTLE_TOL, DEFAULT_RHO_ESCAPE,
};
pub use integrals::{closed_form_of_y, curvature, i_closed, i_n, i_n_closed, loop_integrals};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DoubleWellError {
    #[error("{what} out of domain: {value}")]
    Domain { what: &'static str, value: f64 },
    #[error("rho_bar = 0 lies on the branch boundary and cannot be evaluated")]
    ZeroRho,
    #[error("loop integral order {0} not supported (expected 2 or 3)")]
    UnsupportedOrder(usize),
    #[error("I_{order} mismatch: quadrature {quadrature:e} vs closed form {closed_form:e}")]
    Inconsistent {
        order: usize,
        quadrature: f64,
        closed_form: f64,
    },
    #[error(transparent)]
    Quadrature(#[from] QuadError),
    #[error("parameter `{name}` invalid: {value}")]
    InvalidParameter { name: &'static str, value: f64 },
    #[error("flow trace is empty")]
    EmptyTrace,
}

/// Running couplings at one scale.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DoubleWellState<T> {
    pub l: T,
    pub rho_bar: T,
    pub v_hat: T,
    /// `E_C / Λ`.
    pub eps_c: T,
    pub gamma: T,
}

/// Initial conditions of a double-well flow.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DoubleWellParams<T> {
    pub gamma: T,
    pub rho_bar0: T,
    /// `1/V̂` at the UV scale.
    pub inv_v_hat0: T,
    /// `E_C / Λ₀`.
    pub eps_c0: T,
    /// UV cutoff in physical units; only enters the susceptibility.
    pub lambda0: T,
}

impl<T: Real> DoubleWellParams<T> {
    pub fn new(gamma: T, rho_bar0: T, inv_v_hat0: T, eps_c0: T) -> Result<Self, DoubleWellError> {
        let p = Self {
            gamma,
            rho_bar0,
            inv_v_hat0,
            eps_c0,
            lambda0: T::one(),
        };
        p.validate()?;
        Ok(p)
    }

    pub fn with_lambda0(mut self, lambda0: T) -> Self {
        self.lambda0 = lambda0;
        self
    }

    pub fn validate(&self) -> Result<(), DoubleWellError> {
        let positive = [
            ("gamma", self.gamma),
            ("inv_v_hat0", self.inv_v_hat0),
            ("eps_c0", self.eps_c0),
            ("lambda0", self.lambda0),
        ];
        for (name, value) in positive {
            if !(value > T::zero()) || !value.is_finite() {
                return Err(DoubleWellError::InvalidParameter {
                    name,
                    value: value.as_f64(),
                });
            }
        }
        if self.rho_bar0 == T::zero() || !self.rho_bar0.is_finite() {
            return Err(DoubleWellError::InvalidParameter {
                name: "rho_bar0",
                value: self.rho_bar0.as_f64(),
            });
        }
        Ok(())
    }

    pub fn initial_state(&self) -> DoubleWellState<T> {
        DoubleWellState {
            l: T::zero(),
            rho_bar: self.rho_bar0,
            v_hat: T::one() / self.inv_v_hat0,
            eps_c: self.eps_c0,
            gamma: self.gamma,
        }
    }
}
