//! Threshold integrals `I_n = ∫ dp̄/(2π) Ḡ(p̄)ⁿ` of the double-well flow.
//!
//! Two independent routes are provided: direct quadrature of the propagator
//! (used by the flow) and derivatives of the closed-form `I(r)`, where `r`
//! replaces the unit regulator mass.

use crate::doublewell::{DoubleWellError, DoubleWellState};
use crate::flowcore::loops::shape;
use crate::flowcore::MomentumQuadrature;
use crate::scalar::{heaviside, Real};

/// Relative tolerance of the momentum quadrature inside the flow.
pub const LOOP_QUAD_TOL: f64 = 1e-12;

/// Finite-difference step (in units of the propagator mass) for the
/// closed-form cross-check.
pub const CLOSED_FORM_FD_STEP: f64 = 1e-4;

/// Allowed relative mismatch between the two evaluation routes.
pub const CROSS_CHECK_TOL: f64 = 1e-6;

/// Dimensionless curvature `V̄''` at the running minimum.
///
/// `4 V̂/ρ̄` at the displaced minimum (`ρ̄ > 0`) and `-2 V̂/ρ̄` at the origin.
pub fn curvature<T: Real>(rho_bar: T, v_hat: T) -> T {
    let theta = heaviside(rho_bar);
    T::two() * (T::lit(3.0) * theta - T::one()) * v_hat / rho_bar
}

/// Coefficients of the dimensionless inverse propagator
/// `a p̄² + b |p̄| + c`, where `c = V̄'' + r`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Propagator<T> {
    pub kinetic: T,
    pub ohmic: T,
    pub mass: T,
}

impl<T: Real> Propagator<T> {
    /// `p̄²/ε_C + γ|p̄|/(2π) + mass`.
    pub fn new(eps_c: T, gamma: T, mass: T) -> Self {
        Self {
            kinetic: T::one() / eps_c,
            ohmic: gamma / (T::two() * T::PI()),
            mass,
        }
    }

    /// Propagator at the minimum of `state` with regulator mass `r`.
    pub fn at_minimum(state: &DoubleWellState<T>, r: T) -> Self {
        Self::new(state.eps_c, state.gamma, curvature(state.rho_bar, state.v_hat) + r)
    }

    pub fn denominator(&self, p: T) -> T {
        self.kinetic * p * p + self.ohmic * p.abs() + self.mass
    }

    /// Momentum where the denominator has doubled from its `p = 0` value;
    /// used to place the quadrature map.
    pub fn width(&self) -> T {
        let linear = self.mass / self.ohmic;
        if self.kinetic > T::zero() {
            linear.min((self.mass / self.kinetic).sqrt())
        } else {
            linear
        }
    }

    /// `4 a c / b²`, the argument of the closed form.
    pub fn discriminant_ratio(&self) -> T {
        T::lit(4.0) * self.kinetic * self.mass / (self.ohmic * self.ohmic)
    }
}

/// Closed form `I(y)` for coupling `gamma`.
pub fn closed_form_of_y<T: Real>(y: T, gamma: T) -> Result<T, DoubleWellError> {
    if !(y > T::zero()) || !y.is_finite() {
        return Err(DoubleWellError::Domain {
            what: "closed-form argument y",
            value: y.as_f64(),
        });
    }
    Ok(T::two() / gamma * shape(y))
}

fn ensure_nonzero_rho<T: Real>(state: &DoubleWellState<T>) -> Result<(), DoubleWellError> {
    if state.rho_bar == T::zero() {
        return Err(DoubleWellError::ZeroRho);
    }
    Ok(())
}

/// `y(r) = (16π²/(γ² ε_C)) (V̄'' + r)`.
pub fn y_of<T: Real>(r: T, state: &DoubleWellState<T>) -> T {
    let pi = T::PI();
    T::lit(16.0) * pi * pi / (state.gamma * state.gamma * state.eps_c) * (curvature(state.rho_bar, state.v_hat) + r)
}

/// Closed-form `I_Λ(r)`.
pub fn i_closed<T: Real>(r: T, state: &DoubleWellState<T>) -> Result<T, DoubleWellError> {
    ensure_nonzero_rho(state)?;
    closed_form_of_y(y_of(r, state), state.gamma)
}

/// `I_n` from central differences of [`i_closed`] in `r` at `r = 1`, with one
/// Richardson extrapolation.
pub fn i_n_closed<T: Real>(n: usize, state: &DoubleWellState<T>) -> Result<T, DoubleWellError> {
    check_order(n)?;
    let scale = (curvature(state.rho_bar, state.v_hat) + T::one()).abs().max(T::one());
    let h = T::lit(CLOSED_FORM_FD_STEP) * scale;
    let i = |r: T| i_closed(r, state);
    let one = T::one();
    let estimate = |h: T| -> Result<T, DoubleWellError> {
        if n == 2 {
            Ok(-(i(one + h)? - i(one - h)?) / (T::two() * h))
        } else {
            Ok((i(one + h)? - T::two() * i(one)? + i(one - h)?) / (h * h) * T::half())
        }
    };
    let fine = estimate(h)?;
    let coarse = estimate(T::two() * h)?;
    Ok((T::lit(4.0) * fine - coarse) / T::lit(3.0))
}

fn check_order(n: usize) -> Result<(), DoubleWellError> {
    if n == 2 || n == 3 {
        Ok(())
    } else {
        Err(DoubleWellError::UnsupportedOrder(n))
    }
}

/// `(I₂, I₃)` by quadrature of the propagator at the running minimum.
pub fn loop_integrals<T: Real>(state: &DoubleWellState<T>) -> Result<(T, T), DoubleWellError> {
    ensure_nonzero_rho(state)?;
    propagator_loops(&Propagator::at_minimum(state, T::one()))
}

/// `(I₂, I₃)` for an explicit propagator.
pub fn propagator_loops<T: Real>(prop: &Propagator<T>) -> Result<(T, T), DoubleWellError> {
    if !(prop.mass > T::zero()) {
        return Err(DoubleWellError::Domain {
            what: "propagator mass V'' + 1",
            value: prop.mass.as_f64(),
        });
    }
    let quad = MomentumQuadrature::new(T::lit(LOOP_QUAD_TOL).max(T::epsilon() * T::lit(64.0))).with_scale(prop.width());
    // even integrands: ∫dp/(2π) = (1/π) ∫_0^∞ dp
    let i2 = quad.half_axis(|p| {
        let g = T::one() / prop.denominator(p);
        g * g
    })? / T::PI();
    let i3 = quad.half_axis(|p| {
        let g = T::one() / prop.denominator(p);
        g * g * g
    })? / T::PI();
    Ok((i2, i3))
}

/// `I_n` by quadrature, cross-checked against the closed form.
pub fn i_n<T: Real>(n: usize, state: &DoubleWellState<T>) -> Result<T, DoubleWellError> {
    check_order(n)?;
    let (i2, i3) = loop_integrals(state)?;
    let quad = if n == 2 { i2 } else { i3 };
    let closed = i_n_closed(n, state)?;
    let rel = ((quad - closed) / quad).abs();
    if rel > T::lit(CROSS_CHECK_TOL) {
        return Err(DoubleWellError::Inconsistent {
            order: n,
            quadrature: quad.as_f64(),
            closed_form: closed.as_f64(),
        });
    }
    Ok(quad)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    fn state(rho_bar: f64, v_hat: f64, eps_c: f64, gamma: f64) -> DoubleWellState<f64> {
        DoubleWellState {
            l: 0.0,
            rho_bar,
            v_hat,
            eps_c,
            gamma,
        }
    }

    #[test]
    fn closed_form_reference_values() {
        assert_relative_eq!(closed_form_of_y(2.0, 2.0).unwrap(), PI / 2.0, max_relative = 1e-15);
        assert_relative_eq!(closed_form_of_y(0.75, 2.0).unwrap(), 2.0 * 3f64.ln(), max_relative = 1e-14);
        assert_relative_eq!(closed_form_of_y(1.0, 2.0).unwrap(), 2.0, max_relative = 1e-15);
    }

    #[test]
    fn closed_form_literal_branch_expression() {
        // the arctangent rewrite must agree with (π - 2 atan(1/s))/s
        for &y in &[1.5, 2.0, 10.0, 1e4] {
            let s = (y - 1.0f64).sqrt();
            let literal = 2.0 / 3.0 * (PI - 2.0 * (1.0 / s).atan()) / s;
            assert_relative_eq!(closed_form_of_y(y, 3.0).unwrap(), literal, max_relative = 1e-13);
        }
        for &y in &[0.1, 0.5, 0.9] {
            let s = (1.0 - y as f64).sqrt();
            let literal = 2.0 / 3.0 * ((1.0 + s) / (1.0 - s)).ln() / s;
            assert_relative_eq!(closed_form_of_y(y, 3.0).unwrap(), literal, max_relative = 1e-13);
        }
    }

    #[test]
    fn branches_meet_at_y_equal_one() {
        let g = 1.7f64;
        let above = closed_form_of_y(1.0 + 1e-4, g).unwrap();
        let below = closed_form_of_y(1.0 - 1e-4, g).unwrap();
        let at = closed_form_of_y(1.0, g).unwrap();
        assert_relative_eq!(at, 4.0 / g, max_relative = 1e-15);
        // both branches differ from 4/γ only by the linear term -(4/3γ)(y-1)
        assert!((above - (4.0 / g) * (1.0 - 1e-4 / 3.0)).abs() < 1e-8);
        assert!((below - (4.0 / g) * (1.0 + 1e-4 / 3.0)).abs() < 1e-8);
        // series and direct branches agree across the window edge
        let edge = 1.0 + 1.000_001e-6;
        let inside = 1.0 + 0.999_999e-6;
        assert!((closed_form_of_y(edge, g).unwrap() - closed_form_of_y(inside, g).unwrap()).abs() < 1e-11);
    }

    #[test]
    fn non_positive_argument_is_domain_error() {
        assert!(matches!(closed_form_of_y(0.0, 1.0), Err(DoubleWellError::Domain { .. })));
        assert!(matches!(closed_form_of_y(-2.0, 1.0), Err(DoubleWellError::Domain { .. })));
        // curvature -2V̂/ρ̄ with ρ̄ > 0 is never negative, but a large negative r is
        let s = state(0.5, 0.1, 1.0, 2.0);
        assert!(i_closed(-5.0, &s).is_err());
    }

    #[test]
    fn zero_rho_is_guarded() {
        let s = state(0.0, 0.1, 1.0, 2.0);
        assert_eq!(i_closed(1.0, &s).unwrap_err(), DoubleWellError::ZeroRho);
        assert_eq!(loop_integrals(&s).unwrap_err(), DoubleWellError::ZeroRho);
    }

    #[test]
    fn curvature_by_branch() {
        assert_relative_eq!(curvature(0.5, 0.2), 1.6);
        assert_relative_eq!(curvature(-0.5, 0.2), 0.8);
    }

    #[test]
    fn massive_mode_decouples() {
        let mut prev = (f64::INFINITY, f64::INFINITY);
        for &v in &[1e-2, 1.0, 1e2, 1e4, 1e6] {
            let (i2, i3) = loop_integrals(&state(0.5, v, 1.0, 20.0)).unwrap();
            assert!(i2 < prev.0 && i3 < prev.1);
            prev = (i2, i3);
        }
        assert!(prev.0 < 1e-6 && prev.1 < 1e-12);
    }

    #[test]
    fn quadrature_matches_closed_form_at_reference_state() {
        let s = state(0.5, 1.0 / 176.62, 1.0, 20.0);
        let (i2, i3) = loop_integrals(&s).unwrap();
        assert!(i2 > 0.0 && i3 > 0.0);
        assert_relative_eq!(i2, i_n_closed(2, &s).unwrap(), max_relative = 1e-7);
        assert_relative_eq!(i3, i_n_closed(3, &s).unwrap(), max_relative = 1e-7);
        assert_relative_eq!(i_n(2, &s).unwrap(), i2);
    }

    #[test]
    fn large_coupling_limit() {
        // ε_C → ∞ leaves the Ohmic propagator, I_n = (2/γ)/((n-1)(1+m)^(n-1))
        let s = state(-0.3, 0.06, 1e30, 5.0);
        let m = curvature(-0.3, 0.06);
        let (i2, i3) = loop_integrals(&s).unwrap();
        assert_relative_eq!(i2, 2.0 / 5.0 / (1.0 + m), max_relative = 1e-10);
        assert_relative_eq!(i3, 1.0 / 5.0 / (1.0 + m).powi(2), max_relative = 1e-10);
    }

    #[test]
    fn unsupported_order() {
        let s = state(0.5, 0.1, 1.0, 2.0);
        assert_eq!(i_n(4, &s).unwrap_err(), DoubleWellError::UnsupportedOrder(4));
    }
}
