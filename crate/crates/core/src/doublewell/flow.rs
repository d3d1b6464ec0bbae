//! Flow equations, trajectory driver and classification.
//!
//! Internally the flow runs in the chart `(ρ̄, ln u)` with `u = V̂/ρ̄²`. Near the
//! branch boundary `V̂` vanishes like `ρ̄²` while `u` stays finite, so the chart
//! passes smoothly through the point where the minimum merges with the
//! origin. Traces are converted back to `(ρ̄, V̂)` before they are returned.

use crate::doublewell::integrals::{curvature, loop_integrals, propagator_loops, Propagator};
use crate::doublewell::{DoubleWellError, DoubleWellParams, DoubleWellState};
use crate::flowcore::{integrate_flow_switched, FlowOptions, FlowTrace, TerminalReason};
use crate::phase::{Phase, PhaseLabel};
use crate::scalar::{heaviside, Real};

/// Any sample with `ρ̄ < -DEFAULT_RHO_ESCAPE` labels the run delocalized.
pub const DEFAULT_RHO_ESCAPE: f64 = 0.0;

/// `|∂_l α|` below which a localized run counts as settled.
pub const DEFAULT_ALPHA_SETTLE_TOL: f64 = 1e-6;

/// Flow derivatives `(∂_l ρ̄, ∂_l V̂)`.
pub fn rhs_double_well<T: Real>(state: &DoubleWellState<T>) -> Result<(T, T), DoubleWellError> {
    let (i2, i3) = loop_integrals(state)?;
    let rho = state.rho_bar;
    let v = state.v_hat;
    let theta = heaviside(rho);
    let lit = T::lit;
    let d_rho = -lit(1.5) * i2 - lit(18.0) * v / rho.abs() * (T::one() - theta) * i3;
    let d_v = v * (T::one() - lit(3.0) / rho * i2 - lit(18.0) * v / (rho * rho) * theta * i3);
    Ok((d_rho, d_v))
}

/// Right-hand side in the `(ρ̄, ln u)` chart.
fn chart_rhs<T: Real>(params: &DoubleWellParams<T>, l: T, y: &[T], dy: &mut [T]) -> Result<(), DoubleWellError> {
    let rho = y[0];
    let u = y[1].exp();
    let theta = heaviside(rho);
    let mass = T::two() * (T::lit(3.0) * theta - T::one()) * u * rho;
    let eps = params.eps_c0 * l.exp();
    let (i2, i3) = propagator_loops(&Propagator::new(eps, params.gamma, mass + T::one()))?;
    let lit = T::lit;
    dy[0] = -lit(1.5) * i2 - lit(18.0) * u * rho.abs() * (T::one() - theta) * i3;
    dy[1] = T::one() - lit(18.0) * (T::two() - theta) * u * i3;
    Ok(())
}

/// `α_Λ = 2γ max(ρ̄, 0)/π²`.
pub fn alpha_of<T: Real>(state: &DoubleWellState<T>) -> T {
    T::two() * state.gamma * state.rho_bar.max(T::zero()) / (T::PI() * T::PI())
}

/// Tunnelling amplitude over level spacing, `√(ρ̄ V̂ / (4 ε_C))`.
pub fn two_level_ratio<T: Real>(state: &DoubleWellState<T>) -> Result<T, DoubleWellError> {
    if !(state.rho_bar > T::zero()) {
        return Err(DoubleWellError::Domain {
            what: "two-level ratio requires rho_bar > 0, rho_bar",
            value: state.rho_bar.as_f64(),
        });
    }
    Ok((state.rho_bar * state.v_hat / (T::lit(4.0) * state.eps_c)).sqrt())
}

/// A finished double-well flow. Trace samples hold `[ρ̄, V̂]` with diagnostics
/// `alpha`, `eps_c`, `d_alpha_dl` and, while `ρ̄ > 0`, `two_level_ratio`.
#[derive(Debug, Clone)]
pub struct DoubleWellRun<T> {
    pub params: DoubleWellParams<T>,
    pub trace: FlowTrace<T>,
}

impl<T: Real> DoubleWellRun<T> {
    /// Integration settings used when a caller has no preference.
    pub fn default_options() -> FlowOptions<T> {
        FlowOptions::new(T::lit(crate::flowcore::DEFAULT_L_MAX)).tolerances(T::lit(1e-10), T::lit(1e-12))
    }

    pub fn state_at(&self, index: usize) -> DoubleWellState<T> {
        let s = &self.trace.samples()[index];
        DoubleWellState {
            l: s.l,
            rho_bar: s.state[0],
            v_hat: s.state[1],
            eps_c: self.params.eps_c0 * s.l.exp(),
            gamma: self.params.gamma,
        }
    }

    pub fn states(&self) -> Vec<DoubleWellState<T>> {
        (0..self.trace.len()).map(|i| self.state_at(i)).collect()
    }

    pub fn terminal_state(&self) -> Option<DoubleWellState<T>> {
        (!self.trace.is_empty()).then(|| self.state_at(self.trace.len() - 1))
    }
}

/// Integrates the flow from `params`. With `stop_below = Some(e)` the run ends
/// as soon as `ρ̄ < -e`; otherwise it continues to `options.l_max`.
pub fn run_double_well<T: Real>(
    params: &DoubleWellParams<T>,
    options: &FlowOptions<T>,
    stop_below: Option<T>,
) -> Result<DoubleWellRun<T>, DoubleWellError> {
    params.validate()?;
    let rho0 = params.rho_bar0;
    let u0 = T::one() / (params.inv_v_hat0 * rho0 * rho0);
    let y0 = [rho0, u0.ln()];
    let mut trace = integrate_flow_switched(
        |l, y: &[T], dy: &mut [T]| chart_rhs(params, l, y, dy),
        &y0,
        options,
        |_, y: &[T]| stop_below.is_some_and(|e| y[0] < -e),
        |y: &[T]| y[0],
    );

    let lit = T::lit;
    for s in trace.samples_mut() {
        let rho = s.state[0];
        let u = s.state[1].exp();
        let v = u * rho * rho;
        debug_assert!(v > T::zero() || rho == T::zero());
        let state = DoubleWellState {
            l: s.l,
            rho_bar: rho,
            v_hat: v,
            eps_c: params.eps_c0 * s.l.exp(),
            gamma: params.gamma,
        };
        let d_alpha = if rho > T::zero() {
            let mass = curvature(rho, v) + T::one();
            let (i2, _) = propagator_loops(&Propagator::new(state.eps_c, state.gamma, mass))?;
            -lit(3.0) * params.gamma / (T::PI() * T::PI()) * i2
        } else {
            T::zero()
        };
        s.state = vec![rho, v];
        s.diagnostics.insert("alpha", alpha_of(&state));
        s.diagnostics.insert("eps_c", state.eps_c);
        s.diagnostics.insert("d_alpha_dl", d_alpha);
        if let Ok(ratio) = two_level_ratio(&state) {
            s.diagnostics.insert("two_level_ratio", ratio);
        }
    }
    Ok(DoubleWellRun { params: *params, trace })
}

/// Labels a trace produced by [`run_double_well`].
pub fn classify_double_well<T: Real>(
    trace: &FlowTrace<T>,
    rho_escape: T,
    alpha_settle_tol: T,
) -> Result<PhaseLabel, DoubleWellError> {
    let last = trace.last().ok_or(DoubleWellError::EmptyTrace)?;
    let rho = last.state[0];
    let d_alpha = last.diagnostics.get("d_alpha_dl").copied().unwrap_or(T::nan());
    let escaped = trace.samples().iter().any(|s| s.state[0] < -rho_escape);
    let phase = if escaped {
        Phase::Delocalized
    } else if trace.terminal_reason() == TerminalReason::ReachedLMax && rho > T::zero() && d_alpha.abs() < alpha_settle_tol
    {
        Phase::Localized
    } else {
        Phase::Undetermined
    };
    let alpha = last.diagnostics.get("alpha").copied().unwrap_or(T::nan());
    Ok(PhaseLabel::new(phase, last.l.as_f64())
        .with("alpha", alpha.as_f64())
        .with("rho_bar", rho.as_f64())
        .with("v_hat", last.state[1].as_f64())
        .with("abs_d_alpha_dl", d_alpha.abs().as_f64()))
}

/// `χ = |ρ̄| / (2 Λ V̂)` at the terminal sample, `Λ = Λ₀ e^{-l}`.
pub fn susceptibility<T: Real>(trace: &FlowTrace<T>, lambda0: T) -> Result<T, DoubleWellError> {
    let last = trace.last().ok_or(DoubleWellError::EmptyTrace)?;
    let rho = last.state[0];
    if !(rho < T::zero()) {
        return Err(DoubleWellError::Domain {
            what: "susceptibility requires terminal rho_bar < 0, rho_bar",
            value: rho.as_f64(),
        });
    }
    let lambda = lambda0 * (-last.l).exp();
    Ok(rho.abs() / (T::two() * lambda * last.state[1]))
}

/// Trajectory table in the column order
/// `l, Lambda_over_Lambda0, rho_bar, inv_v_hat, alpha, eps_C, two_level_ratio`.
pub fn trajectory_rows<T: Real>(run: &DoubleWellRun<T>) -> Vec<Vec<Option<f64>>> {
    run.trace
        .samples()
        .iter()
        .map(|s| {
            let d = |k: &str| s.diagnostics.get(k).map(|v| v.as_f64());
            vec![
                Some(s.l.as_f64()),
                Some((-s.l).exp().as_f64()),
                Some(s.state[0].as_f64()),
                Some((T::one() / s.state[1]).as_f64()),
                d("alpha"),
                d("eps_c"),
                d("two_level_ratio"),
            ]
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::doublewell::i_n;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn params(inv_v: f64) -> DoubleWellParams<f64> {
        DoubleWellParams::new(20.0, 0.5, inv_v, 1.0).unwrap()
    }

    fn state(rho_bar: f64, v_hat: f64) -> DoubleWellState<f64> {
        DoubleWellState {
            l: 0.0,
            rho_bar,
            v_hat,
            eps_c: 1.0,
            gamma: 20.0,
        }
    }

    #[test]
    fn alpha_arithmetic() {
        assert_relative_eq!(alpha_of(&state(0.5, 1.0)), 20.0 / (PI * PI), max_relative = 1e-15);
        assert_relative_eq!(alpha_of(&state(0.5, 1.0)), 2.026, epsilon = 5e-4);
        assert_eq!(alpha_of(&state(-0.1, 1.0)), 0.0);
        let mut s = state(0.5, 1.0);
        s.gamma = PI * PI;
        assert_relative_eq!(alpha_of(&s), 1.0, max_relative = 1e-15);
    }

    #[test]
    fn two_level_arithmetic() {
        let mut s = state(1.0, 4.0);
        assert_relative_eq!(two_level_ratio(&s).unwrap(), 1.0);
        s.rho_bar = 0.5;
        s.v_hat = 125.0;
        assert_relative_eq!(two_level_ratio(&s).unwrap(), 15.625f64.sqrt());
        s.rho_bar = -0.5;
        assert!(two_level_ratio(&s).is_err());
    }

    #[test]
    fn localized_branch_signs() {
        let s = state(0.5, 1.0 / 176.62);
        let (dr, _) = rhs_double_well(&s).unwrap();
        let i2 = i_n(2, &s).unwrap();
        assert!(dr < 0.0);
        assert_relative_eq!(2.0 * 20.0 / (PI * PI) * dr, -3.0 * 20.0 / (PI * PI) * i2, max_relative = 1e-12);
    }

    #[test]
    fn delocalized_growth_exceeds_one() {
        let s = state(-0.4, 0.02);
        let (dr, dv) = rhs_double_well(&s).unwrap();
        assert!(dr < 0.0);
        assert!(dv / s.v_hat > 1.0);
    }

    #[test]
    fn chart_is_chain_rule_of_physical_flow() {
        for &(rho, v) in &[(0.5, 0.01), (0.2, 0.3), (-0.3, 0.05), (-1.2, 2.0)] {
            let s = state(rho, v);
            let (dr, dv) = rhs_double_well(&s).unwrap();
            let p = DoubleWellParams::new(20.0, rho, 1.0 / v, 1.0).unwrap();
            let y = [rho, (v / (rho * rho)).ln()];
            let mut dy = [0.0; 2];
            chart_rhs(&p, 0.0, &y, &mut dy).unwrap();
            assert_relative_eq!(dy[0], dr, max_relative = 1e-12);
            assert_relative_eq!(dy[1], dv / v - 2.0 * dr / rho, max_relative = 1e-10, epsilon = 1e-12);
        }
    }

    #[test]
    fn susceptibility_is_homogeneous() {
        let mk = |v: f64| {
            FlowTrace::from_samples(
                vec![crate::flowcore::FlowSample {
                    l: 2.0,
                    state: vec![-0.4, v],
                    rhs_norm: 0.0,
                    diagnostics: Default::default(),
                }],
                TerminalReason::ReachedLMax,
            )
        };
        let a = susceptibility(&mk(0.3), 1.0).unwrap();
        let b = susceptibility(&mk(0.6), 1.0).unwrap();
        assert_relative_eq!(b / a, 0.5, max_relative = 1e-15);
        assert_relative_eq!(a, 0.4 / (2.0 * (-2.0f64).exp() * 0.3), max_relative = 1e-15);
        let pos = FlowTrace::from_samples(
            vec![crate::flowcore::FlowSample {
                l: 0.0,
                state: vec![0.4, 1.0],
                rhs_norm: 0.0,
                diagnostics: Default::default(),
            }],
            TerminalReason::ReachedLMax,
        );
        assert!(susceptibility(&pos, 1.0).is_err());
    }

    #[test]
    fn empty_trace_rejected() {
        let t: FlowTrace<f64> = FlowTrace::from_samples(vec![], TerminalReason::NumericFailure);
        assert_eq!(classify_double_well(&t, 0.0, 1e-6).unwrap_err(), DoubleWellError::EmptyTrace);
    }

    #[test]
    fn deep_barrier_stays_localized() {
        let run = run_double_well(&params(0.008), &DoubleWellRun::default_options(), None).unwrap();
        let label = classify_double_well(&run.trace, DEFAULT_RHO_ESCAPE, DEFAULT_ALPHA_SETTLE_TOL).unwrap();
        assert_eq!(label.phase, Phase::Localized);
        check_invariants(&run);
    }

    #[test]
    fn shallow_barrier_delocalizes() {
        let run = run_double_well(&params(800.0), &DoubleWellRun::default_options(), None).unwrap();
        let label = classify_double_well(&run.trace, DEFAULT_RHO_ESCAPE, DEFAULT_ALPHA_SETTLE_TOL).unwrap();
        assert_eq!(label.phase, Phase::Delocalized);
        assert_eq!(run.trace.stats().switch_crossings, 1);
        check_invariants(&run);
        assert!(susceptibility(&run.trace, 1.0).unwrap() > 0.0);
    }

    #[test]
    fn early_stop_ends_past_the_boundary() {
        let run = run_double_well(&params(800.0), &DoubleWellRun::default_options(), Some(0.0)).unwrap();
        assert_eq!(run.trace.terminal_reason(), TerminalReason::Escaped);
        let last = run.terminal_state().unwrap();
        assert!(last.rho_bar < 0.0 && last.rho_bar > -1e-6);
        assert!(last.l < 40.0);
    }

    #[test]
    fn trajectory_rows_shape() {
        let mut opts = DoubleWellRun::default_options();
        opts.l_max = 5.0;
        let run = run_double_well(&params(800.0), &opts, None).unwrap();
        let rows = trajectory_rows(&run);
        assert_eq!(rows.len(), run.trace.len());
        for (row, s) in rows.iter().zip(run.states()) {
            assert_eq!(row.len(), 7);
            assert_eq!(row[6].is_some(), s.rho_bar > 0.0);
            assert_relative_eq!(row[1].unwrap(), (-s.l).exp());
        }
    }

    fn check_invariants(run: &DoubleWellRun<f64>) {
        let mut prev_alpha = f64::INFINITY;
        for s in run.trace.samples() {
            assert!(s.state[1] > 0.0, "V̂ must stay positive");
            assert_relative_eq!(s.diagnostics["eps_c"], s.l.exp(), max_relative = 1e-14);
            let a = s.diagnostics["alpha"];
            assert!(a <= prev_alpha * (1.0 + 1e-14));
            prev_alpha = a;
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(10))]

        #[test]
        fn quadrature_and_closed_form_agree(rho in prop_oneof![-2.0f64..-0.05, 0.05f64..2.0],
                                            log_v in -6.0f64..3.0,
                                            log_eps in -2.0f64..6.0,
                                            gamma in 0.5f64..40.0) {
            let s = DoubleWellState { l: 0.0, rho_bar: rho, v_hat: log_v.exp(), eps_c: log_eps.exp(), gamma };
            let i2 = i_n(2, &s);
            let i3 = i_n(3, &s);
            prop_assert!(i2.is_ok(), "{:?}", i2);
            prop_assert!(i3.is_ok(), "{:?}", i3);
        }
    }
}
