//! Linearly implicit integration for stiff flows.
//!
//! Grid discretizations of a potential carry harmonics whose decay rate grows
//! like the square of the harmonic index, which pins explicit steppers to
//! tiny steps long after those harmonics have died out. The stepper here is
//! the four-stage Rosenbrock-W scheme ROS34PW2 (order 3, embedded order 2).
//! Being a W-method it keeps its order with any Jacobian approximation, so
//! the finite-difference Jacobian is only refreshed every few steps.
//!
//! Linear solves run in `f64` whatever the state scalar is.

use std::fmt::Display;

use nalgebra::{DMatrix, DVector};

use crate::flowcore::integrator::{norm, sample, FlowOptions};
use crate::flowcore::trace::{FlowStats, FlowTrace, TerminalReason};
use crate::scalar::Real;

const GAMMA: f64 = 0.435866521508459;
const ALPHA: [[f64; 3]; 4] = [
    [0.0, 0.0, 0.0],
    [0.87173304301691801, 0.0, 0.0],
    [0.84457060015369423, -0.11299064236484185, 0.0],
    [0.0, 0.0, 1.0],
];
const GAMMA_OFF: [[f64; 3]; 4] = [
    [0.0, 0.0, 0.0],
    [-0.87173304301691801, 0.0, 0.0],
    [-0.90338057013044082, 0.054180672388095326, 0.0],
    [0.24212380706095346, -1.2232505839045147, 0.54526025533510214],
];
const B: [f64; 4] = [0.24212380706095346, -1.2232505839045147, 1.5452602553351020, 0.435866521508459];
const B_HAT: [f64; 4] = [0.37810903145819369, -0.096042292212423178, 0.5, 0.2179332607542295];

const SAFETY: f64 = 0.9;
const MIN_FACTOR: f64 = 0.2;
const MAX_FACTOR: f64 = 5.0;

/// Accepted steps between Jacobian refreshes; a rejection always refreshes.
pub const JACOBIAN_AGE: usize = 12;

const JACOBIAN_FLOOR: f64 = 1e-5;

enum StepFailure {
    Rhs(String),
    NonFinite,
    Singular,
}

struct Workspace<'a, F> {
    rhs: &'a mut F,
    dim: usize,
    jac: DMatrix<f64>,
    dfdl: DVector<f64>,
    k: [DVector<f64>; 4],
    f0: Vec<f64>,
    buf: Vec<f64>,
    y_new: Vec<f64>,
    err: Vec<f64>,
    evals: usize,
}

impl<'a, F> Workspace<'a, F> {
    fn new(rhs: &'a mut F, dim: usize) -> Self {
        let z = || DVector::zeros(dim);
        Self {
            rhs,
            dim,
            jac: DMatrix::zeros(dim, dim),
            dfdl: z(),
            k: [z(), z(), z(), z()],
            f0: vec![0.0; dim],
            buf: vec![0.0; dim],
            y_new: vec![0.0; dim],
            err: vec![0.0; dim],
            evals: 0,
        }
    }

    fn eval<T, E>(&mut self, l: f64, y: &[f64], out: &mut [f64]) -> Result<(), StepFailure>
    where
        T: Real,
        F: FnMut(T, &[T], &mut [T]) -> Result<(), E>,
        E: Display,
    {
        self.evals += 1;
        let yt: Vec<T> = y.iter().map(|&v| T::lit(v)).collect();
        let mut ft = vec![T::zero(); self.dim];
        (self.rhs)(T::lit(l), &yt, &mut ft).map_err(|e| StepFailure::Rhs(e.to_string()))?;
        for (o, v) in out.iter_mut().zip(&ft) {
            *o = v.as_f64();
            if !o.is_finite() {
                return Err(StepFailure::NonFinite);
            }
        }
        Ok(())
    }

    /// Forward-difference Jacobian at `(l, y)`, given `f0 = f(l, y)`.
    fn refresh_jacobian<T, E>(&mut self, l: f64, y: &[f64]) -> Result<(), StepFailure>
    where
        T: Real,
        F: FnMut(T, &[T], &mut [T]) -> Result<(), E>,
        E: Display,
    {
        let mut yp = y.to_vec();
        let mut fp = vec![0.0; self.dim];
        for j in 0..self.dim {
            // large enough to rise above round-off in f for components near zero
            let d = (f64::EPSILON * y[j].abs().max(JACOBIAN_FLOOR)).sqrt();
            yp[j] = y[j] + d;
            let d = yp[j] - y[j];
            self.eval::<T, E>(l, &yp, &mut fp)?;
            for i in 0..self.dim {
                self.jac[(i, j)] = (fp[i] - self.f0[i]) / d;
            }
            yp[j] = y[j];
        }
        Ok(())
    }

    /// `∂f/∂l` by a forward difference. Unlike the Jacobian it must be current
    /// to keep the order, so it is refreshed every step.
    fn refresh_dfdl<T, E>(&mut self, l: f64, y: &[f64]) -> Result<(), StepFailure>
    where
        T: Real,
        F: FnMut(T, &[T], &mut [T]) -> Result<(), E>,
        E: Display,
    {
        let dl = f64::EPSILON.sqrt() * l.abs().max(1.0);
        let mut fp = vec![0.0; self.dim];
        self.eval::<T, E>(l + dl, y, &mut fp)?;
        for i in 0..self.dim {
            self.dfdl[i] = (fp[i] - self.f0[i]) / dl;
        }
        Ok(())
    }

    /// One trial step from `(l, y)` with `f0 = f(l, y)` already in place.
    fn attempt<T, E>(&mut self, l: f64, y: &[f64], h: f64) -> Result<(), StepFailure>
    where
        T: Real,
        F: FnMut(T, &[T], &mut [T]) -> Result<(), E>,
        E: Display,
    {
        let n = self.dim;
        let w = DMatrix::identity(n, n) - &self.jac * (h * GAMMA);
        let lu = w.lu();
        let mut fstage = vec![0.0; n];
        for s in 0..4 {
            let alpha_s: f64 = ALPHA[s].iter().sum();
            let gamma_s: f64 = GAMMA_OFF[s].iter().sum::<f64>() + GAMMA;
            if s == 0 {
                fstage.copy_from_slice(&self.f0);
            } else {
                for i in 0..n {
                    let mut acc = 0.0;
                    for j in 0..s {
                        acc += ALPHA[s][j] * self.k[j][i];
                    }
                    self.buf[i] = y[i] + acc;
                }
                let stage = std::mem::take(&mut self.buf);
                let r = self.eval::<T, E>(l + alpha_s * h, &stage, &mut fstage);
                self.buf = stage;
                r?;
            }
            let mut mix = DVector::zeros(n);
            for j in 0..s {
                mix.axpy(GAMMA_OFF[s][j], &self.k[j], 1.0);
            }
            let mut rhs = &self.jac * mix * h + &self.dfdl * (gamma_s * h * h);
            for i in 0..n {
                rhs[i] += h * fstage[i];
            }
            if !lu.solve_mut(&mut rhs) {
                return Err(StepFailure::Singular);
            }
            self.k[s] = rhs;
        }
        for i in 0..n {
            let mut acc = 0.0;
            let mut e = 0.0;
            for s in 0..4 {
                acc += B[s] * self.k[s][i];
                e += (B[s] - B_HAT[s]) * self.k[s][i];
            }
            self.y_new[i] = y[i] + acc;
            self.err[i] = e;
        }
        if self.y_new.iter().any(|v| !v.is_finite()) {
            return Err(StepFailure::NonFinite);
        }
        Ok(())
    }

    fn error_norm(&self, y: &[f64], rel_tol: f64, abs_tol: f64) -> f64 {
        let sum: f64 = (0..self.dim)
            .map(|i| {
                let scale = abs_tol + rel_tol * y[i].abs().max(self.y_new[i].abs());
                (self.err[i] / scale).powi(2)
            })
            .sum();
        (sum / self.dim.max(1) as f64).sqrt()
    }
}

fn failure_message(e: StepFailure, l: f64) -> String {
    match e {
        StepFailure::Rhs(msg) => format!("rhs failed near l = {l}: {msg}"),
        StepFailure::NonFinite => format!("non-finite derivative near l = {l}"),
        StepFailure::Singular => format!("singular iteration matrix near l = {l}"),
    }
}

/// Stiff counterpart of [`crate::flowcore::integrate_flow`] with the same
/// options, escape hook and trace layout. `fixed_step` disables error control.
pub fn integrate_flow_stiff<T, F, E, P>(mut rhs: F, state0: &[T], options: &FlowOptions<T>, mut escape: P) -> FlowTrace<T>
where
    T: Real,
    F: FnMut(T, &[T], &mut [T]) -> Result<(), E>,
    E: Display,
    P: FnMut(T, &[T]) -> bool,
{
    assert!(options.l_max > T::zero(), "l_max must be positive");
    assert!(options.rel_tol > T::zero() && options.abs_tol > T::zero(), "tolerances must be positive");

    let dim = state0.len();
    let rel_tol = options.rel_tol.as_f64();
    let abs_tol = options.abs_tol.as_f64();
    let l_max = options.l_max.as_f64();
    let h_min = options.h_min.as_f64();
    let h_max = options.h_max.as_f64();
    let fixed = options.fixed_step.map(|h| h.as_f64());

    let mut ws = Workspace::new(&mut rhs, dim);
    let mut stats = FlowStats::default();
    let mut l = 0.0;
    let mut y: Vec<f64> = state0.iter().map(|v| v.as_f64()).collect();
    let mut samples = Vec::new();
    let to_t = |v: &[f64]| v.iter().map(|&x| T::lit(x)).collect::<Vec<T>>();
    let push = |samples: &mut Vec<_>, l: f64, y: &[f64], f: &[f64]| {
        samples.push(sample(T::lit(l), &to_t(y), &to_t(f)));
    };
    let finish = |samples, reason, failure: Option<String>, mut stats: FlowStats, evals| {
        stats.rhs_evals = evals;
        FlowTrace::new(samples, reason, failure, stats)
    };

    let mut f0 = vec![0.0; dim];
    if let Err(e) = ws.eval::<T, E>(l, &y, &mut f0) {
        return finish(samples, TerminalReason::NumericFailure, Some(failure_message(e, l)), stats, ws.evals);
    }
    ws.f0.copy_from_slice(&f0);
    push(&mut samples, l, &y, &f0);
    if escape(T::lit(l), &to_t(&y)) {
        return finish(samples, TerminalReason::Escaped, None, stats, ws.evals);
    }

    let mut h = match (fixed, options.h_init) {
        (Some(h), _) => h,
        (None, Some(h)) => h.as_f64(),
        (None, None) => {
            let (d0, d1) = (norm(&y), norm(&f0));
            let h = if d0 < 1e-5 || d1 < 1e-5 { 1e-3 } else { 0.01 * d0 / d1 };
            h.min(h_max).min(l_max).max(10.0 * h_min)
        }
    };
    let mut age = usize::MAX;

    loop {
        if stats.accepted >= options.max_steps {
            let msg = format!("step budget of {} exhausted at l = {l}", options.max_steps);
            return finish(samples, TerminalReason::NumericFailure, Some(msg), stats, ws.evals);
        }
        // the trace stores l as T, which must keep increasing
        let h_floor = h_min.max(4.0 * T::epsilon().as_f64() * l.abs());
        let remaining = l_max - l;
        let mut last = false;
        if h >= remaining {
            h = remaining;
            last = true;
        }
        if !last && fixed.is_none() && h < h_floor {
            return finish(samples, TerminalReason::StepUnderflow, None, stats, ws.evals);
        }
        if age >= JACOBIAN_AGE {
            if let Err(e) = ws.refresh_jacobian::<T, E>(l, &y) {
                return finish(samples, TerminalReason::NumericFailure, Some(failure_message(e, l)), stats, ws.evals);
            }
            age = 0;
        }
        if options.autonomous {
            ws.dfdl.fill(0.0);
        } else if let Err(e) = ws.refresh_dfdl::<T, E>(l, &y) {
            return finish(samples, TerminalReason::NumericFailure, Some(failure_message(e, l)), stats, ws.evals);
        }

        let outcome = ws.attempt::<T, E>(l, &y, h);
        let err = match outcome {
            Ok(()) if fixed.is_some() => 0.0,
            Ok(()) => ws.error_norm(&y, rel_tol, abs_tol),
            Err(e) => {
                if fixed.is_some() {
                    return finish(samples, TerminalReason::NumericFailure, Some(failure_message(e, l)), stats, ws.evals);
                }
                stats.rejected += 1;
                h *= 0.25;
                age = usize::MAX;
                if h < h_floor {
                    return finish(samples, TerminalReason::NumericFailure, Some(failure_message(e, l)), stats, ws.evals);
                }
                continue;
            }
        };

        if !(err <= 1.0) {
            stats.rejected += 1;
            let factor = if err.is_finite() { (SAFETY * err.powf(-1.0 / 3.0)).max(MIN_FACTOR) } else { MIN_FACTOR };
            h *= factor;
            age = usize::MAX;
            if h < h_floor {
                return finish(samples, TerminalReason::StepUnderflow, None, stats, ws.evals);
            }
            continue;
        }

        let l_new = if last { l_max } else { l + h };
        let y_new = ws.y_new.clone();
        if let Err(e) = ws.eval::<T, E>(l_new, &y_new, &mut f0) {
            // the accepted point itself is unusable; retry shorter
            if fixed.is_some() {
                return finish(samples, TerminalReason::NumericFailure, Some(failure_message(e, l)), stats, ws.evals);
            }
            stats.rejected += 1;
            h *= 0.25;
            age = usize::MAX;
            if h < h_floor {
                return finish(samples, TerminalReason::NumericFailure, Some(failure_message(e, l)), stats, ws.evals);
            }
            continue;
        }
        stats.accepted += 1;
        age += 1;
        l = l_new;
        y = y_new;
        ws.f0.copy_from_slice(&f0);
        push(&mut samples, l, &y, &f0);

        if escape(T::lit(l), &to_t(&y)) {
            return finish(samples, TerminalReason::Escaped, None, stats, ws.evals);
        }
        if last || l >= l_max {
            return finish(samples, TerminalReason::ReachedLMax, None, stats, ws.evals);
        }
        h = match fixed {
            Some(h) => h,
            None => {
                let factor = if err == 0.0 { MAX_FACTOR } else { SAFETY * err.powf(-1.0 / 3.0) };
                (h * factor.clamp(MIN_FACTOR, MAX_FACTOR)).min(h_max)
            }
        };
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::convert::Infallible;

    fn no_escape(_: f64, _: &[f64]) -> bool {
        false
    }

    #[test]
    fn third_order_in_fixed_step_mode() {
        // y' = -y² + cos l, z' = y z - z/2 on [0, 1]
        let rhs = |l: f64, y: &[f64], d: &mut [f64]| {
            d[0] = -y[0] * y[0] + l.cos();
            d[1] = y[0] * y[1] - 0.5 * y[1];
            Ok::<_, Infallible>(())
        };
        let reference = integrate_flow_stiff(rhs, &[1.0, 1.0], &FlowOptions::new(1.0).fixed(1.0 / 1024.0), no_escape);
        let r = reference.last().unwrap().state.clone();
        let err_at = |h: f64| {
            let tr = integrate_flow_stiff(rhs, &[1.0, 1.0], &FlowOptions::new(1.0).fixed(h), no_escape);
            let s = &tr.last().unwrap().state;
            (s[0] - r[0]).abs().max((s[1] - r[1]).abs())
        };
        let order = (err_at(0.05) / err_at(0.025)).log2();
        assert!(order > 2.7 && order < 3.4, "observed order {order}");
    }

    #[test]
    fn stiff_decay_takes_few_steps() {
        // eigenvalues -1 and -1e5: explicit steppers would need ~1e5 steps
        let opts = FlowOptions::new(10.0).tolerances(1e-8, 1e-12);
        let tr = integrate_flow_stiff(
            |_, y: &[f64], d: &mut [f64]| {
                d[0] = -y[0];
                d[1] = -1e5 * (y[1] - y[0]);
                Ok::<_, Infallible>(())
            },
            &[1.0, 0.0],
            &opts,
            no_escape,
        );
        assert_eq!(tr.terminal_reason(), TerminalReason::ReachedLMax);
        let s = &tr.last().unwrap().state;
        let exact = (-10.0f64).exp();
        assert!(((s[0] - exact) / exact).abs() < 1e-5, "{}", s[0]);
        // an explicit stepper needs h < 3e-5 here, i.e. over 3e5 steps
        assert!(tr.stats().accepted < 5000, "{:?}", tr.stats());
    }

    #[test]
    fn escape_and_strict_order() {
        let opts = FlowOptions::new(10.0);
        let tr = integrate_flow_stiff(
            |_, y: &[f64], d: &mut [f64]| {
                d[0] = y[0];
                Ok::<_, Infallible>(())
            },
            &[1.0],
            &opts,
            |_, y| y[0] > 100.0,
        );
        assert_eq!(tr.terminal_reason(), TerminalReason::Escaped);
        assert!(tr.samples().windows(2).all(|w| w[0].l < w[1].l));
        let s = tr.last().unwrap();
        assert!((s.state[0] - s.l.exp()).abs() / s.state[0] < 1e-5);
    }

    #[test]
    fn rhs_failure_is_reported() {
        let tr = integrate_flow_stiff(
            |l: f64, _: &[f64], d: &mut [f64]| {
                d[0] = 1.0;
                if l > 0.5 {
                    Err("boom")
                } else {
                    Ok(())
                }
            },
            &[0.0],
            &FlowOptions::new(1.0),
            no_escape,
        );
        assert_eq!(tr.terminal_reason(), TerminalReason::NumericFailure);
        assert!(tr.failure().unwrap().contains("boom"));
    }
}
