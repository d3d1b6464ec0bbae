//! Dormand–Prince 5(4) integration over the RG time `l = ln(Λ₀/Λ)`.

use std::collections::BTreeMap;
use std::fmt::Display;

use crate::flowcore::trace::{FlowSample, FlowStats, FlowTrace, TerminalReason};
use crate::scalar::Real;

pub const DEFAULT_REL_TOL: f64 = 1e-8;
pub const DEFAULT_ABS_TOL: f64 = 1e-10;
pub const DEFAULT_H_MIN: f64 = 1e-10;

/// Step control settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlowOptions<T> {
    pub l_max: T,
    pub rel_tol: T,
    pub abs_tol: T,
    pub h_min: T,
    pub h_max: T,
    /// First trial step; estimated from the initial slope when `None`.
    pub h_init: Option<T>,
    /// Disables error control and steps with this size.
    pub fixed_step: Option<T>,
    pub max_steps: usize,
    /// Promises that the right-hand side does not depend on `l`, which lets
    /// the stiff stepper skip its `∂f/∂l` evaluation.
    pub autonomous: bool,
}

impl<T: Real> FlowOptions<T> {
    pub fn new(l_max: T) -> Self {
        Self {
            l_max,
            rel_tol: T::lit(DEFAULT_REL_TOL),
            abs_tol: T::lit(DEFAULT_ABS_TOL),
            h_min: T::lit(DEFAULT_H_MIN),
            h_max: l_max,
            h_init: None,
            fixed_step: None,
            max_steps: 2_000_000,
            autonomous: false,
        }
    }

    pub fn tolerances(mut self, rel_tol: T, abs_tol: T) -> Self {
        self.rel_tol = rel_tol;
        self.abs_tol = abs_tol;
        self
    }

    pub fn fixed(mut self, h: T) -> Self {
        self.fixed_step = Some(h);
        self
    }

    pub fn autonomous(mut self) -> Self {
        self.autonomous = true;
        self
    }

    pub fn max_step(mut self, h_max: T) -> Self {
        self.h_max = h_max;
        self
    }
}

// Butcher tableau
const C: [f64; 7] = [0.0, 0.2, 0.3, 0.8, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [0.2, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
// fifth-order weights minus embedded fourth-order weights
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

// PI controller exponents
const BETA: f64 = 0.04;
const ALPHA: f64 = 0.2 - 0.75 * BETA;
const SAFETY: f64 = 0.9;
const MIN_FACTOR: f64 = 0.2;
const MAX_FACTOR: f64 = 10.0;

enum StepFailure {
    Rhs(String),
    NonFinite,
}

struct Stepper<'a, T, F> {
    rhs: &'a mut F,
    dim: usize,
    k: [Vec<T>; 7],
    stage: Vec<T>,
    y_new: Vec<T>,
    err: Vec<T>,
    evals: usize,
}

impl<'a, T, F, E> Stepper<'a, T, F>
where
    T: Real,
    F: FnMut(T, &[T], &mut [T]) -> Result<(), E>,
    E: Display,
{
    fn new(rhs: &'a mut F, dim: usize) -> Self {
        let z = || vec![T::zero(); dim];
        Self {
            rhs,
            dim,
            k: [z(), z(), z(), z(), z(), z(), z()],
            stage: z(),
            y_new: z(),
            err: z(),
            evals: 0,
        }
    }

    fn eval(&mut self, l: T, y: &[T], idx: usize) -> Result<(), StepFailure> {
        self.evals += 1;
        let out = &mut self.k[idx];
        (self.rhs)(l, y, out).map_err(|e| StepFailure::Rhs(e.to_string()))?;
        if out.iter().any(|v| !v.is_finite()) {
            return Err(StepFailure::NonFinite);
        }
        Ok(())
    }

    /// Computes `k[0]` at the current point.
    fn prime(&mut self, l: T, y: &[T]) -> Result<(), StepFailure> {
        self.eval(l, y, 0)
    }

    /// Attempts one step of size `h` assuming `k[0]` holds `f(l, y)`.
    /// Leaves the candidate in `y_new` and `f(l+h, y_new)` in `k[6]`.
    fn attempt(&mut self, l: T, y: &[T], h: T) -> Result<(), StepFailure> {
        self.attempt_observed(l, y, h, |_| {})
    }

    /// [`Self::attempt`] that also hands every intermediate stage state to
    /// `observe`.
    fn attempt_observed<O: FnMut(&[T])>(&mut self, l: T, y: &[T], h: T, mut observe: O) -> Result<(), StepFailure> {
        for s in 1..7 {
            for i in 0..self.dim {
                let mut acc = T::zero();
                for (j, &a) in A[s].iter().enumerate().take(s) {
                    if a != 0.0 {
                        acc += T::lit(a) * self.k[j][i];
                    }
                }
                self.stage[i] = y[i] + h * acc;
            }
            let ls = l + T::lit(C[s]) * h;
            let stage = std::mem::take(&mut self.stage);
            observe(&stage);
            let r = self.eval(ls, &stage, s);
            self.stage = stage;
            r?;
        }
        // k[6] was evaluated at the fifth-order solution, which equals the last stage
        self.y_new.copy_from_slice(&self.stage);
        for i in 0..self.dim {
            let mut acc = T::zero();
            for (j, &e) in E.iter().enumerate() {
                if e != 0.0 {
                    acc += T::lit(e) * self.k[j][i];
                }
            }
            self.err[i] = h * acc;
        }
        Ok(())
    }

    fn error_norm(&self, y: &[T], rel_tol: T, abs_tol: T) -> T {
        let mut sum = T::zero();
        for i in 0..self.dim {
            let scale = abs_tol + rel_tol * y[i].abs().max(self.y_new[i].abs());
            let r = self.err[i] / scale;
            sum += r * r;
        }
        (sum / T::count(self.dim.max(1))).sqrt()
    }
}

pub(crate) fn norm<T: Real>(v: &[T]) -> T {
    v.iter().map(|&x| x * x).sum::<T>().sqrt()
}

pub(crate) fn sample<T: Real>(l: T, y: &[T], f: &[T]) -> FlowSample<T> {
    FlowSample {
        l,
        state: y.to_vec(),
        rhs_norm: norm(f),
        diagnostics: BTreeMap::new(),
    }
}

/// Integrates `dy/dl = rhs(l, y)` from `l = 0` to `options.l_max`.
///
/// Every accepted step is recorded. The run stops early when `escape` returns
/// true for an accepted state, when the step size falls below `h_min`, or when
/// the right-hand side fails or returns a non-finite value.
pub fn integrate_flow<T, F, E, P>(rhs: F, state0: &[T], options: &FlowOptions<T>, escape: P) -> FlowTrace<T>
where
    T: Real,
    F: FnMut(T, &[T], &mut [T]) -> Result<(), E>,
    E: Display,
    P: FnMut(T, &[T]) -> bool,
{
    run(rhs, state0, options, escape, None::<fn(&[T]) -> T>)
}

/// Like [`integrate_flow`] but treats the zero set of `switch` as a surface
/// across which the right-hand side changes formula. A step whose endpoints
/// lie on different sides is cut back by bisection so that the accepted
/// state lands just past the surface; integration then resumes from there.
pub fn integrate_flow_switched<T, F, E, P, S>(
    rhs: F,
    state0: &[T],
    options: &FlowOptions<T>,
    escape: P,
    switch: S,
) -> FlowTrace<T>
where
    T: Real,
    F: FnMut(T, &[T], &mut [T]) -> Result<(), E>,
    E: Display,
    P: FnMut(T, &[T]) -> bool,
    S: Fn(&[T]) -> T,
{
    run(rhs, state0, options, escape, Some(switch))
}

fn run<T, F, E, P, S>(
    mut rhs: F,
    state0: &[T],
    options: &FlowOptions<T>,
    mut escape: P,
    switch: Option<S>,
) -> FlowTrace<T>
where
    T: Real,
    F: FnMut(T, &[T], &mut [T]) -> Result<(), E>,
    E: Display,
    P: FnMut(T, &[T]) -> bool,
    S: Fn(&[T]) -> T,
{
    assert!(options.l_max > T::zero(), "l_max must be positive");
    assert!(options.rel_tol > T::zero() && options.abs_tol > T::zero(), "tolerances must be positive");

    let dim = state0.len();
    let mut stats = FlowStats::default();
    let mut stepper = Stepper::new(&mut rhs, dim);
    let mut l = T::zero();
    let mut y = state0.to_vec();
    let mut samples = Vec::new();

    let finish = |samples, reason, failure: Option<String>, mut stats: FlowStats, evals| {
        stats.rhs_evals = evals;
        FlowTrace::new(samples, reason, failure, stats)
    };

    match stepper.prime(l, &y) {
        Ok(()) => samples.push(sample(l, &y, &stepper.k[0])),
        Err(e) => {
            let msg = failure_message(e, l);
            return finish(samples, TerminalReason::NumericFailure, Some(msg), stats, stepper.evals);
        }
    }
    if escape(l, &y) {
        return finish(samples, TerminalReason::Escaped, None, stats, stepper.evals);
    }

    let mut h = match (options.fixed_step, options.h_init) {
        (Some(h), _) => h,
        (None, Some(h)) => h,
        (None, None) => initial_step(&y, &stepper.k[0], options),
    };
    let mut err_prev = T::lit(1e-4);

    loop {
        if stats.accepted >= options.max_steps {
            let msg = format!("step budget of {} exhausted at l = {}", options.max_steps, l);
            return finish(samples, TerminalReason::NumericFailure, Some(msg), stats, stepper.evals);
        }
        // below a few ulp of l the step no longer advances l
        let h_floor = options.h_min.max(T::lit(4.0) * T::epsilon() * l.abs());
        let remaining = options.l_max - l;
        let mut last = false;
        if h >= remaining {
            h = remaining;
            last = true;
        }
        if !last && options.fixed_step.is_none() && h < h_floor {
            return finish(samples, TerminalReason::StepUnderflow, None, stats, stepper.evals);
        }

        match stepper.attempt(l, &y, h) {
            Ok(()) => {}
            Err(e) => {
                if options.fixed_step.is_some() {
                    let msg = failure_message(e, l);
                    return finish(samples, TerminalReason::NumericFailure, Some(msg), stats, stepper.evals);
                }
                // A failing trial stage may only mean the step overshot into a
                // region where the rhs is undefined; shrink before giving up.
                stats.rejected += 1;
                let last_failure = Some(failure_message(e, l));
                h = h * T::lit(0.25);
                if h < h_floor {
                    return finish(samples, TerminalReason::NumericFailure, last_failure, stats, stepper.evals);
                }
                continue;
            }
        }

        let accept;
        let mut h_next = h;
        if options.fixed_step.is_some() {
            accept = true;
        } else {
            let err = stepper.error_norm(&y, options.rel_tol, options.abs_tol);
            if !err.is_finite() {
                accept = false;
                h_next = h * T::lit(MIN_FACTOR);
            } else if err <= T::one() {
                accept = true;
                let factor = if err == T::zero() {
                    T::lit(MAX_FACTOR)
                } else {
                    T::lit(SAFETY) * err.powf(-T::lit(ALPHA)) * err_prev.powf(T::lit(BETA))
                };
                let factor = factor.min(T::lit(MAX_FACTOR)).max(T::lit(MIN_FACTOR));
                h_next = (h * factor).min(options.h_max);
                err_prev = err.max(T::lit(1e-4));
            } else {
                accept = false;
                let factor = (T::lit(SAFETY) * err.powf(-T::lit(ALPHA))).max(T::lit(MIN_FACTOR));
                h_next = h * factor;
            }
        }

        if !accept {
            stats.rejected += 1;
            h = h_next;
            if h < h_floor {
                return finish(samples, TerminalReason::StepUnderflow, None, stats, stepper.evals);
            }
            continue;
        }

        let mut l_new = if last { options.l_max } else { l + h };

        if let Some(g) = switch.as_ref() {
            let before = g(&y);
            let after = g(&stepper.y_new);
            if before != T::zero() && before.signum() != after.signum() {
                match land_past_surface(&mut stepper, g, l, &y, h, before, h_floor) {
                    Ok(h_cross) => {
                        stats.switch_crossings += 1;
                        l_new = l + h_cross;
                        last = false;
                        h_next = h_next.min(h);
                    }
                    Err(e) => {
                        let msg = failure_message(e, l);
                        return finish(samples, TerminalReason::NumericFailure, Some(msg), stats, stepper.evals);
                    }
                }
            }
        }

        stats.accepted += 1;
        l = l_new;
        y.copy_from_slice(&stepper.y_new);
        let k6 = std::mem::take(&mut stepper.k[6]);
        samples.push(sample(l, &y, &k6));
        stepper.k[0].copy_from_slice(&k6);
        stepper.k[6] = k6;

        if escape(l, &y) {
            return finish(samples, TerminalReason::Escaped, None, stats, stepper.evals);
        }
        if last || l >= options.l_max {
            return finish(samples, TerminalReason::ReachedLMax, None, stats, stepper.evals);
        }
        h = options.fixed_step.unwrap_or(h_next);
    }
}

/// Finds the shortest fraction of the step `h` whose endpoint has crossed the
/// switching surface and leaves that endpoint (and its slope) in the stepper.
///
/// A trial step only counts as short of the surface when every stage state
/// stays on the starting side, so the landing step samples the far branch
/// over at most the final bisection interval.
fn land_past_surface<T, F, E, G>(
    stepper: &mut Stepper<'_, T, F>,
    g: &G,
    l: T,
    y: &[T],
    h: T,
    before: T,
    h_min: T,
) -> Result<T, StepFailure>
where
    T: Real,
    F: FnMut(T, &[T], &mut [T]) -> Result<(), E>,
    E: Display,
    G: Fn(&[T]) -> T,
{
    let k0 = stepper.k[0].clone();
    let mut lo = T::zero();
    let mut hi = h;
    for _ in 0..200 {
        if hi - lo <= h_min.max(T::epsilon() * h) {
            break;
        }
        let mid = T::half() * (lo + hi);
        stepper.k[0].copy_from_slice(&k0);
        let mut same_side = true;
        stepper.attempt_observed(l, y, mid, |stage| {
            same_side &= g(stage).signum() == before.signum();
        })?;
        if same_side && g(&stepper.y_new).signum() == before.signum() {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    stepper.k[0].copy_from_slice(&k0);
    stepper.attempt(l, y, hi)?;
    Ok(hi)
}

fn failure_message<T: Real>(e: StepFailure, l: T) -> String {
    match e {
        StepFailure::Rhs(msg) => format!("rhs failed near l = {l}: {msg}"),
        StepFailure::NonFinite => format!("non-finite derivative near l = {l}"),
    }
}

fn initial_step<T: Real>(y: &[T], f: &[T], options: &FlowOptions<T>) -> T {
    let d0 = norm(y);
    let d1 = norm(f);
    let h = if d0 < T::lit(1e-5) || d1 < T::lit(1e-5) {
        T::lit(1e-3)
    } else {
        T::lit(0.01) * d0 / d1
    };
    h.min(options.h_max).min(options.l_max).max(options.h_min * T::lit(10.0))
}
