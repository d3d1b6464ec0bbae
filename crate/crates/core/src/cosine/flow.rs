//! Flow equations, driver and classification for the cosine potential.

use serde::Serialize;

use crate::cosine::potential::{suppress_roundoff, CosineBasis, CosinePotential, DEFAULT_GRID_N};
use crate::cosine::{CosineError, CosineParams, CosineState};
use crate::flowcore::loops::{inverse_propagator_loop, power_loop};
use crate::flowcore::{integrate_flow_stiff, FlowOptions, FlowTrace, GaussLegendre, MomentumQuadrature, TerminalReason};
use crate::phase::{Phase, PhaseLabel};
use crate::scalar::Real;

/// `max_n |ε⁽ⁿ⁾|` above which the potential counts as relevant. Convexity of
/// the flowing potential keeps the harmonics near or below one, so the
/// potential reaching the running cutoff is the signal.
pub const DEFAULT_GROWTH_CEILING: f64 = 1.0;

/// `max_n |ε⁽ⁿ⁾|` below which a run with `τ < 1` counts as insulating.
pub const DEFAULT_EPS_FLOOR: f64 = 1e-4;

pub const DEFAULT_L_MAX_COSINE: f64 = 60.0;

/// Relative size of the harmonics beyond the truncation that marks a run as
/// under-resolved.
pub const TAIL_RATIO_LIMIT: f64 = 1e-6;

/// Absolute level below which tail harmonics are treated as round-off.
const TAIL_NOISE_FLOOR: f64 = 1e-15;

/// Step used by [`gamma_nonrenormalization_check`].
pub const NONRENORMALIZATION_STEP: f64 = 1e-3;

/// Discretization and loop settings of the cosine flow.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CosineModel<T> {
    pub grid_n: usize,
    /// Highest harmonic kept in `V̄'''` for the `τ` flow.
    pub third_max: usize,
    /// Keep the contact term that the `|p̄|` kink of the propagator
    /// contributes to `∂²_p̄ Ḡ` at `p̄' = 0`.
    pub kink_term: bool,
    pub quad_tol: T,
}

impl<T: Real> Default for CosineModel<T> {
    fn default() -> Self {
        Self {
            grid_n: DEFAULT_GRID_N,
            third_max: 32,
            kink_term: true,
            quad_tol: T::lit(1e-10),
        }
    }
}

impl<T: Real> CosineModel<T> {
    pub fn validate(&self) -> Result<(), CosineError> {
        if self.grid_n < 3 {
            return Err(CosineError::GridTooSmall(self.grid_n));
        }
        if self.third_max >= self.grid_n {
            return Err(CosineError::AboveNyquist {
                n_max: self.third_max,
                grid_n: self.grid_n,
            });
        }
        if !(self.quad_tol > T::zero()) {
            return Err(CosineError::InvalidParameter {
                name: "quad_tol",
                value: self.quad_tol.as_f64(),
            });
        }
        Ok(())
    }
}

/// `∫ dp̄/(2π) Ḡ(p̄)² ∂²_p̄ Ḡ(p̄)` for `Ḡ = 1/(τ p̄² + b |p̄| + c)`.
///
/// Away from `p̄ = 0` the second derivative is `(2D'² - D D'')/D³`. The kink of
/// `b|p̄|` adds `2b δ(p̄)` to `D''`, which contributes `-b/(π c⁴)`; it is
/// included when `kink_term` is set.
pub fn tau_loop<T: Real>(tau: T, b: T, c: T, quad_tol: T, kink_term: bool) -> Result<T, CosineError> {
    let scale = if tau > T::zero() {
        (c / b).min((c / tau).sqrt())
    } else {
        c / b
    };
    let c4 = (c * c) * (c * c);
    let boundary = b / (T::PI() * c4);
    // integrating 2D'²/D⁵ by parts leaves b/(2c⁴) - τ ∫ D⁻⁴
    let smooth = match power_loop(4, tau, b, c) {
        Some(j4) => (T::half() * b / c4 - tau * j4) / T::PI(),
        None => {
            MomentumQuadrature::new(quad_tol)
                .with_scale(scale)
                .with_abs_tol(quad_tol * boundary)
                .half_axis(|p| {
                    let g = T::one() / ((tau * p + b) * p + c);
                    let dg = (b + T::two() * tau * p) * g;
                    let g3 = g * g * g;
                    T::two() * (dg * dg - tau * g) * g3
                })?
                / T::PI()
        }
    };
    Ok(if kink_term { smooth - boundary } else { smooth })
}

/// `∫ dp̄/(2π) Ḡ²` at `V̄'' = 0`.
fn second_loop_at_unit_mass<T: Real>(tau: T, b: T, quad_tol: T) -> Result<T, CosineError> {
    let scale = if tau > T::zero() { (T::one() / b).min((T::one() / tau).sqrt()) } else { T::one() / b };
    let v = MomentumQuadrature::new(quad_tol).with_scale(scale).half_axis(|p| {
        let g = T::one() / ((tau * p + b) * p + T::one());
        g * g
    })?;
    Ok(v / T::PI())
}

/// Growth rate `∂_l ln|ε⁽ⁿ⁾|` of an infinitesimal harmonic `n` at fixed `τ`:
/// `1 - (n²/2) ∫ dp̄/(2π) Ḡ₀²` with `Ḡ₀` the propagator of the flat potential.
pub fn linearized_slope<T: Real>(tau: T, alpha: T, n: usize, quad_tol: T) -> Result<T, CosineError> {
    let b = alpha / (T::two() * T::PI());
    let i2 = second_loop_at_unit_mass(tau, b, quad_tol)?;
    Ok(T::one() - T::half() * T::count(n * n) * i2)
}

/// Per-run workspace: transform tables and scratch buffers.
struct Evaluator<T> {
    model: CosineModel<T>,
    basis: CosineBasis<T>,
    coeffs: Vec<T>,
    second: Vec<T>,
    third: Vec<T>,
    scratch: Vec<T>,
}

impl<T: Real> Evaluator<T> {
    fn new(model: CosineModel<T>) -> Result<Self, CosineError> {
        model.validate()?;
        let n = model.grid_n;
        Ok(Self {
            model,
            basis: CosineBasis::new(n)?,
            coeffs: vec![T::zero(); n],
            second: vec![T::zero(); n],
            third: vec![T::zero(); n],
            scratch: vec![T::zero(); n],
        })
    }

    fn derivatives(&mut self, values: &[T]) {
        let n = self.model.grid_n;
        self.basis.forward(values, &mut self.coeffs);
        suppress_roundoff(&mut self.coeffs, values);
        self.basis.synth_cos(&self.coeffs, n - 1, |h| -T::count(h * h), &mut self.second);
        self.basis
            .synth_sin(&self.coeffs, self.model.third_max, |h| T::count(h * h * h), &mut self.third);
    }

    fn check_convexity(&self) -> Result<(), CosineError> {
        for (j, &v2) in self.second.iter().enumerate() {
            let c = v2 + T::one();
            if !(c > T::zero()) {
                return Err(CosineError::Convexity {
                    index: j,
                    phi: self.basis.phi(j).as_f64(),
                    curvature: c.as_f64(),
                });
            }
        }
        Ok(())
    }

    /// Writes `∂_l V̄` into `dv` and returns `∂_l τ`.
    fn rhs(&mut self, alpha: T, tau: T, values: &[T], dv: &mut [T]) -> Result<T, CosineError> {
        if !(tau > T::zero()) {
            return Err(CosineError::NonPositiveTau(tau.as_f64()));
        }
        self.derivatives(values);
        self.check_convexity()?;
        let b = alpha / (T::two() * T::PI());
        let mut avg = T::zero();
        for j in 0..self.model.grid_n {
            let c = self.second[j] + T::one();
            dv[j] = values[j] - T::half() * inverse_propagator_loop(tau, b, c);
            let v3 = self.third[j];
            if v3 != T::zero() {
                let k = tau_loop(tau, b, c, self.model.quad_tol, self.model.kink_term)?;
                avg += self.basis.average_weight(j) * v3 * v3 * k;
            }
        }
        // drop the constant mode: c_0 of the cosine series is the trapezoid mean
        let mean: T = (0..self.model.grid_n).map(|j| self.basis.average_weight(j) * dv[j]).sum();
        dv.iter_mut().for_each(|v| *v -= mean);
        Ok(-tau - T::half() * avg)
    }

    fn harmonics(&mut self, values: &[T]) -> &[T] {
        self.basis.forward(values, &mut self.scratch);
        &self.scratch
    }
}

/// `(∂_l τ, ∂_l V̄ on the grid)`.
pub fn rhs_cosine<T: Real>(state: &CosineState<T>, model: &CosineModel<T>) -> Result<(T, Vec<T>), CosineError> {
    let model = CosineModel {
        grid_n: state.potential.len(),
        ..*model
    };
    let mut ev = Evaluator::new(model)?;
    let mut dv = vec![T::zero(); model.grid_n];
    let dtau = ev.rhs(state.alpha, state.tau, state.potential.values(), &mut dv)?;
    Ok((dtau, dv))
}

/// `∫ dp̄'/(2π) Ḡ(p̄')² Ḡ(p̄ + p̄')`, split at both kinks.
fn vertex_loop<T: Real>(tau: T, b: T, c: T, p: T, quad_tol: T) -> Result<T, CosineError> {
    let g = |q: T| T::one() / ((tau * q.abs() + b) * q.abs() + c);
    let f = |q: T| {
        let a = g(q);
        a * a * g(p + q)
    };
    let lo = T::zero().min(-p);
    let hi = T::zero().max(-p);
    let scale = if tau > T::zero() { (c / b).min((c / tau).sqrt()) } else { c / b };
    let quad = MomentumQuadrature::new(quad_tol).with_scale(scale);
    let upper = quad.half_axis(|q| f(hi + q))?;
    let lower = quad.half_axis(|q| f(lo - q))?;
    let middle = if hi > lo {
        GaussLegendre::default_rule().integrate(lo, hi, f)
    } else {
        T::zero()
    };
    Ok((upper + lower + middle) / (T::two() * T::PI()))
}

/// Coefficient of `|p̄|` in the small-`p̄` expansion of the two-point vertex
/// `⟨V̄'''²⟩ ∫ dp̄'/(2π) Ḡ(p̄')² Ḡ(p̄ + p̄')`, fitted from `p̄ ∈ {0, ±h, ±2h}`.
/// A nonzero value would mean the Ohmic coupling renormalizes.
pub fn gamma_nonrenormalization_check<T: Real>(state: &CosineState<T>, model: &CosineModel<T>) -> Result<T, CosineError> {
    let model = CosineModel {
        grid_n: state.potential.len(),
        ..*model
    };
    let mut ev = Evaluator::new(model)?;
    ev.derivatives(state.potential.values());
    ev.check_convexity()?;
    let b = state.alpha / (T::two() * T::PI());
    let h = T::lit(NONRENORMALIZATION_STEP);
    let offsets = [T::zero(), h, -h, T::two() * h, -T::two() * h];
    let mut f = [T::zero(); 5];
    for j in 0..model.grid_n {
        let v3 = ev.third[j];
        if v3 == T::zero() {
            continue;
        }
        let c = ev.second[j] + T::one();
        let w = ev.basis.average_weight(j) * v3 * v3;
        for (k, &p) in offsets.iter().enumerate() {
            f[k] += w * vertex_loop(state.tau, b, c, p, model.quad_tol)?;
        }
    }
    let even1 = T::half() * (f[1] + f[2]) - f[0];
    let even2 = T::half() * (f[3] + f[4]) - f[0];
    // even part = c₁|p| + c₂p² + …; eliminate c₂
    Ok((T::lit(4.0) * even1 - even2) / (T::two() * h))
}

/// A finished cosine flow. Trace samples hold `[τ, V̄_0 … V̄_{N-1}]` with
/// diagnostics `tau`, `eps1`, `eps2`, `eps3`, `max_abs_eps` and `tail_ratio`.
#[derive(Debug, Clone)]
pub struct CosineRun<T> {
    pub params: CosineParams<T>,
    pub model: CosineModel<T>,
    pub trace: FlowTrace<T>,
}

impl<T: Real> CosineRun<T> {
    pub fn default_options() -> FlowOptions<T> {
        FlowOptions::new(T::lit(DEFAULT_L_MAX_COSINE)).tolerances(T::lit(1e-7), T::lit(1e-12))
            .autonomous()
    }

    /// Whether the harmonics beyond the `V̄'''` truncation exceeded
    /// [`TAIL_RATIO_LIMIT`] relative to the largest harmonic at any sample.
    pub fn under_resolved(&self) -> bool {
        under_resolved(&self.trace)
    }
}

fn under_resolved<T: Real>(trace: &FlowTrace<T>) -> bool {
    trace
        .samples()
        .iter()
        .any(|s| s.diagnostics.get("tail_ratio").is_some_and(|&r| r > T::lit(TAIL_RATIO_LIMIT)))
}

/// Integrates the flow from `params`. With `growth_ceiling = Some(g)` the run
/// stops once `max_n |ε⁽ⁿ⁾| > g`.
pub fn run_cosine<T: Real>(
    params: &CosineParams<T>,
    model: &CosineModel<T>,
    options: &FlowOptions<T>,
    growth_ceiling: Option<T>,
) -> Result<CosineRun<T>, CosineError> {
    let state0 = params.initial_state(model.grid_n)?;
    let mut y0 = Vec::with_capacity(model.grid_n + 1);
    y0.push(state0.tau);
    y0.extend_from_slice(state0.potential.values());

    let mut ev = Evaluator::new(*model)?;
    let mut watcher = Evaluator::new(*model)?;
    let alpha = params.alpha;
    let mut trace = integrate_flow_stiff(
        |_, y: &[T], dy: &mut [T]| -> Result<(), CosineError> {
            let (dtau, dv) = dy.split_first_mut().expect("state has tau");
            *dtau = ev.rhs(alpha, y[0], &y[1..], dv)?;
            Ok(())
        },
        &y0,
        options,
        |_, y: &[T]| match growth_ceiling {
            Some(g) => max_abs(&watcher.harmonics(&y[1..])[1..]) > g,
            None => false,
        },
    );

    for s in trace.samples_mut() {
        let c = watcher.harmonics(&s.state[1..]).to_vec();
        let max_eps = max_abs(&c[1..]);
        let tail = max_abs(&c[model.third_max..]);
        let noise = T::lit(TAIL_NOISE_FLOOR);
        let ratio = if tail <= noise || max_eps == T::zero() { T::zero() } else { tail / max_eps };
        s.diagnostics.insert("tau", s.state[0]);
        s.diagnostics.insert("eps1", c[1].abs());
        s.diagnostics.insert("eps2", c.get(2).map_or(T::zero(), |v| v.abs()));
        s.diagnostics.insert("eps3", c.get(3).map_or(T::zero(), |v| v.abs()));
        s.diagnostics.insert("max_abs_eps", max_eps);
        s.diagnostics.insert("tail_ratio", ratio);
    }
    Ok(CosineRun {
        params: *params,
        model: *model,
        trace,
    })
}

fn max_abs<T: Real>(v: &[T]) -> T {
    v.iter().fold(T::zero(), |m, x| m.max(x.abs()))
}

/// Labels a trace produced by [`run_cosine`].
pub fn classify_cosine<T: Real>(trace: &FlowTrace<T>, eps_floor: T, growth_ceiling: T) -> Result<PhaseLabel, CosineError> {
    let last = trace.last().ok_or(CosineError::EmptyTrace)?;
    let eps = |s: &crate::flowcore::FlowSample<T>| s.diagnostics.get("max_abs_eps").copied().unwrap_or(T::nan());
    let tau = last.state[0];
    let relevant = trace.samples().iter().any(|s| eps(s) > growth_ceiling);
    let phase = if relevant {
        Phase::Superconducting
    } else if trace.terminal_reason() == TerminalReason::ReachedLMax && eps(last) < eps_floor && tau < T::one() {
        Phase::Insulating
    } else {
        Phase::Undetermined
    };
    let diag = |k: &str| last.diagnostics.get(k).map_or(f64::NAN, |v| v.as_f64());
    Ok(PhaseLabel::new(phase, last.l.as_f64())
        .with("tau", tau.as_f64())
        .with("max_abs_eps", eps(last).as_f64())
        .with("eps1", diag("eps1"))
        .with("under_resolved", if under_resolved(trace) { 1.0 } else { 0.0 }))
}

/// Trajectory table in the column order
/// `l, tau, eps1, eps2, eps3, max_abs_eps, phase_flag`, where `phase_flag` is
/// `1` above the growth ceiling, `-1` below the floor with `τ < 1`, else `0`.
pub fn trajectory_rows<T: Real>(run: &CosineRun<T>, eps_floor: T, growth_ceiling: T) -> Vec<Vec<Option<f64>>> {
    run.trace
        .samples()
        .iter()
        .map(|s| {
            let d = |k: &str| s.diagnostics.get(k).copied().unwrap_or(T::nan());
            let m = d("max_abs_eps");
            let flag = if m > growth_ceiling {
                1.0
            } else if m < eps_floor && s.state[0] < T::one() {
                -1.0
            } else {
                0.0
            };
            vec![
                Some(s.l.as_f64()),
                Some(s.state[0].as_f64()),
                Some(d("eps1").as_f64()),
                Some(d("eps2").as_f64()),
                Some(d("eps3").as_f64()),
                Some(m.as_f64()),
                Some(flag),
            ]
        })
        .collect()
}

impl<T: Real> CosineState<T> {
    pub fn with_potential(l: T, tau: T, alpha: T, potential: CosinePotential<T>) -> Self {
        Self {
            l,
            tau,
            potential,
            alpha,
        }
    }
}
