//! Critical points by bisection, phase-boundary sweeps and the susceptibility
//! exponent.
//!
//! Every scan assumes the phase is monotone along its axis. A bracket whose
//! ends carry the same label is rejected rather than searched.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::cosine::{classify_cosine, run_cosine, CosineError, CosineModel, CosineParams, CosineRun};
use crate::cosine::{DEFAULT_EPS_FLOOR, DEFAULT_GROWTH_CEILING};
use crate::doublewell::{
    classify_double_well, run_double_well, susceptibility, DoubleWellError, DoubleWellParams, DoubleWellRun,
    DEFAULT_ALPHA_SETTLE_TOL, DEFAULT_RHO_ESCAPE,
};
use crate::phase::{Phase, PhaseLabel};
use crate::scalar::Real;

/// Default relative bracket width at which bisection stops.
pub const DEFAULT_TOL_REL: f64 = 1e-3;

const MAX_BISECTIONS: usize = 200;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ScanError {
    #[error("bracket [{lo}, {hi}] is not valid: ends classify as {lo_phase} and {hi_phase}")]
    InvalidBracket {
        lo: f64,
        hi: f64,
        lo_phase: Phase,
        hi_phase: Phase,
    },
    #[error("classification stays undetermined near {value} after retrying from both sides")]
    PersistentUndetermined {
        value: f64,
        history: Vec<(f64, PhaseLabel)>,
    },
    #[error("axis {axis} does not apply to the {model} model")]
    AxisMismatch { axis: ScanAxis, model: &'static str },
    #[error("exponent fit needs at least 4 points, got {0}")]
    TooFewPoints(usize),
    #[error("exponent fit needs chi > 0 and gamma != gamma_c, got ({gamma}, {chi})")]
    InvalidPoint { gamma: f64, chi: f64 },
    #[error("all |gamma - gamma_c| coincide; the slope is undefined")]
    DegenerateAbscissae,
    #[error("parameter `{name}` invalid: {value}")]
    InvalidParameter { name: &'static str, value: f64 },
    #[error(transparent)]
    DoubleWell(#[from] DoubleWellError),
    #[error(transparent)]
    Cosine(#[from] CosineError),
}

/// Coordinate along which a critical point is searched.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ScanAxis {
    InvVHat0,
    EjOverLambda0,
    Gamma,
}

impl ScanAxis {
    pub fn as_str(&self) -> &'static str {
        match self {
            ScanAxis::InvVHat0 => "inv_v_hat0",
            ScanAxis::EjOverLambda0 => "e_j_over_lambda0",
            ScanAxis::Gamma => "gamma",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        [ScanAxis::InvVHat0, ScanAxis::EjOverLambda0, ScanAxis::Gamma]
            .into_iter()
            .find(|a| a.as_str() == s)
    }

    /// `base` with this coordinate replaced by `value`.
    pub fn apply_double_well<T: Real>(&self, base: &DoubleWellParams<T>, value: T) -> Result<DoubleWellParams<T>, ScanError> {
        let mut p = *base;
        match self {
            ScanAxis::InvVHat0 => p.inv_v_hat0 = value,
            ScanAxis::Gamma => p.gamma = value,
            ScanAxis::EjOverLambda0 => {
                return Err(ScanError::AxisMismatch {
                    axis: *self,
                    model: "double-well",
                })
            }
        }
        p.validate()?;
        Ok(p)
    }

    pub fn apply_cosine<T: Real>(&self, base: &CosineParams<T>, value: T) -> Result<CosineParams<T>, ScanError> {
        match self {
            ScanAxis::EjOverLambda0 => Ok(CosineParams::new(base.alpha, value, base.e_c_over_lambda0)?),
            ScanAxis::Gamma => Ok(CosineParams::new(value, base.e_j_over_lambda0, base.e_c_over_lambda0)?),
            ScanAxis::InvVHat0 => Err(ScanError::AxisMismatch {
                axis: *self,
                model: "cosine",
            }),
        }
    }
}

impl std::fmt::Display for ScanAxis {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A bisection in progress or finished.
#[derive(Debug, Clone, Serialize)]
pub struct CriticalScan<T> {
    pub axis: ScanAxis,
    pub lo: T,
    pub hi: T,
    /// Everything held fixed, for the record.
    pub fixed_params: BTreeMap<String, f64>,
    pub tol_rel: T,
    pub result: Option<T>,
    /// Every classification made, in evaluation order.
    pub bracket_history: Vec<(T, PhaseLabel)>,
}

impl<T: Real> CriticalScan<T> {
    pub fn new(axis: ScanAxis, lo: T, hi: T, tol_rel: T) -> Self {
        Self {
            axis,
            lo,
            hi,
            fixed_params: BTreeMap::new(),
            tol_rel,
            result: None,
            bracket_history: Vec::new(),
        }
    }

    pub fn with_fixed(mut self, name: &str, value: f64) -> Self {
        self.fixed_params.insert(name.to_owned(), value);
        self
    }

    fn history_f64(&self) -> Vec<(f64, PhaseLabel)> {
        self.bracket_history.iter().map(|(v, l)| (v.as_f64(), l.clone())).collect()
    }
}

/// Bisects `[scan.lo, scan.hi]` until its width is at most
/// `tol_rel·|midpoint|` and returns the midpoint.
///
/// An undetermined midpoint is retried once with probes a quarter of the
/// bracket to either side; whichever probes are determined shrink the bracket.
pub fn bisect_critical<T, F>(scan: &mut CriticalScan<T>, mut classifier: F) -> Result<T, ScanError>
where
    T: Real,
    F: FnMut(T) -> Result<PhaseLabel, ScanError>,
{
    if !(scan.tol_rel > T::zero()) {
        return Err(ScanError::InvalidParameter {
            name: "tol_rel",
            value: scan.tol_rel.as_f64(),
        });
    }
    if !(scan.lo < scan.hi) {
        return Err(ScanError::InvalidParameter {
            name: "hi",
            value: scan.hi.as_f64(),
        });
    }
    let mut label = |scan: &mut CriticalScan<T>, x: T| -> Result<Phase, ScanError> {
        let l = classifier(x)?;
        let p = l.phase;
        scan.bracket_history.push((x, l));
        Ok(p)
    };
    let lo_phase = label(scan, scan.lo)?;
    let hi_phase = label(scan, scan.hi)?;
    if lo_phase == hi_phase || !lo_phase.is_determined() || !hi_phase.is_determined() {
        return Err(ScanError::InvalidBracket {
            lo: scan.lo.as_f64(),
            hi: scan.hi.as_f64(),
            lo_phase,
            hi_phase,
        });
    }

    for _ in 0..MAX_BISECTIONS {
        let mid = T::half() * (scan.lo + scan.hi);
        if scan.hi - scan.lo <= scan.tol_rel * mid.abs() {
            break;
        }
        let phase = label(scan, mid)?;
        if phase == lo_phase {
            scan.lo = mid;
        } else if phase == hi_phase {
            scan.hi = mid;
        } else {
            let quarter = T::half() * T::half() * (scan.hi - scan.lo);
            let (left, right) = (mid - quarter, mid + quarter);
            let pl = label(scan, left)?;
            let pr = label(scan, right)?;
            let (old_lo, old_hi) = (scan.lo, scan.hi);
            // a probe may land on either side; keep the tightest valid bracket
            for (x, p) in [(left, pl), (right, pr)] {
                if p == lo_phase && x > scan.lo {
                    scan.lo = x;
                }
            }
            for (x, p) in [(right, pr), (left, pl)] {
                if p == hi_phase && x < scan.hi {
                    scan.hi = x;
                }
            }
            if scan.lo >= scan.hi {
                // probes disagree with monotonicity
                return Err(ScanError::InvalidBracket {
                    lo: left.as_f64(),
                    hi: right.as_f64(),
                    lo_phase: pl,
                    hi_phase: pr,
                });
            }
            if scan.lo == old_lo && scan.hi == old_hi {
                return Err(ScanError::PersistentUndetermined {
                    value: mid.as_f64(),
                    history: scan.history_f64(),
                });
            }
        }
    }
    let result = T::half() * (scan.lo + scan.hi);
    scan.result = Some(result);
    Ok(result)
}

/// Phase of a double-well flow with the default integration settings. The
/// run stops as soon as the minimum crosses to the delocalized branch.
pub fn double_well_phase<T: Real>(params: &DoubleWellParams<T>) -> Result<PhaseLabel, ScanError> {
    let escape = T::lit(DEFAULT_RHO_ESCAPE);
    let run = run_double_well(params, &DoubleWellRun::default_options(), Some(escape))?;
    Ok(classify_double_well(&run.trace, escape, T::lit(DEFAULT_ALPHA_SETTLE_TOL))?)
}

/// Phase of a cosine flow with the default integration settings; the run
/// stops once the potential passes the growth ceiling.
pub fn cosine_phase<T: Real>(params: &CosineParams<T>, model: &CosineModel<T>) -> Result<PhaseLabel, ScanError> {
    let ceiling = T::lit(DEFAULT_GROWTH_CEILING);
    let run = run_cosine(params, model, &CosineRun::default_options(), Some(ceiling))?;
    Ok(classify_cosine(&run.trace, T::lit(DEFAULT_EPS_FLOOR), ceiling)?)
}

/// Ordinary least squares of `ln χ` on `ln|γ - γ_c|`; returns `(κ, r²)`
/// with `κ` the negated slope. A perfectly flat series has `r² = 1`.
pub fn fit_exponent<T: Real>(points: &[(T, T)], gamma_c: T) -> Result<(T, T), ScanError> {
    if points.len() < 4 {
        return Err(ScanError::TooFewPoints(points.len()));
    }
    let mut xs = Vec::with_capacity(points.len());
    let mut ys = Vec::with_capacity(points.len());
    for &(g, chi) in points {
        let d = (g - gamma_c).abs();
        if !(chi > T::zero()) || !(d > T::zero()) || !chi.is_finite() || !d.is_finite() {
            return Err(ScanError::InvalidPoint {
                gamma: g.as_f64(),
                chi: chi.as_f64(),
            });
        }
        xs.push(d.ln());
        ys.push(chi.ln());
    }
    let n = T::count(xs.len());
    let mx = xs.iter().copied().sum::<T>() / n;
    let my = ys.iter().copied().sum::<T>() / n;
    let sxx: T = xs.iter().map(|&x| (x - mx) * (x - mx)).sum();
    let sxy: T = xs.iter().zip(&ys).map(|(&x, &y)| (x - mx) * (y - my)).sum();
    let syy: T = ys.iter().map(|&y| (y - my) * (y - my)).sum();
    if !(sxx > T::epsilon() * T::epsilon() * n) {
        return Err(ScanError::DegenerateAbscissae);
    }
    let slope = sxy / sxx;
    let ss_res: T = xs
        .iter()
        .zip(&ys)
        .map(|(&x, &y)| {
            let r = y - my - slope * (x - mx);
            r * r
        })
        .sum();
    let r2 = if syy > T::zero() { T::one() - ss_res / syy } else { T::one() };
    Ok((-slope, r2))
}

/// Relative distances `|γ - γ_c|/γ_c` sampled for the exponent fit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ExponentWindow {
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
}

impl Default for ExponentWindow {
    fn default() -> Self {
        Self {
            lo: 5e-4,
            hi: 2.5e-2,
            count: 8,
        }
    }
}

impl ExponentWindow {
    /// Log-spaced offsets from `lo` to `hi` inclusive.
    pub fn offsets(&self) -> Vec<f64> {
        if self.count == 1 {
            return vec![self.lo];
        }
        let (a, b) = (self.lo.ln(), self.hi.ln());
        (0..self.count)
            .map(|k| (a + (b - a) * k as f64 / (self.count - 1) as f64).exp())
            .collect()
    }
}

/// Susceptibility points and their power-law fit.
#[derive(Debug, Clone, Serialize)]
pub struct ExponentFit<T> {
    pub gamma_c: T,
    pub window: ExponentWindow,
    /// `(γ, χ)` ordered as the window offsets.
    pub points: Vec<(T, T)>,
    pub kappa: T,
    pub r_squared: T,
}

/// `χ` at the end of delocalized flows with `γ = γ_c (1 - δ)` for each
/// window offset `δ`; the flows run to `l_max` without stopping at the
/// branch crossing.
pub fn susceptibility_series<T: Real>(
    base: &DoubleWellParams<T>,
    gamma_c: T,
    window: &ExponentWindow,
) -> Result<Vec<(T, T)>, ScanError> {
    let offsets = window.offsets();
    offsets
        .par_iter()
        .map(|&d| {
            let gamma = gamma_c * (T::one() - T::lit(d));
            let params = ScanAxis::Gamma.apply_double_well(base, gamma)?;
            let run = run_double_well(&params, &DoubleWellRun::default_options(), None)?;
            Ok((gamma, susceptibility(&run.trace, params.lambda0)?))
        })
        .collect()
}

pub fn exponent_fit<T: Real>(base: &DoubleWellParams<T>, gamma_c: T, window: &ExponentWindow) -> Result<ExponentFit<T>, ScanError> {
    let points = susceptibility_series(base, gamma_c, window)?;
    let (kappa, r_squared) = fit_exponent(&points, gamma_c)?;
    Ok(ExponentFit {
        gamma_c,
        window: *window,
        points,
        kappa,
        r_squared,
    })
}

/// One row of a phase diagram. Values are in units of `E_C`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundaryRow {
    pub alpha: f64,
    pub critical_ej_over_ec: Option<f64>,
    pub bracket: Option<(f64, f64)>,
    pub status: String,
}

impl BoundaryRow {
    pub fn csv_cells(&self) -> (Vec<Option<f64>>, String) {
        (
            vec![
                Some(self.alpha),
                self.critical_ej_over_ec,
                self.bracket.map(|b| b.0),
                self.bracket.map(|b| b.1),
            ],
            self.status.clone(),
        )
    }
}

/// Critical `E_J/E_C` for each `α` at fixed `E_C/Λ₀`, bisecting in
/// `E_J/Λ₀` over `ej_bracket`. Runs in parallel; rows keep the input order.
///
/// For `α ≥ 1` a superconducting lower endpoint gives a critical value of 0.
/// Failures are reported in the row's status and do not stop the sweep.
pub fn sweep_phase_diagram<T: Real>(
    alphas: &[T],
    ej_bracket: (T, T),
    e_c_over_lambda0: T,
    tol_rel: T,
    model: &CosineModel<T>,
) -> Vec<BoundaryRow> {
    alphas
        .par_iter()
        .map(|&alpha| boundary_row(alpha, ej_bracket, e_c_over_lambda0, tol_rel, model))
        .collect()
}

fn boundary_row<T: Real>(alpha: T, ej_bracket: (T, T), e_c: T, tol_rel: T, model: &CosineModel<T>) -> BoundaryRow {
    let to_ec = |v: T| (v / e_c).as_f64();
    let row = |critical, bracket, status: String| BoundaryRow {
        alpha: alpha.as_f64(),
        critical_ej_over_ec: critical,
        bracket,
        status,
    };
    let base = match CosineParams::new(alpha, ej_bracket.0, e_c) {
        Ok(p) => p,
        Err(e) => return row(None, None, format!("error: {e}")),
    };
    let classify = |ej: T| cosine_phase(&ScanAxis::EjOverLambda0.apply_cosine(&base, ej)?, model);

    if alpha >= T::one() {
        match classify(ej_bracket.0) {
            Ok(l) if l.phase == Phase::Superconducting => {
                let b = (to_ec(ej_bracket.0), to_ec(ej_bracket.1));
                return row(Some(0.0), Some(b), "superconducting_throughout".into());
            }
            Ok(_) => {}
            Err(e) => return row(None, None, format!("error: {e}")),
        }
    }
    let mut scan = CriticalScan::new(ScanAxis::EjOverLambda0, ej_bracket.0, ej_bracket.1, tol_rel)
        .with_fixed("alpha", alpha.as_f64())
        .with_fixed("e_c_over_lambda0", e_c.as_f64());
    match bisect_critical(&mut scan, classify) {
        Ok(v) => row(Some(to_ec(v)), Some((to_ec(scan.lo), to_ec(scan.hi))), "ok".into()),
        Err(e) => row(None, Some((to_ec(scan.lo), to_ec(scan.hi))), format!("error: {e}")),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn step_at(c: f64) -> impl FnMut(f64) -> Result<PhaseLabel, ScanError> {
        move |x| {
            let p = if x < c { Phase::Localized } else { Phase::Delocalized };
            Ok(PhaseLabel::new(p, 0.0))
        }
    }

    #[test]
    fn bisects_a_step() {
        let mut s = CriticalScan::new(ScanAxis::Gamma, 0.0, 10.0, 1e-9);
        let r = bisect_critical(&mut s, step_at(3.0)).unwrap();
        assert_relative_eq!(r, 3.0, max_relative = 1e-9);
        assert!(s.hi - s.lo <= 1e-9 * r);
        assert!(s.lo <= r && r <= s.hi);
        assert_eq!(s.result, Some(r));
    }

    #[test]
    fn same_label_is_an_invalid_bracket() {
        let mut s = CriticalScan::new(ScanAxis::Gamma, 4.0, 10.0, 1e-6);
        assert!(matches!(bisect_critical(&mut s, step_at(3.0)), Err(ScanError::InvalidBracket { .. })));
    }

    #[test]
    fn undetermined_band_is_stepped_around() {
        // a narrow undetermined band away from the transition at 3
        let mut s = CriticalScan::new(ScanAxis::Gamma, 0.0, 8.0, 1e-6);
        let r = bisect_critical(&mut s, |x| {
            let p = if (x - 4.0f64).abs() < 0.1 {
                Phase::Undetermined
            } else if x < 3.0 {
                Phase::Localized
            } else {
                Phase::Delocalized
            };
            Ok(PhaseLabel::new(p, 0.0))
        })
        .unwrap();
        assert_relative_eq!(r, 3.0, max_relative = 1e-6);
    }

    #[test]
    fn wide_undetermined_band_errors_with_history() {
        let mut s = CriticalScan::new(ScanAxis::Gamma, 0.0, 8.0, 1e-6);
        let e = bisect_critical(&mut s, |x| {
            let p = if x < 1.0 {
                Phase::Localized
            } else if x > 7.0 {
                Phase::Delocalized
            } else {
                Phase::Undetermined
            };
            Ok(PhaseLabel::new(p, 0.0))
        })
        .unwrap_err();
        match e {
            ScanError::PersistentUndetermined { value, history } => {
                assert_eq!(value, 4.0);
                assert_eq!(history.len(), 5);
            }
            other => panic!("{other}"),
        }
    }

    #[test]
    fn exact_power_law() {
        let pts: Vec<(f64, f64)> = [19.0, 19.5, 19.8, 19.9, 19.95, 19.99]
            .iter()
            .map(|&g| (g, (20.0f64 - g).abs().powf(-0.8659)))
            .collect();
        let (k, r2) = fit_exponent(&pts, 20.0).unwrap();
        assert_relative_eq!(k, 0.8659, epsilon = 1e-12);
        assert_relative_eq!(r2, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn flat_series_has_zero_exponent() {
        let pts: Vec<(f64, f64)> = [1.0, 2.0, 3.0, 4.0].iter().map(|&g| (g, 2.5)).collect();
        let (k, r2) = fit_exponent(&pts, 0.0).unwrap();
        assert_eq!(k, 0.0);
        assert_eq!(r2, 1.0);
    }

    #[test]
    fn fit_rejects_bad_input() {
        let same: Vec<(f64, f64)> = vec![(1.0, 1.0), (3.0, 2.0), (1.0, 3.0), (3.0, 4.0)];
        assert_eq!(fit_exponent(&same, 2.0), Err(ScanError::DegenerateAbscissae));
        assert_eq!(fit_exponent(&same[..3], 2.0), Err(ScanError::TooFewPoints(3)));
        let at_c = vec![(2.0, 1.0), (3.0, 2.0), (4.0, 3.0), (5.0, 4.0)];
        assert!(matches!(fit_exponent(&at_c, 2.0), Err(ScanError::InvalidPoint { .. })));
    }

    #[test]
    fn window_offsets() {
        let w = ExponentWindow::default();
        let o = w.offsets();
        assert_eq!(o.len(), 8);
        assert_relative_eq!(o[0], 5e-4, max_relative = 1e-14);
        assert_relative_eq!(o[7], 2.5e-2, max_relative = 1e-14);
        let r = o[1] / o[0];
        assert!(o.windows(2).all(|p| ((p[1] / p[0]) / r - 1.0).abs() < 1e-12));
    }

    #[test]
    fn axes_round_trip_and_mismatch() {
        for a in [ScanAxis::InvVHat0, ScanAxis::EjOverLambda0, ScanAxis::Gamma] {
            assert_eq!(ScanAxis::parse(a.as_str()), Some(a));
        }
        let p = DoubleWellParams::new(20.0, 0.5, 40.0, 1.0).unwrap();
        assert!(matches!(
            ScanAxis::EjOverLambda0.apply_double_well(&p, 1.0),
            Err(ScanError::AxisMismatch { .. })
        ));
        assert_eq!(ScanAxis::Gamma.apply_double_well(&p, 21.0).unwrap().gamma, 21.0);
    }
}
