//! Property tests of the structural guarantees the flows and scans rely on.

use frg_core::cosine::{rhs_cosine, CosineModel, CosinePotential, CosineState};
use frg_core::doublewell::{run_double_well, DoubleWellParams, DoubleWellRun};
use frg_core::flowcore::quad_momentum;
use frg_core::scan::{bisect_critical, double_well_phase, fit_exponent, CriticalScan, ScanAxis};
use frg_core::{Phase, PhaseLabel};
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn double_well_flows_keep_their_invariants(log_inv_v in -3.0f64..3.5, gamma in 5.0f64..40.0, rho0 in 0.1f64..1.0) {
        let params = DoubleWellParams::new(gamma, rho0, 10f64.powf(log_inv_v), 1.0).unwrap();
        let run = run_double_well(&params, &DoubleWellRun::default_options(), None).unwrap();
        let mut prev_alpha = f64::INFINITY;
        for s in run.trace.samples() {
            prop_assert!(s.state[1] > 0.0, "barrier {} at l = {}", s.state[1], s.l);
            let growth = s.diagnostics["eps_c"] / s.l.exp();
            prop_assert!((growth - 1.0).abs() < 1e-14);
            if s.state[0] > 0.0 {
                let a = s.diagnostics["alpha"];
                prop_assert!(a <= prev_alpha * (1.0 + 1e-12), "alpha rose to {a} at l = {}", s.l);
                prev_alpha = a;
            }
        }
    }

    #[test]
    fn phase_is_monotone_in_the_barrier(inv_v in 5.0f64..120.0, factor in 1.05f64..3.0) {
        let phase = |x: f64| double_well_phase(&DoubleWellParams::new(20.0, 0.5, x, 1.0).unwrap()).unwrap().phase;
        if phase(inv_v) == Phase::Delocalized {
            prop_assert_eq!(phase(inv_v * factor), Phase::Delocalized);
        }
    }

    #[test]
    fn bisection_keeps_a_valid_bracket(c in 0.5f64..9.5, tol in 1e-10f64..1e-2) {
        let step = |x: f64| Ok(PhaseLabel::new(if x < c { Phase::Localized } else { Phase::Delocalized }, 0.0));
        let mut scan = CriticalScan::new(ScanAxis::InvVHat0, 0.1, 10.0, tol);
        let r = bisect_critical(&mut scan, step).unwrap();
        prop_assert!(scan.lo < c && c <= scan.hi);
        prop_assert!(scan.lo <= r && r <= scan.hi);
        prop_assert!(scan.hi - scan.lo <= tol * r);
    }

    #[test]
    fn exponent_fit_is_exact_on_power_laws(kappa in 0.1f64..2.0, gamma_c in 1.0f64..50.0, scale in 0.1f64..10.0) {
        let points: Vec<(f64, f64)> = (1..=6)
            .map(|k| {
                let g = gamma_c * (1.0 - 0.002 * k as f64);
                (g, scale * (gamma_c - g).powf(-kappa))
            })
            .collect();
        let (fitted, r2) = fit_exponent(&points, gamma_c).unwrap();
        prop_assert!((fitted - kappa).abs() < 1e-11 * kappa.max(1.0), "{fitted} vs {kappa}");
        prop_assert!((r2 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn momentum_quadrature_is_linear_and_even(a in 0.2f64..5.0, b in 0.2f64..5.0, w in -3.0f64..3.0) {
        let f = |p: f64| 1.0 / (p * p + a * a);
        let g = |p: f64| (-(p * p) / (b * b)).exp();
        let sum = quad_momentum(|p| f(p) + w * g(p), 1e-13).unwrap();
        let parts = quad_momentum(f, 1e-13).unwrap() + w * quad_momentum(g, 1e-13).unwrap();
        prop_assert!((sum - parts).abs() <= 1e-12 * (sum.abs() + parts.abs()));
        let mirrored = quad_momentum(|p| f(-p), 1e-13).unwrap();
        prop_assert!((mirrored - quad_momentum(f, 1e-13).unwrap()).abs() <= 1e-12 * mirrored);
    }

    #[test]
    fn flat_potential_is_a_fixed_line(tau in 1e-6f64..1e3, alpha in 0.05f64..3.0) {
        let s = CosineState::with_potential(0.0, tau, alpha, CosinePotential::from_harmonics(64, &[]).unwrap());
        let model = CosineModel { grid_n: 64, ..CosineModel::default() };
        let (dtau, dv) = rhs_cosine(&s, &model).unwrap();
        prop_assert_eq!(dtau, -tau);
        prop_assert!(dv.iter().all(|v| v.abs() < 1e-15));
    }
}
