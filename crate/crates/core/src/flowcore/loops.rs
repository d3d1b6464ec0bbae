//! Closed form of the one-loop integral over an Ohmic-plus-quadratic
//! propagator `1/(a p² + b |p| + c)`.

use crate::scalar::Real;

/// Within this distance of `y = 1` the shape function switches to its series.
const SERIES_WINDOW: f64 = 1e-6;

/// `F(y)` with `∫_0^∞ dp/(a p² + b p + c) = F(4ac/b²)/b`.
///
/// `2 atan(s)/s` with `s = √(y - 1)` above `y = 1`, `ln((1 + s)²/y)/s` with
/// `s = √(1 - y)` below it, and the common series `2 Σ (1 - y)^k/(2k + 1)` in
/// between. `F(0)` diverges.
pub fn shape<T: Real>(y: T) -> T {
    let d = y - T::one();
    if d.abs() < T::lit(SERIES_WINDOW) {
        let mut term = T::one();
        let mut acc = T::zero();
        for k in 0..4 {
            acc += term / T::count(2 * k + 1);
            term = -term * d;
        }
        T::two() * acc
    } else if d > T::zero() {
        let s = d.sqrt();
        T::two() * s.atan() / s
    } else {
        let s = (-d).sqrt();
        // ln((1+s)/(1-s)) without the cancellation in 1 - s
        ((T::one() + s) * (T::one() + s) / y).ln() / s
    }
}

/// `∫ dp/(2π) 1/(a p² + b |p| + c)` for `a, b, c > 0`.
pub fn inverse_propagator_loop<T: Real>(a: T, b: T, c: T) -> T {
    shape(T::lit(4.0) * a * c / (b * b)) / (T::PI() * b)
}

/// Distance from `y = 1` inside which [`power_loop`] declines: the recursion
/// divides by `4ac - b²` once per order.
pub const RECURSION_WINDOW: f64 = 0.05;

/// `∫_0^∞ dp/(a p² + b p + c)^k` for `a, b, c > 0`, by the reduction
/// `J_{n+1} = (2(2n-1) a J_n - b/cⁿ)/(n Δ)` with `Δ = 4ac - b²`.
///
/// Returns `None` for `k ≥ 2` when `4ac/b²` lies within [`RECURSION_WINDOW`]
/// of one, where the reduction loses too many digits.
pub fn power_loop<T: Real>(k: usize, a: T, b: T, c: T) -> Option<T> {
    assert!(k >= 1, "power must be positive");
    let y = T::lit(4.0) * a * c / (b * b);
    let mut j = shape(y) / b;
    if k == 1 {
        return Some(j);
    }
    if (y - T::one()).abs() < T::lit(RECURSION_WINDOW) {
        return None;
    }
    let delta = T::lit(4.0) * a * c - b * b;
    let mut c_n = c;
    for n in 1..k {
        let nf = T::count(n);
        j = (T::count(2 * (2 * n - 1)) * a * j - b / c_n) / (nf * delta);
        c_n *= c;
    }
    Some(j)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flowcore::MomentumQuadrature;
    use approx::assert_relative_eq;

    #[test]
    fn matches_quadrature_across_branches() {
        for &(a, b, c) in &[(1.0f64, 0.1f64, 2.0f64), (0.01, 1.0, 1.0), (0.25, 1.0, 1.0), (1e-8, 0.08, 0.7)] {
            let q = MomentumQuadrature::new(1e-13_f64)
                .with_scale((c / b).min((c / a as f64).sqrt()))
                .integrate(|p| 1.0 / (a * p * p + b * p.abs() + c))
                .unwrap();
            assert_relative_eq!(inverse_propagator_loop(a, b, c), q, max_relative = 1e-11);
        }
    }

    #[test]
    fn power_loop_matches_quadrature() {
        for &(a, b, c) in &[(10.0f64, 0.08f64, 1.0f64), (1e-3, 0.08, 1.3), (1e-9, 0.24, 0.5), (0.25, 1.0, 1.2), (0.2, 1.0, 1.0)] {
            for k in 1..=4 {
                let q = MomentumQuadrature::new(1e-14_f64)
                    .with_scale((c / b).min((c / a).sqrt()))
                    .half_axis(|p| 1.0 / ((a * p + b) * p + c).powi(k as i32))
                    .unwrap();
                match power_loop(k, a, b, c) {
                    Some(v) => assert_relative_eq!(v, q, max_relative = 1e-10),
                    None => assert!(k > 1 && (4.0 * a * c / (b * b) - 1.0).abs() < RECURSION_WINDOW),
                }
            }
        }
    }

    #[test]
    fn series_is_continuous() {
        for &y in &[1.0 - 2e-6, 1.0 - 1e-7, 1.0, 1.0 + 1e-7, 1.0 + 2e-6] {
            let lo = shape(y - 1e-9_f64);
            let hi = shape(y + 1e-9_f64);
            assert!((lo - hi).abs() < 1e-8);
        }
        assert_eq!(shape(1.0_f64), 2.0);
    }
}
