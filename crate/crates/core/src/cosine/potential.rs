//! Even periodic potential sampled on `[0, π]` and its cosine series.

use crate::cosine::CosineError;
use crate::scalar::Real;

/// Grid size used for the cosine flow unless configured otherwise.
pub const DEFAULT_GRID_N: usize = 128;

/// Trigonometric tables for an `N`-point grid `φ_j = jπ/(N - 1)`.
///
/// The forward transform is a type-I discrete cosine transform, which is
/// exact for cosine series with harmonics `n ≤ N - 1`.
#[derive(Debug, Clone)]
pub struct CosineBasis<T> {
    n: usize,
    cos: Vec<T>,
    sin: Vec<T>,
}

impl<T: Real> CosineBasis<T> {
    pub fn new(n: usize) -> Result<Self, CosineError> {
        if n < 3 {
            return Err(CosineError::GridTooSmall(n));
        }
        let period = 2 * (n - 1);
        // cos(kπ/(N-1)) for k in one period; entries (n·j) mod period index it
        let step = std::f64::consts::PI / (n - 1) as f64;
        let cos_tab: Vec<f64> = (0..period).map(|k| (k as f64 * step).cos()).collect();
        let sin_tab: Vec<f64> = (0..period).map(|k| (k as f64 * step).sin()).collect();
        let mut cos = Vec::with_capacity(n * n);
        let mut sin = Vec::with_capacity(n * n);
        for h in 0..n {
            for j in 0..n {
                let k = (h * j) % period;
                cos.push(T::lit(cos_tab[k]));
                sin.push(T::lit(sin_tab[k]));
            }
        }
        Ok(Self { n, cos, sin })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn phi(&self, j: usize) -> T {
        T::PI() * T::count(j) / T::count(self.n - 1)
    }

    /// Trapezoid weight of grid point `j` for the average over `[0, π]`.
    pub fn average_weight(&self, j: usize) -> T {
        let w = T::one() / T::count(self.n - 1);
        if j == 0 || j == self.n - 1 {
            w * T::half()
        } else {
            w
        }
    }

    /// Cosine-series coefficients `c_0 … c_{N-1}` with `v_j = Σ c_h cos(h φ_j)`.
    pub fn forward(&self, values: &[T], out: &mut [T]) {
        let n = self.n;
        debug_assert_eq!(values.len(), n);
        let scale = T::two() / T::count(n - 1);
        for h in 0..n {
            let row = &self.cos[h * n..(h + 1) * n];
            let mut acc = Compensated::new(T::half() * (values[0] * row[0] + values[n - 1] * row[n - 1]));
            for j in 1..n - 1 {
                acc.add(values[j] * row[j]);
            }
            let mut c = acc.value() * scale;
            if h == 0 || h == n - 1 {
                c = c * T::half();
            }
            out[h] = c;
        }
    }

    /// Grid samples of `Σ_h weight(h) c_h cos(h φ_j)` for `h ≤ h_max`.
    pub fn synth_cos<W: Fn(usize) -> T>(&self, coeffs: &[T], h_max: usize, weight: W, out: &mut [T]) {
        self.synth(&self.cos, coeffs, h_max, weight, out)
    }

    /// Grid samples of `Σ_h weight(h) c_h sin(h φ_j)` for `h ≤ h_max`.
    pub fn synth_sin<W: Fn(usize) -> T>(&self, coeffs: &[T], h_max: usize, weight: W, out: &mut [T]) {
        self.synth(&self.sin, coeffs, h_max, weight, out)
    }

    fn synth<W: Fn(usize) -> T>(&self, table: &[T], coeffs: &[T], h_max: usize, weight: W, out: &mut [T]) {
        let n = self.n;
        out.iter_mut().for_each(|v| *v = T::zero());
        for h in 0..=h_max.min(n - 1) {
            let a = weight(h) * coeffs[h];
            if a == T::zero() {
                continue;
            }
            let row = &table[h * n..(h + 1) * n];
            for (o, &t) in out.iter_mut().zip(row) {
                *o += a * t;
            }
        }
    }
}

/// Zeroes coefficients at round-off level relative to the largest grid value,
/// so that differentiation does not amplify them by `h²` or `h³`.
pub(crate) fn suppress_roundoff<T: Real>(coeffs: &mut [T], values: &[T]) {
    let scale = values.iter().fold(T::zero(), |m, v| m.max(v.abs()));
    let floor = T::lit(16.0) * T::epsilon() * scale;
    for c in coeffs.iter_mut() {
        if c.abs() <= floor {
            *c = T::zero();
        }
    }
}

/// Neumaier-compensated running sum.
struct Compensated<T> {
    sum: T,
    carry: T,
}

impl<T: Real> Compensated<T> {
    fn new(first: T) -> Self {
        Self {
            sum: first,
            carry: T::zero(),
        }
    }

    #[inline]
    fn add(&mut self, x: T) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.carry += (self.sum - t) + x;
        } else {
            self.carry += (x - t) + self.sum;
        }
        self.sum = t;
    }

    fn value(&self) -> T {
        self.sum + self.carry
    }
}

/// Dimensionless potential `V̄(φ)` on the grid `φ_j = jπ/(N - 1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct CosinePotential<T> {
    values: Vec<T>,
}

impl<T: Real> CosinePotential<T> {
    pub fn new(values: Vec<T>) -> Result<Self, CosineError> {
        if values.len() < 3 {
            return Err(CosineError::GridTooSmall(values.len()));
        }
        Ok(Self { values })
    }

    /// Samples `Σ_n harmonics[n-1] cos(nφ)` on an `n`-point grid.
    pub fn from_harmonics(n: usize, harmonics: &[T]) -> Result<Self, CosineError> {
        if n < 3 {
            return Err(CosineError::GridTooSmall(n));
        }
        let values = (0..n)
            .map(|j| {
                let phi = T::PI() * T::count(j) / T::count(n - 1);
                harmonics
                    .iter()
                    .enumerate()
                    .map(|(k, &e)| e * (T::count(k + 1) * phi).cos())
                    .sum()
            })
            .collect();
        Ok(Self { values })
    }

    /// Bare Josephson potential `-E_J cos φ` in units of the cutoff.
    pub fn josephson(n: usize, e_j_over_lambda: T) -> Result<Self, CosineError> {
        Self::from_harmonics(n, &[-e_j_over_lambda])
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// `ε⁽¹⁾ … ε⁽ⁿᵐᵃˣ⁾` of the potential.
pub fn cosine_coeffs<T: Real>(potential: &CosinePotential<T>, n_max: usize) -> Result<Vec<T>, CosineError> {
    let basis = CosineBasis::new(potential.len())?;
    coeffs_with(&basis, potential.values(), n_max)
}

pub(crate) fn coeffs_with<T: Real>(basis: &CosineBasis<T>, values: &[T], n_max: usize) -> Result<Vec<T>, CosineError> {
    if n_max >= basis.len() {
        return Err(CosineError::AboveNyquist {
            n_max,
            grid_n: basis.len(),
        });
    }
    let mut c = vec![T::zero(); basis.len()];
    basis.forward(values, &mut c);
    Ok(c[1..=n_max].to_vec())
}

/// Grid samples of `V̄''` (all harmonics) and `V̄'''` (harmonics up to
/// `third_max`).
pub fn grid_derivatives_truncated<T: Real>(
    potential: &CosinePotential<T>,
    third_max: usize,
) -> Result<(Vec<T>, Vec<T>), CosineError> {
    let basis = CosineBasis::new(potential.len())?;
    let n = basis.len();
    let mut c = vec![T::zero(); n];
    basis.forward(potential.values(), &mut c);
    suppress_roundoff(&mut c, potential.values());
    let mut second = vec![T::zero(); n];
    let mut third = vec![T::zero(); n];
    basis.synth_cos(&c, n - 1, |h| -T::count(h * h), &mut second);
    basis.synth_sin(&c, third_max, |h| T::count(h * h * h), &mut third);
    Ok((second, third))
}

/// [`grid_derivatives_truncated`] with every representable harmonic.
pub fn grid_derivatives<T: Real>(potential: &CosinePotential<T>) -> Result<(Vec<T>, Vec<T>), CosineError> {
    grid_derivatives_truncated(potential, potential.len() - 1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn max_err(a: &[f64], b: impl Fn(f64) -> f64, n: usize) -> f64 {
        a.iter()
            .enumerate()
            .map(|(j, &v)| (v - b(std::f64::consts::PI * j as f64 / (n - 1) as f64)).abs())
            .fold(0.0, f64::max)
    }

    #[test]
    fn single_harmonics() {
        let p = CosinePotential::<f64>::from_harmonics(128, &[-0.1]).unwrap();
        let c = cosine_coeffs(&p, 5).unwrap();
        assert_relative_eq!(c[0], -0.1, epsilon = 1e-15);
        assert!(c[1..].iter().all(|v| v.abs() < 1e-15));

        let p = CosinePotential::<f64>::from_harmonics(128, &[0.0, 0.05]).unwrap();
        let c = cosine_coeffs(&p, 5).unwrap();
        assert_relative_eq!(c[1], 0.05, epsilon = 1e-15);
        assert!(c[0].abs() < 1e-15 && c[2].abs() < 1e-15);
    }

    #[test]
    fn linearity() {
        let p = CosinePotential::<f64>::from_harmonics(128, &[0.2, 0.0, 0.01]).unwrap();
        let c = cosine_coeffs(&p, 3).unwrap();
        assert_relative_eq!(c[0], 0.2, epsilon = 1e-15);
        assert!(c[1].abs() < 1e-15);
        assert_relative_eq!(c[2], 0.01, epsilon = 1e-15);
    }

    #[test]
    fn nyquist_bound() {
        let p = CosinePotential::from_harmonics(16, &[0.1]).unwrap();
        assert!(cosine_coeffs(&p, 15).is_ok());
        assert_eq!(
            cosine_coeffs(&p, 16).unwrap_err(),
            CosineError::AboveNyquist { n_max: 16, grid_n: 16 }
        );
    }

    #[test]
    fn derivatives_of_cos_phi() {
        let p = CosinePotential::from_harmonics(128, &[1.0]).unwrap();
        let (d2, d3) = grid_derivatives(&p).unwrap();
        assert!(max_err(&d2, |x| -x.cos(), 128) < 1e-12);
        assert!(max_err(&d3, |x| x.sin(), 128) < 1e-12);
    }

    #[test]
    fn derivatives_of_cos_two_phi() {
        let p = CosinePotential::from_harmonics(128, &[0.0, 1.0]).unwrap();
        let (d2, d3) = grid_derivatives(&p).unwrap();
        assert!(max_err(&d2, |x| -4.0 * (2.0 * x).cos(), 128) < 1e-12);
        assert!(max_err(&d3, |x| 8.0 * (2.0 * x).sin(), 128) < 1e-12);
    }

    #[test]
    fn zero_potential_has_zero_derivatives() {
        let p = CosinePotential::new(vec![0.0; 128]).unwrap();
        let (d2, d3) = grid_derivatives(&p).unwrap();
        assert!(d2.iter().chain(&d3).all(|&v| v == 0.0));
    }

    #[test]
    fn truncated_third_derivative_drops_high_harmonics() {
        let p = CosinePotential::<f64>::from_harmonics(64, &[0.0, 0.0, 0.0, 0.0, 1.0]).unwrap();
        let (_, d3) = grid_derivatives_truncated(&p, 4).unwrap();
        assert!(d3.iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn trapezoid_weights_sum_to_one() {
        let b = CosineBasis::<f64>::new(128).unwrap();
        let s: f64 = (0..128).map(|j| b.average_weight(j)).sum();
        assert_relative_eq!(s, 1.0, epsilon = 1e-14);
    }

    #[test]
    fn small_grid_rejected() {
        assert_eq!(CosinePotential::<f64>::new(vec![0.0; 2]).unwrap_err(), CosineError::GridTooSmall(2));
    }

    proptest! {
        #[test]
        fn band_limited_round_trip(h in proptest::collection::vec(-1.0f64..1.0, 1..40)) {
            let p = CosinePotential::from_harmonics(128, &h).unwrap();
            let c = cosine_coeffs(&p, 127).unwrap();
            for (k, &v) in c.iter().enumerate() {
                let expect = h.get(k).copied().unwrap_or(0.0);
                prop_assert!((v - expect).abs() <= 1e-12);
            }
            let rebuilt = CosinePotential::from_harmonics(128, &c).unwrap();
            for (a, b) in rebuilt.values().iter().zip(p.values()) {
                prop_assert!((a - b).abs() <= 1e-12);
            }
        }

        #[test]
        fn representation_is_even_and_periodic(h in proptest::collection::vec(-1.0f64..1.0, 1..10), x in 0.0f64..6.3) {
            let eval = |phi: f64| h.iter().enumerate().map(|(k, e)| e * ((k + 1) as f64 * phi).cos()).sum::<f64>();
            prop_assert!((eval(x) - eval(-x)).abs() < 1e-12);
            prop_assert!((eval(x) - eval(2.0 * std::f64::consts::PI - x)).abs() < 1e-12);
        }
    }
}
