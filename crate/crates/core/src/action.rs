//! Quadratic Matsubara kernel of the junction action after the transmission
//! line has been integrated out.
//!
//! Both kernels are normalized as the coefficient `K(p)` in
//! `S = (1/2β) Σ_n K(p_n) φ_n φ_{-n}`.

use thiserror::Error;

use crate::scalar::Real;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ActionError {
    #[error("environment parameter `{name}` must be positive, got {value}")]
    NonPositive { name: &'static str, value: f64 },
    #[error("mode count must be at least 1")]
    NoModes,
}

/// Junction plus finite transmission line.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnvironmentSpec<T> {
    /// Charging energy; `+∞` drops the capacitive term.
    pub e_c: T,
    /// `R_Q / R`.
    pub gamma: T,
    /// Wave velocity of the line.
    pub velocity: T,
    /// Line length.
    pub length: T,
    /// Number of retained line modes; the frequency cutoff is `v M π / L`.
    pub modes: usize,
}

impl<T: Real> EnvironmentSpec<T> {
    pub fn new(e_c: T, gamma: T, velocity: T, length: T, modes: usize) -> Result<Self, ActionError> {
        for (name, value) in [("e_c", e_c), ("gamma", gamma), ("v", velocity), ("L", length)] {
            if !(value > T::zero()) {
                return Err(ActionError::NonPositive {
                    name,
                    value: value.as_f64(),
                });
            }
        }
        if modes == 0 {
            return Err(ActionError::NoModes);
        }
        Ok(Self {
            e_c,
            gamma,
            velocity,
            length,
            modes,
        })
    }

    pub fn cutoff(&self) -> T {
        self.velocity * T::count(self.modes) * T::PI() / self.length
    }

    /// Frequency of line mode `m` (1-based).
    pub fn mode_frequency(&self, m: usize) -> T {
        self.velocity * T::count(m) * T::PI() / self.length
    }
}

/// Kernel with the explicit finite sum over line modes.
pub fn kernel_finite<T: Real>(p: T, env: &EnvironmentSpec<T>) -> T {
    if p == T::zero() {
        return T::zero();
    }
    let p2 = p * p;
    // 1/(1 + (ω/p)²) written so that p = 0 never divides
    let bath: T = (1..=env.modes)
        .map(|m| {
            let w = env.mode_frequency(m);
            p2 / (p2 + w * w)
        })
        .sum();
    p2 / (T::two() * env.e_c) + env.gamma * env.velocity / (T::PI() * env.length) * bath
}

/// Thermodynamic and wideband limit of [`kernel_finite`].
pub fn kernel_continuum<T: Real>(p: T, e_c: T, gamma: T) -> T {
    p * p / (T::two() * e_c) + gamma * p.abs() / (T::two() * T::PI())
}

/// `|K_finite/K_continuum - 1|`, zero where both vanish.
pub fn kernel_relative_deviation<T: Real>(p: T, env: &EnvironmentSpec<T>) -> T {
    let fin = kernel_finite(p, env);
    let cont = kernel_continuum(p, env.e_c, env.gamma);
    if cont == T::zero() {
        if fin == T::zero() {
            T::zero()
        } else {
            T::infinity()
        }
    } else {
        (fin / cont - T::one()).abs()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    #[test]
    fn zero_frequency() {
        let env = EnvironmentSpec::new(1.0, 1.0, 1.0, 10.0, 100).unwrap();
        assert_eq!(kernel_finite(0.0, &env), 0.0);
        assert_eq!(kernel_continuum(0.0_f64, 1.0, 1.0), 0.0);
    }

    #[test]
    fn single_mode_arithmetic() {
        let env = EnvironmentSpec::new(f64::INFINITY, 2.0 * PI, 1.0, PI, 1).unwrap();
        assert_relative_eq!(kernel_finite(1.0, &env), 1.0 / PI, max_relative = 1e-15);
    }

    #[test]
    fn continuum_arithmetic() {
        assert_relative_eq!(kernel_continuum(1.0, 0.5, 2.0 * PI), 2.0, max_relative = 1e-15);
        assert_eq!(kernel_continuum(-1.0, 0.5, 2.0 * PI), kernel_continuum(1.0, 0.5, 2.0 * PI));
    }

    #[test]
    fn continuum_limit_at_unit_frequency() {
        let env = EnvironmentSpec::new(1.0, 1.0, 1.0, 1e3, 100_000).unwrap();
        let expected = 0.5 + 1.0 / (2.0 * PI);
        assert_relative_eq!(kernel_continuum(1.0, 1.0, 1.0), expected, max_relative = 1e-15);
        assert!(kernel_relative_deviation(1.0, &env) < 1e-3);
    }

    #[test]
    fn monotone_in_mode_count() {
        for &p in &[0.1, 1.0, 7.5] {
            let mut prev = 0.0;
            for m in [1, 10, 100, 1000, 10000] {
                let env = EnvironmentSpec::new(1.0, 1.3, 1.0, 50.0, m).unwrap();
                let k = kernel_finite(p, &env);
                assert!(k > prev);
                prev = k;
            }
        }
    }

    #[test]
    fn rejects_bad_environment() {
        assert_eq!(
            EnvironmentSpec::new(1.0, -1.0, 1.0, 1.0, 3).unwrap_err(),
            ActionError::NonPositive { name: "gamma", value: -1.0 }
        );
        assert_eq!(EnvironmentSpec::new(1.0, 1.0, 1.0, 1.0, 0).unwrap_err(), ActionError::NoModes);
    }

    proptest! {
        #[test]
        fn kernels_even_and_non_negative(p in -50.0f64..50.0, gamma in 0.01f64..30.0, e_c in 0.01f64..10.0, m in 1usize..200) {
            let env = EnvironmentSpec::new(e_c, gamma, 1.0, 20.0, m).unwrap();
            let a = kernel_finite(p, &env);
            let b = kernel_finite(-p, &env);
            prop_assert_eq!(a, b);
            prop_assert!(a >= 0.0);
            prop_assert_eq!(kernel_continuum(p, e_c, gamma), kernel_continuum(-p, e_c, gamma));
            prop_assert!(kernel_continuum(p, e_c, gamma) >= 0.0);
        }
    }
}
