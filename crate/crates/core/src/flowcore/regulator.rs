use crate::scalar::Real;

/// Shape of the infrared cutoff added to the inverse propagator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RegulatorKind {
    /// Momentum independent mass-like cutoff, `R(p) = Λ`.
    Flat,
}

/// Cutoff function `R_Λ(p)` at a given scale `Λ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Regulator<T> {
    pub kind: RegulatorKind,
    pub scale: T,
}

impl<T: Real> Regulator<T> {
    pub fn flat(scale: T) -> Self {
        assert!(scale > T::zero(), "regulator scale must be positive");
        Self {
            kind: RegulatorKind::Flat,
            scale,
        }
    }

    /// `R_Λ(p)`.
    pub fn value(&self, _p: T) -> T {
        match self.kind {
            RegulatorKind::Flat => self.scale,
        }
    }

    /// `∂_Λ R_Λ(p)`.
    pub fn scale_derivative(&self, _p: T) -> T {
        match self.kind {
            RegulatorKind::Flat => T::one(),
        }
    }

    /// `R_Λ(p) / p²`; tends to zero in the ultraviolet and diverges at `p = 0`.
    pub fn relative_to_kinetic(&self, p: T) -> T {
        self.value(p) / (p * p)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flat_vanishes_against_kinetic_term_in_uv() {
        let r = Regulator::flat(0.7_f64);
        let mut prev = f64::INFINITY;
        for k in 0..12 {
            let p = 10f64.powi(k);
            let ratio = r.relative_to_kinetic(p);
            assert!(ratio < prev);
            prev = ratio;
        }
        assert!(prev < 1e-20);
    }

    #[test]
    fn flat_dominates_in_ir() {
        let r = Regulator::flat(0.7_f64);
        assert!(r.value(0.0) > 0.0);
        assert!(r.relative_to_kinetic(0.0).is_infinite());
        assert!(r.relative_to_kinetic(1e-8) > 1e15);
    }

    #[test]
    fn flat_scale_derivative_is_one() {
        for &lam in &[1e-6, 0.3, 4.0, 1e5] {
            let r = Regulator::flat(lam);
            for &p in &[-3.0, 0.0, 2.5, 1e9] {
                assert_eq!(r.scale_derivative(p), 1.0);
            }
        }
    }

    #[test]
    #[should_panic]
    fn rejects_non_positive_scale() {
        let _ = Regulator::flat(0.0_f64);
    }
}
