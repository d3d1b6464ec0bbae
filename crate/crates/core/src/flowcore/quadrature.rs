//! Gauss–Legendre quadrature over the real momentum axis.
//!
//! The axis is folded at zero and the half axis mapped onto a finite interval
//! before applying a composite Gauss–Legendre rule; the number of panels is
//! doubled until two successive estimates agree. Folding keeps integrands with
//! a `|p|` kink smooth on the mapped interval.

use std::sync::OnceLock;

use thiserror::Error;

use crate::scalar::Real;

/// Nodes per panel of the composite rule.
pub const DEFAULT_NODES: usize = 64;

/// Upper limit on panels per mapped half axis.
pub const DEFAULT_MAX_PANELS: usize = 1 << 12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QuadError {
    #[error("integrand is not finite at p = {abscissa:e}")]
    NonFinite { abscissa: f64 },
    #[error("quadrature did not converge with {panels} panels (last two estimates {previous:e}, {current:e})")]
    NotConverged {
        panels: usize,
        previous: f64,
        current: f64,
    },
}

/// Gauss–Legendre nodes and weights on `[-1, 1]`.
#[derive(Debug, Clone)]
pub struct GaussLegendre {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl GaussLegendre {
    /// Computes an `n`-point rule by Newton iteration on `P_n`.
    pub fn new(n: usize) -> Self {
        assert!(n > 0, "a quadrature rule needs at least one node");
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        let nf = n as f64;
        for i in 0..(n + 1) / 2 {
            // Tricomi initial guess for the i-th root counted from the right.
            let k = i as f64 + 1.0;
            let mut x = (std::f64::consts::PI * (k - 0.25) / (nf + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (p, d) = legendre_with_derivative(n, x);
                dp = d;
                let dx = p / d;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let (_, d) = legendre_with_derivative(n, x);
            if d != 0.0 {
                dp = d;
            }
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes[i] = -x;
            weights[i] = w;
            nodes[n - 1 - i] = x;
            weights[n - 1 - i] = w;
        }
        Self { nodes, weights }
    }

    /// Shared 64-point rule.
    pub fn default_rule() -> &'static GaussLegendre {
        static RULE: OnceLock<GaussLegendre> = OnceLock::new();
        RULE.get_or_init(|| GaussLegendre::new(DEFAULT_NODES))
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Integrates `f` over `[a, b]` with a single panel.
    pub fn integrate<T: Real, F: FnMut(T) -> T>(&self, a: T, b: T, mut f: F) -> T {
        let mid = T::half() * (a + b);
        let half = T::half() * (b - a);
        let mut acc = T::zero();
        for (&x, &w) in self.nodes.iter().zip(&self.weights) {
            acc += T::lit(w) * f(mid + half * T::lit(x));
        }
        acc * half
    }
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Adaptive momentum-axis integrator.
///
/// Each half axis is split at `scale`: `[0, scale]` is mapped linearly and
/// `[scale, ∞)` logarithmically via `p = scale·exp(t/(1 - t))`. The logarithmic
/// tail resolves integrands whose decay changes character across widely
/// separated momenta, such as `1/(a p² + b |p| + c)ⁿ` with `a ≪ b²/c`.
/// Integrands must decay faster than `1/|p|`; points where the map overflows
/// contribute zero.
#[derive(Debug, Clone, Copy)]
pub struct MomentumQuadrature<T> {
    pub rel_tol: T,
    pub abs_tol: T,
    pub scale: T,
    pub max_panels: usize,
}

impl<T: Real> MomentumQuadrature<T> {
    pub fn new(rel_tol: T) -> Self {
        Self {
            rel_tol,
            abs_tol: T::zero(),
            scale: T::one(),
            max_panels: DEFAULT_MAX_PANELS,
        }
    }

    pub fn with_scale(mut self, scale: T) -> Self {
        self.scale = scale;
        self
    }

    pub fn with_abs_tol(mut self, abs_tol: T) -> Self {
        self.abs_tol = abs_tol;
        self
    }

    /// `∫_{-∞}^{∞} dp/(2π) f(p)`. The axis is folded at zero, so a `|p|` kink
    /// there is harmless.
    pub fn integrate<F: FnMut(T) -> T>(&self, mut f: F) -> Result<T, QuadError> {
        let folded = self.half_axis(|p| f(p) + f(-p))?;
        Ok(folded / (T::two() * T::PI()))
    }

    /// `∫_0^∞ dp f(p)` (no `1/2π` factor).
    pub fn half_axis<F: FnMut(T) -> T>(&self, mut f: F) -> Result<T, QuadError> {
        let s = self.scale;
        self.adaptive(
            T::zero(),
            T::two(),
            |t| {
                if t < T::one() {
                    (s * t, s)
                } else {
                    let u = t - T::one();
                    let d = T::one() - u;
                    let p = s * (u / d).exp();
                    (p, p / (d * d))
                }
            },
            &mut f,
        )
    }

    fn adaptive<M, F>(&self, lo: T, hi: T, map: M, f: &mut F) -> Result<T, QuadError>
    where
        M: Fn(T) -> (T, T),
        F: FnMut(T) -> T,
    {
        let rule = GaussLegendre::default_rule();
        let mut panels = 2usize;
        let mut previous = self.composite(rule, lo, hi, panels, &map, f)?;
        loop {
            panels *= 2;
            let current = self.composite(rule, lo, hi, panels, &map, f)?;
            let diff = (current - previous).abs();
            if diff <= self.rel_tol * current.abs() + self.abs_tol || diff == T::zero() {
                return Ok(current);
            }
            if panels >= self.max_panels {
                return Err(QuadError::NotConverged {
                    panels,
                    previous: previous.as_f64(),
                    current: current.as_f64(),
                });
            }
            previous = current;
        }
    }

    fn composite<M, F>(
        &self,
        rule: &GaussLegendre,
        lo: T,
        hi: T,
        panels: usize,
        map: &M,
        f: &mut F,
    ) -> Result<T, QuadError>
    where
        M: Fn(T) -> (T, T),
        F: FnMut(T) -> T,
    {
        let width = (hi - lo) / T::count(panels);
        let half = T::half() * width;
        let mut total = T::zero();
        for k in 0..panels {
            let mid = lo + width * (T::count(k) + T::half());
            let mut acc = T::zero();
            for (&x, &w) in rule.nodes().iter().zip(rule.weights()) {
                let t = mid + half * T::lit(x);
                let (p, jac) = map(t);
                if p.is_infinite() {
                    continue;
                }
                let v = f(p);
                if !v.is_finite() {
                    return Err(QuadError::NonFinite { abscissa: p.as_f64() });
                }
                acc += T::lit(w) * v * jac;
            }
            total += acc * half;
        }
        Ok(total)
    }
}

/// `∫ dp/(2π) f(p)` over the whole axis with unit map scale.
pub fn quad_momentum<T: Real, F: FnMut(T) -> T>(f: F, rel_tol: T) -> Result<T, QuadError> {
    MomentumQuadrature::new(rel_tol).integrate(f)
}
