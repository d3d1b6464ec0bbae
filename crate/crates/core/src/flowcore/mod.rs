//! Shared flow machinery: the regulator, momentum quadrature and the adaptive
//! integrator over the logarithmic scale `l = ln(Λ₀/Λ)`.

pub mod integrator;
pub mod loops;
pub mod quadrature;
pub mod regulator;
pub mod rosenbrock;
pub mod trace;

pub use integrator::{integrate_flow, integrate_flow_switched, FlowOptions};
pub use quadrature::{quad_momentum, GaussLegendre, MomentumQuadrature, QuadError};
pub use regulator::{Regulator, RegulatorKind};
pub use rosenbrock::integrate_flow_stiff;
pub use trace::{FlowSample, FlowStats, FlowTrace, TerminalReason};

/// Default IR stopping scale when a run does not specify one.
pub const DEFAULT_L_MAX: f64 = 40.0;
