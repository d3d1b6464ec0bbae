use std::collections::BTreeMap;

use serde::Serialize;

use crate::scalar::Real;

/// Why an integration stopped.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum TerminalReason {
    ReachedLMax,
    Escaped,
    StepUnderflow,
    NumericFailure,
}

impl TerminalReason {
    pub fn as_str(&self) -> &'static str {
        match self {
            TerminalReason::ReachedLMax => "reached_l_max",
            TerminalReason::Escaped => "escaped",
            TerminalReason::StepUnderflow => "step_underflow",
            TerminalReason::NumericFailure => "numeric_failure",
        }
    }
}

impl std::fmt::Display for TerminalReason {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One accepted point of a flow.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowSample<T> {
    pub l: T,
    pub state: Vec<T>,
    /// Euclidean norm of the right-hand side at this point.
    pub rhs_norm: T,
    pub diagnostics: BTreeMap<&'static str, T>,
}

/// Step statistics accumulated by the integrator.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct FlowStats {
    pub accepted: usize,
    pub rejected: usize,
    pub rhs_evals: usize,
    pub switch_crossings: usize,
}

/// Ordered record of a flow from `l = 0` to its terminal point.
#[derive(Debug, Clone)]
pub struct FlowTrace<T> {
    samples: Vec<FlowSample<T>>,
    terminal_reason: TerminalReason,
    failure: Option<String>,
    stats: FlowStats,
}

impl<T: Real> FlowTrace<T> {
    pub(crate) fn new(
        samples: Vec<FlowSample<T>>,
        terminal_reason: TerminalReason,
        failure: Option<String>,
        stats: FlowStats,
    ) -> Self {
        debug_assert!(samples.windows(2).all(|w| w[0].l < w[1].l));
        Self {
            samples,
            terminal_reason,
            failure,
            stats,
        }
    }

    /// Builds a trace from externally produced samples, e.g. when replaying
    /// stored trajectories. Panics if `l` is not strictly increasing.
    pub fn from_samples(samples: Vec<FlowSample<T>>, terminal_reason: TerminalReason) -> Self {
        assert!(
            samples.windows(2).all(|w| w[0].l < w[1].l),
            "flow samples must be strictly increasing in l"
        );
        Self::new(samples, terminal_reason, None, FlowStats::default())
    }

    pub fn samples(&self) -> &[FlowSample<T>] {
        &self.samples
    }

    pub fn samples_mut(&mut self) -> &mut [FlowSample<T>] {
        &mut self.samples
    }

    pub fn terminal_reason(&self) -> TerminalReason {
        self.terminal_reason
    }

    /// Message attached to a numeric failure.
    pub fn failure(&self) -> Option<&str> {
        self.failure.as_deref()
    }

    pub fn stats(&self) -> FlowStats {
        self.stats
    }

    pub fn first(&self) -> Option<&FlowSample<T>> {
        self.samples.first()
    }

    pub fn last(&self) -> Option<&FlowSample<T>> {
        self.samples.last()
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}
