use std::collections::BTreeMap;
use std::fmt;

use serde::Serialize;

/// Infrared fate of a flow.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Localized,
    Delocalized,
    Superconducting,
    Insulating,
    Undetermined,
}

impl Phase {
    pub fn as_str(&self) -> &'static str {
        match self {
            Phase::Localized => "localized",
            Phase::Delocalized => "delocalized",
            Phase::Superconducting => "superconducting",
            Phase::Insulating => "insulating",
            Phase::Undetermined => "undetermined",
        }
    }

    pub fn is_determined(&self) -> bool {
        !matches!(self, Phase::Undetermined)
    }
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Classification outcome together with the quantities it was based on.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PhaseLabel {
    pub phase: Phase,
    pub l_terminal: f64,
    pub diagnostics: BTreeMap<String, f64>,
}

impl PhaseLabel {
    pub fn new(phase: Phase, l_terminal: f64) -> Self {
        Self {
            phase,
            l_terminal,
            diagnostics: BTreeMap::new(),
        }
    }

    pub fn with(mut self, key: &str, value: f64) -> Self {
        self.diagnostics.insert(key.to_owned(), value);
        self
    }
}
