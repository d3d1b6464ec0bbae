//! Flat `key = value` run configuration.
//!
//! One key per line, `#` starts a comment, blank lines are ignored. Lists are
//! comma separated. Every value read through [`RunConfig`] is also recorded,
//! together with the defaults that were filled in, so the manifest can show
//! the fully resolved configuration.

use std::collections::BTreeMap;
use std::fmt;
use std::path::PathBuf;

use serde_json::{json, Map, Value};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Model {
    DoubleWell,
    Cosine,
    Kernel,
    ScanDoubleWell,
    ScanCosine,
    Exponent,
}

impl Model {
    pub const ALL: [Model; 6] = [
        Model::DoubleWell,
        Model::Cosine,
        Model::Kernel,
        Model::ScanDoubleWell,
        Model::ScanCosine,
        Model::Exponent,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Model::DoubleWell => "doublewell",
            Model::Cosine => "cosine",
            Model::Kernel => "kernel",
            Model::ScanDoubleWell => "scan_doublewell",
            Model::ScanCosine => "scan_cosine",
            Model::Exponent => "exponent",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|m| m.as_str() == s)
    }

    /// Keys that must be present and keys that may be present.
    fn schema(&self) -> (&'static [&'static str], &'static [&'static str]) {
        match self {
            Model::DoubleWell => (
                &["gamma", "rho_bar0", "inv_v_hat0", "eps_c0"],
                &["lambda0", "l_max", "rel_tol", "abs_tol", "rho_escape", "alpha_settle_tol"],
            ),
            Model::Cosine => (
                &["alpha", "e_j_over_lambda0", "e_c_over_lambda0"],
                &[
                    "grid_n",
                    "n_max",
                    "kink_term",
                    "l_max",
                    "rel_tol",
                    "abs_tol",
                    "eps_floor",
                    "growth_ceiling",
                ],
            ),
            Model::Kernel => (&["gamma", "e_c", "v", "L", "M", "p_list"], &[]),
            Model::ScanDoubleWell => (
                &["axis", "lo", "hi", "gamma", "rho_bar0", "inv_v_hat0", "eps_c0"],
                &["tol_rel", "l_max", "rel_tol", "abs_tol", "rho_escape", "alpha_settle_tol"],
            ),
            Model::ScanCosine => (
                &["alphas", "e_c_over_lambda0", "lo", "hi"],
                &["axis", "tol_rel", "grid_n", "n_max", "kink_term"],
            ),
            Model::Exponent => (
                &["gamma_c", "rho_bar0", "inv_v_hat0", "eps_c0"],
                &["lambda0", "window_lo", "window_hi", "window_count"],
            ),
        }
    }
}

impl fmt::Display for Model {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigError {
    #[error("line {line}: expected `key = value`, got `{text}`")]
    Syntax { line: usize, text: String },
    #[error("line {line}: key `{key}` already set on line {first}")]
    Duplicate { key: String, line: usize, first: usize },
    #[error("missing key `model` (one of {})", Model::ALL.map(|m| m.as_str()).join(", "))]
    MissingModel,
    #[error("line {line}: unknown model `{value}`")]
    UnknownModel { value: String, line: usize },
    #[error("line {line}: unknown key `{key}` for model {model}")]
    UnknownKey { key: String, line: usize, model: Model },
    #[error("missing required key `{key}` for model {model}")]
    Missing { key: String, model: Model },
    #[error("line {line}: `{key} = {value}` is not {expected}")]
    Invalid {
        key: String,
        line: usize,
        value: String,
        expected: &'static str,
    },
}

#[derive(Debug, Clone, PartialEq)]
struct Entry {
    value: String,
    line: usize,
}

/// Parsed configuration; values are converted on access.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub model: Model,
    entries: BTreeMap<String, Entry>,
    /// Raw `key = value` pairs in file order.
    pub raw: Vec<(String, String)>,
    resolved: Map<String, Value>,
}

/// Splits the text into entries without looking at the schema. Returns the
/// entries that did parse alongside any line errors.
fn lex(text: &str) -> (BTreeMap<String, Entry>, Vec<(String, String)>, Vec<ConfigError>) {
    let mut entries = BTreeMap::new();
    let mut raw = Vec::new();
    let mut errors = Vec::new();
    for (i, full) in text.lines().enumerate() {
        let line = i + 1;
        let content = full.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let Some((k, v)) = content.split_once('=') else {
            errors.push(ConfigError::Syntax {
                line,
                text: content.to_owned(),
            });
            continue;
        };
        let (key, value) = (k.trim(), v.trim());
        if key.is_empty() || key.contains(char::is_whitespace) || value.is_empty() {
            errors.push(ConfigError::Syntax {
                line,
                text: content.to_owned(),
            });
            continue;
        }
        if let Some(first) = entries.get(key).map(|e: &Entry| e.line) {
            errors.push(ConfigError::Duplicate {
                key: key.to_owned(),
                line,
                first,
            });
            continue;
        }
        raw.push((key.to_owned(), value.to_owned()));
        entries.insert(
            key.to_owned(),
            Entry {
                value: value.to_owned(),
                line,
            },
        );
    }
    (entries, raw, errors)
}

/// `output_dir` as written, if the text gets that far. Used to place the
/// manifest of a configuration that fails validation.
pub fn output_dir_hint(text: &str) -> Option<PathBuf> {
    lex(text).0.get("output_dir").map(|e| PathBuf::from(&e.value))
}

impl RunConfig {
    /// Parses and validates against the model's schema. All problems are
    /// reported, not just the first.
    pub fn parse(text: &str) -> Result<Self, Vec<ConfigError>> {
        let (mut entries, raw, mut errors) = lex(text);
        let model = match entries.remove("model") {
            None => {
                errors.push(ConfigError::MissingModel);
                return Err(errors);
            }
            Some(e) => match Model::parse(&e.value) {
                Some(m) => m,
                None => {
                    errors.push(ConfigError::UnknownModel {
                        value: e.value,
                        line: e.line,
                    });
                    return Err(errors);
                }
            },
        };
        let (required, optional) = model.schema();
        for (key, e) in &entries {
            let known = key == "output_dir" || required.contains(&key.as_str()) || optional.contains(&key.as_str());
            if !known {
                errors.push(ConfigError::UnknownKey {
                    key: key.clone(),
                    line: e.line,
                    model,
                });
            }
        }
        for key in required {
            if !entries.contains_key(*key) && !axis_exempt(model, &entries, key) {
                errors.push(ConfigError::Missing {
                    key: (*key).to_owned(),
                    model,
                });
            }
        }
        if !errors.is_empty() {
            errors.sort_by_key(line_of);
            return Err(errors);
        }
        let mut resolved = Map::new();
        resolved.insert("model".into(), json!(model.as_str()));
        Ok(Self {
            model,
            entries,
            raw,
            resolved,
        })
    }

    pub fn output_dir(&mut self) -> PathBuf {
        let dir = self.entries.get("output_dir").map_or(".".to_owned(), |e| e.value.clone());
        self.resolved.insert("output_dir".into(), json!(dir));
        PathBuf::from(dir)
    }

    /// Every value read so far, defaults included.
    pub fn resolved(&self) -> &Map<String, Value> {
        &self.resolved
    }

    fn invalid(&self, key: &str, expected: &'static str) -> ConfigError {
        let e = &self.entries[key];
        ConfigError::Invalid {
            key: key.to_owned(),
            line: e.line,
            value: e.value.clone(),
            expected,
        }
    }

    fn get<V: Clone + Into<Value>>(
        &mut self,
        key: &str,
        default: Option<V>,
        expected: &'static str,
        convert: impl Fn(&str) -> Option<V>,
    ) -> Result<V, ConfigError> {
        let v = match self.entries.get(key) {
            Some(e) => convert(&e.value).ok_or_else(|| self.invalid(key, expected))?,
            None => default.ok_or_else(|| ConfigError::Missing {
                key: key.to_owned(),
                model: self.model,
            })?,
        };
        self.resolved.insert(key.to_owned(), v.clone().into());
        Ok(v)
    }

    /// A finite real.
    pub fn real(&mut self, key: &str) -> Result<f64, ConfigError> {
        self.get(key, None, "a finite number", parse_real)
    }

    pub fn real_or(&mut self, key: &str, default: f64) -> Result<f64, ConfigError> {
        self.get(key, Some(default), "a finite number", parse_real)
    }

    pub fn count_or(&mut self, key: &str, default: usize) -> Result<usize, ConfigError> {
        self.get(key, Some(default), "a non-negative integer", |s| s.parse().ok())
    }

    pub fn count(&mut self, key: &str) -> Result<usize, ConfigError> {
        self.get(key, None, "a non-negative integer", |s| s.parse().ok())
    }

    pub fn flag_or(&mut self, key: &str, default: bool) -> Result<bool, ConfigError> {
        self.get(key, Some(default), "true or false", |s| s.parse().ok())
    }

    pub fn text_or(&mut self, key: &str, default: &str) -> Result<String, ConfigError> {
        self.get(key, Some(default.to_owned()), "text", |s| Some(s.to_owned()))
    }

    /// Comma-separated finite reals, at least one.
    pub fn list(&mut self, key: &str) -> Result<Vec<f64>, ConfigError> {
        self.get(key, None, "a comma-separated list of numbers", |s| {
            s.split(',').map(|x| parse_real(x.trim())).collect::<Option<Vec<_>>>()
        })
    }

    /// Rejects a value that was read but is out of range.
    pub fn check(&self, key: &str, ok: bool, expected: &'static str) -> Result<(), ConfigError> {
        if ok || !self.entries.contains_key(key) {
            Ok(())
        } else {
            Err(self.invalid(key, expected))
        }
    }
}

fn parse_real(s: &str) -> Option<f64> {
    s.parse::<f64>().ok().filter(|v| v.is_finite())
}

/// A double-well scan does not need the coordinate it scans.
fn axis_exempt(model: Model, entries: &BTreeMap<String, Entry>, key: &str) -> bool {
    model == Model::ScanDoubleWell && entries.get("axis").is_some_and(|a| a.value == key)
}

fn line_of(e: &ConfigError) -> usize {
    match e {
        ConfigError::Syntax { line, .. }
        | ConfigError::Duplicate { line, .. }
        | ConfigError::UnknownModel { line, .. }
        | ConfigError::UnknownKey { line, .. }
        | ConfigError::Invalid { line, .. } => *line,
        ConfigError::MissingModel | ConfigError::Missing { .. } => usize::MAX,
    }
}
