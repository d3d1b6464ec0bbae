//! One function per model: read parameters, run, write CSVs, summarize.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use frg_core::action::{kernel_continuum, kernel_finite, kernel_relative_deviation, EnvironmentSpec};
use frg_core::cosine::{self, classify_cosine, run_cosine, CosineModel, CosineParams, CosineRun};
use frg_core::doublewell::{
    self, classify_double_well, run_double_well, DoubleWellParams, DoubleWellRun, DEFAULT_ALPHA_SETTLE_TOL,
    DEFAULT_RHO_ESCAPE,
};
use frg_core::flowcore::{FlowOptions, TerminalReason};
use frg_core::output::{
    write_table, write_table_with_status, COSINE_HEADER, DOUBLE_WELL_HEADER, EXPONENT_HEADER, KERNEL_HEADER,
    PHASE_DIAGRAM_HEADER,
};
use frg_core::scan::{
    bisect_critical, exponent_fit, sweep_phase_diagram, CriticalScan, ExponentWindow, ScanAxis, ScanError,
    DEFAULT_TOL_REL,
};
use frg_core::PhaseLabel;
use serde_json::json;
use thiserror::Error;

use crate::config::{ConfigError, Model, RunConfig};

/// Scan evaluations in the order they were made.
pub const BRACKET_HEADER: &str = "value,l_terminal,phase";

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("invalid parameters: {0}")]
    Parameters(String),
    #[error("{0}")]
    Numerical(String),
    #[error("writing {path}: {source}")]
    Io { path: PathBuf, source: io::Error },
}

/// What a finished model run reports back to the manifest and stdout.
#[derive(Debug, Default)]
pub struct Outcome {
    /// `key=value` summary lines, in print order.
    pub summary: Vec<(String, String)>,
    pub outputs: Vec<String>,
    /// How often each integration stop reason occurred.
    pub terminal_reasons: BTreeMap<String, usize>,
    /// Set when the run finished with a numerical failure; outputs are kept.
    pub failure: Option<String>,
}

impl Outcome {
    fn say(&mut self, key: &str, value: impl ToString) {
        self.summary.push((key.to_owned(), value.to_string()));
    }

    fn reason(&mut self, r: TerminalReason) {
        *self.terminal_reasons.entry(r.as_str().to_owned()).or_default() += 1;
    }

    fn write(&mut self, dir: &Path, name: &str, body: impl FnOnce(&mut BufWriter<File>) -> io::Result<()>) -> Result<(), RunError> {
        let path = dir.join(name);
        let io_err = |source| RunError::Io {
            path: path.clone(),
            source,
        };
        let mut w = BufWriter::new(File::create(&path).map_err(io_err)?);
        body(&mut w).and_then(|_| w.flush()).map_err(io_err)?;
        self.outputs.push(name.to_owned());
        Ok(())
    }
}

pub fn dispatch(cfg: &mut RunConfig, dir: &Path) -> Result<Outcome, RunError> {
    match cfg.model {
        Model::DoubleWell => double_well(cfg, dir),
        Model::Cosine => cosine(cfg, dir),
        Model::Kernel => kernel(cfg, dir),
        Model::ScanDoubleWell => scan_double_well(cfg, dir),
        Model::ScanCosine => scan_cosine(cfg, dir),
        Model::Exponent => exponent(cfg, dir),
    }
}

fn parameters(e: impl ToString) -> RunError {
    RunError::Parameters(e.to_string())
}

fn flow_options(cfg: &mut RunConfig, defaults: FlowOptions<f64>) -> Result<FlowOptions<f64>, RunError> {
    let l_max = cfg.real_or("l_max", defaults.l_max)?;
    cfg.check("l_max", l_max > 0.0, "a positive number")?;
    let rel = cfg.real_or("rel_tol", defaults.rel_tol)?;
    cfg.check("rel_tol", rel > 0.0, "a positive number")?;
    let abs = cfg.real_or("abs_tol", defaults.abs_tol)?;
    cfg.check("abs_tol", abs > 0.0, "a positive number")?;
    Ok(FlowOptions {
        l_max,
        ..defaults
    }
    .tolerances(rel, abs))
}

fn double_well_params(cfg: &mut RunConfig, skip: Option<&str>, placeholder: f64) -> Result<DoubleWellParams<f64>, RunError> {
    let mut read = |key: &str| if skip == Some(key) { Ok(placeholder) } else { cfg.real(key) };
    let gamma = read("gamma")?;
    let rho = read("rho_bar0")?;
    let inv_v = read("inv_v_hat0")?;
    let eps_c = read("eps_c0")?;
    DoubleWellParams::new(gamma, rho, inv_v, eps_c).map_err(parameters)
}

struct DoubleWellClassifier {
    options: FlowOptions<f64>,
    rho_escape: f64,
    settle: f64,
}

impl DoubleWellClassifier {
    fn from_config(cfg: &mut RunConfig) -> Result<Self, RunError> {
        let options = flow_options(cfg, DoubleWellRun::default_options())?;
        let rho_escape = cfg.real_or("rho_escape", DEFAULT_RHO_ESCAPE)?;
        cfg.check("rho_escape", rho_escape >= 0.0, "a non-negative number")?;
        let settle = cfg.real_or("alpha_settle_tol", DEFAULT_ALPHA_SETTLE_TOL)?;
        cfg.check("alpha_settle_tol", settle > 0.0, "a positive number")?;
        Ok(Self {
            options,
            rho_escape,
            settle,
        })
    }

    fn run(&self, params: &DoubleWellParams<f64>) -> Result<(DoubleWellRun<f64>, PhaseLabel), doublewell::DoubleWellError> {
        let run = run_double_well(params, &self.options, Some(self.rho_escape))?;
        let label = classify_double_well(&run.trace, self.rho_escape, self.settle)?;
        Ok((run, label))
    }
}

fn double_well(cfg: &mut RunConfig, dir: &Path) -> Result<Outcome, RunError> {
    let params = double_well_params(cfg, None, 0.0)?.with_lambda0(cfg.real_or("lambda0", 1.0)?);
    params.validate().map_err(parameters)?;
    let classifier = DoubleWellClassifier::from_config(cfg)?;
    let (run, label) = classifier.run(&params).map_err(|e| RunError::Numerical(e.to_string()))?;

    let mut out = Outcome::default();
    out.reason(run.trace.terminal_reason());
    let rows = doublewell::trajectory_rows(&run);
    out.write(dir, "trajectory.csv", |w| write_table(w, DOUBLE_WELL_HEADER, &rows))?;
    out.say("phase", label.phase);
    out.say("l_terminal", label.l_terminal);
    out.say("alpha", label.diagnostics["alpha"]);
    out.failure = numeric_failure(&run.trace);
    Ok(out)
}

fn numeric_failure(trace: &frg_core::flowcore::FlowTrace<f64>) -> Option<String> {
    (trace.terminal_reason() == TerminalReason::NumericFailure)
        .then(|| trace.failure().unwrap_or("numeric failure").to_owned())
}

fn cosine_model(cfg: &mut RunConfig) -> Result<CosineModel<f64>, RunError> {
    let d = CosineModel::<f64>::default();
    let model = CosineModel {
        grid_n: cfg.count_or("grid_n", d.grid_n)?,
        third_max: cfg.count_or("n_max", d.third_max)?,
        kink_term: cfg.flag_or("kink_term", d.kink_term)?,
        ..d
    };
    model.validate().map_err(parameters)?;
    Ok(model)
}

fn cosine(cfg: &mut RunConfig, dir: &Path) -> Result<Outcome, RunError> {
    let params = CosineParams::new(cfg.real("alpha")?, cfg.real("e_j_over_lambda0")?, cfg.real("e_c_over_lambda0")?)
        .map_err(parameters)?;
    let model = cosine_model(cfg)?;
    let options = flow_options(cfg, CosineRun::default_options())?;
    let floor = cfg.real_or("eps_floor", cosine::DEFAULT_EPS_FLOOR)?;
    cfg.check("eps_floor", floor > 0.0, "a positive number")?;
    let ceiling = cfg.real_or("growth_ceiling", cosine::DEFAULT_GROWTH_CEILING)?;
    cfg.check("growth_ceiling", ceiling > floor, "a number above eps_floor")?;

    let numerical = |e: cosine::CosineError| RunError::Numerical(e.to_string());
    let run = run_cosine(&params, &model, &options, Some(ceiling)).map_err(numerical)?;
    let label = classify_cosine(&run.trace, floor, ceiling).map_err(numerical)?;

    let mut out = Outcome::default();
    out.reason(run.trace.terminal_reason());
    let rows = cosine::trajectory_rows(&run, floor, ceiling);
    out.write(dir, "trajectory.csv", |w| write_table(w, COSINE_HEADER, &rows))?;
    out.say("phase", label.phase);
    out.say("l_terminal", label.l_terminal);
    out.say("tau", label.diagnostics["tau"]);
    out.say("max_abs_eps", label.diagnostics["max_abs_eps"]);
    if run.under_resolved() {
        out.say("warning", "under_resolved");
    }
    out.failure = numeric_failure(&run.trace);
    Ok(out)
}

fn kernel(cfg: &mut RunConfig, dir: &Path) -> Result<Outcome, RunError> {
    let env = EnvironmentSpec::new(cfg.real("e_c")?, cfg.real("gamma")?, cfg.real("v")?, cfg.real("L")?, cfg.count("M")?)
        .map_err(parameters)?;
    let ps = cfg.list("p_list")?;
    let rows: Vec<Vec<Option<f64>>> = ps
        .iter()
        .map(|&p| {
            vec![
                Some(p),
                Some(kernel_finite(p, &env)),
                Some(kernel_continuum(p, env.e_c, env.gamma)),
                Some(kernel_relative_deviation(p, &env)),
            ]
        })
        .collect();
    let mut out = Outcome::default();
    out.write(dir, "kernel.csv", |w| write_table(w, KERNEL_HEADER, &rows))?;
    let worst = rows.iter().filter_map(|r| r[3]).fold(0.0f64, f64::max);
    out.say("max_rel_dev", format!("{worst:e}"));
    Ok(out)
}

fn bracket_rows(history: &[(f64, PhaseLabel)]) -> Vec<(Vec<Option<f64>>, String)> {
    history
        .iter()
        .map(|(x, l)| (vec![Some(*x), Some(l.l_terminal)], l.phase.to_string()))
        .collect()
}

fn scan_double_well(cfg: &mut RunConfig, dir: &Path) -> Result<Outcome, RunError> {
    let axis_name = cfg.text_or("axis", "")?;
    let axis = match ScanAxis::parse(&axis_name) {
        Some(a @ (ScanAxis::InvVHat0 | ScanAxis::Gamma)) => a,
        _ => return Err(cfg.check("axis", false, "inv_v_hat0 or gamma").unwrap_err().into()),
    };
    let (lo, hi) = (cfg.real("lo")?, cfg.real("hi")?);
    cfg.check("hi", lo < hi, "larger than lo")?;
    cfg.check("lo", lo > 0.0, "a positive number")?;
    let tol = cfg.real_or("tol_rel", DEFAULT_TOL_REL)?;
    cfg.check("tol_rel", tol > 0.0, "a positive number")?;
    let base = double_well_params(cfg, Some(axis.as_str()), lo)?;
    let classifier = DoubleWellClassifier::from_config(cfg)?;

    let mut out = Outcome::default();
    let mut scan = CriticalScan::new(axis, lo, hi, tol);
    for (name, v) in [("gamma", base.gamma), ("rho_bar0", base.rho_bar0), ("inv_v_hat0", base.inv_v_hat0), ("eps_c0", base.eps_c0)] {
        if name != axis.as_str() {
            scan = scan.with_fixed(name, v);
        }
    }
    let mut reasons = Vec::new();
    let result = bisect_critical(&mut scan, |x| {
        let params = axis.apply_double_well(&base, x)?;
        let (run, label) = classifier.run(&params)?;
        reasons.push(run.trace.terminal_reason());
        Ok(label)
    });
    reasons.into_iter().for_each(|r| out.reason(r));

    let rows = bracket_rows(&scan.bracket_history);
    out.write(dir, "scan.csv", |w| write_table_with_status(w, BRACKET_HEADER, &rows))?;
    out.say("axis", axis);
    match result {
        Ok(c) => {
            out.say("critical", format!("{c:.6e}"));
            out.say("bracket", format!("{:.6e}..{:.6e}", scan.lo, scan.hi));
        }
        Err(e) => {
            out.say("critical", "none");
            out.failure = Some(scan_failure(&e));
        }
    }
    Ok(out)
}

fn scan_failure(e: &ScanError) -> String {
    match e {
        ScanError::PersistentUndetermined { value, .. } => {
            format!("classification stays undetermined near {value}; see scan.csv")
        }
        other => other.to_string(),
    }
}

fn scan_cosine(cfg: &mut RunConfig, dir: &Path) -> Result<Outcome, RunError> {
    let axis = cfg.text_or("axis", ScanAxis::EjOverLambda0.as_str())?;
    cfg.check("axis", axis == ScanAxis::EjOverLambda0.as_str(), "e_j_over_lambda0")?;
    let alphas = cfg.list("alphas")?;
    cfg.check("alphas", alphas.iter().all(|&a| a > 0.0), "a list of positive numbers")?;
    let e_c = cfg.real("e_c_over_lambda0")?;
    cfg.check("e_c_over_lambda0", e_c > 0.0, "a positive number")?;
    let (lo, hi) = (cfg.real("lo")?, cfg.real("hi")?);
    cfg.check("lo", lo > 0.0, "a positive number")?;
    cfg.check("hi", lo < hi, "larger than lo")?;
    let tol = cfg.real_or("tol_rel", DEFAULT_TOL_REL)?;
    cfg.check("tol_rel", tol > 0.0, "a positive number")?;
    let model = cosine_model(cfg)?;

    let rows = sweep_phase_diagram(&alphas, (lo, hi), e_c, tol, &model);
    let mut out = Outcome::default();
    let cells: Vec<_> = rows.iter().map(|r| r.csv_cells()).collect();
    out.write(dir, "phase_diagram.csv", |w| write_table_with_status(w, PHASE_DIAGRAM_HEADER, &cells))?;
    let mut failed = Vec::new();
    for r in &rows {
        let value = r.critical_ej_over_ec.map_or("none".to_owned(), |c| format!("{c:.6e}"));
        out.say(&format!("critical[alpha={}]", r.alpha), format!("{value} status={}", r.status));
        if r.status.starts_with("error") {
            failed.push(format!("alpha {}: {}", r.alpha, r.status));
        }
    }
    if !failed.is_empty() {
        out.failure = Some(failed.join("; "));
    }
    Ok(out)
}

fn exponent(cfg: &mut RunConfig, dir: &Path) -> Result<Outcome, RunError> {
    let gamma_c = cfg.real("gamma_c")?;
    let base = double_well_params(cfg, Some("gamma"), gamma_c)?.with_lambda0(cfg.real_or("lambda0", 1.0)?);
    base.validate().map_err(parameters)?;
    let d = ExponentWindow::default();
    let window = ExponentWindow {
        lo: cfg.real_or("window_lo", d.lo)?,
        hi: cfg.real_or("window_hi", d.hi)?,
        count: cfg.count_or("window_count", d.count)?,
    };
    cfg.check("window_lo", window.lo > 0.0, "a positive number")?;
    cfg.check("window_hi", window.hi > window.lo && window.hi < 1.0, "between window_lo and 1")?;
    cfg.check("window_count", window.count >= 4, "at least 4")?;

    let fit = exponent_fit(&base, gamma_c, &window).map_err(|e| RunError::Numerical(e.to_string()))?;
    let mut out = Outcome::default();
    let rows: Vec<Vec<Option<f64>>> = fit
        .points
        .iter()
        .map(|&(g, chi)| vec![Some(g), Some(chi), Some((g - gamma_c).abs().ln()), Some(chi.ln())])
        .collect();
    out.write(dir, "exponent.csv", |w| write_table(w, EXPONENT_HEADER, &rows))?;
    let summary = json!({
        "kappa": fit.kappa,
        "r_squared": fit.r_squared,
        "gamma_c": fit.gamma_c,
        "window": fit.window,
    });
    out.write(dir, "exponent.json", |w| {
        serde_json::to_writer_pretty(&mut *w, &summary)?;
        writeln!(w)
    })?;
    out.say("kappa", fit.kappa);
    out.say("r_squared", fit.r_squared);
    Ok(out)
}
