//! Scan and diagnostic front end over `bandspec-core`.
//!
//! Three entry points mirror the CLI subcommands: [`load_operator`] reads and
//! validates an operator file, [`diagnose`] runs every structural check at
//! one λ, and [`scan`] classifies a rectangular λ-grid in parallel and emits
//! deterministic CSV/JSON. Grid points are independent read-only tasks, so
//! the scan result is byte-identical for any worker count.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use bandspec_core::analysis::{
    bilinear_invariant_max_drift, decay_fit, dual_coupling_residual, growth_report,
    wronskian_residual, Classification,
};
use bandspec_core::bandop::operator_from_json;
use bandspec_core::kernel::{resolvent_residual, KernelWindow};
use bandspec_core::recurrence::extend;
use bandspec_core::scalar::cplx;
use bandspec_core::weyl::weyl_converged;
use bandspec_core::{defaults, BandOperator64, Error as CoreError, ValidationReport};

/// CLI-level failures, mapped to exit codes by the binary:
/// parse/validation → 2, I/O → 3.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Parse(#[from] CoreError),
    #[error("operator failed validation: {0}")]
    Validation(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("{0}")]
    BadArguments(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Parse(_) | CliError::Validation(_) | CliError::BadArguments(_) => 2,
            CliError::Io(_) => 3,
        }
    }
}

/// Read an operator description, parse it, and validate the extreme
/// diagonals up to `validate_depth` (defaults module value when `None`).
pub fn load_operator(
    path: &Path,
    validate_depth: Option<usize>,
) -> Result<(BandOperator64, ValidationReport<f64>), CliError> {
    let text = std::fs::read_to_string(path)?;
    let op = operator_from_json::<f64>(&text)?;
    let report = op.validate(validate_depth.unwrap_or(defaults::VALIDATE_DEPTH));
    if !report.is_ok() {
        let mut msg = String::new();
        for f in report.failures.iter().take(8) {
            let _ = write!(
                msg,
                "row {} {:?} diagonal (cond {:.3e}); ",
                f.row, f.which, f.cond
            );
        }
        let _ = write!(msg, "{} failure(s) up to row {}", report.failures.len(), report.checked_to);
        return Err(CliError::Validation(msg));
    }
    Ok((op, report))
}

/// Classification tolerances and depths for one λ evaluation.
#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
pub struct ClassifyParams {
    /// Recurrence depth K.
    pub depth: i64,
    /// Initial finite-section size M0.
    pub section_start: usize,
    /// Weyl doubling-gap tolerance.
    pub tol: f64,
    /// Dead zone around q = 1.
    pub eps_class: f64,
    /// Largest acceptable log-domain fit rms.
    pub fit_tol: f64,
}

impl Default for ClassifyParams {
    fn default() -> Self {
        ClassifyParams {
            depth: defaults::RECURRENCE_DEPTH,
            section_start: defaults::SECTION_START,
            tol: defaults::WEYL_TOL,
            eps_class: defaults::EPS_CLASS,
            fit_tol: defaults::FIT_TOL,
        }
    }
}

/// Per-point classification outcome; `error` carries the machine-readable
/// tag when a stage could not run to completion.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct PointOutcome {
    pub class: Classification,
    pub q_hat: Option<f64>,
    pub c_hat: Option<f64>,
    pub rms_residual: Option<f64>,
    pub weyl_gap: Option<f64>,
    pub error: Option<String>,
}

impl PointOutcome {
    fn inconclusive(tag: &str, weyl_gap: Option<f64>) -> Self {
        PointOutcome {
            class: Classification::Inconclusive,
            q_hat: None,
            c_hat: None,
            rms_residual: None,
            weyl_gap,
            error: Some(tag.to_string()),
        }
    }
}

/// Decay-fit window extent for a given depth and bandwidths; `None` when the
/// depth cannot support the minimum window.
fn fit_extent(op: &BandOperator64, depth: i64) -> Option<usize> {
    let band = op.upper_bandwidth() + op.lower_bandwidth();
    let needed = 12 * band;
    let available = depth - op.upper_bandwidth() as i64;
    if available < needed as i64 {
        return None;
    }
    Some((needed + 12).min(available as usize))
}

/// Classify one λ: converged Weyl estimate, kernel window, decay fit.
pub fn classify_point(
    op: &BandOperator64,
    re: f64,
    im: f64,
    params: &ClassifyParams,
) -> PointOutcome {
    let lambda = cplx::<f64>(re, im);
    let extent = match fit_extent(op, params.depth) {
        Some(e) => e,
        None => return PointOutcome::inconclusive("window_too_small", None),
    };
    let basis = match extend(op, lambda, params.depth) {
        Ok(b) => b,
        Err(e) => return PointOutcome::inconclusive(e.tag(), None),
    };
    let weyl = match weyl_converged(op, lambda, params.section_start, params.tol) {
        Ok(w) => w,
        Err(e) => {
            let gap = match &e {
                CoreError::NoConvergence { gap, .. } => Some(*gap),
                _ => None,
            };
            return PointOutcome::inconclusive(e.tag(), gap);
        }
    };
    let window = match KernelWindow::build(op, &basis, &weyl, extent, defaults::OVERLAP_TOL) {
        Ok(w) => w,
        Err(e) => return PointOutcome::inconclusive(e.tag(), weyl.convergence_gap()),
    };
    let fit = decay_fit(&window, params.eps_class, params.fit_tol);
    PointOutcome {
        class: fit.classification,
        q_hat: Some(fit.q_hat),
        c_hat: Some(fit.c_hat),
        rms_residual: Some(fit.rms_residual),
        weyl_gap: weyl.convergence_gap(),
        error: None,
    }
}

/// One named check with its measured value and threshold.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct CheckLine {
    pub name: String,
    pub value: f64,
    pub threshold: f64,
    pub pass: bool,
}

/// Full single-λ diagnostic report.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct DiagnoseReport {
    pub re: f64,
    pub im: f64,
    pub outcome: PointOutcome,
    pub weyl_section: Option<usize>,
    pub checks: Vec<CheckLine>,
    pub rho_q: Vec<f64>,
    pub rho_r: Vec<f64>,
    pub rho_q_plus: Vec<f64>,
    pub rho_r_plus: Vec<f64>,
    pub warnings: Vec<String>,
}

impl DiagnoseReport {
    pub fn all_checks_pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    /// Human-readable report; one aligned line per check.
    pub fn render_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "lambda = {} + {}i", self.re, self.im);
        let _ = writeln!(out, "classification: {}", self.outcome.class);
        if let Some(q) = self.outcome.q_hat {
            let _ = writeln!(
                out,
                "decay fit: q_hat = {:.9}, C_hat = {:.6e}, rms = {:.3e}",
                q,
                self.outcome.c_hat.unwrap_or(f64::NAN),
                self.outcome.rms_residual.unwrap_or(f64::NAN),
            );
        }
        match (self.weyl_section, self.outcome.weyl_gap) {
            (Some(m), Some(gap)) => {
                let _ = writeln!(out, "weyl estimate: section {m} blocks, gap {gap:.3e}");
            }
            (_, Some(gap)) => {
                let _ = writeln!(out, "weyl estimate: gap {gap:.3e}");
            }
            _ => {}
        }
        if let Some(err) = &self.outcome.error {
            let _ = writeln!(out, "error tag: {err}");
        }
        for w in &self.warnings {
            let _ = writeln!(out, "warning: {w}");
        }
        for c in &self.checks {
            let _ = writeln!(
                out,
                "{:<26} {:>12.3e}  (threshold {:>8.1e})  {}",
                c.name,
                c.value,
                c.threshold,
                if c.pass { "PASS" } else { "FAIL" }
            );
        }
        if !self.rho_q.is_empty() {
            let _ = writeln!(
                out,
                "growth rates: rho_q {:?}, rho_r {:?}, rho_q+ {:?}, rho_r+ {:?}",
                self.rho_q, self.rho_r, self.rho_q_plus, self.rho_r_plus
            );
        }
        out
    }
}

/// Run every structural identity check plus the classification at one λ.
/// Math-level failures (no convergence, singular sections) degrade to an
/// inconclusive outcome with a tag; they are not process errors.
pub fn diagnose(op: &BandOperator64, re: f64, im: f64, params: &ClassifyParams) -> DiagnoseReport {
    let lambda = cplx::<f64>(re, im);
    let (r, s) = (op.upper_bandwidth(), op.lower_bandwidth());
    let mut warnings = Vec::new();
    let mut checks = Vec::new();

    let outcome = classify_point(op, re, im, params);
    if fit_extent(op, params.depth).is_none() {
        warnings.push(format!(
            "fit window below minimum (depth {} < {} + bandwidth): classification inconclusive",
            params.depth,
            12 * (r + s)
        ));
    }

    let mut weyl_section = None;
    let mut rho = (Vec::new(), Vec::new(), Vec::new(), Vec::new());

    if let Ok(basis) = extend(op, lambda, params.depth) {
        let k_pair = 30.min(params.depth - r.max(s) as i64 - 1).max(1);
        checks.push(check(
            "pairing_invariant_drift",
            bilinear_invariant_max_drift(op, &basis, k_pair),
            1e-9,
        ));
        let k_wron = 25.min(params.depth - r.max(s) as i64 - 1).max(0);
        let mut worst = 0.0f64;
        for k in 0..=k_wron {
            worst = worst.max(wronskian_residual(op, &basis, k));
        }
        checks.push(check("wronskian_identity", worst, 1e-9));

        match weyl_converged(op, lambda, params.section_start, params.tol) {
            Ok(weyl) => {
                weyl_section = Some(weyl.section_size());
                let extent = (r + s + 2).min((params.depth as usize).saturating_sub(r + s + 2));
                match resolvent_residual(op, &basis, &weyl, extent) {
                    Ok(res) => checks.push(check("resolvent_identity", res, 1e-8)),
                    Err(e) => warnings.push(format!("resolvent identity skipped: {e}")),
                }
                if let Ok(window) =
                    KernelWindow::build(op, &basis, &weyl, fit_extent(op, params.depth).unwrap_or(r + s + 2), defaults::OVERLAP_TOL)
                {
                    checks.push(check(
                        "kernel_overlap",
                        window.max_overlap_mismatch(),
                        1e-9,
                    ));
                }
                let mut coupling = 0.0f64;
                for k in 0..=12.min(params.depth - s as i64 - 1) {
                    coupling = coupling.max(dual_coupling_residual(op, &basis, &weyl, k));
                }
                checks.push(check("dual_coupling_identity", coupling, 1e-8));

                if params.depth >= 50 {
                    let report = growth_report(&basis, &weyl, defaults::GROWTH_TAIL_FRACTION);
                    if outcome.class == Classification::Resolvent {
                        let coherent = report.coherent_with_resolvent(0.0);
                        checks.push(CheckLine {
                            name: "growth_coherence".into(),
                            value: report.max_rho_r(),
                            threshold: 1.0,
                            pass: coherent,
                        });
                    }
                    rho = (
                        report.rho_q.clone(),
                        report.rho_r.clone(),
                        report.rho_q_plus.clone(),
                        report.rho_r_plus.clone(),
                    );
                } else {
                    warnings.push("growth rates skipped: depth below 50".into());
                }
            }
            Err(e) => warnings.push(format!("weyl estimate unavailable: {e}")),
        }
    } else {
        warnings.push("solution basis unavailable (singular extreme block)".into());
    }

    DiagnoseReport {
        re,
        im,
        outcome,
        weyl_section,
        checks,
        rho_q: rho.0,
        rho_r: rho.1,
        rho_q_plus: rho.2,
        rho_r_plus: rho.3,
        warnings,
    }
}

fn check(name: &str, value: f64, threshold: f64) -> CheckLine {
    CheckLine {
        name: name.into(),
        value,
        threshold,
        pass: value <= threshold,
    }
}

/// Scan request: rectangle, grid, depths, tolerances, worker count.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ScanSpec {
    pub operator: String,
    pub re_min: f64,
    pub re_max: f64,
    pub im_min: f64,
    pub im_max: f64,
    pub nx: usize,
    pub ny: usize,
    #[serde(flatten)]
    pub params: ClassifyParams,
    pub workers: usize,
}

impl ScanSpec {
    pub fn validate(&self) -> Result<(), CliError> {
        if !(self.re_min <= self.re_max) || !(self.im_min <= self.im_max) {
            return Err(CliError::BadArguments(
                "rectangle bounds must satisfy re_min <= re_max and im_min <= im_max".into(),
            ));
        }
        if self.nx == 0 || self.ny == 0 || self.nx * self.ny > 1_000_000 {
            return Err(CliError::BadArguments(
                "grid must be nonempty with at most 1e6 points".into(),
            ));
        }
        if self.workers == 0 {
            return Err(CliError::BadArguments("worker count must be positive".into()));
        }
        Ok(())
    }

    fn grid_value(min: f64, max: f64, n: usize, i: usize) -> f64 {
        if n == 1 {
            min
        } else {
            min + (max - min) * (i as f64) / ((n - 1) as f64)
        }
    }

    /// Grid point at row-major index over (im, re): row iy, column ix.
    pub fn lambda_at(&self, idx: usize) -> (f64, f64) {
        let ix = idx % self.nx;
        let iy = idx / self.nx;
        (
            Self::grid_value(self.re_min, self.re_max, self.nx, ix),
            Self::grid_value(self.im_min, self.im_max, self.ny, iy),
        )
    }
}

/// One grid row of a scan result.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ScanRow {
    pub re: f64,
    pub im: f64,
    #[serde(flatten)]
    pub outcome: PointOutcome,
}

/// Scan output: the spec it was produced from plus `nx·ny` rows in row-major
/// (im, re) order.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ScanResult {
    pub spec: ScanSpec,
    pub rows: Vec<ScanRow>,
}

/// Classify every grid point, distributing points over `spec.workers`
/// threads. Row order and content are independent of the worker count.
pub fn scan(op: &BandOperator64, spec: &ScanSpec) -> Result<ScanResult, CliError> {
    spec.validate()?;
    let total = spec.nx * spec.ny;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(spec.workers)
        .build()
        .map_err(|e| CliError::BadArguments(format!("worker pool: {e}")))?;
    let rows: Vec<ScanRow> = pool.install(|| {
        use rayon::prelude::*;
        (0..total)
            .into_par_iter()
            .map(|idx| {
                let (re, im) = spec.lambda_at(idx);
                ScanRow {
                    re,
                    im,
                    outcome: classify_point(op, re, im, &spec.params),
                }
            })
            .collect()
    });
    Ok(ScanResult {
        spec: spec.clone(),
        rows,
    })
}

fn fmt_float(x: f64) -> String {
    format!("{x:.16e}")
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map(fmt_float).unwrap_or_default()
}

/// Fixed-schema CSV: `re,im,class,q_hat,C_hat,rms_residual,weyl_gap,error`,
/// floats at 17 significant digits for lossless reload.
pub fn scan_to_csv(result: &ScanResult) -> String {
    let mut out = String::with_capacity(result.rows.len() * 96 + 64);
    out.push_str("re,im,class,q_hat,C_hat,rms_residual,weyl_gap,error\n");
    for row in &result.rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            fmt_float(row.re),
            fmt_float(row.im),
            row.outcome.class,
            fmt_opt(row.outcome.q_hat),
            fmt_opt(row.outcome.c_hat),
            fmt_opt(row.outcome.rms_residual),
            fmt_opt(row.outcome.weyl_gap),
            row.outcome.error.as_deref().unwrap_or("")
        );
    }
    out
}
