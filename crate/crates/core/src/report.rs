//! Batch verification over catalog entries and report formatting.

use crate::catalog::{self, CatalogEntry, CheckCtx, EntryInfo};
use crate::g2ops::{
    bryant_identity_residuals, classify_torsion, extract_h, fit_lambda, flow_family_residual,
    j_calibration, ricci, G2Error, PointData, TorsionType,
};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use std::time::Instant;

pub const SCHEMA_VERSION: u32 = 1;
pub const DEFAULT_SAMPLES: usize = 100;
pub const DEFAULT_SEED: u64 = 42;
pub const DEFAULT_TOL: f64 = 1e-9;

/// One residual compared against its threshold. `value` is `None` when the residual is not finite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub value: Option<f64>,
    pub threshold: f64,
    pub pass: bool,
}

impl Check {
    pub fn new(name: &str, value: f64, threshold: f64) -> Check {
        let value = value.is_finite().then_some(value);
        Check {
            name: name.to_string(),
            value,
            threshold,
            pass: value.is_some_and(|v| v <= threshold),
        }
    }

    fn failed(name: &str, threshold: f64) -> Check {
        Check {
            name: name.to_string(),
            value: None,
            threshold,
            pass: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Range {
    pub min: f64,
    pub max: f64,
    pub mean: f64,
}

impl Range {
    fn of(xs: impl IntoIterator<Item = f64>) -> Option<Range> {
        let (mut min, mut max, mut sum, mut n) = (f64::INFINITY, f64::NEG_INFINITY, 0.0, 0usize);
        for x in xs {
            min = min.min(x);
            max = max.max(x);
            sum += x;
            n += 1;
        }
        (n > 0).then(|| Range {
            min,
            max,
            mean: sum / n as f64,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntryReport {
    pub id: String,
    pub title: String,
    pub stretch: bool,
    pub expected_lambda: Option<f64>,
    pub expected_type: TorsionType,
    pub lambda: Option<f64>,
    pub lambda_residual: Option<f64>,
    pub lambda_spread: Option<f64>,
    pub torsion_type: Option<TorsionType>,
    /// |τ|² over the sample points.
    pub norm_sq: Option<Range>,
    /// |τ³|²/|τ|⁶ and |τ³|²/((2/3)|τ|⁶) over the sample points.
    pub positive_ratio: Option<Range>,
    pub negative_ratio: Option<Range>,
    /// Raw (r466, r469) maxima for the quadratic consequences, before relative scaling.
    pub bryant: Option<[f64; 2]>,
    pub checks: Vec<Check>,
    pub error: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wall_ms: Option<f64>,
    pub pass: bool,
}

impl EntryReport {
    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub schema_version: u32,
    pub seed: u64,
    pub samples: usize,
    pub tol: f64,
    pub include_stretch: bool,
    pub calibration: Check,
    pub entries: Vec<EntryReport>,
    /// All non-stretch entries pass.
    pub pass: bool,
}

impl VerificationReport {
    pub fn entry(&self, id: &str) -> Option<&EntryReport> {
        self.entries.iter().find(|e| e.id == id)
    }

    pub fn exit_code(&self) -> i32 {
        if self.pass {
            0
        } else {
            1
        }
    }

    /// Drops wall times so two runs compare equal.
    pub fn without_timing(mut self) -> VerificationReport {
        for e in &mut self.entries {
            e.wall_ms = None;
        }
        self
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ReportError {
    #[error("unknown catalog id `{0}`")]
    UnknownId(String),
    #[error("cannot serialize report: {0}")]
    Json(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Json,
    Table,
}

#[derive(Debug, Clone, Copy)]
pub struct VerifyOptions {
    pub samples: usize,
    pub seed: u64,
    pub tol: f64,
    pub include_stretch: bool,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        VerifyOptions {
            samples: DEFAULT_SAMPLES,
            seed: DEFAULT_SEED,
            tol: DEFAULT_TOL,
            include_stretch: false,
        }
    }
}

/// Resolves ids; an empty list or `all` means the whole catalog, with stretch entries only if requested.
/// Explicitly named entries always run.
pub fn select(
    ids: &[&str],
    include_stretch: bool,
) -> Result<Vec<&'static CatalogEntry>, ReportError> {
    if ids.is_empty() || ids.contains(&"all") {
        return Ok(catalog::entries()
            .iter()
            .filter(|e| include_stretch || !e.info.stretch)
            .collect());
    }
    let mut out: Vec<&'static CatalogEntry> = Vec::new();
    for id in ids {
        let e = catalog::find(id).ok_or_else(|| ReportError::UnknownId(id.to_string()))?;
        if !out.iter().any(|o| o.info.id == e.info.id) {
            out.push(e);
        }
    }
    Ok(out)
}

pub fn run_verify(
    ids: &[&str],
    samples: usize,
    seed: u64,
    tol: f64,
    include_stretch: bool,
) -> Result<VerificationReport, ReportError> {
    run_with(
        ids,
        &VerifyOptions {
            samples,
            seed,
            tol,
            include_stretch,
        },
    )
}

pub fn run_with(ids: &[&str], opts: &VerifyOptions) -> Result<VerificationReport, ReportError> {
    let selected = select(ids, opts.include_stretch)?;
    let mut entries: Vec<EntryReport> =
        selected.par_iter().map(|e| verify_entry(e, opts)).collect();
    entries.sort_by(|a, b| a.id.cmp(&b.id));
    let (cal, _) = j_calibration();
    let calibration = Check::new("j_calibration", cal, 0.1 * opts.tol);
    let pass = calibration.pass && entries.iter().all(|e| e.stretch || e.pass);
    Ok(VerificationReport {
        schema_version: SCHEMA_VERSION,
        seed: opts.seed,
        samples: opts.samples,
        tol: opts.tol,
        include_stretch: opts.include_stretch,
        calibration,
        entries,
        pass,
    })
}

fn blank(info: &EntryInfo) -> EntryReport {
    EntryReport {
        id: info.id.to_string(),
        title: info.title.to_string(),
        stretch: info.stretch,
        expected_lambda: info.expected.lambda,
        expected_type: info.expected.kind,
        lambda: None,
        lambda_residual: None,
        lambda_spread: None,
        torsion_type: None,
        norm_sq: None,
        positive_ratio: None,
        negative_ratio: None,
        bryant: None,
        checks: Vec::new(),
        error: None,
        wall_ms: None,
        pass: false,
    }
}

/// Runs the full suite on one entry; build or evaluation errors become a failed report.
pub fn verify_entry(entry: &CatalogEntry, opts: &VerifyOptions) -> EntryReport {
    let start = Instant::now();
    let mut r = blank(&entry.info);
    if let Err(e) = fill(entry, opts, &mut r) {
        r.error = Some(e.to_string());
    }
    r.pass = r.error.is_none() && !r.checks.is_empty() && r.checks.iter().all(|c| c.pass);
    r.wall_ms = Some(start.elapsed().as_secs_f64() * 1e3);
    r
}

fn sup(points: &[PointData], f: impl Fn(&PointData) -> f64) -> f64 {
    points.iter().map(f).fold(0.0, f64::max)
}

fn fill(entry: &CatalogEntry, opts: &VerifyOptions, r: &mut EntryReport) -> Result<(), G2Error> {
    let tol = opts.tol;
    let expected = entry.info.expected;
    let built = entry.build()?;
    let field = &built.field;
    let model = &field.model;
    let checks = &mut r.checks;

    checks.push(Check::new(
        "d_squared",
        model.d_squared_residual(opts.samples, opts.seed)?,
        tol,
    ));
    let pts = model.sample_points(opts.samples, opts.seed)?;
    checks.push(Check::new("closure", field.closure_residual(&pts)?, tol));

    let t = field.torsion()?;
    let pd = field.at_all(&t, &pts)?;
    checks.push(Check::new("p7", sup(&pd, |p| p.p7.sup_norm()), tol));
    checks.push(Check::new(
        "reconstruction",
        sup(&pd, |p| p.reconstruction_residual()),
        tol,
    ));
    checks.push(Check::new("semibasic", sup(&pd, |p| p.vertical), tol));

    let classes: Vec<_> = pd.iter().map(classify_torsion).collect();
    r.norm_sq = Range::of(classes.iter().map(|c| c.norm_sq));
    r.positive_ratio = Range::of(classes.iter().map(|c| c.positive_ratio));
    r.negative_ratio = Range::of(classes.iter().map(|c| c.negative_ratio));
    r.torsion_type = classes.first().map(|c| c.kind);
    let mismatched = classes.iter().filter(|c| c.kind != expected.kind).count();
    checks.push(Check::new("torsion_type", mismatched as f64, 0.0));

    let fit = fit_lambda(&pd);
    r.lambda = fit.lambda;
    r.lambda_residual = fit.lambda.map(|_| fit.residual);
    r.lambda_spread = fit.lambda.map(|_| fit.spread);
    if let Some(lambda) = expected.lambda {
        match fit.lambda {
            Some(l) => {
                checks.push(Check::new("lambda", (l - lambda).abs(), 10.0 * tol));
                checks.push(Check::new("lambda_spread", fit.spread, 10.0 * tol));
            }
            None => checks.push(Check::failed("lambda", 10.0 * tol)),
        }
        let (mut raw466, mut raw469, mut rel466, mut rel469) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
        let mut h = 0.0f64;
        for p in &pd {
            let (a, b) = bryant_identity_residuals(p, lambda);
            let n = p.norm_sq.sqrt();
            raw466 = raw466.max(a);
            raw469 = raw469.max(b);
            rel466 = rel466.max(a / n.powi(4).max(1.0));
            rel469 = rel469.max(b / n.powi(3).max(1.0));
            h = h.max(extract_h(p, lambda)?.quadratic_residual);
        }
        r.bryant = Some([raw466, raw469]);
        checks.push(Check::new("bryant_d_tau3", rel466, 10.0 * tol));
        checks.push(Check::new("bryant_d_norm", rel469, 10.0 * tol));
        checks.push(Check::new("h_tensor", h, 10.0 * tol));
    }

    if expected.erp {
        checks.push(Check::new(
            "d_norm_sq",
            sup(&pd, |p| p.d_norm_sq.sup_norm()),
            10.0 * tol,
        ));
        checks.push(Check::new(
            "d_tau_tau",
            sup(&pd, |p| p.d_tau2.sup_norm()),
            10.0 * tol,
        ));
        checks.push(Check::new(
            "d_star_tau_tau",
            sup(&pd, |p| p.d_star_tau2.sup_norm()),
            10.0 * tol,
        ));
    }
    if let Some(split) = &built.flow {
        checks.push(Check::new(
            "flow_family",
            sup(&pd, |p| flow_family_residual(p, split)),
            tol,
        ));
    }

    let mut trace: f64 = 0.0;
    let mut ric_sup: f64 = 0.0;
    for p in &pd {
        let ric = ricci(p)?;
        trace = trace.max((ric.ric.trace() - ric.scal).abs());
        ric_sup = ric_sup.max(ric.ric.amax());
    }
    checks.push(Check::new("ricci_trace", trace, tol));
    if expected.kind == TorsionType::Zero {
        checks.push(Check::new("ricci_flat", ric_sup, tol));
    }

    if let Some(s) = &built.soliton {
        let grid =
            model.sample_points_with(s.grid.len(), opts.seed, Some((&s.grid_var, &s.grid)))?;
        checks.push(Check::new(
            "soliton",
            field.soliton_residual(&t, &s.v, s.c, &grid)?,
            100.0 * tol,
        ));
    }

    let ctx = CheckCtx {
        field,
        torsion: &t,
        points: &pts,
        samples: opts.samples,
        seed: opts.seed,
    };
    for e in &built.extras {
        let threshold = e.factor * tol;
        checks.push(match (e.eval)(&ctx) {
            Ok(v) => Check::new(&e.name, v, threshold),
            Err(_) => Check::failed(&e.name, threshold),
        });
    }
    Ok(())
}

/// Renders the report. JSON omits wall times unless `timing` is set; the table always shows them.
pub fn emit_report(
    r: &VerificationReport,
    format: Format,
    timing: bool,
) -> Result<String, ReportError> {
    match format {
        Format::Json => {
            let body = if timing {
                r.clone()
            } else {
                r.clone().without_timing()
            };
            let mut s = serde_json::to_string_pretty(&body)
                .map_err(|e| ReportError::Json(e.to_string()))?;
            s.push('\n');
            Ok(s)
        }
        Format::Table => Ok(table(r)),
    }
}

pub fn parse_report(s: &str) -> Result<VerificationReport, ReportError> {
    serde_json::from_str(s).map_err(|e| ReportError::Json(e.to_string()))
}

fn sci(x: Option<f64>) -> String {
    x.map_or_else(|| "-".to_string(), |v| format!("{v:.2e}"))
}

fn frac(x: Option<f64>) -> String {
    match x {
        None => "-".to_string(),
        Some(v) => match crate::symexpr::rational(v) {
            Some((p, 1)) => format!("{p}"),
            Some((p, q)) => format!("{p}/{q}"),
            None => format!("{v:.6}"),
        },
    }
}

fn worst(e: &EntryReport) -> String {
    let failing: Vec<_> = e
        .checks
        .iter()
        .filter(|c| !c.pass)
        .map(|c| c.name.as_str())
        .collect();
    match (&e.error, failing.is_empty()) {
        (Some(err), _) => format!("error: {err}"),
        (None, true) => String::new(),
        (None, false) => format!("failed: {}", failing.join(",")),
    }
}

fn table(r: &VerificationReport) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "seed {}  samples {}  tol {:.0e}  schema v{}",
        r.seed, r.samples, r.tol, r.schema_version
    );
    let _ = writeln!(
        s,
        "{:<18} {:>3} {:>8} {:>8} {:>9} {:>9} {:>9} {:>9} {:>9} {:>4} {:>9}  notes",
        "id", "stx", "lambda", "type", "d2", "closure", "spread", "|tau|2", "checks", "ok", "ms"
    );
    for e in &r.entries {
        let d2 = e.check("d_squared").and_then(|c| c.value);
        let cl = e.check("closure").and_then(|c| c.value);
        let ty = e
            .torsion_type
            .map_or("-".to_string(), |t| format!("{t:?}").to_lowercase());
        let passed = e.checks.iter().filter(|c| c.pass).count();
        let _ = writeln!(
            s,
            "{:<18} {:>3} {:>8} {:>8} {:>9} {:>9} {:>9} {:>9} {:>9} {:>4} {:>9}  {}",
            e.id,
            if e.stretch { "*" } else { "" },
            frac(e.expected_lambda.and(e.lambda)),
            ty,
            sci(d2),
            sci(cl),
            sci(e.lambda_spread),
            sci(e.norm_sq.map(|n| n.mean)),
            format!("{passed}/{}", e.checks.len()),
            if e.pass { "PASS" } else { "FAIL" },
            e.wall_ms.map_or("-".to_string(), |m| format!("{m:.0}")),
            worst(e),
        );
    }
    let _ = writeln!(
        s,
        "calibration j(phi) = 6g: {}  overall: {}",
        sci(r.calibration.value),
        if r.pass { "PASS" } else { "FAIL" }
    );
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flat_passes_trivially() {
        let r = run_verify(&["flat"], 10, 1, DEFAULT_TOL, false).unwrap();
        assert!(r.pass);
        assert_eq!(r.entries.len(), 1);
        assert_eq!(r.entries[0].torsion_type, Some(TorsionType::Zero));
    }

    #[test]
    fn tiny_tolerance_reports_magnitudes() {
        let r = run_verify(&["lauret_GJ"], 10, 1, 1e-30, false).unwrap();
        assert!(!r.pass);
        assert_eq!(r.exit_code(), 1);
        let failing: Vec<_> = r.entries[0].checks.iter().filter(|c| !c.pass).collect();
        assert!(!failing.is_empty());
        assert!(failing.iter().all(|c| c.value.is_some()));
    }

    #[test]
    fn unknown_id_is_an_error() {
        assert_eq!(
            run_verify(&["nope"], 1, 1, 1e-9, false),
            Err(ReportError::UnknownId("nope".into()))
        );
    }

    #[test]
    fn all_excludes_stretch_unless_asked() {
        assert!(select(&["all"], false)
            .unwrap()
            .iter()
            .all(|e| !e.info.stretch));
        assert_eq!(select(&[], true).unwrap().len(), catalog::entries().len());
        assert_eq!(select(&["neg_34_twistor"], false).unwrap().len(), 1);
    }

    #[test]
    fn json_round_trips() {
        let r = run_verify(&["flat", "lauret_GJ"], 5, 3, DEFAULT_TOL, false).unwrap();
        let s = emit_report(&r, Format::Json, true).unwrap();
        assert_eq!(parse_report(&s).unwrap(), r);
        let t = emit_report(&r, Format::Table, false).unwrap();
        assert!(
            t.lines()
                .filter(|l| l.starts_with("flat ") || l.starts_with("lauret_GJ "))
                .count()
                == 2
        );
        assert!(t.contains("1/6"));
    }
}
