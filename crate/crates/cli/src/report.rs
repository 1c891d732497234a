//! Report files. Every number is rendered with 17 significant digits so that
//! reruns are byte-identical; wall-clock data goes to `run_meta.json` only.

use std::fmt::Write as _;
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Serialize, Serializer};
use serde_json::value::RawValue;

use rcident::diagnostics::Sign;
use rcident::recovery::VDerivTable;
use rcident::Error;

use crate::config::ScenarioConfig;
use crate::runner::{Outcome, RunContext, RunReport};
use crate::CliError;

pub const SUMMARY_FILE: &str = "summary.json";
pub const META_FILE: &str = "run_meta.json";
pub const V_DERIVS_FILE: &str = "v_derivs.csv";
pub const DIAGNOSTICS_FILE: &str = "diagnostics.csv";
pub const WELFARE_FILE: &str = "welfare.csv";

/// A symmetry residual above this is reported as a violation.
pub const SYMMETRY_TOL: f64 = 1e-4;
/// Cauchy–Schwarz statistics below `1 − CS_TOL` are reported as violations.
pub const CS_TOL: f64 = 1e-8;
/// Diagonal second derivatives of `V` below `−CONVEXITY_TOL` are violations.
pub const CONVEXITY_TOL: f64 = 1e-6;

pub fn moments_file(order: usize) -> String {
    format!("moments_order{order}.csv")
}

/// `{:.16e}` rendering; non-finite values become `nan`, `inf` or `-inf`.
pub fn fmt_num(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.16e}")
    } else if v.is_nan() {
        "nan".into()
    } else if v > 0.0 {
        "inf".into()
    } else {
        "-inf".into()
    }
}

/// JSON number with fixed 17-digit rendering; `null` when not finite.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Num(pub f64);

impl Serialize for Num {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        if self.0.is_finite() {
            RawValue::from_string(fmt_num(self.0))
                .map_err(serde::ser::Error::custom)?
                .serialize(s)
        } else {
            s.serialize_none()
        }
    }
}

fn nums(v: &[f64]) -> Vec<Num> {
    v.iter().copied().map(Num).collect()
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

fn csv(header: &[&str], rows: &[Vec<String>]) -> String {
    let mut out = header.join(",");
    out.push('\n');
    for r in rows {
        let line: Vec<String> = r.iter().map(|f| csv_field(f)).collect();
        out.push_str(&line.join(","));
        out.push('\n');
    }
    out
}

fn opt(v: Option<f64>) -> String {
    v.map(fmt_num).unwrap_or_default()
}

fn error_kind(e: &Error) -> &'static str {
    match e {
        Error::Config(_) => "config",
        Error::Dimension { .. } => "dimension",
        Error::Infeasible { .. } => "infeasible",
        Error::NonFinite { .. } => "non_finite",
        Error::Relevance(_) => "relevance",
        Error::Precondition(_) => "precondition",
        Error::Anchor { .. } => "anchor",
        Error::Degenerate { .. } => "degenerate",
        Error::AbsoluteContinuity(_) => "absolute_continuity",
        Error::Weighting(_) => "weighting",
    }
}

/// Coarse grouping: the degenerate guard and missing anchors are relevance
/// failures; everything else is a violated precondition.
fn error_class(e: &Error) -> &'static str {
    match e {
        Error::Relevance(_) | Error::Degenerate { .. } | Error::Anchor { .. } => "relevance",
        _ => "precondition",
    }
}

fn good_label(goods: &[usize]) -> String {
    VDerivTable::label(goods)
}

pub fn moments_csv(report: &RunReport, order: usize) -> Option<String> {
    let m = report.order(order)?;
    let rows: Vec<Vec<String>> = m
        .rows
        .iter()
        .map(|r| {
            vec![
                r.index.label(),
                fmt_num(r.recovered),
                fmt_num(r.truth),
                fmt_num(r.abs_err()),
                opt(r.rel_err()),
                m.route.to_string(),
            ]
        })
        .collect();
    Some(csv(
        &["index", "recovered", "true", "abs_err", "rel_err", "route"],
        &rows,
    ))
}

pub fn v_derivs_csv(report: &RunReport) -> String {
    let mut rows = Vec::new();
    if let Some(vd) = &report.v_derivs {
        for (g, e) in vd.iter() {
            let analytic = report.v_analytic.as_ref().and_then(|a| a.get(g));
            rows.push(vec![
                good_label(g),
                g.len().to_string(),
                fmt_num(e.value),
                opt(analytic),
                opt(analytic.map(|a| (a - e.value).abs())),
                e.candidates.to_string(),
                fmt_num(e.discrepancy),
            ]);
        }
    }
    csv(
        &[
            "key",
            "order",
            "recovered",
            "analytic",
            "abs_err",
            "candidates",
            "discrepancy",
        ],
        &rows,
    )
}

fn verdict(ok: bool) -> String {
    if ok { "ok" } else { "violated" }.to_string()
}

pub fn diagnostics_csv(report: &RunReport) -> String {
    let mut rows: Vec<Vec<String>> = Vec::new();
    let mut push = |check: String, value: String, status: String, detail: String| {
        rows.push(vec![check, value, status, detail]);
    };
    if let Some(d) = &report.diagnostics {
        match &d.cauchy_schwarz {
            Ok(v) => push(
                "cauchy_schwarz".into(),
                fmt_num(*v),
                verdict(*v >= 1.0 - CS_TOL),
                String::new(),
            ),
            Err(e) => push(
                "cauchy_schwarz".into(),
                String::new(),
                "unavailable".into(),
                e.to_string(),
            ),
        }
        match &d.symmetry {
            Ok(s) if !s.applicable => push(
                "symmetry".into(),
                fmt_num(s.residual),
                "not_applicable".into(),
                format!("relations={}", s.relations),
            ),
            Ok(s) => push(
                "symmetry".into(),
                fmt_num(s.residual),
                verdict(s.residual <= SYMMETRY_TOL),
                format!("relations={}", s.relations),
            ),
            Err(e) => push(
                "symmetry".into(),
                String::new(),
                "unavailable".into(),
                e.to_string(),
            ),
        }
        let sign_value = match d.sign_beta11 {
            Sign::Positive => 1.0,
            Sign::Negative => -1.0,
            Sign::Indeterminate => 0.0,
        };
        push(
            "sign_b1_1".into(),
            fmt_num(sign_value),
            d.sign_beta11.symbol().into(),
            String::new(),
        );
        for r in &d.relevance {
            push(
                format!("relevance_{}", good_label(&r.goods)),
                fmt_num(r.magnitude),
                "selected".into(),
                format!("{} target=Y{}", r.selected.label(), r.target + 1),
            );
        }
        if let Some(signs) = &d.complementarity {
            for (i, row) in signs.iter().enumerate() {
                for (j, s) in row.iter().enumerate().skip(i) {
                    push(
                        format!("complementarity_{}_{}", i + 1, j + 1),
                        String::new(),
                        s.symbol().into(),
                        String::new(),
                    );
                }
            }
        }
    }
    if let Some(vd) = &report.v_derivs {
        let bad = vd.convexity_violations(CONVEXITY_TOL);
        let detail: Vec<String> = bad.iter().map(|g| format!("V_{0}_{0}", g + 1)).collect();
        push(
            "convexity".into(),
            bad.len().to_string(),
            verdict(bad.is_empty()),
            detail.join(" "),
        );
        push(
            "v_split_discrepancy".into(),
            fmt_num(vd.max_discrepancy()),
            "reported".into(),
            String::new(),
        );
    }
    csv(&["check", "value", "status", "detail"], &rows)
}

fn outcome_cell<T>(o: &Outcome<T>, f: impl Fn(&T) -> String) -> (String, String) {
    match o {
        Ok(v) => (f(v), String::new()),
        Err(e) => (String::new(), e.to_string()),
    }
}

pub fn welfare_csv(report: &RunReport) -> String {
    let mut rows = Vec::new();
    for (i, p) in report.welfare.iter().enumerate() {
        let point = (i + 1).to_string();
        let (v, note) = outcome_cell(&p.taylor, |t| fmt_num(t.0));
        let flag = p
            .taylor
            .as_ref()
            .map(|t| t.1.to_string())
            .unwrap_or_default();
        rows.push(vec![point.clone(), "taylor".into(), v, flag, note]);
        let (v, note) = outcome_cell(&p.exact, |v| fmt_num(*v));
        rows.push(vec![
            point.clone(),
            "closed_form".into(),
            v,
            "false".into(),
            note,
        ]);
        let (v, note) = outcome_cell(&p.path_integral, |v| fmt_num(*v));
        rows.push(vec![point, "path_integral".into(), v, "false".into(), note]);
    }
    csv(&["point", "method", "value", "extrapolated", "note"], &rows)
}

#[derive(Serialize)]
struct FailureJson {
    stage: &'static str,
    class: &'static str,
    kind: &'static str,
    message: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    order: Option<usize>,
}

#[derive(Serialize)]
struct MomentJson {
    index: String,
    recovered: Num,
    #[serde(rename = "true")]
    truth: Num,
    abs_err: Num,
    rel_err: Option<Num>,
}

#[derive(Serialize)]
struct OrderJson {
    order: usize,
    route: &'static str,
    max_rel_err: Num,
    entries: Vec<MomentJson>,
}

#[derive(Serialize)]
struct VJson {
    key: String,
    recovered: Num,
    analytic: Option<Num>,
    candidates: usize,
    discrepancy: Num,
}

#[derive(Serialize)]
struct CheckJson {
    value: Option<Num>,
    status: String,
    detail: String,
}

#[derive(Serialize)]
struct RelevanceJson {
    goods: String,
    selected: String,
    target: usize,
    magnitude: Num,
}

#[derive(Serialize)]
struct DiagnosticsJson {
    cauchy_schwarz: CheckJson,
    symmetry: CheckJson,
    sign_b1_1: &'static str,
    relevance: Vec<RelevanceJson>,
    complementarity: Option<Vec<Vec<&'static str>>>,
}

#[derive(Serialize)]
struct WelfareJson {
    x: Vec<Num>,
    taylor: Option<Num>,
    taylor_extrapolated: Option<bool>,
    closed_form: Option<Num>,
    path_integral: Option<Num>,
    mean_demand: Option<Vec<Num>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    quantile_map: Option<Option<Vec<[Num; 2]>>>,
    notes: Vec<String>,
}

#[derive(Serialize)]
struct DerivativesJson {
    scheme: &'static str,
    richardson_levels: usize,
    steps: Vec<Num>,
    entries: usize,
    level: Vec<Num>,
}

#[derive(Serialize)]
struct SummaryJson<'a> {
    toolkit: &'static str,
    version: &'static str,
    scenario: &'a str,
    status: &'static str,
    exit_code: i32,
    failures: Vec<FailureJson>,
    derivatives: Option<DerivativesJson>,
    moments: Vec<OrderJson>,
    v_derivs: Vec<VJson>,
    diagnostics: Option<DiagnosticsJson>,
    welfare: Vec<WelfareJson>,
    config: &'a ScenarioConfig,
}

fn check_json(
    r: &rcident::Result<f64>,
    status: impl Fn(f64) -> String,
    detail: String,
) -> CheckJson {
    match r {
        Ok(v) => CheckJson {
            value: Some(Num(*v)),
            status: status(*v),
            detail,
        },
        Err(e) => CheckJson {
            value: None,
            status: "unavailable".into(),
            detail: e.to_string(),
        },
    }
}

fn ok_num<T>(o: &Outcome<T>, f: impl Fn(&T) -> f64) -> Option<Num> {
    o.as_ref().ok().map(|v| Num(f(v)))
}

pub fn summary_json(report: &RunReport) -> String {
    let failures = report
        .failures
        .iter()
        .map(|f| FailureJson {
            stage: f.stage,
            class: error_class(&f.error),
            kind: error_kind(&f.error),
            message: f.error.to_string(),
            order: match &f.error {
                Error::Anchor { order } | Error::Degenerate { order } => Some(*order),
                _ if f.stage == "moments" => Some(report.moments.len() + 1),
                _ => None,
            },
        })
        .collect();
    let derivatives = report.table.as_ref().map(|t| {
        let scheme = report.config.scheme();
        DerivativesJson {
            scheme: match scheme.kind {
                rcident::FdKind::Central => "central",
                rcident::FdKind::Forward => "forward",
            },
            richardson_levels: scheme.richardson_levels,
            steps: (1..=t.max_order())
                .map(|m| Num(scheme.step_for(m)))
                .collect(),
            entries: t.len(),
            level: nums(t.level()),
        }
    });
    let moments = report
        .moments
        .iter()
        .map(|m| OrderJson {
            order: m.order,
            route: m.route,
            max_rel_err: Num(m.max_rel_err()),
            entries: m
                .rows
                .iter()
                .map(|r| MomentJson {
                    index: r.index.label(),
                    recovered: Num(r.recovered),
                    truth: Num(r.truth),
                    abs_err: Num(r.abs_err()),
                    rel_err: r.rel_err().map(Num),
                })
                .collect(),
        })
        .collect();
    let v_derivs = report
        .v_derivs
        .iter()
        .flat_map(|vd| vd.iter())
        .map(|(g, e)| VJson {
            key: good_label(g),
            recovered: Num(e.value),
            analytic: report.v_analytic.as_ref().and_then(|a| a.get(g)).map(Num),
            candidates: e.candidates,
            discrepancy: Num(e.discrepancy),
        })
        .collect();
    let diagnostics = report.diagnostics.as_ref().map(|d| {
        let symmetry = match &d.symmetry {
            Ok(s) => CheckJson {
                value: Some(Num(s.residual)),
                status: if s.applicable {
                    verdict(s.residual <= SYMMETRY_TOL)
                } else {
                    "not_applicable".into()
                },
                detail: format!("relations={}", s.relations),
            },
            Err(e) => CheckJson {
                value: None,
                status: "unavailable".into(),
                detail: e.to_string(),
            },
        };
        DiagnosticsJson {
            cauchy_schwarz: check_json(
                &d.cauchy_schwarz,
                |v| verdict(v >= 1.0 - CS_TOL),
                String::new(),
            ),
            symmetry,
            sign_b1_1: d.sign_beta11.symbol(),
            relevance: d
                .relevance
                .iter()
                .map(|r| RelevanceJson {
                    goods: good_label(&r.goods),
                    selected: r.selected.label(),
                    target: r.target + 1,
                    magnitude: Num(r.magnitude),
                })
                .collect(),
            complementarity: d.complementarity.as_ref().map(|m| {
                m.iter()
                    .map(|row| row.iter().map(|s| s.symbol()).collect())
                    .collect()
            }),
        }
    });
    let welfare = report
        .welfare
        .iter()
        .map(|p| {
            let mut notes = Vec::new();
            for (name, err) in [
                ("taylor", p.taylor.as_ref().err()),
                ("closed_form", p.exact.as_ref().err()),
                ("path_integral", p.path_integral.as_ref().err()),
                ("mean_demand", p.mean_demand.as_ref().err()),
            ] {
                if let Some(e) = err {
                    notes.push(format!("{name}: {e}"));
                }
            }
            if let Some(Err(e)) = &p.quantile_map {
                notes.push(format!("quantile_map: {e}"));
            }
            WelfareJson {
                x: nums(&p.x),
                taylor: ok_num(&p.taylor, |t| t.0),
                taylor_extrapolated: p.taylor.as_ref().ok().map(|t| t.1),
                closed_form: ok_num(&p.exact, |v| *v),
                path_integral: ok_num(&p.path_integral, |v| *v),
                mean_demand: p.mean_demand.as_ref().ok().map(|(m, _)| nums(m)),
                quantile_map: p.quantile_map.as_ref().map(|q| {
                    q.as_ref()
                        .ok()
                        .map(|g| g.iter().map(|(z, f)| [Num(*z), Num(*f)]).collect())
                }),
                notes,
            }
        })
        .collect();
    let summary = SummaryJson {
        toolkit: env!("CARGO_PKG_NAME"),
        version: env!("CARGO_PKG_VERSION"),
        scenario: &report.config.name,
        status: report.status.name(),
        exit_code: report.status.exit_code(),
        failures,
        derivatives,
        moments,
        v_derivs,
        diagnostics,
        welfare,
        config: &report.config,
    };
    let mut s = serde_json::to_string_pretty(&summary).expect("summary serializes");
    s.push('\n');
    s
}

#[derive(Serialize)]
struct MetaJson {
    toolkit: &'static str,
    version: &'static str,
    config_path: String,
    started_unix_seconds: u64,
    elapsed_seconds: Num,
}

pub fn meta_json(report: &RunReport, ctx: &RunContext) -> String {
    let now = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    let meta = MetaJson {
        toolkit: env!("CARGO_PKG_NAME"),
        version: env!("CARGO_PKG_VERSION"),
        config_path: ctx.config_path.display().to_string(),
        started_unix_seconds: now.saturating_sub(report.elapsed.as_secs()),
        elapsed_seconds: Num(report.elapsed.as_secs_f64()),
    };
    let mut s = serde_json::to_string_pretty(&meta).expect("metadata serializes");
    s.push('\n');
    s
}

/// Deterministic report files as `(name, contents)`, excluding metadata.
pub fn render(report: &RunReport) -> Vec<(String, String)> {
    let mut files = Vec::new();
    for m in &report.moments {
        if let Some(c) = moments_csv(report, m.order) {
            files.push((moments_file(m.order), c));
        }
    }
    files.push((V_DERIVS_FILE.into(), v_derivs_csv(report)));
    files.push((DIAGNOSTICS_FILE.into(), diagnostics_csv(report)));
    if !report.welfare.is_empty() {
        files.push((WELFARE_FILE.into(), welfare_csv(report)));
    }
    files.push((SUMMARY_FILE.into(), summary_json(report)));
    files
}

pub fn write_all(report: &RunReport, out: &Path, ctx: &RunContext) -> Result<(), CliError> {
    let io = |path: &Path| {
        let path = path.to_path_buf();
        move |source| CliError::Io { path, source }
    };
    std::fs::create_dir_all(out).map_err(io(out))?;
    let mut files = render(report);
    files.push((META_FILE.into(), meta_json(report, ctx)));
    for (name, body) in files {
        let path = out.join(&name);
        std::fs::write(&path, body).map_err(io(&path))?;
    }
    Ok(())
}

/// Human-readable one-line status for standard error.
pub fn status_line(report: &RunReport) -> String {
    let mut s = format!("{}: {}", report.config.name, report.status.name());
    for f in &report.failures {
        let _ = write!(s, "; {} failed: {}", f.stage, f.error);
    }
    s
}
