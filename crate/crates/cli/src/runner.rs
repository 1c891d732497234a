//! Pipeline orchestration: derivatives, moments, `V` derivatives, diagnostics
//! and welfare for one scenario.

use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use rcident::diagnostics::{diagnose, DiagnosticsReport};
use rcident::model::true_moment;
use rcident::numdiff::derivative_table;
use rcident::recovery::{recover_moments, recover_v_derivatives, MomentTable, VDerivTable};
use rcident::welfare::{
    average_indirect_utility, counterfactual_demand, quantile_match_from_model, ExactV,
    PathIntegralV, TaylorV, VModel,
};
use rcident::{AsfEvaluator, DerivativeTable, Error, MomentIndex};

use crate::config::{RouteKind, ScenarioConfig, SchemeKind};
use crate::report;
use crate::CliError;

/// Grid size of the one-good monotone rearrangement.
pub const QUANTILE_GRID: usize = 11;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RunStatus {
    Success,
    IdentificationFailure,
}

impl RunStatus {
    pub fn exit_code(self) -> i32 {
        match self {
            RunStatus::Success => 0,
            RunStatus::IdentificationFailure => 2,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            RunStatus::Success => "ok",
            RunStatus::IdentificationFailure => "identification_failure",
        }
    }
}

/// Command-line overrides applied on top of the config file.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub max_order: Option<usize>,
    pub scheme: Option<SchemeKind>,
    pub route: Option<RouteKind>,
}

impl Overrides {
    pub fn apply(&self, mut cfg: ScenarioConfig) -> Result<ScenarioConfig, CliError> {
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(m) = self.max_order {
            cfg.recovery.max_order = m;
        }
        if let Some(s) = self.scheme {
            cfg.fd.scheme = s;
        }
        if let Some(r) = self.route {
            cfg.recovery.route = r;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

/// A failure that stopped part of the pipeline.
#[derive(Debug, Clone, PartialEq)]
pub struct Failure {
    pub stage: &'static str,
    pub error: Error,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MomentRow {
    pub index: MomentIndex,
    pub recovered: f64,
    pub truth: f64,
}

impl MomentRow {
    pub fn abs_err(&self) -> f64 {
        (self.recovered - self.truth).abs()
    }

    /// `None` when the true moment is zero.
    pub fn rel_err(&self) -> Option<f64> {
        (self.truth != 0.0).then(|| self.abs_err() / self.truth.abs())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MomentReport {
    pub order: usize,
    pub route: &'static str,
    pub rows: Vec<MomentRow>,
}

impl MomentReport {
    pub fn max_rel_err(&self) -> f64 {
        self.rows
            .iter()
            .map(|r| r.rel_err().unwrap_or(r.abs_err()))
            .fold(0.0, f64::max)
    }

    pub fn get(&self, label: &str) -> Option<&MomentRow> {
        self.rows.iter().find(|r| r.index.label() == label)
    }
}

/// A value or the reason it is unavailable.
pub type Outcome<T> = rcident::Result<T>;

#[derive(Debug, Clone, PartialEq)]
pub struct WelfarePoint {
    pub x: Vec<f64>,
    /// Average `V` difference from the recovered Taylor polynomial, with its
    /// extrapolation flag.
    pub taylor: Outcome<(f64, bool)>,
    pub exact: Outcome<f64>,
    pub path_integral: Outcome<f64>,
    /// Mean counterfactual demand per good from the Taylor gradient.
    pub mean_demand: Outcome<(Vec<f64>, bool)>,
    /// `(η, V′(η))` grid, one-good models only.
    pub quantile_map: Option<Outcome<Vec<(f64, f64)>>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunReport {
    pub config: ScenarioConfig,
    pub status: RunStatus,
    pub failures: Vec<Failure>,
    pub table: Option<DerivativeTable>,
    pub moments: Vec<MomentReport>,
    pub v_derivs: Option<VDerivTable>,
    pub v_analytic: Option<VDerivTable>,
    pub diagnostics: Option<DiagnosticsReport>,
    pub welfare: Vec<WelfarePoint>,
    pub elapsed: Duration,
}

impl RunReport {
    pub fn order(&self, m: usize) -> Option<&MomentReport> {
        self.moments.iter().find(|r| r.order == m)
    }
}

fn fatal(e: Error) -> CliError {
    CliError::Config(e.to_string())
}

/// Splits core errors into data failures (recorded) and setup errors (fatal).
fn classify<T>(
    r: rcident::Result<T>,
    stage: &'static str,
    failures: &mut Vec<Failure>,
) -> Result<Option<T>, CliError> {
    match r {
        Ok(v) => Ok(Some(v)),
        Err(e) if e.is_identification_failure() => {
            failures.push(Failure { stage, error: e });
            Ok(None)
        }
        Err(e) => Err(fatal(e)),
    }
}

fn moment_report(ev: &AsfEvaluator, t: &MomentTable) -> MomentReport {
    let layout = ev.model().layout();
    MomentReport {
        order: t.order(),
        route: t.route().name(),
        rows: t
            .iter()
            .map(|(idx, e)| MomentRow {
                index: idx.clone(),
                recovered: e.value,
                truth: true_moment(ev.beta(), layout, idx),
            })
            .collect(),
    }
}

fn welfare_point(
    cfg: &ScenarioConfig,
    ev: &AsfEvaluator,
    taylor: Option<&TaylorV>,
    x: &[f64],
) -> WelfarePoint {
    let (model, beta) = (ev.model(), ev.beta());
    let weighting = cfg.weighting();
    let avg = |vm: &dyn VModel| average_indirect_utility(vm, model, beta, x, weighting);
    let no_taylor = || Error::Precondition("V derivatives were not recovered".into());
    let taylor_value = taylor.map_or_else(
        || Err(no_taylor()),
        |t| avg(t).map(|f| (f.value, f.extrapolated)),
    );
    let exact = avg(&ExactV::new(model)).map(|f| f.value);
    let path_integral = PathIntegralV::new(ev).and_then(|p| avg(&p).map(|f| f.value));
    let mean_demand = taylor.map_or_else(
        || Err(no_taylor()),
        |t| {
            counterfactual_demand(t, model, beta, x).map(|d| {
                let mut mean = vec![0.0; model.goods()];
                for (w, y) in &d.value {
                    for (m, v) in mean.iter_mut().zip(y) {
                        *m += w * v;
                    }
                }
                (mean, d.extrapolated)
            })
        },
    );
    let quantile_map =
        (model.goods() == 1).then(|| quantile_match_from_model(model, beta, x, QUANTILE_GRID));
    WelfarePoint {
        x: x.to_vec(),
        taylor: taylor_value,
        exact,
        path_integral,
        mean_demand,
        quantile_map,
    }
}

/// Runs the pipeline in memory. Setup errors are returned; identification
/// failures are recorded in the report.
pub fn execute(cfg: &ScenarioConfig) -> Result<RunReport, CliError> {
    let start = Instant::now();
    cfg.validate()?;
    let ev = cfg.evaluator()?;
    let model = ev.model().clone();
    let tau = cfg.relevance();
    let max_order = cfg.recovery.max_order;
    let recovery_cfg = cfg.recovery_config(&model)?;
    let mut failures = Vec::new();

    let table = classify(
        derivative_table(&ev, max_order, &cfg.scheme()),
        "derivatives",
        &mut failures,
    )?;
    let v_analytic = VDerivTable::analytic(&model, max_order + 1).ok();
    let mut moments = Vec::new();
    let mut v_derivs = None;
    let mut diagnostics = None;
    if let Some(table) = &table {
        let outcome = recover_moments(table, max_order, &recovery_cfg);
        moments = outcome
            .moments
            .iter()
            .map(|t| moment_report(&ev, t))
            .collect();
        if let Some(e) = outcome.failure {
            classify::<()>(Err(e), "moments", &mut failures)?;
        }
        v_derivs = classify(
            recover_v_derivatives(table, &outcome.moments, tau),
            "v_derivatives",
            &mut failures,
        )?;
        let mut d = diagnose(table, v_derivs.as_ref(), tau);
        if !cfg.diagnostics.cauchy_schwarz {
            d.cauchy_schwarz = Err(Error::Precondition("disabled in the configuration".into()));
        }
        if !cfg.diagnostics.symmetry {
            d.symmetry = Err(Error::Precondition("disabled in the configuration".into()));
        }
        diagnostics = Some(d);
    }

    let mut welfare = Vec::new();
    if let Some(w) = &cfg.welfare {
        let taylor = match &v_derivs {
            Some(vd) => Some(
                TaylorV::new(vd.clone(), model.center_indices())
                    .and_then(|t| t.with_trust_radius(cfg.trust_radius()))
                    .map_err(fatal)?,
            ),
            None => None,
        };
        for x in &w.points {
            let p = welfare_point(cfg, &ev, taylor.as_ref(), x);
            if let (Some(_), Err(e)) = (&taylor, &p.taylor) {
                classify::<()>(Err(e.clone()), "welfare", &mut failures)?;
            }
            welfare.push(p);
        }
    }

    let status = if failures.is_empty() {
        RunStatus::Success
    } else {
        RunStatus::IdentificationFailure
    };
    Ok(RunReport {
        config: cfg.clone(),
        status,
        failures,
        table,
        moments,
        v_derivs,
        v_analytic,
        diagnostics,
        welfare,
        elapsed: start.elapsed(),
    })
}

pub fn load_config(path: &Path) -> Result<ScenarioConfig, CliError> {
    let text = std::fs::read_to_string(path).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    ScenarioConfig::parse(&text)
}

/// Loads, runs and writes every report file into `out`.
pub fn run(config_path: &Path, out: &Path, overrides: &Overrides) -> Result<RunReport, CliError> {
    let cfg = overrides.apply(load_config(config_path)?)?;
    let report = execute(&cfg)?;
    report::write_all(
        &report,
        out,
        &RunContext {
            config_path: config_path.to_path_buf(),
        },
    )?;
    Ok(report)
}

/// Facts about the invocation that go into the metadata file only.
#[derive(Debug, Clone)]
pub struct RunContext {
    pub config_path: PathBuf,
}
