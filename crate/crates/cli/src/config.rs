//! Scenario configuration: a JSON document validated before any computation.
//!
//! Goods and characteristics are one-based in the file, matching report labels.

use serde::{Deserialize, Serialize};

use rcident::model::{
    BetaDistribution, BundleScenario, FiniteBundle, GenericFiniteEps, GenericScenario, IndexForm,
    ModelSpec, PairTerm, Univariate, Variant,
};
use rcident::numdiff::{FdKind, FdScheme};
use rcident::recovery::{RecoveryConfig, Route, RouteConfig, VDerivTable, DEFAULT_RELEVANCE};
use rcident::welfare::{Weighting, DEFAULT_TRUST_RADIUS};
use rcident::{asf::Strategy, AsfEvaluator};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub name: String,
    pub model: ModelConfig,
    pub beta: BetaConfig,
    #[serde(default)]
    pub fd: FdConfig,
    pub recovery: RecoveryBlock,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub welfare: Option<WelfareConfig>,
    #[serde(default)]
    pub diagnostics: DiagnosticsConfig,
    #[serde(default)]
    pub evaluation: EvaluationConfig,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub dims: Vec<usize>,
    pub variant: VariantConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub center: Option<Vec<f64>>,
    #[serde(default)]
    pub index_form: IndexFormConfig,
    #[serde(default)]
    pub nonnegative_domain: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IndexFormConfig {
    #[default]
    Linear,
    Power,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum VariantConfig {
    AnalyticLogit {
        alphas: Vec<f64>,
        #[serde(default)]
        outside_good: bool,
    },
    FiniteBundle {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        lattice: Option<Vec<Vec<f64>>>,
        scenarios: Vec<BundleScenarioConfig>,
        #[serde(default)]
        smoothing: f64,
    },
    GenericFiniteEps {
        budget: Vec<Vec<f64>>,
        scenarios: Vec<GenericScenarioConfig>,
        #[serde(default)]
        smoothing: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BundleScenarioConfig {
    pub weight: f64,
    pub intercepts: Vec<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub pairwise: Vec<PairConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub consideration: Option<Vec<Vec<f64>>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PairConfig {
    /// One-based goods.
    pub goods: [usize; 2],
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenericScenarioConfig {
    pub weight: f64,
    /// `null` marks an excluded bundle.
    pub disturbance: Vec<Option<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum BetaConfig {
    Discrete {
        support: Vec<Vec<f64>>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        weights: Option<Vec<f64>>,
    },
    Product {
        marginals: Vec<MarginalConfig>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MarginalConfig {
    pub values: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum SchemeKind {
    #[default]
    Central,
    Forward,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FdConfig {
    #[serde(default)]
    pub scheme: SchemeKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub step: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub richardson_levels: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum RouteKind {
    Scale,
    Independence,
    Vknown,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RecoveryBlock {
    pub route: RouteKind,
    pub max_order: usize,
    /// `∫β_{1,1}^M dν` for `M = 1, 2, …` (scale route).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub known_scale: Option<Vec<f64>>,
    /// `|∫β_{1,1}dν|` (independence route).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub abs_mean: Option<f64>,
    /// Supplied derivatives of `V` (vknown route); closed form when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub v_derivs: Option<Vec<VDerivConfig>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub relevance: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VDerivConfig {
    /// One-based goods.
    pub goods: Vec<usize>,
    pub value: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightingConfig {
    #[default]
    Unweighted,
    InverseAbsBeta11,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WelfareConfig {
    pub points: Vec<Vec<f64>>,
    #[serde(default)]
    pub weighting: WeightingConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trust_radius: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiagnosticsConfig {
    #[serde(default = "yes")]
    pub cauchy_schwarz: bool,
    #[serde(default = "yes")]
    pub symmetry: bool,
}

fn yes() -> bool {
    true
}

impl Default for DiagnosticsConfig {
    fn default() -> Self {
        Self {
            cauchy_schwarz: true,
            symmetry: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "strategy", rename_all = "snake_case", deny_unknown_fields)]
pub enum EvaluationConfig {
    #[default]
    Exact,
    /// Seeded simulation of `ε`; the seed comes from the top-level `seed`.
    MonteCarlo { draws: usize },
}

fn config_err(e: rcident::Error) -> CliError {
    CliError::Config(e.to_string())
}

fn zero_based(g: usize, k: usize, what: &str) -> Result<usize, CliError> {
    if g == 0 || g > k {
        return Err(CliError::Config(format!(
            "{what}: good {g} is outside 1..={k}"
        )));
    }
    Ok(g - 1)
}

impl ScenarioConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Checks every cross-field constraint by building the core objects.
    pub fn validate(&self) -> Result<(), CliError> {
        let model = self.model_spec()?;
        self.beta_distribution()?
            .check_layout(model.layout())
            .map_err(config_err)?;
        self.scheme()
            .validate(model.nonnegative_domain())
            .map_err(config_err)?;
        let r = &self.recovery;
        if r.max_order == 0 {
            return Err(CliError::Config(
                "recovery.max_order must be at least 1".into(),
            ));
        }
        match r.route {
            RouteKind::Scale => {
                let known = r.known_scale.as_ref().ok_or_else(|| {
                    CliError::Config("the scale route needs recovery.known_scale".into())
                })?;
                if known.len() < r.max_order {
                    return Err(CliError::Config(format!(
                        "recovery.known_scale has {} entries, max_order is {}",
                        known.len(),
                        r.max_order
                    )));
                }
                if known.iter().any(|v| !v.is_finite() || *v == 0.0) {
                    return Err(CliError::Config(
                        "known scale values must be finite and nonzero".into(),
                    ));
                }
            }
            RouteKind::Independence => match r.abs_mean {
                Some(m) if m.is_finite() && m > 0.0 => {}
                _ => {
                    return Err(CliError::Config(
                        "the independence route needs a positive recovery.abs_mean".into(),
                    ))
                }
            },
            RouteKind::Vknown => {
                if r.v_derivs.is_none() && self.analytic_v(&model).is_err() {
                    return Err(CliError::Config(
                        "the vknown route needs recovery.v_derivs for models without closed-form derivatives".into(),
                    ));
                }
            }
        }
        if let Some(tau) = r.relevance {
            if !(tau.is_finite() && tau >= 0.0) {
                return Err(CliError::Config(
                    "recovery.relevance must be finite and >= 0".into(),
                ));
            }
        }
        if let Some(w) = &self.welfare {
            for p in &w.points {
                if p.len() != model.layout().total() {
                    return Err(CliError::Config(format!(
                        "welfare point {p:?} has {} coordinates, expected {}",
                        p.len(),
                        model.layout().total()
                    )));
                }
            }
            if let Some(r) = w.trust_radius {
                if !(r.is_finite() && r > 0.0) {
                    return Err(CliError::Config("welfare.trust_radius must be > 0".into()));
                }
            }
        }
        if let EvaluationConfig::MonteCarlo { draws } = self.evaluation {
            if draws == 0 {
                return Err(CliError::Config("evaluation.draws must be positive".into()));
            }
        }
        Ok(())
    }

    pub fn model_spec(&self) -> Result<ModelSpec, CliError> {
        let m = &self.model;
        let k = m.dims.len();
        let variant = match &m.variant {
            VariantConfig::AnalyticLogit {
                alphas,
                outside_good,
            } => Variant::AnalyticLogit {
                alphas: alphas.clone(),
                outside_good: *outside_good,
            },
            VariantConfig::FiniteBundle {
                lattice,
                scenarios,
                smoothing,
            } => {
                let mut out = Vec::with_capacity(scenarios.len());
                for s in scenarios {
                    let mut pairwise = Vec::with_capacity(s.pairwise.len());
                    for p in &s.pairwise {
                        pairwise.push(PairTerm {
                            a: zero_based(p.goods[0], k, "pairwise term")?,
                            b: zero_based(p.goods[1], k, "pairwise term")?,
                            value: p.value,
                        });
                    }
                    out.push(BundleScenario {
                        weight: s.weight,
                        intercepts: s.intercepts.clone(),
                        pairwise,
                        consideration: s.consideration.clone(),
                    });
                }
                Variant::FiniteBundle(FiniteBundle {
                    lattice: lattice.clone(),
                    scenarios: out,
                    smoothing: *smoothing,
                })
            }
            VariantConfig::GenericFiniteEps {
                budget,
                scenarios,
                smoothing,
            } => Variant::GenericFiniteEps(GenericFiniteEps {
                budget: budget.clone(),
                scenarios: scenarios
                    .iter()
                    .map(|s| GenericScenario {
                        weight: s.weight,
                        disturbance: s.disturbance.clone(),
                    })
                    .collect(),
                smoothing: *smoothing,
            }),
        };
        let mut spec = ModelSpec::new(m.dims.clone(), variant).map_err(config_err)?;
        if m.index_form == IndexFormConfig::Power {
            spec = spec
                .with_index_form(IndexForm::Power)
                .map_err(config_err)?
                .with_center(vec![1.0; k])
                .map_err(config_err)?;
        }
        if let Some(c) = &m.center {
            spec = spec.with_center(c.clone()).map_err(config_err)?;
        }
        Ok(spec.with_nonnegative_domain(m.nonnegative_domain))
    }

    pub fn beta_distribution(&self) -> Result<BetaDistribution, CliError> {
        let uniform = |n: usize| vec![1.0 / n as f64; n];
        match &self.beta {
            BetaConfig::Discrete { support, weights } => {
                if support.is_empty() {
                    return Err(CliError::Config("beta.support is empty".into()));
                }
                let w = weights.clone().unwrap_or_else(|| uniform(support.len()));
                BetaDistribution::discrete(support.clone(), w).map_err(config_err)
            }
            BetaConfig::Product { marginals } => {
                let mut out = Vec::with_capacity(marginals.len());
                for m in marginals {
                    if m.values.is_empty() {
                        return Err(CliError::Config("a beta marginal has no values".into()));
                    }
                    let w = m.weights.clone().unwrap_or_else(|| uniform(m.values.len()));
                    out.push(Univariate::new(m.values.clone(), w).map_err(config_err)?);
                }
                BetaDistribution::product(out).map_err(config_err)
            }
        }
    }

    pub fn scheme(&self) -> FdScheme {
        let mut s = match self.fd.scheme {
            SchemeKind::Central => FdScheme::central(),
            SchemeKind::Forward => FdScheme::forward(),
        };
        if let Some(h) = self.fd.step {
            s = s.with_step(h);
        }
        if let Some(l) = self.fd.richardson_levels {
            s = s.with_levels(l);
        }
        debug_assert!(matches!(s.kind, FdKind::Central | FdKind::Forward));
        s
    }

    pub fn evaluator(&self) -> Result<AsfEvaluator, CliError> {
        let model = self.model_spec()?;
        let beta = self.beta_distribution()?;
        match self.evaluation {
            EvaluationConfig::Exact => AsfEvaluator::new(model, beta),
            EvaluationConfig::MonteCarlo { draws } => AsfEvaluator::with_strategy(
                model,
                beta,
                Strategy::MonteCarlo {
                    draws,
                    seed: self.seed,
                },
            ),
        }
        .map_err(config_err)
    }

    pub fn relevance(&self) -> f64 {
        self.recovery.relevance.unwrap_or(DEFAULT_RELEVANCE)
    }

    pub fn route(&self) -> Route {
        match self.recovery.route {
            RouteKind::Scale => Route::Scale,
            RouteKind::Independence => Route::Independence,
            RouteKind::Vknown => Route::VKnown,
        }
    }

    fn analytic_v(&self, model: &ModelSpec) -> rcident::Result<VDerivTable> {
        VDerivTable::analytic(model, self.recovery.max_order + 1)
    }

    pub fn recovery_config(&self, model: &ModelSpec) -> Result<RecoveryConfig, CliError> {
        let r = &self.recovery;
        let route = match r.route {
            RouteKind::Scale => RouteConfig::Scale {
                known: r.known_scale.clone().unwrap_or_default(),
            },
            RouteKind::Independence => RouteConfig::Independence {
                abs_mean: r.abs_mean.unwrap_or(f64::NAN),
            },
            RouteKind::Vknown => {
                let v_derivs = match &r.v_derivs {
                    Some(list) => {
                        let mut t = VDerivTable::new();
                        for e in list {
                            let goods = e
                                .goods
                                .iter()
                                .map(|&g| zero_based(g, model.goods(), "v_derivs"))
                                .collect::<Result<Vec<_>, _>>()?;
                            t.insert(goods, e.value);
                        }
                        t
                    }
                    None => self.analytic_v(model).map_err(config_err)?,
                };
                RouteConfig::VKnown { v_derivs }
            }
        };
        Ok(RecoveryConfig {
            route,
            relevance: self.relevance(),
        })
    }

    pub fn weighting(&self) -> Weighting {
        match self.welfare.as_ref().map(|w| w.weighting) {
            Some(WeightingConfig::InverseAbsBeta11) => Weighting::InverseAbsBeta11,
            _ => Weighting::Unweighted,
        }
    }

    pub fn trust_radius(&self) -> f64 {
        self.welfare
            .as_ref()
            .and_then(|w| w.trust_radius)
            .unwrap_or(DEFAULT_TRUST_RADIUS)
    }
}
