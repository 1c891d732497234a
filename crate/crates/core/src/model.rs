//! Latent utility models, slope distributions and their exact moment oracle.
//!
//! A model chooses `y ∈ B` to maximize `Σ_k y_k (β_k'x_k) + D(y, ε)`. Three
//! families are supported:
//!
//! - `AnalyticLogit`: i.i.d. extreme-value intercepts, integrated in closed form.
//! - `FiniteBundle`: bundles over a quantity lattice with per-good intercepts,
//!   pairwise complementarity terms and latent consideration sets.
//! - `GenericFiniteEps`: an arbitrary finite budget with a tabulated `D(y, ε)`.
//!
//! The finite families carry a `smoothing` scale `σ`. For `σ > 0` each
//! scenario additionally draws i.i.d. Gumbel(σ) shocks per bundle, which are
//! integrated out exactly; `σ = 0` is the hard argmax of [`solve_choice`].

use crate::error::{check_len, Error, Result};
use crate::index::{Layout, MomentIndex};

const PROB_TOL: f64 = 1e-12;

/// Value of `Σ_k y_k u_k + D(y, ε)`, or the `D = −∞` branch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Utility {
    Value(f64),
    Excluded,
}

impl Utility {
    pub fn value(self) -> Option<f64> {
        match self {
            Utility::Value(v) => Some(v),
            Utility::Excluded => None,
        }
    }
}

/// How covariates enter the utility index of good `k`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum IndexForm {
    /// `β_k'(x_k − c_k)`.
    #[default]
    Linear,
    /// `x_k^{ρ_k}` for a scalar shifter per good; the slope vector holds `ρ`.
    Power,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PairTerm {
    pub a: usize,
    pub b: usize,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BundleScenario {
    pub weight: f64,
    /// `ε_k`, added when `y_k` is consumed.
    pub intercepts: Vec<f64>,
    /// `ε_{a,b}`, added as `y_a y_b ε_{a,b}`.
    pub pairwise: Vec<PairTerm>,
    /// Latent feasibility set; `None` means the full lattice.
    pub consideration: Option<Vec<Vec<f64>>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FiniteBundle {
    /// Quantity vectors; `None` means `{0,1}^K`.
    pub lattice: Option<Vec<Vec<f64>>>,
    pub scenarios: Vec<BundleScenario>,
    pub smoothing: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GenericScenario {
    pub weight: f64,
    /// `D(y, ε)` per budget point; `None` is the excluded marker.
    pub disturbance: Vec<Option<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GenericFiniteEps {
    pub budget: Vec<Vec<f64>>,
    pub scenarios: Vec<GenericScenario>,
    pub smoothing: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Variant {
    AnalyticLogit {
        alphas: Vec<f64>,
        outside_good: bool,
    },
    FiniteBundle(FiniteBundle),
    GenericFiniteEps(GenericFiniteEps),
}

/// Budget and tabulated disturbances shared by both finite families.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct FiniteTable {
    pub budget: Vec<Vec<f64>>,
    pub weights: Vec<f64>,
    pub disturbance: Vec<Vec<Utility>>,
    pub smoothing: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelSpec {
    layout: Layout,
    variant: Variant,
    center: Vec<f64>,
    index_form: IndexForm,
    nonnegative_domain: bool,
    finite: Option<FiniteTable>,
}

fn check_probabilities(what: &str, weights: &[f64]) -> Result<()> {
    if weights.is_empty() {
        return Err(Error::Config(format!("{what}: no support points")));
    }
    if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
        return Err(Error::Config(format!(
            "{what}: weights must be nonnegative"
        )));
    }
    let total: f64 = weights.iter().sum();
    if (total - 1.0).abs() > PROB_TOL {
        return Err(Error::Config(format!(
            "{what}: weights sum to {total}, expected 1"
        )));
    }
    Ok(())
}

fn unit_lattice(k: usize) -> Vec<Vec<f64>> {
    (0..1usize << k)
        .map(|bits| (0..k).map(|g| ((bits >> (k - 1 - g)) & 1) as f64).collect())
        .collect()
}

impl FiniteBundle {
    fn table(&self, k: usize) -> Result<FiniteTable> {
        let lattice = self.lattice.clone().unwrap_or_else(|| unit_lattice(k));
        if lattice.is_empty() {
            return Err(Error::Config("bundle lattice is empty".into()));
        }
        for y in &lattice {
            check_len("bundle quantity vector", k, y.len())?;
        }
        let weights: Vec<f64> = self.scenarios.iter().map(|s| s.weight).collect();
        check_probabilities("bundle scenarios", &weights)?;
        let mut disturbance = Vec::with_capacity(self.scenarios.len());
        for (s, sc) in self.scenarios.iter().enumerate() {
            check_len("scenario intercepts", k, sc.intercepts.len())?;
            for p in &sc.pairwise {
                if p.a >= k || p.b >= k || p.a == p.b {
                    return Err(Error::Config(format!(
                        "scenario {s}: invalid pairwise term ({}, {})",
                        p.a, p.b
                    )));
                }
            }
            if let Some(cs) = &sc.consideration {
                if cs.is_empty() {
                    return Err(Error::Config(format!(
                        "scenario {s}: consideration set is empty"
                    )));
                }
                if let Some(y) = cs.iter().find(|y| !lattice.contains(y)) {
                    return Err(Error::Config(format!(
                        "scenario {s}: considered bundle {y:?} is not in the lattice"
                    )));
                }
            }
            let row = lattice
                .iter()
                .map(|y| {
                    let considered = sc.consideration.as_ref().is_none_or(|cs| cs.contains(y));
                    if !considered {
                        return Utility::Excluded;
                    }
                    let mut d: f64 = y.iter().zip(&sc.intercepts).map(|(q, e)| q * e).sum();
                    for p in &sc.pairwise {
                        d += y[p.a] * y[p.b] * p.value;
                    }
                    Utility::Value(d)
                })
                .collect();
            disturbance.push(row);
        }
        Ok(FiniteTable {
            budget: lattice,
            weights,
            disturbance,
            smoothing: self.smoothing,
        })
    }
}

impl GenericFiniteEps {
    fn table(&self, k: usize) -> Result<FiniteTable> {
        if self.budget.is_empty() {
            return Err(Error::Config("budget is empty".into()));
        }
        for y in &self.budget {
            check_len("budget quantity vector", k, y.len())?;
        }
        let weights: Vec<f64> = self.scenarios.iter().map(|s| s.weight).collect();
        check_probabilities("disturbance scenarios", &weights)?;
        let mut disturbance = Vec::with_capacity(self.scenarios.len());
        for sc in &self.scenarios {
            check_len(
                "tabulated disturbance",
                self.budget.len(),
                sc.disturbance.len(),
            )?;
            disturbance.push(
                sc.disturbance
                    .iter()
                    .map(|d| match d {
                        Some(v) => Utility::Value(*v),
                        None => Utility::Excluded,
                    })
                    .collect(),
            );
        }
        Ok(FiniteTable {
            budget: self.budget.clone(),
            weights,
            disturbance,
            smoothing: self.smoothing,
        })
    }
}

impl ModelSpec {
    pub fn new(dims: Vec<usize>, variant: Variant) -> Result<Self> {
        let layout = Layout::new(dims)?;
        let k = layout.goods();
        let finite = match &variant {
            Variant::AnalyticLogit { alphas, .. } => {
                check_len("logit intercepts", k, alphas.len())?;
                if alphas.iter().any(|a| !a.is_finite()) {
                    return Err(Error::Config("logit intercepts must be finite".into()));
                }
                None
            }
            Variant::FiniteBundle(b) => Some(b.table(k)?),
            Variant::GenericFiniteEps(g) => Some(g.table(k)?),
        };
        if let Some(t) = &finite {
            if !(t.smoothing >= 0.0 && t.smoothing.is_finite()) {
                return Err(Error::Config(
                    "smoothing scale must be finite and >= 0".into(),
                ));
            }
        }
        let center = vec![0.0; layout.total()];
        Ok(Self {
            layout,
            variant,
            center,
            index_form: IndexForm::Linear,
            nonnegative_domain: false,
            finite,
        })
    }

    /// Multinomial logit with one characteristic layout per good.
    pub fn logit(dims: Vec<usize>, alphas: Vec<f64>, outside_good: bool) -> Result<Self> {
        Self::new(
            dims,
            Variant::AnalyticLogit {
                alphas,
                outside_good,
            },
        )
    }

    /// Logit with random exponents `x_k^{ρ_k}`, centered at the all-ones point.
    pub fn power_logit(alphas: Vec<f64>, outside_good: bool) -> Result<Self> {
        let k = alphas.len();
        Self::logit(vec![1; k], alphas, outside_good)?
            .with_index_form(IndexForm::Power)?
            .with_center(vec![1.0; k])
    }

    pub fn with_center(mut self, center: Vec<f64>) -> Result<Self> {
        check_len("center", self.layout.total(), center.len())?;
        if center.iter().any(|c| !c.is_finite()) {
            return Err(Error::Config("center must be finite".into()));
        }
        self.center = center;
        Ok(self)
    }

    pub fn with_index_form(mut self, form: IndexForm) -> Result<Self> {
        if form == IndexForm::Power && self.layout.dims().iter().any(|&d| d != 1) {
            return Err(Error::Config(
                "the power index needs exactly one scalar shifter per good".into(),
            ));
        }
        self.index_form = form;
        Ok(self)
    }

    pub fn with_nonnegative_domain(mut self, flag: bool) -> Self {
        self.nonnegative_domain = flag;
        self
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    pub fn goods(&self) -> usize {
        self.layout.goods()
    }

    pub fn variant(&self) -> &Variant {
        &self.variant
    }

    pub fn center(&self) -> &[f64] {
        &self.center
    }

    pub fn index_form(&self) -> IndexForm {
        self.index_form
    }

    pub fn nonnegative_domain(&self) -> bool {
        self.nonnegative_domain
    }

    pub(crate) fn finite_table(&self) -> Option<&FiniteTable> {
        self.finite.as_ref()
    }

    pub fn budget(&self) -> Option<&[Vec<f64>]> {
        self.finite.as_ref().map(|t| t.budget.as_slice())
    }

    pub fn scenario_count(&self) -> usize {
        self.finite.as_ref().map_or(0, |t| t.weights.len())
    }

    /// Utility indices `u_k` at covariates `x` for slopes `beta`.
    pub fn indices(&self, x: &[f64], beta: &[f64]) -> Result<Vec<f64>> {
        let n = self.layout.total();
        check_len("covariate point", n, x.len())?;
        check_len("slope vector", n, beta.len())?;
        let dims = self.layout.dims();
        let mut u = Vec::with_capacity(dims.len());
        let mut flat = 0;
        for &d in dims {
            let v = match self.index_form {
                IndexForm::Linear => (flat..flat + d)
                    .map(|i| beta[i] * (x[i] - self.center[i]))
                    .sum(),
                IndexForm::Power => x[flat].powf(beta[flat]),
            };
            u.push(v);
            flat += d;
        }
        Ok(u)
    }

    /// Index vector at the centering point (zero for the linear form).
    pub fn center_indices(&self) -> Vec<f64> {
        match self.index_form {
            IndexForm::Linear => vec![0.0; self.goods()],
            IndexForm::Power => vec![1.0; self.goods()],
        }
    }

    /// Choice set of the `ε`-integrated problem for one scenario: support
    /// points with their utilities (before the index term), or the logit
    /// simplex vertices.
    fn choice_points(&self, scenario: Option<usize>) -> Vec<(Vec<f64>, Utility)> {
        let k = self.goods();
        match (&self.variant, &self.finite) {
            (
                Variant::AnalyticLogit {
                    alphas,
                    outside_good,
                },
                _,
            ) => {
                let mut pts: Vec<(Vec<f64>, Utility)> = (0..k)
                    .map(|g| {
                        let mut y = vec![0.0; k];
                        y[g] = 1.0;
                        (y, Utility::Value(alphas[g]))
                    })
                    .collect();
                if *outside_good {
                    pts.push((vec![0.0; k], Utility::Value(0.0)));
                }
                pts
            }
            (_, Some(t)) => {
                let s = scenario.expect("finite models need a scenario");
                t.budget
                    .iter()
                    .cloned()
                    .zip(t.disturbance[s].iter().copied())
                    .collect()
            }
            _ => unreachable!("finite variants always carry a table"),
        }
    }

    fn smoothing_scale(&self) -> f64 {
        self.finite.as_ref().map_or(1.0, |t| t.smoothing)
    }

    /// Scenarios with weights; the logit family has a single implicit one.
    fn scenario_weights(&self) -> Vec<(Option<usize>, f64)> {
        match &self.finite {
            Some(t) => t
                .weights
                .iter()
                .enumerate()
                .map(|(s, w)| (Some(s), *w))
                .collect(),
            None => vec![(None, 1.0)],
        }
    }

    /// Closed-form integrated indirect utility `V(u)`.
    pub fn indirect_utility(&self, u: &[f64]) -> Result<f64> {
        check_len("index vector", self.goods(), u.len())?;
        let sigma = self.smoothing_scale();
        let mut total = 0.0;
        for (s, w) in self.scenario_weights() {
            let vals: Vec<f64> = self
                .choice_points(s)
                .iter()
                .filter_map(|(y, d)| d.value().map(|d| dot(y, u) + d))
                .collect();
            if vals.is_empty() {
                return Err(Error::Infeasible {
                    scenario: s.unwrap_or(0),
                });
            }
            let max = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let v = if sigma == 0.0 {
                max
            } else {
                let z: f64 = vals.iter().map(|v| ((v - max) / sigma).exp()).sum();
                max + sigma * z.ln()
            };
            total += w * v;
        }
        Ok(total)
    }

    /// Closed-form `∂_γ V(u)` for a sorted good multiset `γ` (length ≥ 1).
    ///
    /// Available for the logit family and for smoothed finite models. Higher
    /// derivatives of a log-partition function are joint cumulants of the
    /// chosen quantity vector under the choice probabilities.
    pub fn v_derivative(&self, goods: &[usize], u: &[f64]) -> Result<f64> {
        check_len("index vector", self.goods(), u.len())?;
        if goods.is_empty() {
            return self.indirect_utility(u);
        }
        if goods.iter().any(|&g| g >= self.goods()) {
            return Err(Error::Config(format!(
                "good index out of range in {goods:?}"
            )));
        }
        let sigma = self.smoothing_scale();
        if sigma == 0.0 {
            return Err(Error::Precondition(
                "V is not differentiable for an unsmoothed finite model".into(),
            ));
        }
        let n = goods.len();
        let mut total = 0.0;
        for (s, w) in self.scenario_weights() {
            let probs = choice_probabilities(&self.choice_points(s), u, sigma).ok_or(
                Error::Infeasible {
                    scenario: s.unwrap_or(0),
                },
            )?;
            let kappa = joint_cumulant(&probs, goods);
            total += w * sigma.powi(1 - n as i32) * kappa;
        }
        Ok(total)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Softmax over the non-excluded points at scale `sigma > 0`.
fn choice_probabilities(
    points: &[(Vec<f64>, Utility)],
    u: &[f64],
    sigma: f64,
) -> Option<Vec<(f64, Vec<f64>)>> {
    let vals: Vec<(f64, &Vec<f64>)> = points
        .iter()
        .filter_map(|(y, d)| d.value().map(|d| ((dot(y, u) + d) / sigma, y)))
        .collect();
    if vals.is_empty() {
        return None;
    }
    let max = vals.iter().map(|v| v.0).fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = vals.iter().map(|v| (v.0 - max).exp()).collect();
    let z: f64 = exps.iter().sum();
    Some(
        vals.iter()
            .zip(exps)
            .map(|((_, y), e)| (e / z, (*y).clone()))
            .collect(),
    )
}

/// Set partitions of `0..n` as restricted-growth block labels.
fn set_partitions(n: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut labels = vec![0usize; n];
    fn rec(i: usize, max: usize, labels: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if i == labels.len() {
            out.push(labels.clone());
            return;
        }
        for b in 0..=max + 1 {
            labels[i] = b;
            rec(i + 1, max.max(b), labels, out);
        }
    }
    if n == 0 {
        return out;
    }
    rec(1, 0, &mut labels, &mut out);
    out
}

/// `κ(Y_{γ_1}, …, Y_{γ_n})` for a discrete distribution over quantity vectors.
fn joint_cumulant(dist: &[(f64, Vec<f64>)], goods: &[usize]) -> f64 {
    let n = goods.len();
    let mut kappa = 0.0;
    for part in set_partitions(n) {
        let blocks = part.iter().copied().max().unwrap_or(0) + 1;
        let mut prod = 1.0;
        for b in 0..blocks {
            let moment: f64 = dist
                .iter()
                .map(|(p, y)| {
                    p * part
                        .iter()
                        .zip(goods)
                        .filter(|(lab, _)| **lab == b)
                        .map(|(_, g)| y[*g])
                        .product::<f64>()
                })
                .sum();
            prod *= moment;
        }
        let sign = if blocks % 2 == 1 { 1.0 } else { -1.0 };
        let fact: f64 = (1..blocks).map(|i| i as f64).product();
        kappa += sign * fact * prod;
    }
    kappa
}

/// `Σ_k y_k u_k + D(y, ε)` for one budget point and scenario.
pub fn latent_utility(
    model: &ModelSpec,
    y: &[f64],
    x: &[f64],
    beta: &[f64],
    scenario: usize,
) -> Result<Utility> {
    check_len("quantity vector", model.goods(), y.len())?;
    let table = model
        .finite_table()
        .ok_or_else(|| Error::Config("latent utility needs a finite-budget model".into()))?;
    if scenario >= table.weights.len() {
        return Err(Error::Config(format!("scenario {scenario} does not exist")));
    }
    let pos = table
        .budget
        .iter()
        .position(|b| b.as_slice() == y)
        .ok_or_else(|| Error::Config(format!("bundle {y:?} is not in the budget")))?;
    let u = model.indices(x, beta)?;
    Ok(match table.disturbance[scenario][pos] {
        Utility::Value(d) => Utility::Value(dot(y, &u) + d),
        Utility::Excluded => Utility::Excluded,
    })
}

/// Argmax of the latent utility over the budget, averaging tied maximizers.
pub fn solve_choice(
    model: &ModelSpec,
    x: &[f64],
    beta: &[f64],
    scenario: usize,
) -> Result<Vec<f64>> {
    let u = model.indices(x, beta)?;
    solve_choice_at(model, &u, scenario)
}

pub(crate) fn solve_choice_at(model: &ModelSpec, u: &[f64], scenario: usize) -> Result<Vec<f64>> {
    let table = model
        .finite_table()
        .ok_or_else(|| Error::Config("choice enumeration needs a finite-budget model".into()))?;
    if scenario >= table.weights.len() {
        return Err(Error::Config(format!("scenario {scenario} does not exist")));
    }
    let mut best = f64::NEG_INFINITY;
    let mut argmax: Vec<usize> = Vec::new();
    for (i, (y, d)) in table
        .budget
        .iter()
        .zip(&table.disturbance[scenario])
        .enumerate()
    {
        let Utility::Value(d) = d else { continue };
        let v = dot(y, u) + d;
        if v > best {
            best = v;
            argmax.clear();
            argmax.push(i);
        } else if v == best {
            argmax.push(i);
        }
    }
    if argmax.is_empty() {
        return Err(Error::Infeasible { scenario });
    }
    let mut out = vec![0.0; model.goods()];
    for &i in &argmax {
        for (o, q) in out.iter_mut().zip(&table.budget[i]) {
            *o += q;
        }
    }
    let n = argmax.len() as f64;
    out.iter_mut().for_each(|o| *o /= n);
    Ok(out)
}

/// `Ȳ(x, β)` for one scenario of a smoothed finite model, or the logit formula.
pub(crate) fn expected_choice(
    model: &ModelSpec,
    u: &[f64],
    scenario: Option<usize>,
) -> Result<Vec<f64>> {
    let sigma = model.smoothing_scale();
    if sigma == 0.0 {
        return solve_choice_at(model, u, scenario.unwrap_or(0));
    }
    let probs = choice_probabilities(&model.choice_points(scenario), u, sigma).ok_or(
        Error::Infeasible {
            scenario: scenario.unwrap_or(0),
        },
    )?;
    let mut out = vec![0.0; model.goods()];
    for (p, y) in &probs {
        for (o, q) in out.iter_mut().zip(y) {
            *o += p * q;
        }
    }
    Ok(out)
}

pub(crate) fn scenarios_of(model: &ModelSpec) -> Vec<(Option<usize>, f64)> {
    model.scenario_weights()
}

/// Finite univariate distribution.
#[derive(Debug, Clone, PartialEq)]
pub struct Univariate {
    pub values: Vec<f64>,
    pub weights: Vec<f64>,
}

impl Univariate {
    pub fn new(values: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        check_len("univariate weights", values.len(), weights.len())?;
        check_probabilities("univariate distribution", &weights)?;
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Config("support values must be finite".into()));
        }
        Ok(Self { values, weights })
    }

    pub fn point(v: f64) -> Self {
        Self {
            values: vec![v],
            weights: vec![1.0],
        }
    }

    pub fn uniform(values: Vec<f64>) -> Result<Self> {
        let n = values.len();
        Self::new(values, vec![1.0 / n as f64; n])
    }

    pub fn raw_moment(&self, power: usize) -> f64 {
        self.values
            .iter()
            .zip(&self.weights)
            .map(|(v, w)| w * v.powi(power as i32))
            .sum()
    }
}

/// Distribution `ν` of the random slopes, with finite support.
#[derive(Debug, Clone, PartialEq)]
pub enum BetaDistribution {
    DiscretePoints {
        support: Vec<Vec<f64>>,
        weights: Vec<f64>,
    },
    /// Mutually independent coordinates.
    ProductUnivariate { marginals: Vec<Univariate> },
}

impl BetaDistribution {
    pub fn discrete(support: Vec<Vec<f64>>, weights: Vec<f64>) -> Result<Self> {
        check_len("support weights", support.len(), weights.len())?;
        check_probabilities("slope distribution", &weights)?;
        let dim = support[0].len();
        for s in &support {
            check_len("support vector", dim, s.len())?;
            if s.iter().any(|v| !v.is_finite()) {
                return Err(Error::Config("support values must be finite".into()));
            }
        }
        Ok(Self::DiscretePoints { support, weights })
    }

    pub fn uniform_mixture(support: Vec<Vec<f64>>) -> Result<Self> {
        let n = support.len();
        if n == 0 {
            return Err(Error::Config(
                "slope distribution: no support points".into(),
            ));
        }
        Self::discrete(support, vec![1.0 / n as f64; n])
    }

    pub fn point_mass(beta: Vec<f64>) -> Self {
        Self::DiscretePoints {
            support: vec![beta],
            weights: vec![1.0],
        }
    }

    pub fn product(marginals: Vec<Univariate>) -> Result<Self> {
        if marginals.is_empty() {
            return Err(Error::Config("slope distribution: no coordinates".into()));
        }
        Ok(Self::ProductUnivariate { marginals })
    }

    pub fn dim(&self) -> usize {
        match self {
            Self::DiscretePoints { support, .. } => support[0].len(),
            Self::ProductUnivariate { marginals } => marginals.len(),
        }
    }

    pub fn check_layout(&self, layout: &Layout) -> Result<()> {
        check_len("slope distribution", layout.total(), self.dim())
    }

    /// Support points with weights. The product family enumerates the
    /// Cartesian product with the last coordinate varying fastest.
    pub fn support_points(&self) -> Vec<(f64, Vec<f64>)> {
        match self {
            Self::DiscretePoints { support, weights } => weights
                .iter()
                .copied()
                .zip(support.iter().cloned())
                .collect(),
            Self::ProductUnivariate { marginals } => {
                let mut out = vec![(1.0, Vec::with_capacity(marginals.len()))];
                for m in marginals {
                    let mut next = Vec::with_capacity(out.len() * m.values.len());
                    for (w, prefix) in &out {
                        for (v, mw) in m.values.iter().zip(&m.weights) {
                            let mut p = prefix.clone();
                            p.push(*v);
                            next.push((w * mw, p));
                        }
                    }
                    out = next;
                }
                out
            }
        }
    }

    /// True when coordinate `flat` equals `value` on the whole support.
    pub fn is_constant(&self, flat: usize, value: f64) -> bool {
        match self {
            Self::DiscretePoints { support, weights } => support
                .iter()
                .zip(weights)
                .all(|(s, w)| *w == 0.0 || s[flat] == value),
            Self::ProductUnivariate { marginals } => marginals[flat]
                .values
                .iter()
                .zip(&marginals[flat].weights)
                .all(|(v, w)| *w == 0.0 || *v == value),
        }
    }
}

/// Exact `∫ β_{(γ,ξ)} dν` for a finite-support slope distribution.
pub fn true_moment(dist: &BetaDistribution, layout: &Layout, idx: &MomentIndex) -> f64 {
    match dist {
        BetaDistribution::DiscretePoints { support, weights } => support
            .iter()
            .zip(weights)
            .map(|(s, w)| {
                w * idx
                    .pairs()
                    .iter()
                    .map(|c| s[layout.flat(*c)])
                    .product::<f64>()
            })
            .sum(),
        BetaDistribution::ProductUnivariate { marginals } => idx
            .grouped()
            .iter()
            .map(|(c, m)| marginals[layout.flat(*c)].raw_moment(*m))
            .product(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::index::Coord;

    fn example_bundle(consideration: Option<Vec<Vec<f64>>>, e10: f64) -> ModelSpec {
        ModelSpec::new(
            vec![1, 1],
            Variant::FiniteBundle(FiniteBundle {
                lattice: None,
                scenarios: vec![BundleScenario {
                    weight: 1.0,
                    intercepts: vec![e10, -1.0],
                    pairwise: vec![PairTerm {
                        a: 0,
                        b: 1,
                        value: 1.0,
                    }],
                    consideration,
                }],
                smoothing: 0.0,
            }),
        )
        .unwrap()
    }

    #[test]
    fn latent_utility_hand_evaluated() {
        let m = example_bundle(None, 1.0);
        let u = latent_utility(&m, &[1.0, 1.0], &[0.0, 0.0], &[1.0, 1.0], 0).unwrap();
        assert_eq!(u, Utility::Value(1.0));
        let zero = latent_utility(&m, &[0.0, 0.0], &[0.3, -2.0], &[1.5, 0.7], 0).unwrap();
        assert_eq!(zero, Utility::Value(0.0));
    }

    #[test]
    fn latent_utility_excluded_outside_consideration() {
        let m = example_bundle(Some(vec![vec![0.0, 0.0], vec![1.0, 0.0]]), 1.0);
        let u = latent_utility(&m, &[1.0, 1.0], &[0.0, 0.0], &[1.0, 1.0], 0).unwrap();
        assert_eq!(u, Utility::Excluded);
    }

    #[test]
    fn latent_utility_rejects_bad_dimensions() {
        let m = example_bundle(None, 1.0);
        assert!(matches!(
            latent_utility(&m, &[1.0, 1.0], &[0.0], &[1.0, 1.0], 0),
            Err(Error::Dimension { .. })
        ));
    }

    #[test]
    fn solve_choice_averages_ties() {
        let m = example_bundle(None, 1.0);
        // (1,0) and (1,1) both reach utility 1
        let y = solve_choice(&m, &[0.0, 0.0], &[1.0, 1.0], 0).unwrap();
        assert_eq!(y, vec![1.0, 0.5]);
    }

    #[test]
    fn solve_choice_restricted_consideration() {
        let m = example_bundle(Some(vec![vec![0.0, 0.0], vec![1.0, 0.0]]), -2.0);
        let y = solve_choice(&m, &[0.0, 0.0], &[1.0, 1.0], 0).unwrap();
        assert_eq!(y, vec![0.0, 0.0]);
    }

    #[test]
    fn solve_choice_four_way_tie() {
        let m = ModelSpec::new(
            vec![1, 1],
            Variant::FiniteBundle(FiniteBundle {
                lattice: None,
                scenarios: vec![BundleScenario {
                    weight: 1.0,
                    intercepts: vec![0.0, 0.0],
                    pairwise: vec![],
                    consideration: None,
                }],
                smoothing: 0.0,
            }),
        )
        .unwrap();
        let y = solve_choice(&m, &[0.4, -0.2], &[0.0, 0.0], 0).unwrap();
        assert_eq!(y, vec![0.5, 0.5]);
    }

    #[test]
    fn solve_choice_infeasible_scenario() {
        let m = ModelSpec::new(
            vec![1],
            Variant::GenericFiniteEps(GenericFiniteEps {
                budget: vec![vec![0.0], vec![1.0]],
                scenarios: vec![GenericScenario {
                    weight: 1.0,
                    disturbance: vec![None, None],
                }],
                smoothing: 0.0,
            }),
        )
        .unwrap();
        assert_eq!(
            solve_choice(&m, &[0.0], &[1.0], 0),
            Err(Error::Infeasible { scenario: 0 })
        );
    }

    #[test]
    fn config_validation() {
        let bad_weights = ModelSpec::new(
            vec![1, 1],
            Variant::FiniteBundle(FiniteBundle {
                lattice: None,
                scenarios: vec![BundleScenario {
                    weight: 0.7,
                    intercepts: vec![0.0, 0.0],
                    pairwise: vec![],
                    consideration: None,
                }],
                smoothing: 0.0,
            }),
        );
        assert!(matches!(bad_weights, Err(Error::Config(_))));
        let empty_cs = ModelSpec::new(
            vec![1, 1],
            Variant::FiniteBundle(FiniteBundle {
                lattice: None,
                scenarios: vec![BundleScenario {
                    weight: 1.0,
                    intercepts: vec![0.0, 0.0],
                    pairwise: vec![],
                    consideration: Some(vec![]),
                }],
                smoothing: 0.0,
            }),
        );
        assert!(matches!(empty_cs, Err(Error::Config(_))));
        let m = ModelSpec::logit(vec![1, 1], vec![0.0, 0.0], false).unwrap();
        assert!(m.clone().with_center(vec![0.0]).is_err());
        assert!(ModelSpec::logit(vec![2, 1], vec![0.0, 0.0], false)
            .unwrap()
            .with_index_form(IndexForm::Power)
            .is_err());
    }

    #[test]
    fn true_moment_two_point_mixture() {
        let layout = Layout::new(vec![1, 1]).unwrap();
        let d = BetaDistribution::uniform_mixture(vec![vec![1.0, 1.0], vec![1.0, 3.0]]).unwrap();
        let b21_sq = MomentIndex::new(vec![Coord::new(1, 0), Coord::new(1, 0)]);
        let cross = MomentIndex::new(vec![Coord::new(0, 0), Coord::new(1, 0)]);
        assert_eq!(true_moment(&d, &layout, &b21_sq), 5.0);
        assert_eq!(true_moment(&d, &layout, &cross), 2.0);
        let pm = BetaDistribution::point_mass(vec![1.0, 1.0]);
        for idx in layout.moment_indices(3) {
            assert_eq!(true_moment(&pm, &layout, &idx), 1.0);
        }
    }

    #[test]
    fn product_support_matches_moments() {
        let layout = Layout::new(vec![1, 1]).unwrap();
        let d = BetaDistribution::product(vec![
            Univariate::uniform(vec![0.5, 1.5]).unwrap(),
            Univariate::uniform(vec![1.0, 3.0]).unwrap(),
        ])
        .unwrap();
        let pts = d.support_points();
        assert_eq!(pts.len(), 4);
        let as_discrete = BetaDistribution::DiscretePoints {
            support: pts.iter().map(|p| p.1.clone()).collect(),
            weights: pts.iter().map(|p| p.0).collect(),
        };
        for order in 1..=3 {
            for idx in layout.moment_indices(order) {
                let a = true_moment(&d, &layout, &idx);
                let b = true_moment(&as_discrete, &layout, &idx);
                assert!((a - b).abs() < 1e-12, "{idx}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn logit_v_derivatives_match_known_values() {
        let m = ModelSpec::logit(vec![1, 1], vec![0.0, 0.0], false).unwrap();
        let u = [0.0, 0.0];
        assert!((m.v_derivative(&[0], &u).unwrap() - 0.5).abs() < 1e-15);
        assert!((m.v_derivative(&[0, 0], &u).unwrap() - 0.25).abs() < 1e-15);
        assert!((m.v_derivative(&[0, 1], &u).unwrap() + 0.25).abs() < 1e-15);
        assert!(m.v_derivative(&[0, 0, 1], &u).unwrap().abs() < 1e-15);
        assert!((m.v_derivative(&[0, 0, 0, 0], &u).unwrap() + 0.125).abs() < 1e-15);
        let og = ModelSpec::logit(vec![1, 1], vec![0.0, 0.0], true).unwrap();
        assert!((og.v_derivative(&[0, 0, 1], &u).unwrap() + 1.0 / 27.0).abs() < 1e-15);
        assert!((og.v_derivative(&[0, 0, 0, 0], &u).unwrap() + 2.0 / 27.0).abs() < 1e-15);
        assert!((og.v_derivative(&[0, 0, 1, 1, 1], &u).unwrap() + 1.0 / 81.0).abs() < 1e-15);
    }

    #[test]
    fn v_derivative_matches_finite_differences_of_v() {
        let m = ModelSpec::new(
            vec![1, 1],
            Variant::FiniteBundle(FiniteBundle {
                lattice: None,
                scenarios: vec![
                    BundleScenario {
                        weight: 0.4,
                        intercepts: vec![0.3, -0.2],
                        pairwise: vec![PairTerm {
                            a: 0,
                            b: 1,
                            value: 0.5,
                        }],
                        consideration: None,
                    },
                    BundleScenario {
                        weight: 0.6,
                        intercepts: vec![-0.1, 0.4],
                        pairwise: vec![],
                        consideration: Some(vec![vec![0.0, 0.0], vec![1.0, 0.0], vec![0.0, 1.0]]),
                    },
                ],
                smoothing: 0.7,
            }),
        )
        .unwrap();
        let u = [0.1, -0.2];
        let h = 1e-4;
        let v = |a: f64, b: f64| m.indirect_utility(&[a, b]).unwrap();
        let fd1 = (v(u[0] + h, u[1]) - v(u[0] - h, u[1])) / (2.0 * h);
        assert!((fd1 - m.v_derivative(&[0], &u).unwrap()).abs() < 1e-8);
        let fd12 = (v(u[0] + h, u[1] + h) - v(u[0] + h, u[1] - h) - v(u[0] - h, u[1] + h)
            + v(u[0] - h, u[1] - h))
            / (4.0 * h * h);
        assert!((fd12 - m.v_derivative(&[0, 1], &u).unwrap()).abs() < 1e-6);
    }

    #[test]
    fn set_partition_counts_are_bell_numbers() {
        let bell = [1, 2, 5, 15, 52];
        for (n, b) in bell.iter().enumerate() {
            assert_eq!(set_partitions(n + 1).len(), *b);
        }
    }
}
