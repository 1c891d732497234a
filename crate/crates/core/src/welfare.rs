//! `V` away from the centering point, welfare aggregates and counterfactual
//! demand distributions.

use std::cmp::Ordering;

use crate::asf::{asf, ybar_at_index, ybar_given_beta, AsfEvaluator};
use crate::error::{check_len, Error, Result};
use crate::index::{insert_sorted, multiplicity_factorial, multisets, Coord};
use crate::model::{BetaDistribution, IndexForm, ModelSpec, Univariate};
use crate::quadrature::integrate_unit;
use crate::recovery::VDerivTable;

/// Sup-norm trust radius of Taylor extrapolation around the center index.
pub const DEFAULT_TRUST_RADIUS: f64 = 1.0;

/// Default node count of path integrals.
pub const DEFAULT_NODES: usize = 32;

/// A value with a flag set when it was extrapolated beyond the trust radius.
#[derive(Debug, Clone, PartialEq)]
pub struct Flagged<T> {
    pub value: T,
    pub extrapolated: bool,
}

impl<T> Flagged<T> {
    fn exact(value: T) -> Self {
        Self {
            value,
            extrapolated: false,
        }
    }
}

/// Integrated indirect utility normalized to `V(center index) = 0`.
pub trait VModel {
    fn goods(&self) -> usize;
    /// `V(u) − V(u₀)`.
    fn v_diff(&self, u: &[f64]) -> Result<Flagged<f64>>;
    /// `∇V(u)`, i.e. `Ȳ` at index `u`.
    fn gradient(&self, u: &[f64]) -> Result<Flagged<Vec<f64>>>;
}

/// Taylor polynomial of `V` built from derivatives at the center index.
#[derive(Debug, Clone, PartialEq)]
pub struct TaylorV {
    center_index: Vec<f64>,
    derivs: VDerivTable,
    trust_radius: f64,
}

impl TaylorV {
    pub fn new(derivs: VDerivTable, center_index: Vec<f64>) -> Result<Self> {
        if derivs.is_empty() {
            return Err(Error::Config("no derivatives of V supplied".into()));
        }
        if derivs.iter().any(|(_, e)| !e.value.is_finite()) {
            return Err(Error::Config("Taylor coefficients must be finite".into()));
        }
        if derivs
            .iter()
            .any(|(g, _)| g.iter().any(|&k| k >= center_index.len()))
        {
            return Err(Error::Config(
                "derivative table names a good beyond the index vector".into(),
            ));
        }
        Ok(Self {
            center_index,
            derivs,
            trust_radius: DEFAULT_TRUST_RADIUS,
        })
    }

    pub fn with_trust_radius(mut self, r: f64) -> Result<Self> {
        if r.is_nan() || r <= 0.0 {
            return Err(Error::Config(format!("trust radius must be > 0, got {r}")));
        }
        self.trust_radius = r;
        Ok(self)
    }

    pub fn order(&self) -> usize {
        self.derivs.max_order()
    }

    pub fn trust_radius(&self) -> f64 {
        self.trust_radius
    }

    fn displacement(&self, u: &[f64]) -> Result<(Vec<f64>, bool)> {
        check_len("index vector", self.center_index.len(), u.len())?;
        let d: Vec<f64> = u
            .iter()
            .zip(&self.center_index)
            .map(|(a, c)| a - c)
            .collect();
        let sup = d.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        Ok((d, sup > self.trust_radius))
    }

    fn monomial(d: &[f64], goods: &[usize]) -> f64 {
        goods.iter().map(|&g| d[g]).product::<f64>() / multiplicity_factorial(goods)
    }
}

impl VModel for TaylorV {
    fn goods(&self) -> usize {
        self.center_index.len()
    }

    fn v_diff(&self, u: &[f64]) -> Result<Flagged<f64>> {
        let (d, extrapolated) = self.displacement(u)?;
        let value = self
            .derivs
            .iter()
            .map(|(g, e)| e.value * Self::monomial(&d, g))
            .sum();
        Ok(Flagged {
            value,
            extrapolated,
        })
    }

    fn gradient(&self, u: &[f64]) -> Result<Flagged<Vec<f64>>> {
        let (d, extrapolated) = self.displacement(u)?;
        let k = self.goods();
        let mut grad = vec![0.0; k];
        for n in 0..self.order() {
            for g in multisets(k, n) {
                let m = Self::monomial(&d, &g);
                for (t, slot) in grad.iter_mut().enumerate() {
                    if let Some(c) = self.derivs.get(&insert_sorted(&g, t)) {
                        *slot += c * m;
                    }
                }
            }
        }
        Ok(Flagged {
            value: grad,
            extrapolated,
        })
    }
}

/// Closed-form `V` of a model oracle.
#[derive(Debug, Clone, Copy)]
pub struct ExactV<'a> {
    model: &'a ModelSpec,
}

impl<'a> ExactV<'a> {
    pub fn new(model: &'a ModelSpec) -> Self {
        Self { model }
    }
}

impl VModel for ExactV<'_> {
    fn goods(&self) -> usize {
        self.model.goods()
    }

    fn v_diff(&self, u: &[f64]) -> Result<Flagged<f64>> {
        let v = self.model.indirect_utility(u)?;
        let v0 = self.model.indirect_utility(&self.model.center_indices())?;
        Ok(Flagged::exact(v - v0))
    }

    fn gradient(&self, u: &[f64]) -> Result<Flagged<Vec<f64>>> {
        ybar_at_index(self.model, u).map(Flagged::exact)
    }
}

/// `V` differences by line integrals of the ASF, for models whose first
/// characteristic of every good has a unit coefficient.
#[derive(Debug, Clone, Copy)]
pub struct PathIntegralV<'a> {
    evaluator: &'a AsfEvaluator,
    nodes: usize,
}

impl<'a> PathIntegralV<'a> {
    pub fn new(evaluator: &'a AsfEvaluator) -> Result<Self> {
        check_unit_first_coefficients(evaluator)?;
        Ok(Self {
            evaluator,
            nodes: DEFAULT_NODES,
        })
    }

    pub fn with_nodes(mut self, nodes: usize) -> Self {
        self.nodes = nodes.max(1);
        self
    }

    /// Covariate point whose first characteristics shift the center by `u`.
    fn point(&self, u: &[f64]) -> Result<Vec<f64>> {
        let model = self.evaluator.model();
        check_len("index vector", model.goods(), u.len())?;
        let mut x = model.center().to_vec();
        for (k, du) in u.iter().enumerate() {
            x[model.layout().flat(Coord::new(k, 0))] += du;
        }
        Ok(x)
    }
}

impl VModel for PathIntegralV<'_> {
    fn goods(&self) -> usize {
        self.evaluator.model().goods()
    }

    fn v_diff(&self, u: &[f64]) -> Result<Flagged<f64>> {
        let x = self.point(u)?;
        let c = self.evaluator.model().center().to_vec();
        path_integral_v_with_nodes(self.evaluator, &c, &x, self.nodes).map(Flagged::exact)
    }

    fn gradient(&self, u: &[f64]) -> Result<Flagged<Vec<f64>>> {
        let x = self.point(u)?;
        asf(self.evaluator, &x).map(Flagged::exact)
    }
}

fn check_unit_first_coefficients(evaluator: &AsfEvaluator) -> Result<()> {
    let model = evaluator.model();
    if model.index_form() != IndexForm::Linear {
        return Err(Error::Precondition(
            "path integrals need the linear index".into(),
        ));
    }
    let layout = model.layout();
    for k in 0..model.goods() {
        let flat = layout.flat(Coord::new(k, 0));
        if !evaluator.beta().is_constant(flat, 1.0) {
            return Err(Error::Precondition(format!(
                "b{}_1 must equal 1 on the whole slope support",
                k + 1
            )));
        }
    }
    Ok(())
}

/// `V` difference between the index points of `x_from` and `x_to` with the
/// default node count.
pub fn path_integral_v(evaluator: &AsfEvaluator, x_from: &[f64], x_to: &[f64]) -> Result<f64> {
    path_integral_v_with_nodes(evaluator, x_from, x_to, DEFAULT_NODES)
}

/// Gauss–Legendre quadrature of `∫₀¹ Ȳ(x(t))·(x_to − x_from)_{:,1} dt` along
/// `x(t) = t·x_to + (1−t)·x_from`.
pub fn path_integral_v_with_nodes(
    evaluator: &AsfEvaluator,
    x_from: &[f64],
    x_to: &[f64],
    nodes: usize,
) -> Result<f64> {
    let model = evaluator.model();
    let layout = model.layout();
    check_len("path start", layout.total(), x_from.len())?;
    check_len("path end", layout.total(), x_to.len())?;
    check_unit_first_coefficients(evaluator)?;
    let center = model.center();
    for (i, c) in layout.coords().enumerate() {
        if c.ch > 0 && (x_from[i] != center[i] || x_to[i] != center[i]) {
            return Err(Error::Precondition(format!(
                "x{}_{} must stay at the center along the path",
                c.good + 1,
                c.ch + 1
            )));
        }
    }
    let order = x_from
        .iter()
        .zip(x_to)
        .map(|(a, b)| a.total_cmp(b))
        .find(|o| *o != Ordering::Equal)
        .unwrap_or(Ordering::Equal);
    match order {
        Ordering::Equal => Ok(0.0),
        Ordering::Greater => Ok(-integrate_segment(evaluator, x_to, x_from, nodes)?),
        Ordering::Less => integrate_segment(evaluator, x_from, x_to, nodes),
    }
}

fn integrate_segment(evaluator: &AsfEvaluator, a: &[f64], b: &[f64], nodes: usize) -> Result<f64> {
    let layout = evaluator.model().layout();
    let firsts: Vec<usize> = (0..layout.goods())
        .map(|k| layout.flat(Coord::new(k, 0)))
        .collect();
    let delta: Vec<f64> = firsts.iter().map(|&i| b[i] - a[i]).collect();
    integrate_unit(nodes.max(1), |t| {
        let x: Vec<f64> = a
            .iter()
            .zip(b)
            .map(|(ai, bi)| t * bi + (1.0 - t) * ai)
            .collect();
        let y = asf(evaluator, &x)?;
        Ok(y.iter().zip(&delta).map(|(yk, d)| yk * d).sum())
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Weighting {
    Unweighted,
    /// Per-point weight `1/|β_{1,1}|`.
    InverseAbsBeta11,
}

/// `Σ_s w_s ω_s [V(β^{(s)}'x) − V(0)]` over the slope support.
pub fn average_indirect_utility(
    vmodel: &dyn VModel,
    model: &ModelSpec,
    beta: &BetaDistribution,
    x: &[f64],
    weighting: Weighting,
) -> Result<Flagged<f64>> {
    beta.check_layout(model.layout())?;
    let mut total = 0.0;
    let mut extrapolated = false;
    for (w, b) in beta.support_points() {
        if w == 0.0 {
            continue;
        }
        let omega = match weighting {
            Weighting::Unweighted => 1.0,
            Weighting::InverseAbsBeta11 => {
                if b[0] == 0.0 {
                    return Err(Error::Weighting(format!(
                        "support point {b:?} has b1_1 = 0"
                    )));
                }
                1.0 / b[0].abs()
            }
        };
        let v = vmodel.v_diff(&model.indices(x, &b)?)?;
        extrapolated |= v.extrapolated;
        total += w * omega * v.value;
    }
    Ok(Flagged {
        value: total,
        extrapolated,
    })
}

/// `(weight, demand vector)` pairs over the slope support.
pub type DemandDistribution = Vec<(f64, Vec<f64>)>;

/// `(weight, ∇V(β'x))` for every slope support point.
pub fn counterfactual_demand(
    vmodel: &dyn VModel,
    model: &ModelSpec,
    beta: &BetaDistribution,
    x: &[f64],
) -> Result<Flagged<DemandDistribution>> {
    beta.check_layout(model.layout())?;
    let mut out = Vec::new();
    let mut extrapolated = false;
    for (w, b) in beta.support_points() {
        let g = vmodel.gradient(&model.indices(x, &b)?)?;
        extrapolated |= g.extrapolated;
        out.push((w, g.value));
    }
    Ok(Flagged {
        value: out,
        extrapolated,
    })
}

/// Piecewise-linear CDF through `(z_i, C_{i−1} + w_i/2)`.
#[derive(Debug, Clone, PartialEq)]
struct PwlCdf {
    z: Vec<f64>,
    p: Vec<f64>,
}

impl PwlCdf {
    fn new(dist: &Univariate) -> Self {
        let mut pts: Vec<(f64, f64)> = dist
            .values
            .iter()
            .copied()
            .zip(dist.weights.iter().copied())
            .filter(|(_, w)| *w > 0.0)
            .collect();
        pts.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut merged: Vec<(f64, f64)> = Vec::new();
        for (v, w) in pts {
            match merged.last_mut() {
                Some(last) if last.0 == v => last.1 += w,
                _ => merged.push((v, w)),
            }
        }
        let mut cum = 0.0;
        let (mut z, mut p) = (Vec::new(), Vec::new());
        for (v, w) in merged {
            z.push(v);
            p.push(cum + w / 2.0);
            cum += w;
        }
        Self { z, p }
    }

    fn cdf(&self, x: f64) -> f64 {
        interpolate(&self.z, &self.p, x)
    }

    fn quantile(&self, q: f64) -> f64 {
        interpolate(&self.p, &self.z, q)
    }
}

/// Linear interpolation through increasing knots, clamped at the ends.
fn interpolate(xs: &[f64], ys: &[f64], x: f64) -> f64 {
    let n = xs.len();
    if n == 1 || x <= xs[0] {
        return ys[0];
    }
    if x >= xs[n - 1] {
        return ys[n - 1];
    }
    let i = xs.partition_point(|v| *v <= x) - 1;
    let t = (x - xs[i]) / (xs[i + 1] - xs[i]);
    ys[i] + t * (ys[i + 1] - ys[i])
}

/// Tabulates `F_W^{-1} ∘ F_η` on `grid` equally spaced points of the support
/// hull of `η`.
pub fn quantile_match_vprime(
    dist_w: &Univariate,
    dist_eta: &Univariate,
    grid: usize,
) -> Result<Vec<(f64, f64)>> {
    let fe = PwlCdf::new(dist_eta);
    if fe.z.len() < 2 {
        return Err(Error::AbsoluteContinuity(
            "the index distribution is degenerate".into(),
        ));
    }
    let fw = PwlCdf::new(dist_w);
    if fw.z.is_empty() {
        return Err(Error::AbsoluteContinuity(
            "the demand distribution is empty".into(),
        ));
    }
    let grid = grid.max(2);
    let (lo, hi) = (fe.z[0], fe.z[fe.z.len() - 1]);
    Ok((0..grid)
        .map(|i| {
            let z = lo + (hi - lo) * i as f64 / (grid - 1) as f64;
            (z, fw.quantile(fe.cdf(z)))
        })
        .collect())
}

/// One-good monotone rearrangement from the model: `η = β'(x − c)` and
/// `W = Ȳ(x, β)` over the slope support.
pub fn quantile_match_from_model(
    model: &ModelSpec,
    beta: &BetaDistribution,
    x: &[f64],
    grid: usize,
) -> Result<Vec<(f64, f64)>> {
    if model.goods() != 1 {
        return Err(Error::Precondition(
            "monotone rearrangement is implemented for one good only".into(),
        ));
    }
    beta.check_layout(model.layout())?;
    check_len("covariate point", model.layout().total(), x.len())?;
    if x == model.center() {
        return Err(Error::AbsoluteContinuity(
            "x equals the center, so every index is zero".into(),
        ));
    }
    let (mut eta, mut w, mut weights) = (Vec::new(), Vec::new(), Vec::new());
    for (p, b) in beta.support_points() {
        eta.push(model.indices(x, &b)?[0]);
        w.push(ybar_given_beta(model, x, &b)?[0]);
        weights.push(p);
    }
    let dist_eta = Univariate::new(eta, weights.clone())?;
    let dist_w = Univariate::new(w, weights)?;
    quantile_match_vprime(&dist_w, &dist_eta, grid)
}
