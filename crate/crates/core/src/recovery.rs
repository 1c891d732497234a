//! Constructive recovery of slope moments and of derivatives of `V` from a
//! [`DerivativeTable`].
//!
//! Everything rests on `∂_{(γ,ξ)}Ȳ_k(c) = ∂_γ∂_kV · ∫β_{(γ,ξ)}dν`: two entries
//! whose good multisets `γ+k` coincide share the `V` factor, so their ratio is
//! a ratio of moments.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;

use crate::asf::AsfEvaluator;
use crate::error::{Error, Result};
use crate::index::{goods_label, insert_sorted, multisets, replace_one, Coord, MomentIndex};
use crate::model::{IndexForm, ModelSpec};
use crate::numdiff::{mixed_partial_all, DerivativeTable, FdScheme};

/// Default relevance threshold in derivative units.
pub const DEFAULT_RELEVANCE: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Route {
    Scale,
    Independence,
    VKnown,
}

impl Route {
    pub fn name(self) -> &'static str {
        match self {
            Route::Scale => "scale",
            Route::Independence => "independence",
            Route::VKnown => "vknown",
        }
    }
}

impl fmt::Display for Route {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MomentEntry {
    pub value: f64,
    /// How the entry was obtained, e.g. the anchor it was scaled from.
    pub note: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MomentTable {
    order: usize,
    route: Route,
    entries: BTreeMap<MomentIndex, MomentEntry>,
}

impl MomentTable {
    pub fn order(&self) -> usize {
        self.order
    }

    pub fn route(&self) -> Route {
        self.route
    }

    pub fn get(&self, idx: &MomentIndex) -> Option<f64> {
        self.entries.get(idx).map(|e| e.value)
    }

    pub fn entry(&self, idx: &MomentIndex) -> Option<&MomentEntry> {
        self.entries.get(idx)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&MomentIndex, &MomentEntry)> {
        self.entries.iter()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

fn one_based(goods: &[usize]) -> String {
    let parts: Vec<String> = goods.iter().map(|g| (g + 1).to_string()).collect();
    format!("({})", parts.join(","))
}

fn entry(table: &DerivativeTable, idx: &MomentIndex, k: usize) -> Result<f64> {
    table.get(idx, k).ok_or_else(|| {
        Error::Precondition(format!(
            "derivative table has no entry for {idx} on good {}",
            k + 1
        ))
    })
}

fn max_abs(row: &[f64]) -> (usize, f64) {
    let mut best = (0, f64::NEG_INFINITY);
    for (k, v) in row.iter().enumerate() {
        if v.abs() > best.1 {
            best = (k, v.abs());
        }
    }
    best
}

/// `∂_{(γ,ξ)}Ȳ_k / ∂_{(δ,η)}Ȳ_j = ∫β_{(γ,ξ)}dν / ∫β_{(δ,η)}dν`.
pub fn ratio_of_moments(
    table: &DerivativeTable,
    num: (&MomentIndex, usize),
    den: (&MomentIndex, usize),
    tau: f64,
) -> Result<f64> {
    let lhs = insert_sorted(&num.0.goods(), num.1);
    let rhs = insert_sorted(&den.0.goods(), den.1);
    if lhs != rhs {
        return Err(Error::Precondition(format!(
            "good multisets differ: {} vs {}",
            one_based(&lhs),
            one_based(&rhs)
        )));
    }
    let d = entry(table, den.0, den.1)?;
    if d.abs() <= tau {
        return Err(Error::Relevance(format!(
            "denominator {} on good {} is {d:e}",
            den.0,
            den.1 + 1
        )));
    }
    Ok(entry(table, num.0, num.1)? / d)
}

/// Ratio of two moments sharing the good tuple, read off the same target good.
pub fn same_good_ratio(
    table: &DerivativeTable,
    num: &MomentIndex,
    den: &MomentIndex,
    k: usize,
    tau: f64,
) -> Result<f64> {
    if num.goods() != den.goods() {
        return Err(Error::Precondition(format!(
            "{num} and {den} have different good tuples"
        )));
    }
    if num == den {
        return Ok(1.0);
    }
    ratio_of_moments(table, (num, k), (den, k), tau)
}

/// Selected characteristic tuple for one good tuple.
#[derive(Debug, Clone, PartialEq)]
pub struct RelevanceEntry {
    pub goods: Vec<usize>,
    pub selected: MomentIndex,
    /// Target good with the largest `|∂Ȳ_k|` for the selected tuple.
    pub target: usize,
    pub magnitude: f64,
}

/// All `M`-th order moments relative to a reference moment.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainRatios {
    order: usize,
    reference: MomentIndex,
    ratios: BTreeMap<MomentIndex, f64>,
    relevance: BTreeMap<Vec<usize>, RelevanceEntry>,
}

impl ChainRatios {
    pub fn order(&self) -> usize {
        self.order
    }

    pub fn reference(&self) -> &MomentIndex {
        &self.reference
    }

    /// `∫β_I dν / ∫β_ref dν`.
    pub fn get(&self, idx: &MomentIndex) -> Option<f64> {
        self.ratios.get(idx).copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&MomentIndex, f64)> {
        self.ratios.iter().map(|(k, v)| (k, *v))
    }

    pub fn relevance(&self) -> impl Iterator<Item = &RelevanceEntry> {
        self.relevance.values()
    }

    /// Ratio of the selected moments at the ends of a one-step path of good
    /// tuples, multiplying the adjacent ratios along the way.
    pub fn along_path(
        &self,
        table: &DerivativeTable,
        path: &[Vec<usize>],
        tau: f64,
    ) -> Result<f64> {
        let mut r = 1.0;
        for w in path.windows(2) {
            let (g, h) = (&w[0], &w[1]);
            let (a, b) = crate::index::one_step_difference(g, h).ok_or_else(|| {
                Error::Precondition(format!(
                    "{} and {} are not one-step neighbours",
                    one_based(g),
                    one_based(h)
                ))
            })?;
            let ig = &self.selected(g)?.selected;
            let ih = &self.selected(h)?.selected;
            r *= ratio_of_moments(table, (ih, a), (ig, b), tau)?;
        }
        Ok(r)
    }

    fn selected(&self, goods: &[usize]) -> Result<&RelevanceEntry> {
        self.relevance.get(goods).ok_or_else(|| {
            Error::Precondition(format!(
                "good tuple {} is not of this order",
                one_based(goods)
            ))
        })
    }
}

/// Relevance probe: the characteristic tuple whose largest `|∂Ȳ_k|` is
/// maximal, scanning lexicographically and keeping the first on ties.
fn select(table: &DerivativeTable, goods: &[usize], tau: f64) -> Result<RelevanceEntry> {
    let mut best: Option<RelevanceEntry> = None;
    for idx in table.layout().moment_indices_for_goods(goods) {
        let row = table.row(&idx).ok_or_else(|| {
            Error::Precondition(format!("derivative table has no entry for {idx}"))
        })?;
        let (target, magnitude) = max_abs(row);
        if best.as_ref().is_none_or(|b| magnitude > b.magnitude) {
            best = Some(RelevanceEntry {
                goods: goods.to_vec(),
                selected: idx,
                target,
                magnitude,
            });
        }
    }
    match best {
        Some(b) if b.magnitude > tau => Ok(b),
        _ => Err(Error::Relevance(format!(
            "no characteristic tuple is relevant for good tuple {}",
            one_based(goods)
        ))),
    }
}

/// Walks the good-tuple graph from `(1,…,1)` one component at a time, then
/// fans out over characteristic tuples within each good tuple.
pub fn chain_ratios(table: &DerivativeTable, order: usize, tau: f64) -> Result<ChainRatios> {
    if order == 0 || order > table.max_order() {
        return Err(Error::Precondition(format!(
            "order {order} is not covered by the derivative table (max {})",
            table.max_order()
        )));
    }
    let k = table.layout().goods();
    let tuples = multisets(k, order);
    let mut relevance = BTreeMap::new();
    for g in &tuples {
        relevance.insert(g.clone(), select(table, g, tau)?);
    }
    let start = vec![0usize; order];
    let mut sel_ratio: BTreeMap<Vec<usize>, f64> = BTreeMap::new();
    sel_ratio.insert(start.clone(), 1.0);
    let mut queue = VecDeque::from([start.clone()]);
    while let Some(g) = queue.pop_front() {
        let ig = &relevance[&g].selected;
        let distinct: BTreeSet<usize> = g.iter().copied().collect();
        for &a in &distinct {
            for b in (0..k).filter(|&b| b != a) {
                let h = replace_one(&g, a, b).expect("a occurs in g");
                if sel_ratio.contains_key(&h) {
                    continue;
                }
                let ih = &relevance[&h].selected;
                let den = entry(table, ig, b)?;
                if den.abs() <= tau {
                    continue;
                }
                let r = sel_ratio[&g] * entry(table, ih, a)? / den;
                sel_ratio.insert(h.clone(), r);
                queue.push_back(h);
            }
        }
    }
    if let Some(g) = tuples.iter().find(|g| !sel_ratio.contains_key(*g)) {
        return Err(Error::Relevance(format!(
            "good tuple {} cannot be reached through relevant one-step ratios",
            one_based(g)
        )));
    }
    let mut ratios = BTreeMap::new();
    for g in &tuples {
        let sel = &relevance[g];
        let base = entry(table, &sel.selected, sel.target)?;
        for idx in table.layout().moment_indices_for_goods(g) {
            let r = if idx == sel.selected {
                sel_ratio[g]
            } else {
                sel_ratio[g] * entry(table, &idx, sel.target)? / base
            };
            ratios.insert(idx, r);
        }
    }
    Ok(ChainRatios {
        order,
        reference: relevance[&start].selected.clone(),
        ratios,
        relevance,
    })
}

/// Fails with [`Error::Degenerate`] when every entry of the order is negligible.
pub fn degenerate_guard(table: &DerivativeTable, order: usize, tau: f64) -> Result<()> {
    let any = table
        .entries()
        .filter(|(idx, _)| idx.order() == order)
        .any(|(_, row)| row.iter().any(|v| v.abs() > tau));
    if any {
        Ok(())
    } else {
        Err(Error::Degenerate { order })
    }
}

fn scaled_table(
    chain: &ChainRatios,
    route: Route,
    anchor: &MomentIndex,
    anchor_value: f64,
    note: &str,
) -> Result<MomentTable> {
    let r = chain.get(anchor).ok_or_else(|| {
        Error::Precondition(format!("anchor {anchor} is not of order {}", chain.order))
    })?;
    if r == 0.0 || !r.is_finite() {
        return Err(Error::Anchor { order: chain.order });
    }
    let entries = chain
        .iter()
        .map(|(idx, q)| {
            let value = anchor_value * (q / r);
            (
                idx.clone(),
                MomentEntry {
                    value,
                    note: note.to_string(),
                },
            )
        })
        .collect();
    Ok(MomentTable {
        order: chain.order,
        route,
        entries,
    })
}

/// Moments of order `M` from a known, nonzero `∫β_{1,1}^M dν`.
pub fn recover_moments_scale(
    table: &DerivativeTable,
    order: usize,
    known_scale: f64,
    tau: f64,
) -> Result<MomentTable> {
    if !(known_scale.is_finite() && known_scale != 0.0) {
        return Err(Error::Config(format!(
            "the known scale must be finite and nonzero, got {known_scale}"
        )));
    }
    let chain = chain_ratios(table, order, tau)?;
    let anchor = MomentIndex::power_of_first(order);
    let row = table.row(&anchor).unwrap_or(&[]);
    if max_abs(row).1 <= tau {
        return Err(Error::Relevance(format!(
            "{anchor} carries no relevant derivative"
        )));
    }
    scaled_table(
        &chain,
        Route::Scale,
        &anchor,
        known_scale,
        &format!("scaled by {anchor}"),
    )
}

/// `∫β_{1,1}dν` with the sign read off `∂Ȳ_1/∂x_{1,1}` (convexity of `V`).
pub fn signed_first_mean(table: &DerivativeTable, abs_mean: f64, tau: f64) -> Result<f64> {
    if !(abs_mean.is_finite() && abs_mean > 0.0) {
        return Err(Error::Config(format!(
            "|E b1_1| must be finite and positive, got {abs_mean}"
        )));
    }
    let d = entry(table, &MomentIndex::power_of_first(1), 0)?;
    if d.abs() <= tau {
        return Err(Error::Relevance(format!(
            "the own derivative of good 1 in x1_1 is {d:e}; the sign of E b1_1 is not identified"
        )));
    }
    Ok(abs_mean.copysign(d))
}

/// One inductive step of the independence route.
///
/// Order 1 is anchored at the signed mean. Order `n+1` is anchored at
/// `∫β_{1,1}β_I dν = ∫β_{1,1}dν · ∫β_I dν` for the largest order-`n`
/// moment `I` free of `β_{1,1}`.
pub fn independence_step(
    table: &DerivativeTable,
    order: usize,
    signed_mean: f64,
    previous: Option<&MomentTable>,
    tau: f64,
) -> Result<MomentTable> {
    let chain = chain_ratios(table, order, tau)?;
    let b11 = Coord::new(0, 0);
    let (anchor, value, note) = if order == 1 {
        (
            MomentIndex::power_of_first(1),
            signed_mean,
            "signed mean of b1_1".to_string(),
        )
    } else {
        let prev = previous.filter(|p| p.order() + 1 == order).ok_or_else(|| {
            Error::Precondition(format!("order {} moments are required", order - 1))
        })?;
        let mut best: Option<(&MomentIndex, f64)> = None;
        for (idx, e) in prev.iter() {
            if idx.pairs().contains(&b11) {
                continue;
            }
            if best.is_none_or(|b| e.value.abs() > b.1.abs()) {
                best = Some((idx, e.value));
            }
        }
        let (idx, m) = match best {
            Some(b) if b.1.abs() > tau => b,
            _ => return Err(Error::Anchor { order }),
        };
        (
            idx.with(b11),
            signed_mean * m,
            format!("anchored at b1_1 times {idx}"),
        )
    };
    scaled_table(&chain, Route::Independence, &anchor, value, &note)
}

/// Independence route through `max_order`; stops at the first failing order.
pub fn recover_moments_independence(
    table: &DerivativeTable,
    max_order: usize,
    abs_mean: f64,
    tau: f64,
) -> Result<Vec<MomentTable>> {
    let outcome = recover_moments(
        table,
        max_order,
        &RecoveryConfig {
            route: RouteConfig::Independence { abs_mean },
            relevance: tau,
        },
    );
    match outcome.failure {
        Some(e) => Err(e),
        None => Ok(outcome.moments),
    }
}

/// `∂_γV(c)` keyed by sorted good multiset.
#[derive(Debug, Clone, PartialEq)]
pub struct VDerivEntry {
    pub value: f64,
    /// Largest deviation of a single factorization from the stored average.
    pub discrepancy: f64,
    pub candidates: usize,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct VDerivTable {
    entries: BTreeMap<Vec<usize>, VDerivEntry>,
}

impl VDerivTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, mut goods: Vec<usize>, value: f64) {
        goods.sort_unstable();
        self.entries.insert(
            goods,
            VDerivEntry {
                value,
                discrepancy: 0.0,
                candidates: 1,
            },
        );
    }

    pub fn get(&self, goods: &[usize]) -> Option<f64> {
        let mut key = goods.to_vec();
        key.sort_unstable();
        self.entries.get(&key).map(|e| e.value)
    }

    pub fn entry(&self, goods: &[usize]) -> Option<&VDerivEntry> {
        let mut key = goods.to_vec();
        key.sort_unstable();
        self.entries.get(&key)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Vec<usize>, &VDerivEntry)> {
        self.entries.iter()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn max_order(&self) -> usize {
        self.entries.keys().map(Vec::len).max().unwrap_or(0)
    }

    pub fn max_discrepancy(&self) -> f64 {
        self.entries
            .values()
            .map(|e| e.discrepancy)
            .fold(0.0, f64::max)
    }

    /// Diagonal second derivatives below `−tol` (convexity violations).
    pub fn convexity_violations(&self, tol: f64) -> Vec<usize> {
        self.entries
            .iter()
            .filter(|(g, e)| g.len() == 2 && g[0] == g[1] && e.value < -tol)
            .map(|(g, _)| g[0])
            .collect()
    }

    /// Closed-form derivatives through `max_order` at the model's center.
    pub fn analytic(model: &ModelSpec, max_order: usize) -> Result<Self> {
        let u = model.center_indices();
        let mut t = Self::new();
        for n in 1..=max_order {
            for g in multisets(model.goods(), n) {
                let v = model.v_derivative(&g, &u)?;
                t.insert(g, v);
            }
        }
        Ok(t)
    }

    pub fn label(goods: &[usize]) -> String {
        goods_label(goods)
    }
}

/// `∂_γ∂_kV(c) = ∂_{(γ,ξ)}Ȳ_k(c) / ∫β_{(γ,ξ)}dν`, averaged over the `(γ,k)`
/// splits of each sorted multiset. Order-1 entries are `Ȳ(c)`.
pub fn recover_v_derivatives(
    table: &DerivativeTable,
    moments: &[MomentTable],
    tau: f64,
) -> Result<VDerivTable> {
    let k = table.layout().goods();
    let mut out = VDerivTable::new();
    for (g, v) in table.level().iter().enumerate() {
        out.insert(vec![g], *v);
    }
    for mt in moments {
        let n = mt.order();
        for gamma in multisets(k, n + 1) {
            let distinct: BTreeSet<usize> = gamma.iter().copied().collect();
            let mut cands = Vec::new();
            for &t in &distinct {
                let mut rest = gamma.clone();
                rest.remove(
                    rest.iter()
                        .position(|&x| x == t)
                        .expect("t occurs in gamma"),
                );
                let mut best: Option<(MomentIndex, f64)> = None;
                for idx in table.layout().moment_indices_for_goods(&rest) {
                    if let Some(m) = mt.get(&idx) {
                        if best.as_ref().is_none_or(|b| m.abs() > b.1.abs()) {
                            best = Some((idx, m));
                        }
                    }
                }
                if let Some((idx, m)) = best.filter(|b| b.1.abs() > tau) {
                    cands.push(entry(table, &idx, t)? / m);
                }
            }
            if cands.is_empty() {
                return Err(Error::Relevance(format!(
                    "no nonzero moment available to recover {}",
                    goods_label(&gamma)
                )));
            }
            let mean = cands.iter().sum::<f64>() / cands.len() as f64;
            let discrepancy = cands.iter().map(|c| (c - mean).abs()).fold(0.0, f64::max);
            out.entries.insert(
                gamma,
                VDerivEntry {
                    value: mean,
                    discrepancy,
                    candidates: cands.len(),
                },
            );
        }
    }
    Ok(out)
}

/// Moments by direct division by supplied derivatives of `V`; no chaining.
pub fn recover_moments_vknown(
    table: &DerivativeTable,
    order: usize,
    v_derivs: &VDerivTable,
) -> Result<MomentTable> {
    if order == 0 || order > table.max_order() {
        return Err(Error::Precondition(format!(
            "order {order} is not covered by the derivative table"
        )));
    }
    let k = table.layout().goods();
    let mut entries = BTreeMap::new();
    for idx in table.layout().moment_indices(order) {
        let goods = idx.goods();
        let mut best: Option<(usize, f64)> = None;
        for t in 0..k {
            let key = insert_sorted(&goods, t);
            let v = v_derivs.get(&key).ok_or_else(|| {
                Error::Precondition(format!("{} was not supplied", goods_label(&key)))
            })?;
            if best.is_none_or(|b| v.abs() > b.1.abs()) {
                best = Some((t, v));
            }
        }
        let (t, v) = best.expect("at least one good");
        if v == 0.0 || !v.is_finite() {
            return Err(Error::Precondition(format!(
                "every supplied derivative {}+k is zero",
                goods_label(&goods)
            )));
        }
        let value = entry(table, &idx, t)? / v;
        let note = format!("divided by {}", goods_label(&insert_sorted(&goods, t)));
        entries.insert(idx, MomentEntry { value, note });
    }
    Ok(MomentTable {
        order,
        route: Route::VKnown,
        entries,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub enum RouteConfig {
    /// `∫β_{1,1}^M dν` for `M = 1, 2, …`.
    Scale {
        known: Vec<f64>,
    },
    /// `|∫β_{1,1}dν|`.
    Independence {
        abs_mean: f64,
    },
    VKnown {
        v_derivs: VDerivTable,
    },
}

impl RouteConfig {
    pub fn route(&self) -> Route {
        match self {
            RouteConfig::Scale { .. } => Route::Scale,
            RouteConfig::Independence { .. } => Route::Independence,
            RouteConfig::VKnown { .. } => Route::VKnown,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RecoveryConfig {
    pub route: RouteConfig,
    pub relevance: f64,
}

impl RecoveryConfig {
    pub fn new(route: RouteConfig) -> Self {
        Self {
            route,
            relevance: DEFAULT_RELEVANCE,
        }
    }
}

/// Moments for orders `1..` up to the first failure, and that failure.
#[derive(Debug, Clone, PartialEq)]
pub struct RecoveryOutcome {
    pub moments: Vec<MomentTable>,
    pub failure: Option<Error>,
}

/// Runs the configured route order by order. An error at order `M` stops
/// recovery and keeps the lower orders.
pub fn recover_moments(
    table: &DerivativeTable,
    max_order: usize,
    config: &RecoveryConfig,
) -> RecoveryOutcome {
    let tau = config.relevance;
    let mut moments: Vec<MomentTable> = Vec::new();
    let signed_mean = match &config.route {
        RouteConfig::Independence { abs_mean } => {
            match degenerate_guard(table, 1, tau)
                .and_then(|_| signed_first_mean(table, *abs_mean, tau))
            {
                Ok(m) => Some(m),
                Err(e) => {
                    return RecoveryOutcome {
                        moments,
                        failure: Some(e),
                    }
                }
            }
        }
        _ => None,
    };
    for order in 1..=max_order {
        let step = degenerate_guard(table, order, tau).and_then(|_| match &config.route {
            RouteConfig::Scale { known } => {
                let s = known.get(order - 1).copied().ok_or_else(|| {
                    Error::Config(format!("no known scale supplied for order {order}"))
                })?;
                recover_moments_scale(table, order, s, tau)
            }
            RouteConfig::Independence { .. } => independence_step(
                table,
                order,
                signed_mean.expect("computed above"),
                moments.last(),
                tau,
            ),
            RouteConfig::VKnown { v_derivs } => recover_moments_vknown(table, order, v_derivs),
        });
        match step {
            Ok(t) => moments.push(t),
            Err(e) => {
                return RecoveryOutcome {
                    moments,
                    failure: Some(e),
                }
            }
        }
    }
    RecoveryOutcome {
        moments,
        failure: None,
    }
}

/// `∂_{x_j}Ȳ_k(1) / ∂_{x_k}Ȳ_j(1) = E ρ_j / E ρ_k` for the random-exponent model.
pub fn exponent_moment_ratio(
    evaluator: &AsfEvaluator,
    j: usize,
    k: usize,
    scheme: &FdScheme,
    tau: f64,
) -> Result<f64> {
    let model = evaluator.model();
    if model.index_form() != IndexForm::Power {
        return Err(Error::Precondition(
            "the exponent ratio needs the power index form".into(),
        ));
    }
    if model.center().iter().any(|c| *c != 1.0) {
        return Err(Error::Precondition(
            "the exponent ratio is taken at the all-ones covariate point".into(),
        ));
    }
    let n = model.goods();
    if j >= n || k >= n {
        return Err(Error::Config("good index out of range".into()));
    }
    if j == k {
        return Ok(1.0);
    }
    let num = mixed_partial_all(evaluator, &MomentIndex::new(vec![Coord::new(j, 0)]), scheme)?[k];
    let den = mixed_partial_all(evaluator, &MomentIndex::new(vec![Coord::new(k, 0)]), scheme)?[j];
    if den.abs() <= tau {
        return Err(Error::Relevance(format!(
            "cross derivative of good {} in x{}_1 is {den:e}",
            j + 1,
            k + 1
        )));
    }
    Ok(num / den)
}

/// Plug-in moment estimate relative to a reference normalized to 1.
#[derive(Debug, Clone, PartialEq)]
pub struct PluginEstimate {
    pub value: f64,
    pub steps: Vec<f64>,
}

/// Chains externally supplied derivative estimates from `reference` to
/// `idx`, swapping one coordinate per step.
pub fn plugin_estimate(
    estimates: &DerivativeTable,
    idx: &MomentIndex,
    reference: &MomentIndex,
    tau: f64,
) -> Result<PluginEstimate> {
    if idx.order() != reference.order() {
        return Err(Error::Precondition(format!(
            "{idx} and {reference} have different orders"
        )));
    }
    let (remove, add) = multiset_difference(reference.pairs(), idx.pairs());
    let mut cur = reference.pairs().to_vec();
    let mut steps = Vec::with_capacity(remove.len());
    for (r, a) in remove.iter().zip(&add) {
        let prev = MomentIndex::new(cur.clone());
        let pos = cur
            .iter()
            .position(|c| c == r)
            .expect("r occurs in the current index");
        cur[pos] = *a;
        let next = MomentIndex::new(cur.clone());
        steps.push(ratio_of_moments(
            estimates,
            (&next, r.good),
            (&prev, a.good),
            tau,
        )?);
    }
    let value = steps.iter().product();
    Ok(PluginEstimate { value, steps })
}

fn multiset_difference(a: &[Coord], b: &[Coord]) -> (Vec<Coord>, Vec<Coord>) {
    let (mut i, mut j) = (0, 0);
    let (mut only_a, mut only_b) = (Vec::new(), Vec::new());
    while i < a.len() || j < b.len() {
        match (a.get(i), b.get(j)) {
            (Some(x), Some(y)) if x == y => {
                i += 1;
                j += 1;
            }
            (Some(x), Some(y)) if x < y => {
                only_a.push(*x);
                i += 1;
            }
            (Some(_), Some(y)) => {
                only_b.push(*y);
                j += 1;
            }
            (Some(x), None) => {
                only_a.push(*x);
                i += 1;
            }
            (None, Some(y)) => {
                only_b.push(*y);
                j += 1;
            }
            (None, None) => unreachable!(),
        }
    }
    (only_a, only_b)
}
