//! Finite-difference mixed partials of the ASF at the centering point.
//!
//! A partial `∂_{(γ,ξ)}` is a product of one-dimensional difference operators,
//! one per distinct covariate with the covariate's multiplicity as its order.
//! Nodes are evaluated through the evaluator's cache, so stencils that share
//! points (across goods, entries and Richardson levels) cost one evaluation.

use std::collections::BTreeMap;

use crate::asf::{asf, AsfEvaluator};
use crate::error::{Error, Result};
use crate::index::{Coord, Layout, MomentIndex};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FdKind {
    Central,
    Forward,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FdScheme {
    pub kind: FdKind,
    /// Step in covariate units; `None` selects the per-order default.
    pub base_step: Option<f64>,
    pub richardson_levels: usize,
}

impl FdScheme {
    pub fn central() -> Self {
        Self {
            kind: FdKind::Central,
            base_step: None,
            richardson_levels: 1,
        }
    }

    pub fn forward() -> Self {
        Self {
            kind: FdKind::Forward,
            base_step: None,
            richardson_levels: 2,
        }
    }

    pub fn with_step(mut self, h: f64) -> Self {
        self.base_step = Some(h);
        self
    }

    pub fn with_levels(mut self, levels: usize) -> Self {
        self.richardson_levels = levels;
        self
    }

    /// Step used for partials of the given total order.
    /// Defaults balance truncation against rounding, which grows as `h^{-order}`.
    pub fn step_for(&self, order: usize) -> f64 {
        self.base_step.unwrap_or(match order {
            0..=2 => 6e-3,
            3 => 1e-2,
            _ => 2e-2,
        })
    }

    pub fn validate(&self, nonnegative_domain: bool) -> Result<()> {
        if let Some(h) = self.base_step {
            if !(h > 0.0 && h.is_finite()) {
                return Err(Error::Config(format!(
                    "finite-difference step must be > 0, got {h}"
                )));
            }
        }
        if nonnegative_domain && self.kind != FdKind::Forward {
            return Err(Error::Config(
                "covariates are restricted to the nonnegative orthant: use the forward scheme"
                    .into(),
            ));
        }
        Ok(())
    }
}

fn convolve(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; a.len() + b.len() - 1];
    for (i, x) in a.iter().enumerate() {
        for (j, y) in b.iter().enumerate() {
            out[i + j] += x * y;
        }
    }
    out
}

/// Unit-step weights of the `order`-th derivative with their integer offsets.
fn stencil_1d(kind: FdKind, order: usize) -> Vec<(i64, f64)> {
    let (weights, first) = match kind {
        FdKind::Central => {
            let mut w = if order % 2 == 1 {
                vec![-0.5, 0.0, 0.5]
            } else {
                vec![1.0]
            };
            for _ in 0..order / 2 {
                w = convolve(&w, &[1.0, -2.0, 1.0]);
            }
            let half = (w.len() / 2) as i64;
            (w, -half)
        }
        FdKind::Forward => {
            let mut w = vec![1.0];
            for _ in 0..order {
                w = convolve(&w, &[-1.0, 1.0]);
            }
            (w, 0)
        }
    };
    weights
        .into_iter()
        .enumerate()
        .map(|(i, w)| (first + i as i64, w))
        .filter(|(_, w)| *w != 0.0)
        .collect()
}

/// Tensor-product stencil: node offsets per distinct coordinate and weight.
fn stencil(kind: FdKind, idx: &MomentIndex) -> Vec<(Vec<(Coord, i64)>, f64)> {
    let mut out: Vec<(Vec<(Coord, i64)>, f64)> = vec![(Vec::new(), 1.0)];
    for (c, m) in idx.grouped() {
        let one = stencil_1d(kind, m);
        let mut next = Vec::with_capacity(out.len() * one.len());
        for (offs, w) in &out {
            for (o, w1) in &one {
                let mut v = offs.clone();
                v.push((c, *o));
                next.push((v, w * w1));
            }
        }
        out = next;
    }
    out
}

/// Plain difference quotient of all goods at step `h`.
fn difference(
    evaluator: &AsfEvaluator,
    idx: &MomentIndex,
    kind: FdKind,
    h: f64,
) -> Result<Vec<f64>> {
    let model = evaluator.model();
    let layout = model.layout();
    let center = model.center();
    let mut nodes = stencil(kind, idx);
    // fixed accumulation order, independent of how the stencil was built
    nodes.sort_by(|a, b| a.0.cmp(&b.0));
    let mut acc = vec![0.0; model.goods()];
    for (offs, w) in &nodes {
        let mut x = center.to_vec();
        for (c, o) in offs {
            let i = layout.flat(*c);
            x[i] = center[i] + (*o as f64) * h;
        }
        let y = asf(evaluator, &x)?;
        for (a, v) in acc.iter_mut().zip(y) {
            *a += w * v;
        }
    }
    let scale = h.powi(idx.order() as i32);
    acc.iter_mut().for_each(|a| *a /= scale);
    Ok(acc)
}

/// `∂_{(γ,ξ)} Ȳ_k(center)` for every good `k`.
pub fn mixed_partial_all(
    evaluator: &AsfEvaluator,
    idx: &MomentIndex,
    scheme: &FdScheme,
) -> Result<Vec<f64>> {
    if idx.order() == 0 {
        return Err(Error::Config(
            "a mixed partial needs at least one variable".into(),
        ));
    }
    for c in idx.pairs() {
        evaluator.model().layout().check(*c)?;
    }
    scheme.validate(evaluator.model().nonnegative_domain())?;
    let h = scheme.step_for(idx.order());
    let levels = scheme.richardson_levels;
    let mut table: Vec<Vec<f64>> = (0..=levels)
        .map(|j| difference(evaluator, idx, scheme.kind, h / f64::powi(2.0, j as i32)))
        .collect::<Result<_>>()?;
    let base = match scheme.kind {
        FdKind::Central => 4.0,
        FdKind::Forward => 2.0,
    };
    for l in 1..=levels {
        let f = f64::powi(base, l as i32);
        table = table
            .windows(2)
            .map(|w| {
                w[0].iter()
                    .zip(&w[1])
                    .map(|(a, b)| (f * b - a) / (f - 1.0))
                    .collect()
            })
            .collect();
    }
    Ok(table.pop().expect("at least one level"))
}

/// `∂_{(γ,ξ)} Ȳ_k(center)` for one good `k` (zero-based).
pub fn mixed_partial(
    evaluator: &AsfEvaluator,
    k: usize,
    idx: &MomentIndex,
    scheme: &FdScheme,
) -> Result<f64> {
    if k >= evaluator.model().goods() {
        return Err(Error::Config(format!("good {} is out of range", k + 1)));
    }
    Ok(mixed_partial_all(evaluator, idx, scheme)?[k])
}

/// All partials `∂_{(γ,ξ)} Ȳ_k(center)` with `1 ≤ |γ| ≤ M`, plus the level `Ȳ(center)`.
#[derive(Debug, Clone, PartialEq)]
pub struct DerivativeTable {
    layout: Layout,
    max_order: usize,
    center: Vec<f64>,
    scheme: Option<FdScheme>,
    level: Vec<f64>,
    entries: BTreeMap<MomentIndex, Vec<f64>>,
}

impl DerivativeTable {
    /// Table from externally supplied values (plug-in estimates, tests).
    pub fn from_entries(
        layout: Layout,
        center: Vec<f64>,
        level: Vec<f64>,
        entries: BTreeMap<MomentIndex, Vec<f64>>,
    ) -> Result<Self> {
        crate::error::check_len("center", layout.total(), center.len())?;
        crate::error::check_len("level", layout.goods(), level.len())?;
        let mut max_order = 0;
        for (idx, v) in &entries {
            for c in idx.pairs() {
                layout.check(*c)?;
            }
            crate::error::check_len("derivative entry", layout.goods(), v.len())?;
            if v.iter().any(|x| !x.is_finite()) {
                return Err(Error::Config(format!("entry {idx} is not finite")));
            }
            max_order = max_order.max(idx.order());
        }
        Ok(Self {
            layout,
            max_order,
            center,
            scheme: None,
            level,
            entries,
        })
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    pub fn max_order(&self) -> usize {
        self.max_order
    }

    pub fn center(&self) -> &[f64] {
        &self.center
    }

    pub fn scheme(&self) -> Option<&FdScheme> {
        self.scheme.as_ref()
    }

    /// `Ȳ(center)`.
    pub fn level(&self) -> &[f64] {
        &self.level
    }

    pub fn get(&self, idx: &MomentIndex, k: usize) -> Option<f64> {
        self.entries.get(idx).and_then(|v| v.get(k).copied())
    }

    pub fn row(&self, idx: &MomentIndex) -> Option<&[f64]> {
        self.entries.get(idx).map(Vec::as_slice)
    }

    pub fn set(&mut self, idx: &MomentIndex, k: usize, value: f64) -> Result<()> {
        let row = self
            .entries
            .get_mut(idx)
            .ok_or_else(|| Error::Config(format!("entry {idx} is not in the table")))?;
        let slot = row
            .get_mut(k)
            .ok_or_else(|| Error::Config(format!("good {} is out of range", k + 1)))?;
        *slot = value;
        Ok(())
    }

    pub fn entries(&self) -> impl Iterator<Item = (&MomentIndex, &[f64])> {
        self.entries.iter().map(|(k, v)| (k, v.as_slice()))
    }

    pub fn len(&self) -> usize {
        self.entries.len() * self.layout.goods()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Every partial of orders `1..=max_order` at the model's center.
pub fn derivative_table(
    evaluator: &AsfEvaluator,
    max_order: usize,
    scheme: &FdScheme,
) -> Result<DerivativeTable> {
    if max_order == 0 {
        return Err(Error::Config("derivative order must be at least 1".into()));
    }
    scheme.validate(evaluator.model().nonnegative_domain())?;
    let model = evaluator.model();
    let layout = model.layout().clone();
    let level = asf(evaluator, model.center())?;
    let mut entries = BTreeMap::new();
    for order in 1..=max_order {
        for idx in layout.moment_indices(order) {
            let v = mixed_partial_all(evaluator, &idx, scheme)?;
            entries.insert(idx, v);
        }
    }
    Ok(DerivativeTable {
        layout,
        max_order,
        center: model.center().to_vec(),
        scheme: Some(*scheme),
        level,
        entries,
    })
}
