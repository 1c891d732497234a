//! Average structural functions: `Ȳ(x, β)` with `ε` integrated out, and
//! `Ȳ(x)` with `β` integrated out as well.

use std::collections::HashMap;
use std::sync::Mutex;

use rand::distributions::{Distribution, WeightedIndex};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{check_len, Error, Result};
use crate::model::{
    expected_choice, scenarios_of, solve_choice_at, BetaDistribution, ModelSpec, Variant,
};

/// How `ε` is integrated out.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Strategy {
    /// Logit formula.
    ClosedForm,
    /// Exact enumeration of scenarios and budget points.
    Enumeration,
    /// Fixed pseudo-random `ε` draws. Never used on the acceptance path.
    MonteCarlo { draws: usize, seed: u64 },
}

/// One pre-drawn disturbance: a scenario (finite models) and Gumbel shocks
/// per choice point.
#[derive(Debug, Clone)]
struct Draw {
    scenario: usize,
    shocks: Vec<f64>,
}

#[derive(Debug)]
pub struct AsfEvaluator {
    model: ModelSpec,
    beta: BetaDistribution,
    support: Vec<(f64, Vec<f64>)>,
    strategy: Strategy,
    draws: Vec<Draw>,
    cache: Mutex<HashMap<Vec<u64>, Vec<f64>>>,
}

impl AsfEvaluator {
    /// Evaluator with the exact strategy matching the model family.
    pub fn new(model: ModelSpec, beta: BetaDistribution) -> Result<Self> {
        let strategy = match model.variant() {
            Variant::AnalyticLogit { .. } => Strategy::ClosedForm,
            _ => Strategy::Enumeration,
        };
        Self::with_strategy(model, beta, strategy)
    }

    pub fn with_strategy(
        model: ModelSpec,
        beta: BetaDistribution,
        strategy: Strategy,
    ) -> Result<Self> {
        beta.check_layout(model.layout())?;
        let is_logit = matches!(model.variant(), Variant::AnalyticLogit { .. });
        let draws = match strategy {
            Strategy::ClosedForm if !is_logit => {
                return Err(Error::Config(
                    "closed-form evaluation is only available for the logit family".into(),
                ))
            }
            Strategy::Enumeration if is_logit => {
                return Err(Error::Config(
                    "enumeration needs a finite-budget model".into(),
                ))
            }
            Strategy::MonteCarlo { draws, seed } => {
                if draws == 0 {
                    return Err(Error::Config(
                        "Monte-Carlo evaluation needs draws > 0".into(),
                    ));
                }
                draw_disturbances(&model, draws, seed)
            }
            _ => Vec::new(),
        };
        let support = beta.support_points();
        Ok(Self {
            model,
            beta,
            support,
            strategy,
            draws,
            cache: Mutex::new(HashMap::new()),
        })
    }

    pub fn model(&self) -> &ModelSpec {
        &self.model
    }

    pub fn beta(&self) -> &BetaDistribution {
        &self.beta
    }

    pub fn strategy(&self) -> Strategy {
        self.strategy
    }

    /// `Ȳ(x, β)` under this evaluator's strategy.
    pub fn ybar_given_beta(&self, x: &[f64], beta: &[f64]) -> Result<Vec<f64>> {
        match self.strategy {
            Strategy::MonteCarlo { .. } => {
                let u = self.model.indices(x, beta)?;
                let y = simulated_choice(&self.model, &u, &self.draws)?;
                finite_or_error(y, x)
            }
            _ => ybar_given_beta(&self.model, x, beta),
        }
    }

    /// Number of distinct covariate points evaluated so far.
    pub fn cached_points(&self) -> usize {
        self.cache.lock().expect("cache lock poisoned").len()
    }

    fn evaluate(&self, x: &[f64]) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.model.goods()];
        for (w, b) in &self.support {
            let y = self.ybar_given_beta(x, b)?;
            for (o, v) in out.iter_mut().zip(y) {
                *o += w * v;
            }
        }
        finite_or_error(out, x)
    }
}

/// `Ȳ(x) = ∫ Ȳ(x, β) dν`. Results are memoized per covariate point.
pub fn asf(evaluator: &AsfEvaluator, x: &[f64]) -> Result<Vec<f64>> {
    check_len("covariate point", evaluator.model.layout().total(), x.len())?;
    let key: Vec<u64> = x.iter().map(|v| v.to_bits()).collect();
    if let Some(hit) = evaluator
        .cache
        .lock()
        .expect("cache lock poisoned")
        .get(&key)
    {
        return Ok(hit.clone());
    }
    let value = evaluator.evaluate(x)?;
    evaluator
        .cache
        .lock()
        .expect("cache lock poisoned")
        .entry(key)
        .or_insert_with(|| value.clone());
    Ok(value)
}

/// Exact `Ȳ(x, β)`: logit formula or scenario-weighted enumeration.
pub fn ybar_given_beta(model: &ModelSpec, x: &[f64], beta: &[f64]) -> Result<Vec<f64>> {
    let u = model.indices(x, beta)?;
    if u.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite { node: x.to_vec() });
    }
    ybar_at_index(model, &u).and_then(|y| finite_or_error(y, x))
}

/// Exact `∇V(u)`, the `ε`-averaged choice at utility index `u`.
pub fn ybar_at_index(model: &ModelSpec, u: &[f64]) -> Result<Vec<f64>> {
    check_len("index vector", model.goods(), u.len())?;
    let mut out = vec![0.0; model.goods()];
    for (s, w) in scenarios_of(model) {
        let y = expected_choice(model, u, s)?;
        for (o, v) in out.iter_mut().zip(y) {
            *o += w * v;
        }
    }
    Ok(out)
}

fn finite_or_error(y: Vec<f64>, x: &[f64]) -> Result<Vec<f64>> {
    if y.iter().all(|v| v.is_finite()) {
        Ok(y)
    } else {
        Err(Error::NonFinite { node: x.to_vec() })
    }
}

fn gumbel<R: Rng>(rng: &mut R, scale: f64) -> f64 {
    let uniform: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
    -scale * (-uniform.ln()).ln()
}

fn draw_disturbances(model: &ModelSpec, n: usize, seed: u64) -> Vec<Draw> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    match (model.variant(), model.finite_table()) {
        (Variant::AnalyticLogit { outside_good, .. }, _) => {
            let points = model.goods() + usize::from(*outside_good);
            (0..n)
                .map(|_| Draw {
                    scenario: 0,
                    shocks: (0..points).map(|_| gumbel(&mut rng, 1.0)).collect(),
                })
                .collect()
        }
        (_, Some(t)) => {
            let pick = WeightedIndex::new(&t.weights).expect("validated scenario weights");
            (0..n)
                .map(|_| Draw {
                    scenario: pick.sample(&mut rng),
                    shocks: (0..t.budget.len())
                        .map(|_| {
                            if t.smoothing > 0.0 {
                                gumbel(&mut rng, t.smoothing)
                            } else {
                                0.0
                            }
                        })
                        .collect(),
                })
                .collect()
        }
        _ => unreachable!("finite variants always carry a table"),
    }
}

fn simulated_choice(model: &ModelSpec, u: &[f64], draws: &[Draw]) -> Result<Vec<f64>> {
    let k = model.goods();
    let mut out = vec![0.0; k];
    for d in draws {
        let y = match (model.variant(), model.finite_table()) {
            (Variant::AnalyticLogit { alphas, .. }, _) => {
                let mut best = (f64::NEG_INFINITY, None);
                for (i, s) in d.shocks.iter().enumerate() {
                    let v = if i < k { alphas[i] + u[i] + s } else { *s };
                    if v > best.0 {
                        best = (v, Some(i));
                    }
                }
                let mut y = vec![0.0; k];
                if let Some(i) = best.1.filter(|&i| i < k) {
                    y[i] = 1.0;
                }
                y
            }
            (_, Some(t)) if t.smoothing > 0.0 => {
                let mut best = (f64::NEG_INFINITY, None);
                for (i, (y, dist)) in t.budget.iter().zip(&t.disturbance[d.scenario]).enumerate() {
                    if let Some(dv) = dist.value() {
                        let v: f64 =
                            y.iter().zip(u).map(|(q, ui)| q * ui).sum::<f64>() + dv + d.shocks[i];
                        if v > best.0 {
                            best = (v, Some(i));
                        }
                    }
                }
                let i = best.1.ok_or(Error::Infeasible {
                    scenario: d.scenario,
                })?;
                t.budget[i].clone()
            }
            _ => solve_choice_at(model, u, d.scenario)?,
        };
        for (o, v) in out.iter_mut().zip(y) {
            *o += v;
        }
    }
    let n = draws.len() as f64;
    out.iter_mut().for_each(|o| *o /= n);
    Ok(out)
}
