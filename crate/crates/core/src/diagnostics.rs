//! Testable restrictions and consistency checks on derivative tables.

use std::fmt;

use crate::error::{Error, Result};
use crate::index::{one_step_difference, Coord, MomentIndex};
use crate::numdiff::DerivativeTable;
use crate::recovery::{chain_ratios, ratio_of_moments, RelevanceEntry, VDerivTable};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sign {
    Positive,
    Negative,
    Indeterminate,
}

impl Sign {
    pub fn of(v: f64, tau: f64) -> Self {
        if v > tau {
            Sign::Positive
        } else if v < -tau {
            Sign::Negative
        } else {
            Sign::Indeterminate
        }
    }

    pub fn symbol(self) -> &'static str {
        match self {
            Sign::Positive => "+",
            Sign::Negative => "-",
            Sign::Indeterminate => "0",
        }
    }
}

impl fmt::Display for Sign {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.symbol())
    }
}

/// `[∂²_{x11,x11}Ȳ_2 / ∂²_{x21,x11}Ȳ_1]·[∂²_{x21,x21}Ȳ_1 / ∂²_{x11,x21}Ȳ_2]`,
/// which equals `E b1² E b2² / (E b1 b2)²` and must be at least 1.
pub fn cauchy_schwarz_check(table: &DerivativeTable, tau: f64) -> Result<f64> {
    if table.layout().goods() < 2 {
        return Err(Error::Precondition(
            "the restriction needs two goods".into(),
        ));
    }
    let (b1, b2) = (Coord::new(0, 0), Coord::new(1, 0));
    let b11 = MomentIndex::new(vec![b1, b1]);
    let b12 = MomentIndex::new(vec![b1, b2]);
    let b22 = MomentIndex::new(vec![b2, b2]);
    let left = ratio_of_moments(table, (&b11, 1), (&b12, 0), tau)?;
    let right = ratio_of_moments(table, (&b22, 0), (&b12, 1), tau)?;
    Ok(left * right)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SymmetryReport {
    /// Max of `|observed ratio / chained ratio − 1|` over all restrictions.
    pub residual: f64,
    pub relations: usize,
    /// False when the table carries no restriction beyond the chained ratios.
    pub applicable: bool,
}

/// Compares every ratio implied by the symmetry of `V`'s mixed partials with
/// the chained moment ratios of the same order (orders ≥ 2).
///
/// Relations are all index pairs `(I, J)` of one order that either share a
/// good tuple (one relation per target good) or are one-step neighbours.
pub fn symmetry_check(table: &DerivativeTable, tau: f64) -> Result<SymmetryReport> {
    let k = table.layout().goods();
    let mut residual: f64 = 0.0;
    let mut relations = 0usize;
    let mut dof = 0usize;
    for order in 2..=table.max_order() {
        let chain = chain_ratios(table, order, tau)?;
        let indices: Vec<(&MomentIndex, f64)> = chain.iter().collect();
        dof += indices.len().saturating_sub(1);
        for (i, (a, ra)) in indices.iter().enumerate() {
            for (b, rb) in &indices[i + 1..] {
                let predicted = ra / rb;
                let (ga, gb) = (a.goods(), b.goods());
                let pairs: Vec<(usize, usize)> = if ga == gb {
                    (0..k).map(|t| (t, t)).collect()
                } else if let Some((only_a, only_b)) = one_step_difference(&ga, &gb) {
                    vec![(only_b, only_a)]
                } else {
                    continue;
                };
                for (ka, kb) in pairs {
                    let observed = match ratio_of_moments(table, (a, ka), (b, kb), tau) {
                        Ok(v) => v,
                        Err(Error::Relevance(_)) => continue,
                        Err(e) => return Err(e),
                    };
                    if predicted == 0.0 || !predicted.is_finite() {
                        continue;
                    }
                    relations += 1;
                    residual = residual.max((observed / predicted - 1.0).abs());
                }
            }
        }
    }
    Ok(SymmetryReport {
        residual,
        relations,
        applicable: relations > dof,
    })
}

/// Sign of `∂Ȳ_1/∂x_{1,1}`, which is the sign of `E b1_1`.
pub fn sign_first_moment(table: &DerivativeTable, tau: f64) -> Sign {
    table
        .get(&MomentIndex::power_of_first(1), 0)
        .map_or(Sign::Indeterminate, |v| Sign::of(v, tau))
}

/// `sign(∂_{j,k}V)`; negative off the diagonal means local substitutes.
pub fn complementarity_signs(v: &VDerivTable, k: usize, tau: f64) -> Vec<Vec<Sign>> {
    (0..k)
        .map(|i| {
            (0..k)
                .map(|j| {
                    v.get(&[i, j])
                        .map_or(Sign::Indeterminate, |x| Sign::of(x, tau))
                })
                .collect()
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiagnosticsReport {
    pub cauchy_schwarz: Result<f64>,
    pub symmetry: Result<SymmetryReport>,
    pub relevance: Vec<RelevanceEntry>,
    pub sign_beta11: Sign,
    pub complementarity: Option<Vec<Vec<Sign>>>,
}

/// Runs every diagnostic that the table supports.
pub fn diagnose(table: &DerivativeTable, v: Option<&VDerivTable>, tau: f64) -> DiagnosticsReport {
    let cauchy_schwarz = if table.max_order() >= 2 {
        cauchy_schwarz_check(table, tau)
    } else {
        Err(Error::Precondition(
            "second-order entries are required".into(),
        ))
    };
    let mut relevance = Vec::new();
    for order in 1..=table.max_order() {
        match chain_ratios(table, order, tau) {
            Ok(c) => relevance.extend(c.relevance().cloned()),
            Err(_) => break,
        }
    }
    DiagnosticsReport {
        cauchy_schwarz,
        symmetry: symmetry_check(table, tau),
        relevance,
        sign_beta11: sign_first_moment(table, tau),
        complementarity: v.map(|v| complementarity_signs(v, table.layout().goods(), tau)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::index::{insert_sorted, Layout};
    use std::collections::BTreeMap;

    fn table(dims: Vec<usize>, pts: &[(f64, Vec<f64>)], order: usize) -> DerivativeTable {
        let layout = Layout::new(dims).unwrap();
        let k = layout.goods();
        let v = |g: &[usize]| 0.2 + 0.07 * g.iter().sum::<usize>() as f64 + 0.01 * g.len() as f64;
        let mut entries = BTreeMap::new();
        for n in 1..=order {
            for idx in layout.moment_indices(n) {
                let m: f64 = pts
                    .iter()
                    .map(|(w, b)| {
                        w * idx
                            .pairs()
                            .iter()
                            .map(|c| b[layout.flat(*c)])
                            .product::<f64>()
                    })
                    .sum();
                entries.insert(
                    idx.clone(),
                    (0..k)
                        .map(|t| v(&insert_sorted(&idx.goods(), t)) * m)
                        .collect(),
                );
            }
        }
        DerivativeTable::from_entries(
            layout.clone(),
            vec![0.0; layout.total()],
            vec![0.5; k],
            entries,
        )
        .unwrap()
    }

    #[test]
    fn cauchy_schwarz_values() {
        let mix = table(
            vec![1, 1],
            &[(0.5, vec![1.0, 1.0]), (0.5, vec![1.0, 3.0])],
            2,
        );
        assert!((cauchy_schwarz_check(&mix, 1e-7).unwrap() - 1.25).abs() < 1e-12);
        let pm = table(vec![1, 1], &[(1.0, vec![0.7, 1.3])], 2);
        assert!((cauchy_schwarz_check(&pm, 1e-7).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn symmetry_vacuous_and_detects_corruption() {
        let pts = [
            (0.4, vec![1.0, 0.5, 2.0, 1.0]),
            (0.6, vec![0.5, 1.5, 1.0, 3.0]),
        ];
        let t1 = table(vec![2, 2], &pts, 1);
        let r1 = symmetry_check(&t1, 1e-7).unwrap();
        assert!(!r1.applicable);
        assert_eq!(r1.residual, 0.0);
        let mut t = table(vec![2, 2], &pts, 2);
        let clean = symmetry_check(&t, 1e-7).unwrap();
        assert!(clean.applicable);
        assert!(clean.residual < 1e-12);
        let idx = MomentIndex::parse("b1_2*b2_1").unwrap();
        let v = t.get(&idx, 0).unwrap();
        t.set(&idx, 0, -v).unwrap();
        assert!(symmetry_check(&t, 1e-7).unwrap().residual > 0.5);
    }

    #[test]
    fn two_goods_single_characteristic_is_not_applicable() {
        let t = table(
            vec![1, 1],
            &[(0.5, vec![1.0, 1.0]), (0.5, vec![1.0, 3.0])],
            3,
        );
        assert!(!symmetry_check(&t, 1e-7).unwrap().applicable);
    }

    #[test]
    fn sign_of_first_moment() {
        let pos = table(vec![1, 1], &[(1.0, vec![1.0, 1.0])], 1);
        assert_eq!(sign_first_moment(&pos, 1e-7), Sign::Positive);
        let neg = table(vec![1, 1], &[(1.0, vec![-1.0, 1.0])], 1);
        assert_eq!(sign_first_moment(&neg, 1e-7), Sign::Negative);
        let zero = table(vec![1, 1], &[(1.0, vec![0.0, 1.0])], 1);
        assert_eq!(sign_first_moment(&zero, 1e-7), Sign::Indeterminate);
    }
}
