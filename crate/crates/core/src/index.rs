//! Covariate coordinates and moment multi-indices.
//!
//! Goods and characteristics are zero-based internally. Labels rendered for
//! reports are one-based (`b1_1*b2_1` is the product of the first
//! characteristic coefficients of goods one and two).

use std::fmt;

use crate::error::{Error, Result};

/// One covariate `x_{good,ch}` and its slope `β_{good,ch}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Coord {
    pub good: usize,
    pub ch: usize,
}

impl Coord {
    pub const fn new(good: usize, ch: usize) -> Self {
        Self { good, ch }
    }
}

impl fmt::Display for Coord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "b{}_{}", self.good + 1, self.ch + 1)
    }
}

/// Characteristic counts per good and the flattened covariate layout.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Layout {
    dims: Vec<usize>,
    offsets: Vec<usize>,
}

impl Layout {
    pub fn new(dims: Vec<usize>) -> Result<Self> {
        if dims.is_empty() {
            return Err(Error::Config("at least one good is required".into()));
        }
        if dims.contains(&0) {
            return Err(Error::Config(
                "every good needs at least one characteristic".into(),
            ));
        }
        let mut offsets = Vec::with_capacity(dims.len());
        let mut acc = 0;
        for &d in &dims {
            offsets.push(acc);
            acc += d;
        }
        Ok(Self { dims, offsets })
    }

    pub fn goods(&self) -> usize {
        self.dims.len()
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    /// Total number of covariates, `Σ_k d_k`.
    pub fn total(&self) -> usize {
        self.dims.iter().sum()
    }

    pub fn flat(&self, c: Coord) -> usize {
        self.offsets[c.good] + c.ch
    }

    pub fn coord(&self, flat: usize) -> Coord {
        let good = self.offsets.partition_point(|&o| o <= flat) - 1;
        Coord::new(good, flat - self.offsets[good])
    }

    pub fn check(&self, c: Coord) -> Result<()> {
        if c.good >= self.goods() || c.ch >= self.dims[c.good] {
            return Err(Error::Config(format!(
                "coordinate {c} is outside the model layout {:?}",
                self.dims
            )));
        }
        Ok(())
    }

    pub fn coords(&self) -> impl Iterator<Item = Coord> + '_ {
        (0..self.total()).map(|i| self.coord(i))
    }

    /// All moment indices of the given order, in lexicographic order.
    pub fn moment_indices(&self, order: usize) -> Vec<MomentIndex> {
        multisets(self.total(), order)
            .into_iter()
            .map(|flat| MomentIndex::from_sorted(flat.into_iter().map(|i| self.coord(i)).collect()))
            .collect()
    }

    /// All moment indices whose good multiset equals `goods` (sorted), in
    /// lexicographic order of their characteristic tuples.
    pub fn moment_indices_for_goods(&self, goods: &[usize]) -> Vec<MomentIndex> {
        let mut groups: Vec<(usize, usize)> = Vec::new();
        for &g in goods {
            match groups.last_mut() {
                Some((last, m)) if *last == g => *m += 1,
                _ => groups.push((g, 1)),
            }
        }
        let mut out: Vec<Vec<Coord>> = vec![Vec::new()];
        for (g, m) in groups {
            let chars = multisets(self.dims[g], m);
            let mut next = Vec::with_capacity(out.len() * chars.len());
            for prefix in &out {
                for cs in &chars {
                    let mut v = prefix.clone();
                    v.extend(cs.iter().map(|&c| Coord::new(g, c)));
                    next.push(v);
                }
            }
            out = next;
        }
        out.into_iter().map(MomentIndex::from_sorted).collect()
    }
}

/// Canonical name of the moment `∫ β_{(γ,ξ)} dν`: a sorted multiset of
/// coordinates. Two indices naming the same product compare equal.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct MomentIndex(Vec<Coord>);

impl MomentIndex {
    pub fn new(mut pairs: Vec<Coord>) -> Self {
        pairs.sort();
        Self(pairs)
    }

    fn from_sorted(pairs: Vec<Coord>) -> Self {
        debug_assert!(pairs.windows(2).all(|w| w[0] <= w[1]));
        Self(pairs)
    }

    /// `β_{1,1}^order`.
    pub fn power_of_first(order: usize) -> Self {
        Self(vec![Coord::new(0, 0); order])
    }

    pub fn order(&self) -> usize {
        self.0.len()
    }

    pub fn pairs(&self) -> &[Coord] {
        &self.0
    }

    /// Sorted good multiset `γ`.
    pub fn goods(&self) -> Vec<usize> {
        self.0.iter().map(|c| c.good).collect()
    }

    pub fn with(&self, c: Coord) -> Self {
        let mut v = self.0.clone();
        v.push(c);
        Self::new(v)
    }

    /// Distinct coordinates with their multiplicities.
    pub fn grouped(&self) -> Vec<(Coord, usize)> {
        let mut out: Vec<(Coord, usize)> = Vec::new();
        for &c in &self.0 {
            match out.last_mut() {
                Some((last, m)) if *last == c => *m += 1,
                _ => out.push((c, 1)),
            }
        }
        out
    }

    pub fn label(&self) -> String {
        if self.0.is_empty() {
            return "1".to_string();
        }
        self.0
            .iter()
            .map(ToString::to_string)
            .collect::<Vec<_>>()
            .join("*")
    }

    /// Parses a label such as `b1_1*b2_1` (one-based).
    pub fn parse(label: &str) -> Result<Self> {
        let bad = || Error::Config(format!("malformed moment label `{label}`"));
        let mut pairs = Vec::new();
        for part in label.split('*') {
            let rest = part.trim().strip_prefix('b').ok_or_else(bad)?;
            let (g, c) = rest.split_once('_').ok_or_else(bad)?;
            let g: usize = g.parse().map_err(|_| bad())?;
            let c: usize = c.parse().map_err(|_| bad())?;
            if g == 0 || c == 0 {
                return Err(bad());
            }
            pairs.push(Coord::new(g - 1, c - 1));
        }
        Ok(Self::new(pairs))
    }
}

impl fmt::Display for MomentIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

/// One-based rendering of a sorted good multiset, e.g. `V_1_1_2`.
pub fn goods_label(goods: &[usize]) -> String {
    let mut s = String::from("V");
    for g in goods {
        s.push('_');
        s.push_str(&(g + 1).to_string());
    }
    s
}

/// Sorted multisets of `size` elements drawn from `0..n`, in lexicographic order.
pub fn multisets(n: usize, size: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    if size == 0 {
        out.push(Vec::new());
        return out;
    }
    if n == 0 {
        return out;
    }
    let mut cur = vec![0usize; size];
    loop {
        out.push(cur.clone());
        // rightmost position that can still be incremented
        let Some(pos) = (0..size).rev().find(|&i| cur[i] + 1 < n) else {
            break;
        };
        let v = cur[pos] + 1;
        for slot in &mut cur[pos..] {
            *slot = v;
        }
    }
    out
}

/// Removes one occurrence of `remove` from a sorted multiset and inserts `add`.
pub fn replace_one(goods: &[usize], remove: usize, add: usize) -> Option<Vec<usize>> {
    let pos = goods.iter().position(|&g| g == remove)?;
    let mut v = goods.to_vec();
    v.remove(pos);
    let at = v.partition_point(|&g| g <= add);
    v.insert(at, add);
    Some(v)
}

/// Sorted insertion of one element into a sorted multiset.
pub fn insert_sorted(goods: &[usize], add: usize) -> Vec<usize> {
    let mut v = goods.to_vec();
    let at = v.partition_point(|&g| g <= add);
    v.insert(at, add);
    v
}

/// If `a` and `b` (sorted, equal length) differ by exactly one element,
/// returns `(only_in_a, only_in_b)`.
pub fn one_step_difference(a: &[usize], b: &[usize]) -> Option<(usize, usize)> {
    if a.len() != b.len() || a == b {
        return None;
    }
    let (mut i, mut j) = (0, 0);
    let mut only_a = Vec::new();
    let mut only_b = Vec::new();
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
    (only_a.len() == 1 && only_b.len() == 1).then(|| (only_a[0], only_b[0]))
}

/// `∏ m_i!` over the multiplicities of a sorted multiset.
pub fn multiplicity_factorial(goods: &[usize]) -> f64 {
    let mut out = 1.0;
    let mut run = 0usize;
    for (i, g) in goods.iter().enumerate() {
        if i > 0 && goods[i - 1] == *g {
            run += 1;
        } else {
            run = 1;
        }
        out *= run as f64;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn multisets_count_and_order() {
        let m = multisets(2, 2);
        assert_eq!(m, vec![vec![0, 0], vec![0, 1], vec![1, 1]]);
        // C(n+k-1, k)
        assert_eq!(multisets(4, 3).len(), 20);
        assert_eq!(multisets(3, 0), vec![Vec::<usize>::new()]);
    }

    #[test]
    fn layout_round_trip() {
        let l = Layout::new(vec![2, 1, 3]).unwrap();
        assert_eq!(l.total(), 6);
        for i in 0..6 {
            assert_eq!(l.flat(l.coord(i)), i);
        }
        assert_eq!(l.coord(3), Coord::new(2, 0));
    }

    #[test]
    fn indices_for_goods_cover_characteristics() {
        let l = Layout::new(vec![2, 1]).unwrap();
        let idx = l.moment_indices_for_goods(&[0, 0, 1]);
        let labels: Vec<_> = idx.iter().map(MomentIndex::label).collect();
        assert_eq!(
            labels,
            vec!["b1_1*b1_1*b2_1", "b1_1*b1_2*b2_1", "b1_2*b1_2*b2_1"]
        );
    }

    #[test]
    fn label_parse_round_trip() {
        let idx = MomentIndex::new(vec![Coord::new(1, 0), Coord::new(0, 1)]);
        assert_eq!(idx.label(), "b1_2*b2_1");
        assert_eq!(MomentIndex::parse(&idx.label()).unwrap(), idx);
        assert!(MomentIndex::parse("b0_1").is_err());
        assert!(MomentIndex::parse("x1_1").is_err());
    }

    #[test]
    fn one_step_and_replace() {
        assert_eq!(one_step_difference(&[0, 0, 1], &[0, 1, 1]), Some((0, 1)));
        assert_eq!(one_step_difference(&[0, 0], &[1, 1]), None);
        assert_eq!(replace_one(&[0, 0, 1], 0, 2), Some(vec![0, 1, 2]));
        assert_eq!(multiplicity_factorial(&[0, 0, 0, 1, 1]), 12.0);
    }
}
