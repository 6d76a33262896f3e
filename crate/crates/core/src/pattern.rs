//! Split-questionnaire patterns and probability distributions over them.

use std::sync::Arc;


use crate::error::{Result, SqdError};

/// Default cap on the number of enumerated patterns.
pub const DEFAULT_PATTERN_CAP: usize = 100_000;

/// Tolerance on the total probability mass of a design.
pub const MASS_TOLERANCE: f64 = 1e-12;

/// A nonempty, strictly increasing set of 0-based question indices.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Pattern(Vec<usize>);

impl Pattern {
    /// Builds a pattern from arbitrary indices; they are sorted and must be distinct and `< k`.
    pub fn new(mut items: Vec<usize>, k: usize) -> Result<Self> {
        if items.is_empty() {
            return Err(SqdError::InvalidArgument("pattern must be nonempty".into()));
        }
        items.sort_unstable();
        if items.windows(2).any(|w| w[0] == w[1]) {
            return Err(SqdError::InvalidArgument(format!(
                "pattern {items:?} has repeated items"
            )));
        }
        if let Some(&last) = items.last() {
            if last >= k {
                return Err(SqdError::InvalidArgument(format!(
                    "pattern {items:?} references item {last} but K = {k}"
                )));
            }
        }
        Ok(Self(items))
    }

    pub fn items(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn contains(&self, item: usize) -> bool {
        self.0.binary_search(&item).is_ok()
    }
}

/// All patterns of one fixed size `m` over `k` questions.
#[derive(Debug, Clone, PartialEq)]
pub struct PatternSet {
    k: usize,
    m: usize,
    patterns: Vec<Pattern>,
}

impl PatternSet {
    /// A custom (possibly partial) pattern list. Every pattern must have exactly `m` items.
    pub fn from_patterns(k: usize, m: usize, patterns: Vec<Pattern>) -> Result<Self> {
        if m == 0 || m > k {
            return Err(SqdError::InvalidArgument(format!(
                "need 1 <= m <= K, got m = {m}, K = {k}"
            )));
        }
        if patterns.is_empty() {
            return Err(SqdError::InvalidArgument("pattern set is empty".into()));
        }
        for p in &patterns {
            if p.len() != m {
                return Err(SqdError::InvalidArgument(format!(
                    "pattern {:?} has {} items, expected {m}",
                    p.items(),
                    p.len()
                )));
            }
            if p.items().iter().any(|&i| i >= k) {
                return Err(SqdError::InvalidArgument(format!(
                    "pattern {:?} out of range for K = {k}",
                    p.items()
                )));
            }
        }
        let mut sorted = patterns.clone();
        sorted.sort();
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return Err(SqdError::InvalidArgument("duplicate patterns".into()));
        }
        Ok(Self { k, m, patterns })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn patterns(&self) -> &[Pattern] {
        &self.patterns
    }

    pub fn len(&self) -> usize {
        self.patterns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.patterns.is_empty()
    }

    /// True when the set holds all `C(K, m)` patterns.
    pub fn is_complete(&self) -> bool {
        binomial(self.k, self.m) == self.patterns.len() as u128
    }

    pub fn index_of(&self, pattern: &Pattern) -> Option<usize> {
        self.patterns.iter().position(|p| p == pattern)
    }
}

/// Exact binomial coefficient, saturating at `u128::MAX`.
pub fn binomial(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        // acc * (n - i) / (i + 1) stays integral at every step
        acc = match acc.checked_mul((n - i) as u128) {
            Some(v) => v / (i as u128 + 1),
            None => return u128::MAX,
        };
    }
    acc
}

/// All size-`m` subsets of `{0, .., k-1}` in lexicographic order, subject to `cap`.
pub fn enumerate_patterns_capped(k: usize, m: usize, cap: usize) -> Result<PatternSet> {
    if k == 0 || m == 0 || m > k {
        return Err(SqdError::InvalidArgument(format!(
            "need 1 <= m <= K, got m = {m}, K = {k}"
        )));
    }
    let count = binomial(k, m);
    if count > cap as u128 {
        return Err(SqdError::DesignSpaceTooLarge { k, m, count, cap });
    }
    let mut out = Vec::with_capacity(count as usize);
    let mut idx: Vec<usize> = (0..m).collect();
    loop {
        out.push(Pattern(idx.clone()));
        // advance to the next combination
        let mut i = m;
        loop {
            if i == 0 {
                return Ok(PatternSet {
                    k,
                    m,
                    patterns: out,
                });
            }
            i -= 1;
            if idx[i] < k - m + i {
                break;
            }
        }
        idx[i] += 1;
        for j in (i + 1)..m {
            idx[j] = idx[j - 1] + 1;
        }
    }
}

pub fn enumerate_patterns(k: usize, m: usize) -> Result<PatternSet> {
    enumerate_patterns_capped(k, m, DEFAULT_PATTERN_CAP)
}

/// Probability vector over a pattern set.
#[derive(Debug, Clone)]
pub struct DesignDistribution {
    pattern_set: Arc<PatternSet>,
    probs: Vec<f64>,
}

impl PartialEq for DesignDistribution {
    fn eq(&self, other: &Self) -> bool {
        self.pattern_set == other.pattern_set && self.probs == other.probs
    }
}

impl DesignDistribution {
    pub fn new(pattern_set: Arc<PatternSet>, probs: Vec<f64>) -> Result<Self> {
        if probs.len() != pattern_set.len() {
            return Err(SqdError::DimensionMismatch(format!(
                "{} probabilities for {} patterns",
                probs.len(),
                pattern_set.len()
            )));
        }
        if probs.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(SqdError::InvalidArgument(
                "probabilities must be finite and nonnegative".into(),
            ));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > MASS_TOLERANCE.max(1e-15 * probs.len() as f64) {
            return Err(SqdError::InvalidArgument(format!(
                "probabilities sum to {total}, not 1"
            )));
        }
        Ok(Self { pattern_set, probs })
    }

    /// Like [`DesignDistribution::new`] but renormalizes a nonnegative weight vector first.
    pub fn from_weights(pattern_set: Arc<PatternSet>, weights: Vec<f64>) -> Result<Self> {
        let total: f64 = weights.iter().sum();
        if !(total > 0.0) {
            return Err(SqdError::InvalidArgument("weights sum to zero".into()));
        }
        let probs = weights.into_iter().map(|w| w / total).collect();
        Self::new(pattern_set, probs)
    }

    /// Point mass on a single pattern.
    pub fn point_mass(pattern_set: Arc<PatternSet>, pattern: &Pattern) -> Result<Self> {
        let j = pattern_set.index_of(pattern).ok_or_else(|| {
            SqdError::InvalidArgument(format!("pattern {:?} not in set", pattern.items()))
        })?;
        let mut probs = vec![0.0; pattern_set.len()];
        probs[j] = 1.0;
        Self::new(pattern_set, probs)
    }

    pub fn pattern_set(&self) -> &PatternSet {
        &self.pattern_set
    }

    pub fn shared_pattern_set(&self) -> Arc<PatternSet> {
        Arc::clone(&self.pattern_set)
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn k(&self) -> usize {
        self.pattern_set.k()
    }

    /// Item inclusion probabilities `p**_k`.
    pub fn item_inclusion(&self) -> Vec<f64> {
        item_inclusion_of(&self.pattern_set, &self.probs)
    }

    /// Convex combination `alpha * self + (1 - alpha) * other`.
    pub fn mix(&self, other: &Self, alpha: f64) -> Result<Self> {
        if self.pattern_set != other.pattern_set {
            return Err(SqdError::DimensionMismatch(
                "designs over different pattern sets".into(),
            ));
        }
        let probs = self
            .probs
            .iter()
            .zip(&other.probs)
            .map(|(a, b)| alpha * a + (1.0 - alpha) * b)
            .collect();
        Self::from_weights(Arc::clone(&self.pattern_set), probs)
    }
}

/// `p**_k` for a raw probability vector.
pub fn item_inclusion_of(ps: &PatternSet, probs: &[f64]) -> Vec<f64> {
    let mut incl = vec![0.0; ps.k()];
    for (p, &w) in ps.patterns().iter().zip(probs) {
        for &i in p.items() {
            incl[i] += w;
        }
    }
    incl
}

/// Uniform distribution over a complete pattern set.
pub fn srs_design(ps: Arc<PatternSet>) -> Result<DesignDistribution> {
    if !ps.is_complete() {
        return Err(SqdError::InvalidArgument(
            "SRS design requires the fully enumerated pattern set".into(),
        ));
    }
    let j = ps.len();
    DesignDistribution::new(ps, vec![1.0 / j as f64; j])
}

/// Group index of item `i` when items are split into consecutive blocks of `q`.
pub fn group_of(item: usize, q: usize) -> usize {
    item / q
}

/// Two groups of `q` questions, `m = 2`: each within-group pair gets
/// `pi / (q (q-1))`, each between-group pair `(1 - pi) / q^2`.
pub fn symmetric_two_group_design(q: usize, pi: f64) -> Result<DesignDistribution> {
    if q == 0 {
        return Err(SqdError::InvalidArgument("q must be positive".into()));
    }
    if !(0.0..=1.0).contains(&pi) {
        return Err(SqdError::InvalidArgument(format!(
            "within-group mass {pi} outside [0, 1]"
        )));
    }
    if q < 2 && pi > 0.0 {
        return Err(SqdError::InvalidArgument(
            "q < 2 has no within-group pairs to carry positive mass".into(),
        ));
    }
    let ps = Arc::new(enumerate_patterns(2 * q, 2)?);
    let within = if q >= 2 {
        pi / (q * (q - 1)) as f64
    } else {
        0.0
    };
    let between = (1.0 - pi) / (q * q) as f64;
    let probs = ps
        .patterns()
        .iter()
        .map(|p| {
            let it = p.items();
            if group_of(it[0], q) == group_of(it[1], q) {
                within
            } else {
                between
            }
        })
        .collect();
    DesignDistribution::new(ps, probs)
}

/// Within-group probability mass of a two-group `m = 2` design.
pub fn within_group_mass(d: &DesignDistribution, q: usize) -> f64 {
    d.pattern_set()
        .patterns()
        .iter()
        .zip(d.probs())
        .filter(|(p, _)| {
            let it = p.items();
            it.iter().all(|&i| group_of(i, q) == group_of(it[0], q))
        })
        .map(|(_, &w)| w)
        .sum()
}

/// Orbit structure of the pattern set under a group of item relabelings.
///
/// Orbits are the connected components of the graph linking each pattern to
/// its image under every generator.
#[derive(Debug, Clone)]
pub struct PatternOrbits {
    orbit_of: Vec<usize>,
    n_orbits: usize,
}

impl PatternOrbits {
    /// `generators` are permutations of `0..K` given as image vectors.
    pub fn from_generators(ps: &PatternSet, generators: &[Vec<usize>]) -> Result<Self> {
        let k = ps.k();
        for g in generators {
            let mut seen = vec![false; k];
            if g.len() != k || g.iter().any(|&x| x >= k || std::mem::replace(&mut seen[x], true)) {
                return Err(SqdError::InvalidArgument(
                    "generator is not a permutation of the items".into(),
                ));
            }
        }
        let index: std::collections::HashMap<&Pattern, usize> =
            ps.patterns().iter().enumerate().map(|(j, p)| (p, j)).collect();
        let mut parent: Vec<usize> = (0..ps.len()).collect();
        fn find(parent: &mut [usize], mut x: usize) -> usize {
            while parent[x] != x {
                parent[x] = parent[parent[x]];
                x = parent[x];
            }
            x
        }
        for (j, p) in ps.patterns().iter().enumerate() {
            for g in generators {
                let image = Pattern::new(p.items().iter().map(|&i| g[i]).collect(), k)?;
                let jj = *index.get(&image).ok_or_else(|| {
                    SqdError::InvalidArgument(
                        "pattern set is not closed under the symmetry".into(),
                    )
                })?;
                let (a, b) = (find(&mut parent, j), find(&mut parent, jj));
                if a != b {
                    parent[a.max(b)] = a.min(b);
                }
            }
        }
        let mut label = vec![usize::MAX; ps.len()];
        let mut orbit_of = vec![0; ps.len()];
        let mut n_orbits = 0;
        for j in 0..ps.len() {
            let r = find(&mut parent, j);
            if label[r] == usize::MAX {
                label[r] = n_orbits;
                n_orbits += 1;
            }
            orbit_of[j] = label[r];
        }
        Ok(Self { orbit_of, n_orbits })
    }

    /// Symmetries of `g` consecutive groups of `q` exchangeable items: transpositions
    /// inside each group plus swaps of whole groups.
    pub fn exchangeable_groups(ps: &PatternSet, g: usize, q: usize) -> Result<Self> {
        Self::group_symmetries(ps, g, q, true)
    }

    /// Transpositions inside each group only; groups keep their identity.
    pub fn within_groups(ps: &PatternSet, g: usize, q: usize) -> Result<Self> {
        Self::group_symmetries(ps, g, q, false)
    }

    fn group_symmetries(ps: &PatternSet, g: usize, q: usize, swap_groups: bool) -> Result<Self> {
        let k = g * q;
        if ps.k() != k {
            return Err(SqdError::DimensionMismatch(format!(
                "K = {} but g * q = {k}",
                ps.k()
            )));
        }
        let mut gens = Vec::new();
        for grp in 0..g {
            for i in 0..q.saturating_sub(1) {
                let mut perm: Vec<usize> = (0..k).collect();
                perm.swap(grp * q + i, grp * q + i + 1);
                gens.push(perm);
            }
        }
        for grp in 0..if swap_groups { g.saturating_sub(1) } else { 0 } {
            let mut perm: Vec<usize> = (0..k).collect();
            for i in 0..q {
                perm.swap(grp * q + i, (grp + 1) * q + i);
            }
            gens.push(perm);
        }
        Self::from_generators(ps, &gens)
    }

    pub fn n_orbits(&self) -> usize {
        self.n_orbits
    }

    pub fn orbit_of(&self) -> &[usize] {
        &self.orbit_of
    }

    /// Replaces every probability by the mean over its orbit.
    pub fn average(&self, probs: &[f64]) -> Vec<f64> {
        let mut sum = vec![0.0; self.n_orbits];
        let mut count = vec![0usize; self.n_orbits];
        for (&o, &p) in self.orbit_of.iter().zip(probs) {
            sum[o] += p;
            count[o] += 1;
        }
        self.orbit_of
            .iter()
            .map(|&o| sum[o] / count[o] as f64)
            .collect()
    }
}
