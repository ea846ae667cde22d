//! Conditional marginal tables and the one-step recursion that rebuilds a
//! vertex's value distribution from its neighbors' conditional distributions.
//!
//! A [`MarginalTable`] stores, for each child slot `j` and each prefix of
//! neighbor values `(n_1..n_j)`, an estimate `y^j(n̄_j)` of the probability
//! that the j-th neighbor takes value `n_j` given the earlier neighbors'
//! values. From such a table the target's own distribution is recovered as
//!
//! ```text
//! f_n = U_n / L,   U_n = Σ_{n̄ ∈ S_n^d} Π_j y^j(n̄_j),   L = Σ_{m=0}^{M} U_m,
//! ```
//!
//! where `S_n = [0, min(N−n, cap)]` and `M = min(cap, N−b)` accounts for the
//! largest pinned-neighbor value `b`. All evaluation is generic over the
//! arithmetic type, so the same sums run in `f64` and in exact rationals.

use std::collections::{BTreeMap, HashMap};

use num::rational::BigRational;
use num::traits::{One, ToPrimitive, Zero};
use num::BigInt;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::graph::{ConstraintSet, Graph};
use crate::lattice::{exact_marginal_distribution, ExactMarginal, Params};

/// Arithmetic needed to evaluate the recursion: `f64` for production runs,
/// [`BigRational`] for exact small-instance verification.
pub trait Weight: Clone + PartialEq + Send + Sync + std::fmt::Debug + 'static {
    fn zero() -> Self;
    fn one() -> Self;
    fn from_count(count: u64) -> Self;
    fn from_marginal(m: &ExactMarginal) -> Self;
    fn is_zero(&self) -> bool;
    fn add_assign_ref(&mut self, rhs: &Self);
    fn mul_ref(&self, rhs: &Self) -> Self;
    /// Quotient; callers guard against zero divisors.
    fn div_ref(&self, rhs: &Self) -> Self;
    fn to_f64(&self) -> f64;
}

impl Weight for f64 {
    fn zero() -> Self {
        0.0
    }
    fn one() -> Self {
        1.0
    }
    fn from_count(count: u64) -> Self {
        count as f64
    }
    fn from_marginal(m: &ExactMarginal) -> Self {
        m.value_f64()
    }
    fn is_zero(&self) -> bool {
        *self == 0.0
    }
    fn add_assign_ref(&mut self, rhs: &Self) {
        *self += rhs;
    }
    fn mul_ref(&self, rhs: &Self) -> Self {
        self * rhs
    }
    fn div_ref(&self, rhs: &Self) -> Self {
        self / rhs
    }
    fn to_f64(&self) -> f64 {
        *self
    }
}

impl Weight for BigRational {
    fn zero() -> Self {
        Zero::zero()
    }
    fn one() -> Self {
        One::one()
    }
    fn from_count(count: u64) -> Self {
        BigRational::from_integer(BigInt::from(count))
    }
    fn from_marginal(m: &ExactMarginal) -> Self {
        m.to_rational()
    }
    fn is_zero(&self) -> bool {
        Zero::is_zero(self)
    }
    fn add_assign_ref(&mut self, rhs: &Self) {
        *self += rhs;
    }
    fn mul_ref(&self, rhs: &Self) -> Self {
        self * rhs
    }
    fn div_ref(&self, rhs: &Self) -> Self {
        self / rhs
    }
    fn to_f64(&self) -> f64 {
        ToPrimitive::to_f64(self).unwrap_or(f64::NAN)
    }
}

/// Largest pinned-neighbor value `b` of a target vertex; the target's own
/// feasible values are `[0, min(cap, N − b)]`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct EffectiveCap {
    b: u32,
}

impl EffectiveCap {
    /// No pinned neighbors.
    pub fn none() -> Self {
        EffectiveCap { b: 0 }
    }

    pub fn new(b: u32, params: &Params) -> Result<Self> {
        if b > params.cap() {
            return Err(Error::ValueOutOfRange {
                value: b,
                max: params.cap(),
            });
        }
        Ok(EffectiveCap { b })
    }

    /// Largest pin value among `v`'s live pinned neighbors (0 when none).
    pub fn for_vertex(g: &Graph, v: u32, beta: &ConstraintSet) -> Self {
        let b = g
            .neighbors(v)
            .filter_map(|u| beta.get(u))
            .max()
            .unwrap_or(0);
        EffectiveCap { b }
    }

    pub fn b(&self) -> u32 {
        self.b
    }

    /// Largest value the target may take: `min(cap, N − b)`.
    pub fn max_value(&self, params: &Params) -> u32 {
        params.cap().min(params.n() - self.b)
    }
}

/// A probability vector over `[0, cap]` that sums to one, is non-increasing,
/// and is flat on the low segment `[0, A]` — the shape every conditional
/// value distribution in this problem has.
#[derive(Clone, Debug, PartialEq)]
pub struct FeasibleProbabilityDistribution {
    values: Vec<f64>,
    params: Params,
}

impl FeasibleProbabilityDistribution {
    /// Absolute tolerance for all three defining properties.
    pub const TOLERANCE: f64 = 1e-12;

    pub fn new(values: Vec<f64>, params: &Params) -> Result<Self> {
        let cap = params.cap() as usize;
        if values.len() != cap + 1 {
            return Err(Error::ShapeMismatch(format!(
                "distribution needs {} entries, got {}",
                cap + 1,
                values.len()
            )));
        }
        let tol = Self::TOLERANCE;
        let mut sum = 0.0;
        for (i, &w) in values.iter().enumerate() {
            if !w.is_finite() || w < -tol {
                return Err(Error::ClosureViolation(format!(
                    "entry {i} is {w}, expected a probability"
                )));
            }
            sum += w;
        }
        if (sum - 1.0).abs() > tol {
            return Err(Error::ClosureViolation(format!(
                "entries sum to {sum}, expected 1"
            )));
        }
        for i in 0..cap {
            if values[i + 1] > values[i] + tol {
                return Err(Error::ClosureViolation(format!(
                    "entries increase from index {i} ({} -> {})",
                    values[i],
                    values[i + 1]
                )));
            }
        }
        for i in 1..=params.a() as usize {
            if (values[i] - values[0]).abs() > tol {
                return Err(Error::ClosureViolation(format!(
                    "flat region broken at index {i}: {} vs {}",
                    values[i], values[0]
                )));
            }
        }
        Ok(FeasibleProbabilityDistribution {
            values,
            params: *params,
        })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, n: u32) -> f64 {
        self.values[n as usize]
    }

    pub fn params(&self) -> &Params {
        &self.params
    }
}

/// Prefix-indexed family of conditional distributions for a vertex's child
/// slots. Level `j` (1-based) maps prefixes `(n_1..n_j) ∈ [0,cap]^j` to
/// `y^j(n̄_j)`; absent prefixes carry weight zero (their conditioning pins
/// are infeasible, so every product through them vanishes).
#[derive(Clone, Debug, PartialEq)]
pub struct MarginalTable<W: Weight = f64> {
    params: Params,
    levels: Vec<HashMap<Box<[u16]>, W>>,
    /// Full-tuple products grouped by the largest coordinate in the tuple;
    /// `U_n` is the prefix sum of this vector up to `min(N−n, cap)`.
    buckets: Vec<W>,
}

impl<W: Weight> MarginalTable<W> {
    /// Builds a table level by level. `fill(j, prefix)` is called for every
    /// extension of a live prefix in lexicographic order; returning `None`
    /// marks the prefix infeasible and prunes its entire subtree.
    pub fn build<F>(params: &Params, d: usize, mut fill: F) -> Self
    where
        F: FnMut(usize, &[u16]) -> Option<W>,
    {
        let cap = params.cap() as u16;
        let mut levels: Vec<HashMap<Box<[u16]>, W>> = Vec::with_capacity(d);
        let mut parents: Vec<Box<[u16]>> = vec![Vec::new().into_boxed_slice()];
        for j in 1..=d {
            let mut level = HashMap::new();
            let mut next_parents = Vec::new();
            for p in &parents {
                let mut key: Vec<u16> = Vec::with_capacity(j);
                key.extend_from_slice(p);
                key.push(0);
                for val in 0..=cap {
                    key[j - 1] = val;
                    if let Some(w) = fill(j, &key) {
                        let boxed: Box<[u16]> = key.clone().into_boxed_slice();
                        level.insert(boxed.clone(), w);
                        next_parents.push(boxed);
                    }
                }
            }
            levels.push(level);
            parents = next_parents;
        }
        Self::from_levels_unchecked(*params, levels)
    }

    /// Assembles a table from explicit per-level maps, checking key shapes.
    pub fn from_levels(params: &Params, levels: Vec<HashMap<Box<[u16]>, W>>) -> Result<Self> {
        for (idx, level) in levels.iter().enumerate() {
            let j = idx + 1;
            for key in level.keys() {
                if key.len() != j {
                    return Err(Error::ShapeMismatch(format!(
                        "level {j} holds a key of length {}",
                        key.len()
                    )));
                }
                if key.iter().any(|&v| u32::from(v) > params.cap()) {
                    return Err(Error::ShapeMismatch(format!(
                        "level {j} key {key:?} exceeds cap {}",
                        params.cap()
                    )));
                }
            }
        }
        Ok(Self::from_levels_unchecked(*params, levels))
    }

    fn from_levels_unchecked(params: Params, levels: Vec<HashMap<Box<[u16]>, W>>) -> Self {
        let buckets = compute_buckets(&params, &levels);
        MarginalTable {
            params,
            levels,
            buckets,
        }
    }

    pub fn params(&self) -> &Params {
        &self.params
    }

    /// Number of child slots `d`.
    pub fn child_count(&self) -> usize {
        self.levels.len()
    }

    /// Stored value for level `j` (1-based) at `prefix`; zero when absent.
    pub fn get(&self, j: usize, prefix: &[u16]) -> W {
        assert!(
            (1..=self.levels.len()).contains(&j) && prefix.len() == j,
            "level {j} prefix of length {} out of shape",
            prefix.len()
        );
        self.levels[j - 1].get(prefix).cloned().unwrap_or(W::zero())
    }

    /// All populated coordinates, ordered by level then lexicographically by
    /// prefix — the deterministic iteration order for gradient sweeps.
    pub fn coordinates(&self) -> Vec<(usize, Box<[u16]>)> {
        let mut out = Vec::new();
        for (idx, level) in self.levels.iter().enumerate() {
            let mut keys: Vec<_> = level.keys().cloned().collect();
            keys.sort();
            out.extend(keys.into_iter().map(|k| (idx + 1, k)));
        }
        out
    }

    /// Copy of the table with one coordinate replaced (inserting it if it was
    /// absent). Used for finite-difference probes.
    pub fn with_coordinate(&self, j: usize, prefix: &[u16], value: W) -> Self {
        assert!(
            (1..=self.levels.len()).contains(&j) && prefix.len() == j,
            "level {j} prefix of length {} out of shape",
            prefix.len()
        );
        let mut levels = self.levels.clone();
        levels[j - 1].insert(prefix.into(), value);
        Self::from_levels_unchecked(self.params, levels)
    }

    /// Full-tuple products grouped by largest tuple coordinate (empty when
    /// `d = 0`).
    pub fn bucket_sums(&self) -> &[W] {
        &self.buckets
    }

    /// `U_n`: total product weight of child tuples compatible with the target
    /// holding value `n` (every coordinate in `[0, min(N−n, cap)]`).
    pub fn eval_u(&self, n: u32) -> Result<W> {
        let cap = self.params.cap();
        if n > cap {
            return Err(Error::ValueOutOfRange { value: n, max: cap });
        }
        if self.levels.is_empty() {
            return Ok(W::one());
        }
        let ub = (self.params.n() - n).min(cap) as usize;
        let mut acc = W::zero();
        for t in 0..=ub {
            acc.add_assign_ref(&self.buckets[t]);
        }
        Ok(acc)
    }

    /// `L`: normalizer `Σ_{m=0}^{M} U_m` with `M = min(cap, N − b)`.
    pub fn eval_l(&self, ecap: EffectiveCap) -> W {
        let m_max = ecap.max_value(&self.params) as u64;
        if self.levels.is_empty() {
            return W::from_count(m_max + 1);
        }
        let n = u64::from(self.params.n());
        let mut acc = W::zero();
        for (t, bucket) in self.buckets.iter().enumerate() {
            if bucket.is_zero() {
                continue;
            }
            // Bucket t feeds U_m exactly when t ≤ N − m, i.e. m ≤ N − t.
            let multiplicity = m_max.min(n - t as u64) + 1;
            acc.add_assign_ref(&bucket.mul_ref(&W::from_count(multiplicity)));
        }
        acc
    }

    /// One recursion step: the probability the target takes value `n`, given
    /// the children's conditional distributions and the pinned-neighbor cap.
    pub fn eval_f(&self, n: u32, ecap: EffectiveCap) -> Result<W> {
        let cap = self.params.cap();
        if n > cap {
            return Err(Error::ValueOutOfRange { value: n, max: cap });
        }
        if n > ecap.max_value(&self.params) {
            return Ok(W::zero());
        }
        let l = self.eval_l(ecap);
        if l.is_zero() {
            return Ok(W::zero());
        }
        Ok(self.eval_u(n)?.div_ref(&l))
    }

    /// The whole distribution `(f_n)_{n=0..cap}` in one pass.
    pub fn f_dist(&self, ecap: EffectiveCap) -> Vec<W> {
        let cap = self.params.cap();
        let m_max = ecap.max_value(&self.params);
        let l = self.eval_l(ecap);
        let mut out = Vec::with_capacity(cap as usize + 1);
        if l.is_zero() {
            out.resize(cap as usize + 1, W::zero());
            return out;
        }
        if self.levels.is_empty() {
            let uniform = W::one().div_ref(&W::from_count(u64::from(m_max) + 1));
            for n in 0..=cap {
                out.push(if n <= m_max { uniform.clone() } else { W::zero() });
            }
            return out;
        }
        // Running prefix sum of buckets gives each U_n in O(1).
        let mut prefix_sums = Vec::with_capacity(self.buckets.len());
        let mut acc = W::zero();
        for b in &self.buckets {
            acc.add_assign_ref(b);
            prefix_sums.push(acc.clone());
        }
        for n in 0..=cap {
            if n > m_max {
                out.push(W::zero());
                continue;
            }
            let ub = (self.params.n() - n).min(cap) as usize;
            out.push(prefix_sums[ub].div_ref(&l));
        }
        out
    }

    /// `f_dist` converted to `f64` and checked against the distribution
    /// invariants; a violation signals an implementation bug upstream.
    pub fn f_all(&self, ecap: EffectiveCap) -> Result<FeasibleProbabilityDistribution> {
        let values: Vec<f64> = self.f_dist(ecap).iter().map(Weight::to_f64).collect();
        FeasibleProbabilityDistribution::new(values, &self.params)
    }

    /// Suffix products for slots after `j`, each suffix coordinate free over
    /// `[0, cap]`, grouped by the largest suffix coordinate. The head-sum of
    /// this vector up to `min(N−n, cap)` is `A_j(n, n̄_j)`; for `j = d` the
    /// empty suffix contributes a single one at index 0.
    pub fn suffix_buckets(&self, j: usize, prefix: &[u16]) -> Vec<W> {
        let d = self.levels.len();
        assert!(
            (1..=d).contains(&j) && prefix.len() == j,
            "level {j} prefix of length {} out of shape",
            prefix.len()
        );
        let cap = self.params.cap() as usize;
        let mut buckets = vec![W::zero(); cap + 1];
        if j == d {
            buckets[0] = W::one();
            return buckets;
        }
        let mut key: Vec<u16> = prefix.to_vec();
        suffix_rec(
            &self.levels,
            cap as u16,
            d,
            &mut key,
            W::one(),
            0,
            &mut buckets,
        );
        buckets
    }

    /// `A_j(n, n̄_j)`: total weight of suffix completions when the target
    /// holds `n`.
    pub fn eval_a(&self, j: usize, n: u32, prefix: &[u16]) -> W {
        let cap = self.params.cap();
        assert!(n <= cap, "target value {n} exceeds cap {cap}");
        let buckets = self.suffix_buckets(j, prefix);
        let ub = (self.params.n() - n).min(cap) as usize;
        let mut acc = W::zero();
        for bucket in &buckets[..=ub] {
            acc.add_assign_ref(bucket);
        }
        acc
    }

    /// `B_j(n̄_{j−1})`: product of the stored values along the prefix path
    /// strictly before slot `j`.
    pub fn eval_b(&self, j: usize, prefix: &[u16]) -> W {
        let d = self.levels.len();
        assert!(
            (1..=d).contains(&j) && prefix.len() >= j - 1,
            "prefix of length {} too short for level {j}",
            prefix.len()
        );
        let mut acc = W::one();
        for i in 1..j {
            acc = acc.mul_ref(&self.get(i, &prefix[..i]));
        }
        acc
    }

    /// Same table with every value converted to `f64`.
    pub fn to_f64_table(&self) -> MarginalTable<f64> {
        let levels = self
            .levels
            .iter()
            .map(|level| {
                level
                    .iter()
                    .map(|(k, v)| (k.clone(), v.to_f64()))
                    .collect()
            })
            .collect();
        MarginalTable::from_levels_unchecked(self.params, levels)
    }
}

impl MarginalTable<f64> {
    /// Pointwise blend `w·self + (1−w)·other` over the union of populated
    /// coordinates.
    pub fn interpolate(&self, other: &Self, w: f64) -> Result<Self> {
        if self.params != other.params || self.levels.len() != other.levels.len() {
            return Err(Error::ShapeMismatch(
                "interpolation requires matching parameters and slot count".into(),
            ));
        }
        if !(0.0..=1.0).contains(&w) {
            return Err(Error::InvalidParams(format!(
                "interpolation weight must lie in [0, 1], got {w}"
            )));
        }
        let mut levels = Vec::with_capacity(self.levels.len());
        for (a, b) in self.levels.iter().zip(&other.levels) {
            let mut merged: HashMap<Box<[u16]>, f64> = HashMap::new();
            for (k, &va) in a {
                let vb = b.get(k).copied().unwrap_or(0.0);
                merged.insert(k.clone(), w * va + (1.0 - w) * vb);
            }
            for (k, &vb) in b {
                merged.entry(k.clone()).or_insert((1.0 - w) * vb);
            }
            levels.push(merged);
        }
        Ok(Self::from_levels_unchecked(self.params, levels))
    }

    /// Checks every populated slice against the distribution invariants and
    /// the low-prefix insensitivity requirement.
    pub fn validate(&self) -> Result<()> {
        let cap = self.params.cap() as usize;
        let a = self.params.a() as usize;
        let tol = FeasibleProbabilityDistribution::TOLERANCE;
        for (idx, level) in self.levels.iter().enumerate() {
            let j = idx + 1;
            // Group entries into slices by their parent prefix.
            let mut slices: BTreeMap<Box<[u16]>, Vec<f64>> = BTreeMap::new();
            for (key, &value) in level {
                let parent: Box<[u16]> = key[..j - 1].into();
                slices.entry(parent).or_insert_with(|| vec![0.0; cap + 1])[key[j - 1] as usize] =
                    value;
            }
            let mut low_head: Option<(Box<[u16]>, f64)> = None;
            for (parent, slice) in &slices {
                FeasibleProbabilityDistribution::new(slice.clone(), &self.params).map_err(
                    |e| {
                        Error::DegenerateTable(format!(
                            "slot {j}, conditioning prefix {parent:?}: {e}"
                        ))
                    },
                )?;
                // Slices conditioned entirely on low values must agree.
                if parent.iter().all(|&v| v as usize <= a) {
                    match &low_head {
                        None => low_head = Some((parent.clone(), slice[0])),
                        Some((first, head)) => {
                            if (slice[0] - head).abs() > tol {
                                return Err(Error::DegenerateTable(format!(
                                    "slot {j}: low prefixes {first:?} and {parent:?} \
                                     disagree ({head} vs {})",
                                    slice[0]
                                )));
                            }
                        }
                    }
                }
            }
        }
        Ok(())
    }
}

fn compute_buckets<W: Weight>(params: &Params, levels: &[HashMap<Box<[u16]>, W>]) -> Vec<W> {
    if levels.is_empty() {
        return Vec::new();
    }
    let cap = params.cap() as usize;
    let mut buckets = vec![W::zero(); cap + 1];
    let mut key: Vec<u16> = Vec::with_capacity(levels.len());
    bucket_rec(levels, cap as u16, &mut key, W::one(), 0, &mut buckets);
    buckets
}

fn bucket_rec<W: Weight>(
    levels: &[HashMap<Box<[u16]>, W>],
    cap: u16,
    key: &mut Vec<u16>,
    product: W,
    max_coord: usize,
    buckets: &mut [W],
) {
    let depth = key.len();
    if depth == levels.len() {
        buckets[max_coord].add_assign_ref(&product);
        return;
    }
    for val in 0..=cap {
        key.push(val);
        if let Some(y) = levels[depth].get(key.as_slice()) {
            if !y.is_zero() {
                bucket_rec(
                    levels,
                    cap,
                    key,
                    product.mul_ref(y),
                    max_coord.max(val as usize),
                    buckets,
                );
            }
        }
        key.pop();
    }
}

fn suffix_rec<W: Weight>(
    levels: &[HashMap<Box<[u16]>, W>],
    cap: u16,
    d: usize,
    key: &mut Vec<u16>,
    product: W,
    max_suffix: usize,
    buckets: &mut [W],
) {
    let depth = key.len();
    if depth == d {
        buckets[max_suffix].add_assign_ref(&product);
        return;
    }
    for val in 0..=cap {
        key.push(val);
        if let Some(y) = levels[depth].get(key.as_slice()) {
            if !y.is_zero() {
                suffix_rec(
                    levels,
                    cap,
                    d,
                    key,
                    product.mul_ref(y),
                    max_suffix.max(val as usize),
                    buckets,
                );
            }
        }
        key.pop();
    }
}

/// Deterministic random valid table: one fresh slice per canonical class of
/// conditioning prefix, shared across every prefix in the class, so all
/// insensitivity requirements hold by construction.
///
/// The canonical class replaces each prefix coordinate ≤ `A` by 0: two
/// prefixes in one class induce identical constraint sets, so the true
/// conditional distributions they index are identical too, and a generator
/// that did not share slices at that granularity would produce tables no
/// exact instance could achieve.
pub fn random_fmd(seed: u64, d: usize, params: &Params) -> MarginalTable<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cap = params.cap();
    let a = params.a();
    let mut levels: Vec<HashMap<Box<[u16]>, f64>> = Vec::with_capacity(d);
    for j in 1..=d {
        // Enumerate canonical parent classes in lexicographic order: each
        // coordinate is either 0 (standing for all of [0, A]) or a single
        // high value in [A+1, cap].
        let class_values: Vec<u16> = std::iter::once(0u16)
            .chain((a + 1..=cap).map(|v| v as u16))
            .collect();
        let mut class_slices: HashMap<Vec<u16>, Vec<f64>> = HashMap::new();
        let mut classes = vec![Vec::new()];
        for _ in 0..j - 1 {
            let mut next = Vec::new();
            for c in &classes {
                for &v in &class_values {
                    let mut ext = c.clone();
                    ext.push(v);
                    next.push(ext);
                }
            }
            classes = next;
        }
        for class in &classes {
            class_slices.insert(class.clone(), sample_slice(&mut rng, params));
        }
        // Assign the class slice to every concrete parent prefix.
        let mut level = HashMap::new();
        let mut parents = vec![Vec::new()];
        for _ in 0..j - 1 {
            let mut next = Vec::new();
            for p in &parents {
                for v in 0..=cap as u16 {
                    let mut ext: Vec<u16> = p.clone();
                    ext.push(v);
                    next.push(ext);
                }
            }
            parents = next;
        }
        for parent in &parents {
            let class: Vec<u16> = parent
                .iter()
                .map(|&v| if u32::from(v) <= a { 0 } else { v })
                .collect();
            let slice = &class_slices[&class];
            for (i, &w) in slice.iter().enumerate() {
                let mut key = parent.clone();
                key.push(i as u16);
                level.insert(key.into_boxed_slice(), w);
            }
        }
        levels.push(level);
    }
    MarginalTable::from_levels_unchecked(*params, levels)
}

/// One strictly positive slice: a flat head on `[0, A]`, then randomly
/// decremented tail values, renormalized to sum 1.
fn sample_slice(rng: &mut ChaCha8Rng, params: &Params) -> Vec<f64> {
    let cap = params.cap() as usize;
    let a = params.a() as usize;
    let mut raw = vec![1.0f64; cap + 1];
    let mut current = 1.0;
    for item in raw.iter_mut().take(cap + 1).skip(a + 1) {
        // Decrement by at most 95% of the remaining height, so values stay
        // strictly positive and non-increasing.
        current -= rng.random_range(0.0..current * 0.95);
        *item = current;
    }
    let total: f64 = raw.iter().sum();
    for w in &mut raw {
        *w /= total;
    }
    raw
}

/// Table of exact conditional marginals for the unpinned live neighbors of
/// `v` in `g ∖ v` — the ground-truth input for the one-step recursion.
///
/// Returns the table together with `v`'s pinned-neighbor cap. Prefixes whose
/// induced pins clash with an edge are pruned (their subtree weight is zero).
pub fn exact_child_table<W: Weight>(
    g: &Graph,
    params: &Params,
    v: u32,
    beta: &ConstraintSet,
) -> Result<(MarginalTable<W>, EffectiveCap)> {
    if !g.is_live(v) {
        return Err(Error::VertexRemoved(v));
    }
    if beta.is_pinned(v) {
        return Err(Error::VertexPinned(v));
    }
    let ecap = EffectiveCap::for_vertex(g, v, beta);
    let children: Vec<u32> = g.neighbors(v).filter(|&u| !beta.is_pinned(u)).collect();
    let reduced = g.remove_vertex(v)?;
    let d = children.len();

    let mut levels: Vec<HashMap<Box<[u16]>, W>> = Vec::with_capacity(d);
    // Live prefixes whose induced pins are feasible, with their pin sets.
    let mut parents: Vec<(Vec<u16>, ConstraintSet)> = vec![(Vec::new(), beta.clone())];
    for (idx, &child) in children.iter().enumerate() {
        let j = idx + 1;
        let mut level = HashMap::new();
        let mut next_parents = Vec::new();
        for (prefix, pins) in &parents {
            // The whole slice under this prefix comes from one distribution
            // computation over the reduced graph.
            let (numerators, denominator) =
                exact_marginal_distribution(&reduced, params, child, pins)?;
            for (n, numerator) in numerators.iter().enumerate() {
                let ratio = ExactMarginal {
                    numerator: numerator.clone(),
                    denominator: denominator.clone(),
                };
                let mut key = prefix.clone();
                key.push(n as u16);
                level.insert(key.clone().into_boxed_slice(), W::from_marginal(&ratio));
                if j < d {
                    let extended = pins.with_pin(child, n as u32);
                    if !extended.has_conflicting_pair(&reduced, params) {
                        next_parents.push((key, extended));
                    }
                }
            }
        }
        levels.push(level);
        parents = next_parents;
    }
    Ok((MarginalTable::from_levels_unchecked(*params, levels), ecap))
}
