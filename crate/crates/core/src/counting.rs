//! The approximation engine: depth-bounded recursive marginal estimation
//! with memoization, log-space telescoping for the full count, and the
//! depth-selection rule that turns a contraction certificate into an
//! accuracy guarantee.

use std::collections::HashMap;
use std::sync::Arc;

use crate::decay::ContractionBound;
use crate::error::{Error, Result};
use crate::graph::{ConstraintSet, Graph};
use crate::lattice::Params;
use crate::marginals::{EffectiveCap, MarginalTable};

/// Recursion depth for the marginal estimator.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct DepthBudget {
    k: u32,
}

impl DepthBudget {
    pub fn new(k: u32) -> Self {
        DepthBudget { k }
    }

    pub fn k(&self) -> u32 {
        self.k
    }
}

impl From<u32> for DepthBudget {
    fn from(k: u32) -> Self {
        DepthBudget { k }
    }
}

/// A positive quantity held in natural-log form, with the linear value
/// alongside whenever it is representable in double precision.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LogEstimate {
    log_value: f64,
    value: Option<f64>,
}

impl LogEstimate {
    pub fn from_log(log_value: f64) -> Self {
        let value = log_value.exp();
        LogEstimate {
            log_value,
            value: value.is_finite().then_some(value),
        }
    }

    pub fn log_value(&self) -> f64 {
        self.log_value
    }

    /// Linear-space value, absent when `exp` overflows.
    pub fn value(&self) -> Option<f64> {
        self.value
    }
}

/// Memo identity of one recursive distribution: which vertices are gone,
/// which vertex is targeted, how deep the remaining recursion is, and the
/// pins — canonicalized (low values collapse to 0, which provably cannot
/// change any count) and restricted to vertices that still touch a live
/// vertex (pins on fully-detached vertices cannot influence anything).
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
struct MemoKey {
    removed: Vec<u64>,
    target: u32,
    pins: Vec<(u32, u32)>,
    k: u32,
}

/// Depth-bounded estimator for Gibbs marginals and the total count.
///
/// One instance assumes a single underlying topology: memo entries are keyed
/// by removed-vertex masks, so reusing an instance across graphs with
/// different adjacency gives wrong answers. Use one per base graph.
pub struct Approximator {
    params: Params,
    memo_enabled: bool,
    memo: HashMap<MemoKey, Arc<[f64]>>,
    lookups: u64,
    hits: u64,
    work: u64,
    work_budget: Option<u64>,
}

impl Approximator {
    /// Estimator with memoization on (the default).
    pub fn new(params: Params) -> Self {
        Approximator {
            params,
            memo_enabled: true,
            memo: HashMap::new(),
            lookups: 0,
            hits: 0,
            work: 0,
            work_budget: None,
        }
    }

    /// Estimator that recomputes every subproblem; same results bit-for-bit,
    /// exponentially slower. Exists for runtime-shape measurements.
    pub fn without_memo(params: Params) -> Self {
        Approximator {
            memo_enabled: false,
            ..Self::new(params)
        }
    }

    pub fn params(&self) -> &Params {
        &self.params
    }

    pub fn memo_enabled(&self) -> bool {
        self.memo_enabled
    }

    /// `(hits, lookups)` over this instance's lifetime.
    pub fn memo_stats(&self) -> (u64, u64) {
        (self.hits, self.lookups)
    }

    /// Caps the number of distribution computations (memo hits are free);
    /// exceeding it aborts with an error instead of running away.
    pub fn set_work_budget(&mut self, budget: Option<u64>) {
        self.work_budget = budget;
    }

    /// Drops all memo entries and counters.
    pub fn clear(&mut self) {
        self.memo.clear();
        self.lookups = 0;
        self.hits = 0;
        self.work = 0;
    }

    /// Depth-`k` estimate of the probability that `v` takes value `n` under
    /// pins `beta`.
    ///
    /// The recursion: fold `v`'s pinned neighbors into an effective cap,
    /// return 0 above it and 0 everywhere when any two adjacent pins exceed
    /// the edge budget, uniform at depth 0; otherwise estimate each unpinned
    /// neighbor's conditional distribution in the graph without `v` at depth
    /// `k − 1` (pinning earlier neighbors to every combination of values)
    /// and combine them through the table evaluator.
    pub fn prob(
        &mut self,
        g: &Graph,
        v: u32,
        n: u32,
        beta: &ConstraintSet,
        k: DepthBudget,
    ) -> Result<f64> {
        let cap = self.params.cap();
        if n > cap {
            return Err(Error::ValueOutOfRange { value: n, max: cap });
        }
        Ok(self.dist_checked(g, v, beta, k)?[n as usize])
    }

    /// The whole estimated value distribution of `v` at once (index `n`).
    pub fn prob_dist(
        &mut self,
        g: &Graph,
        v: u32,
        beta: &ConstraintSet,
        k: DepthBudget,
    ) -> Result<Vec<f64>> {
        Ok(self.dist_checked(g, v, beta, k)?.to_vec())
    }

    /// Log of the estimated total count, via the telescoping identity: the
    /// count is the product over vertices (ascending) of the inverse
    /// estimated probability of value 0 given that all earlier vertices are
    /// pinned to 0. No vertex is removed between steps; pins accumulate.
    ///
    /// Estimates of zero are impossible for value 0 (every estimate is a
    /// proper distribution whose value-0 entry is at least 1/(cap+1)), so
    /// one surfacing here is reported as an internal error.
    pub fn log_z(&mut self, g: &Graph, k: DepthBudget) -> Result<LogEstimate> {
        if g.live_count() == 0 {
            return Err(Error::InvalidParams(
                "count estimation needs at least one live vertex".into(),
            ));
        }
        let mut beta = ConstraintSet::empty();
        let mut log_z = 0.0;
        for v in g.live_vertices().collect::<Vec<_>>() {
            let p = self.prob(g, v, 0, &beta, k)?;
            if p.is_nan() || p <= 0.0 {
                return Err(Error::Internal(format!(
                    "estimated probability of value 0 at vertex {v} is {p}"
                )));
            }
            log_z -= p.ln();
            beta = beta.with_pin(v, 0);
        }
        Ok(LogEstimate::from_log(log_z))
    }

    fn dist_checked(
        &mut self,
        g: &Graph,
        v: u32,
        beta: &ConstraintSet,
        k: DepthBudget,
    ) -> Result<Arc<[f64]>> {
        beta.check_ranges(&self.params)?;
        for (u, _) in beta.iter() {
            if u >= g.vertex_count() {
                return Err(Error::VertexOutOfRange(u));
            }
        }
        if !g.is_live(v) {
            return Err(Error::VertexRemoved(v));
        }
        if beta.is_pinned(v) {
            return Err(Error::VertexPinned(v));
        }
        self.dist_rec(g, v, beta, k.k())
    }

    fn dist_rec(&mut self, g: &Graph, v: u32, beta: &ConstraintSet, k: u32) -> Result<Arc<[f64]>> {
        let key = if self.memo_enabled {
            let key = self.memo_key(g, v, beta, k);
            self.lookups += 1;
            if let Some(hit) = self.memo.get(&key) {
                self.hits += 1;
                return Ok(Arc::clone(hit));
            }
            Some(key)
        } else {
            None
        };
        let dist = self.compute_dist(g, v, beta, k)?;
        if let Some(key) = key {
            self.memo.insert(key, Arc::clone(&dist));
        }
        Ok(dist)
    }

    fn memo_key(&self, g: &Graph, v: u32, beta: &ConstraintSet, k: u32) -> MemoKey {
        let a = self.params.a();
        let pins = beta
            .iter()
            .filter(|&(u, _)| g.neighbors(u).next().is_some())
            .map(|(u, n)| (u, if n <= a { 0 } else { n }))
            .collect();
        MemoKey {
            removed: g.removed_mask_words(),
            target: v,
            pins,
            k,
        }
    }

    fn compute_dist(
        &mut self,
        g: &Graph,
        v: u32,
        beta: &ConstraintSet,
        k: u32,
    ) -> Result<Arc<[f64]>> {
        self.work += 1;
        if let Some(limit) = self.work_budget {
            if self.work > limit {
                return Err(Error::BudgetExceeded(format!(
                    "distribution computations exceeded the budget of {limit}"
                )));
            }
        }
        let params = self.params;
        let cap = params.cap();
        let len = cap as usize + 1;
        if beta.has_conflicting_pair(g, &params) {
            return Ok(vec![0.0; len].into());
        }
        let ecap = EffectiveCap::for_vertex(g, v, beta);
        if k == 0 {
            let top = ecap.max_value(&params);
            let uniform = 1.0 / f64::from(top + 1);
            let mut dist = vec![0.0; len];
            for slot in dist.iter_mut().take(top as usize + 1) {
                *slot = uniform;
            }
            return Ok(dist.into());
        }

        let children: Vec<u32> = g.neighbors(v).filter(|&u| !beta.is_pinned(u)).collect();
        let reduced = g.remove_vertex(v)?;

        // Every table entry is read from its own recursive estimate of the
        // child's distribution under the prefix pins. With memoization on,
        // the repeated queries for one prefix collapse into cache hits, so
        // the cost matches sharing the distribution across the slice; with
        // memoization off the recursion pays its full per-entry price.
        // Prefixes through a zero-probability value are dropped, which the
        // evaluator reads back as zero.
        let mut levels: Vec<HashMap<Box<[u16]>, f64>> = Vec::with_capacity(children.len());
        let mut parents: Vec<(Vec<u16>, ConstraintSet)> = vec![(Vec::new(), beta.clone())];
        for (idx, &child) in children.iter().enumerate() {
            let mut level = HashMap::new();
            let mut next_parents = Vec::new();
            for (prefix, pins) in &parents {
                for value in 0..=cap {
                    let p = self.dist_rec(&reduced, child, pins, k - 1)?[value as usize];
                    if p == 0.0 {
                        continue;
                    }
                    let mut extended = prefix.clone();
                    extended.push(value as u16);
                    level.insert(extended.clone().into_boxed_slice(), p);
                    if idx + 1 < children.len() {
                        next_parents.push((extended, pins.with_pin(child, value)));
                    }
                }
            }
            levels.push(level);
            parents = next_parents;
        }
        let table = MarginalTable::from_levels(&params, levels)?;
        Ok(table.f_dist(ecap).into())
    }
}

/// Smallest recursion depth that pushes the per-marginal error `c^k` below
/// `1/((cap+1)·m²)` — small enough that every telescoping factor is off by
/// at most a `1/m²` relative margin. At least 1; undefined without a
/// contraction certificate (`c < 1`).
pub fn choose_depth(m: usize, params: &Params, c: &ContractionBound) -> Result<DepthBudget> {
    let c = c.value();
    if c >= 1.0 {
        return Err(Error::InvalidParams(format!(
            "no contraction certificate: gradient bound {c} is not below 1"
        )));
    }
    if c <= 0.0 {
        return Ok(DepthBudget::new(1));
    }
    let goal = f64::from(params.cap() + 1) * (m as f64).powi(2);
    // Nudge below the ceiling so exact integer ratios (e.g. ln 16 / ln 2)
    // don't round up through float error.
    let k = (goal.ln() / (1.0 / c).ln() - 1e-9).ceil().max(1.0);
    Ok(DepthBudget::new(k as u32))
}
