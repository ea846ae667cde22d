//! From counting to volume: lattice sandwich bounds that bracket the
//! polytope volume at grid scale, analytic and Monte Carlo oracles for the
//! one- and two-vertex cases, and the end-to-end estimator that discretizes
//! a real restriction ratio, runs the counting pipeline, and rescales.

use num::bigint::BigUint;
use num::traits::{One, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::counting::{choose_depth, Approximator, DepthBudget, LogEstimate};
use crate::decay::{gradient_bound, ContractionBound};
use crate::error::{Error, Result};
use crate::graph::{ConstraintSet, Graph};
use crate::lattice::{exact_count_with_budget, BigCount, Params, DEFAULT_BUDGET_BITS};

/// Grid resolution and restriction level for volume work.
///
/// Unlike [`Params`], this allows the boundary ratio `2A = N`: the counting
/// theory needs `2A < N`, but the sandwich counts and the polytope itself
/// remain perfectly well defined at one half.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct GridParams {
    n: u32,
    a: u32,
}

impl GridParams {
    pub fn new(n: u32, a: u32) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidParams("grid resolution must be positive".into()));
        }
        if 2 * a > n {
            return Err(Error::InvalidParams(format!(
                "restriction level {a} exceeds half the grid resolution {n}"
            )));
        }
        Ok(GridParams { n, a })
    }

    /// Discretizes a real ratio in `[0, 0.5]` to `A = round(alpha·N)`.
    pub fn from_alpha(n: u32, alpha: f64) -> Result<Self> {
        if !(0.0..=0.5).contains(&alpha) {
            return Err(Error::InvalidParams(format!(
                "restriction ratio must lie in [0, 0.5], got {alpha}"
            )));
        }
        Self::new(n, (alpha * f64::from(n)).round() as u32)
    }

    pub fn n(&self) -> u32 {
        self.n
    }

    pub fn a(&self) -> u32 {
        self.a
    }

    pub fn cap(&self) -> u32 {
        self.n - self.a
    }

    pub fn alpha(&self) -> f64 {
        f64::from(self.a) / f64::from(self.n)
    }
}

impl From<Params> for GridParams {
    fn from(p: Params) -> Self {
        GridParams { n: p.n(), a: p.a() }
    }
}

/// Per-vertex upper bounds `x_i ≤ β_i` (one entry per live vertex in
/// ascending index order), each within `[A, cap]`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct UpperBoundSet {
    bounds: Vec<u32>,
}

impl UpperBoundSet {
    pub fn new(bounds: Vec<u32>, grid: &GridParams) -> Result<Self> {
        for &b in &bounds {
            if b < grid.a() || b > grid.cap() {
                return Err(Error::InvalidParams(format!(
                    "vertex bound {b} outside [{}, {}]",
                    grid.a(),
                    grid.cap()
                )));
            }
        }
        Ok(UpperBoundSet { bounds })
    }

    /// The unrestricted set: every bound at `cap`, where the upper count
    /// coincides with the plain lattice count.
    pub fn full(grid: &GridParams, m: usize) -> Self {
        UpperBoundSet {
            bounds: vec![grid.cap(); m],
        }
    }

    pub fn len(&self) -> usize {
        self.bounds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bounds.is_empty()
    }

    pub fn bounds(&self) -> &[u32] {
        &self.bounds
    }
}

/// Lattice counts bracketing the polytope volume at grid scale, with the
/// certified fraction of the upper count that the volume must reach.
#[derive(Clone, Debug)]
pub struct VolumeSandwich {
    lower_count: BigCount,
    upper_count: BigCount,
    guaranteed_lower: f64,
}

impl VolumeSandwich {
    pub fn lower_count(&self) -> &BigCount {
        &self.lower_count
    }

    pub fn upper_count(&self) -> &BigCount {
        &self.upper_count
    }

    pub fn guaranteed_lower(&self) -> f64 {
        self.guaranteed_lower
    }
}

/// Number of lattice points with `0 ≤ x_i ≤ β_i` and `x_u + x_v ≤ N` on
/// every live edge. With all bounds at `cap` this is the plain count of
/// restricted relaxed independent sets.
pub fn count_upper(g: &Graph, grid: &GridParams, bounds: &UpperBoundSet) -> Result<BigCount> {
    box_count(g, bounds.bounds(), grid.n())
}

/// Number of lattice points with `0 ≤ x_i ≤ β_i − 1` and `x_u + x_v ≤ N − 2`
/// on every live edge: each such point's unit cube lies inside the polytope,
/// so this count is a volume lower bound at grid scale.
pub fn count_lower(g: &Graph, grid: &GridParams, bounds: &UpperBoundSet) -> Result<BigCount> {
    if bounds.bounds().contains(&0) {
        return Ok(BigCount::zero());
    }
    if grid.n() < 2 && g.edge_count() > 0 {
        return Ok(BigCount::zero());
    }
    let shrunk: Vec<u32> = bounds.bounds().iter().map(|&b| b - 1).collect();
    box_count(g, &shrunk, grid.n().saturating_sub(2))
}

/// Assembles both counts and the certified lower fraction
/// `max(0, 1 − m/A)·|upper|`: at least that share of the upper-count
/// boxes is guaranteed to lie fully inside the polytope.
pub fn sandwich(g: &Graph, grid: &GridParams, bounds: &UpperBoundSet) -> Result<VolumeSandwich> {
    let lower_count = count_lower(g, grid, bounds)?;
    let upper_count = count_upper(g, grid, bounds)?;
    let m = g.live_count() as f64;
    let guaranteed_lower = if grid.a() == 0 {
        0.0
    } else {
        (1.0 - m / f64::from(grid.a())).max(0.0) * upper_count.to_f64()
    };
    Ok(VolumeSandwich {
        lower_count,
        upper_count,
        guaranteed_lower,
    })
}

fn box_count(g: &Graph, live_bounds: &[u32], edge_budget: u32) -> Result<BigCount> {
    let live: Vec<u32> = g.live_vertices().collect();
    if live.len() != live_bounds.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} bounds for {} live vertices",
            live_bounds.len(),
            live.len()
        )));
    }
    let bits: f64 = live_bounds.iter().map(|&b| f64::from(b + 1).log2()).sum();
    if bits > DEFAULT_BUDGET_BITS {
        return Err(Error::BudgetExceeded(format!(
            "bounded-box enumeration needs {bits:.1} bits, budget is {DEFAULT_BUDGET_BITS}"
        )));
    }
    if live.is_empty() {
        return Ok(BigCount(BigUint::one()));
    }

    let mut by_vertex = vec![0u32; g.vertex_count() as usize];
    for (&v, &b) in live.iter().zip(live_bounds) {
        by_vertex[v as usize] = b;
    }

    let first = live[0];
    let template: Vec<Option<u32>> = vec![None; g.vertex_count() as usize];
    let total = (0..=by_vertex[first as usize])
        .into_par_iter()
        .map(|val| {
            let mut value = template.clone();
            value[first as usize] = Some(val);
            box_rec(g, &by_vertex, edge_budget, &mut value, &live, 1)
        })
        .reduce(BigUint::zero, |a, b| a + b);
    Ok(BigCount(total))
}

fn box_rec(
    g: &Graph,
    by_vertex: &[u32],
    edge_budget: u32,
    value: &mut Vec<Option<u32>>,
    live: &[u32],
    idx: usize,
) -> BigUint {
    if idx == live.len() {
        return BigUint::one();
    }
    let v = live[idx];
    let mut ub = by_vertex[v as usize];
    for u in g.neighbors(v) {
        if let Some(x) = value[u as usize] {
            match edge_budget.checked_sub(x) {
                Some(room) => ub = ub.min(room),
                None => return BigUint::zero(),
            }
        }
    }
    if idx + 1 == live.len() {
        return BigUint::from(u64::from(ub) + 1);
    }
    let mut acc = BigUint::zero();
    for val in 0..=ub {
        value[v as usize] = Some(val);
        acc += box_rec(g, by_vertex, edge_budget, value, live, idx + 1);
    }
    value[v as usize] = None;
    acc
}

/// Closed-form unit-scale volume for the two topologies where it is a
/// one-liner: a single vertex (an interval of length `1 − alpha`) and a
/// single edge (the square minus the corner cut off by `x + y ≤ 1`).
pub fn exact_volume_small(g: &Graph, alpha: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::InvalidParams(format!(
            "restriction ratio must lie in [0, 1], got {alpha}"
        )));
    }
    let side = 1.0 - alpha;
    match (g.live_count(), g.edge_count()) {
        (1, 0) => Ok(side),
        (2, 1) => {
            let overhang = (1.0 - 2.0 * alpha).max(0.0);
            Ok(side * side - overhang * overhang / 2.0)
        }
        _ => Err(Error::UnsupportedTopology(format!(
            "closed-form volume covers one vertex or one edge, not {} vertices / {} edges",
            g.live_count(),
            g.edge_count()
        ))),
    }
}

const MC_SUBSTREAMS: u64 = 16;

/// Hit-or-miss volume estimate: uniform points in `[0, 1−alpha]^m`, counted
/// feasible when every live edge satisfies `x_u + x_v ≤ 1`, scaled by the
/// box volume. Returns the estimate and its binomial standard error.
/// Deterministic in `seed` regardless of thread count: samples are split
/// over fixed generator substreams and tallied in substream order.
pub fn mc_volume(g: &Graph, alpha: f64, samples: u64, seed: u64) -> Result<(f64, f64)> {
    if samples == 0 {
        return Err(Error::InvalidParams("sample count must be positive".into()));
    }
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::InvalidParams(format!(
            "restriction ratio must lie in [0, 1], got {alpha}"
        )));
    }
    let live: Vec<u32> = g.live_vertices().collect();
    let mut slot = vec![usize::MAX; g.vertex_count() as usize];
    for (i, &v) in live.iter().enumerate() {
        slot[v as usize] = i;
    }
    let edges: Vec<(usize, usize)> = g
        .edges()
        .iter()
        .map(|&(u, v)| (slot[u as usize], slot[v as usize]))
        .collect();
    let side = 1.0 - alpha;

    let hits: u64 = (0..MC_SUBSTREAMS)
        .into_par_iter()
        .map(|stream| {
            let quota = samples / MC_SUBSTREAMS + u64::from(stream < samples % MC_SUBSTREAMS);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(stream);
            let mut point = vec![0.0f64; live.len()];
            let mut hits = 0u64;
            for _ in 0..quota {
                for coord in point.iter_mut() {
                    *coord = rng.random_range(0.0..=1.0) * side;
                }
                if edges.iter().all(|&(u, v)| point[u] + point[v] <= 1.0) {
                    hits += 1;
                }
            }
            hits
        })
        .collect::<Vec<_>>()
        .iter()
        .sum();

    let box_volume = side.powi(live.len() as i32);
    let p = hits as f64 / samples as f64;
    let estimate = p * box_volume;
    let stderr = (p * (1.0 - p) / samples as f64).sqrt() * box_volume;
    Ok((estimate, stderr))
}

/// Conditions under which a volume estimate is weaker than the headline
/// guarantee.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum VolumeWarning {
    /// The gradient bound at these parameters is not below 1, so depth-`k`
    /// accuracy is not certified.
    NoContractionGuarantee,
    /// The grid resolution is below the `m²/alpha` setting the guarantee
    /// assumes, so discretization error may dominate.
    DiscretizationBelowGuarantee,
}

impl std::fmt::Display for VolumeWarning {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            VolumeWarning::NoContractionGuarantee => write!(f, "no contraction guarantee"),
            VolumeWarning::DiscretizationBelowGuarantee => {
                write!(f, "discretization error not at paper guarantee")
            }
        }
    }
}

/// One volume-estimation run: the effective parameters, what certified it,
/// and the results in log space.
#[derive(Clone, Debug)]
pub struct VolumeRun {
    params: Params,
    depth: Option<DepthBudget>,
    contraction: Option<ContractionBound>,
    log_z: LogEstimate,
    log_volume: LogEstimate,
    warnings: Vec<VolumeWarning>,
}

impl VolumeRun {
    pub fn params(&self) -> &Params {
        &self.params
    }

    /// Recursion depth used; absent on the exact-count path.
    pub fn depth(&self) -> Option<DepthBudget> {
        self.depth
    }

    /// Gradient bound at the effective parameters; absent on the exact path.
    pub fn contraction(&self) -> Option<ContractionBound> {
        self.contraction
    }

    pub fn log_z(&self) -> LogEstimate {
        self.log_z
    }

    pub fn log_volume(&self) -> LogEstimate {
        self.log_volume
    }

    /// Linear-space volume estimate when representable.
    pub fn estimate(&self) -> Option<f64> {
        self.log_volume.value()
    }

    pub fn warnings(&self) -> &[VolumeWarning] {
        &self.warnings
    }
}

const DEFAULT_MIN_RESOLUTION: u32 = 64;
const DEFAULT_MAX_RESOLUTION: u32 = 128;

fn certified_resolution(m: usize, alpha: f64) -> u32 {
    ((m * m) as f64 / alpha).round() as u32
}

/// Default grid resolution: the guarantee's `m²/alpha` setting, clamped to a
/// desk-scale window, then nudged upward until the discretized restriction
/// level is valid (`2A < N`).
fn default_resolution(m: usize, alpha: f64) -> Result<u32> {
    let mut n = certified_resolution(m, alpha).clamp(DEFAULT_MIN_RESOLUTION, DEFAULT_MAX_RESOLUTION);
    for _ in 0..1000 {
        if Params::new(n, (alpha * f64::from(n)).round() as u32).is_ok() {
            return Ok(n);
        }
        n += 1;
    }
    Err(Error::InvalidParams(format!(
        "no valid grid resolution near {n} for ratio {alpha}"
    )))
}

fn resolve_params(g: &Graph, alpha: f64, n: Option<u32>) -> Result<(Params, Vec<VolumeWarning>)> {
    if g.live_count() == 0 {
        return Err(Error::InvalidParams(
            "volume estimation needs at least one live vertex".into(),
        ));
    }
    if !(alpha > 0.0 && alpha < 0.5) {
        return Err(Error::InvalidParams(format!(
            "restriction ratio must lie in (0, 0.5) for estimation, got {alpha}"
        )));
    }
    let m = g.live_count();
    let n = match n {
        Some(n) => n,
        None => default_resolution(m, alpha)?,
    };
    let params = Params::new(n, (alpha * f64::from(n)).round() as u32)?;
    let mut warnings = Vec::new();
    if n < certified_resolution(m, alpha) {
        warnings.push(VolumeWarning::DiscretizationBelowGuarantee);
    }
    Ok((params, warnings))
}

/// Without a contraction certificate the depth rule is undefined; fall back
/// to unrolling the graph's own scale, which is exact on trees at desk size.
fn fallback_depth(m: usize) -> DepthBudget {
    DepthBudget::new((m.saturating_sub(1)).clamp(1, 6) as u32)
}

/// End-to-end volume estimate: discretize `alpha`, estimate the count with
/// the depth-bounded recursion, divide by `N^m` in log space.
///
/// Defaults: `N` per [`default_resolution`], depth per [`choose_depth`] when
/// the gradient bound certifies contraction (with a warning and a bounded
/// fallback depth otherwise).
pub fn volume_estimate(
    g: &Graph,
    alpha: f64,
    n: Option<u32>,
    k: Option<DepthBudget>,
) -> Result<VolumeRun> {
    let (params, mut warnings) = resolve_params(g, alpha, n)?;
    let m = g.live_count();
    let c = gradient_bound(g.max_degree(), params.alpha())?;
    if !c.is_contracting() {
        warnings.push(VolumeWarning::NoContractionGuarantee);
    }
    let depth = match k {
        Some(k) => k,
        None if c.is_contracting() => choose_depth(m, &params, &c)?,
        None => fallback_depth(m),
    };
    let mut approximator = Approximator::new(params);
    let log_z = approximator.log_z(g, depth)?;
    let log_volume =
        LogEstimate::from_log(log_z.log_value() - m as f64 * f64::from(params.n()).ln());
    Ok(VolumeRun {
        params,
        depth: Some(depth),
        contraction: Some(c),
        log_z,
        log_volume,
        warnings,
    })
}

/// Same rescaling with the count taken exactly (subject to the enumeration
/// budget) instead of estimated — the reference path for convergence checks.
pub fn volume_estimate_exact(g: &Graph, alpha: f64, n: Option<u32>) -> Result<VolumeRun> {
    let (params, warnings) = resolve_params(g, alpha, n)?;
    let m = g.live_count();
    let count = exact_count_with_budget(g, &params, &ConstraintSet::empty(), DEFAULT_BUDGET_BITS)?;
    let log_z = LogEstimate::from_log(count.ln());
    let log_volume =
        LogEstimate::from_log(log_z.log_value() - m as f64 * f64::from(params.n()).ln());
    Ok(VolumeRun {
        params,
        depth: None,
        contraction: None,
        log_z,
        log_volume,
        warnings,
    })
}
