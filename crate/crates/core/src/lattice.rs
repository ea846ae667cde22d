//! Integer-lattice discretization of the restricted polytope, and exact
//! enumeration of lattice points on small instances.
//!
//! A lattice point assigns each live vertex a value in `[0, cap]` subject to
//! `x_u + x_v ≤ N` across every live edge; pinned vertices are frozen at
//! their pinned value. Exact counts are big integers and serve as the ground
//! truth that every approximate path in this crate is tested against.

use num::bigint::BigUint;
use num::rational::BigRational;
use num::traits::{One, ToPrimitive, Zero};
use num::BigInt;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::graph::{ConstraintSet, Graph};

/// Discretization parameters: lattice scale `N` and restriction level `A`.
///
/// `cap = N − A` is the largest value any vertex may take; `2A < N` keeps the
/// restriction below the trivial `α = 1/2` regime. The effective restriction
/// ratio is `alpha() = A/N`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Params {
    n: u32,
    a: u32,
}

impl Params {
    /// Largest lattice scale accepted; prefix coordinates are stored as
    /// `u16`, and nothing at desk scale comes near this.
    pub const MAX_N: u32 = 60_000;

    pub fn new(n: u32, a: u32) -> Result<Self> {
        if n == 0 || n > Self::MAX_N {
            return Err(Error::InvalidParams(format!(
                "N must be in [1, {}], got {n}",
                Self::MAX_N
            )));
        }
        if 2 * a >= n {
            return Err(Error::InvalidParams(format!(
                "need 2A < N, got A = {a}, N = {n}"
            )));
        }
        Ok(Params { n, a })
    }

    /// Discretizes a real restriction ratio: `A = round(alpha·N)`, clamped to
    /// the largest value satisfying `2A < N` (rounding can otherwise land on
    /// `2A = N` for `alpha` near one half).
    pub fn from_alpha(n: u32, alpha: f64) -> Result<Self> {
        if !(0.0..0.5).contains(&alpha) {
            return Err(Error::InvalidParams(format!(
                "alpha must lie in [0, 0.5), got {alpha}"
            )));
        }
        let rounded = (alpha * n as f64).round() as u32;
        let max_a = (n.saturating_sub(1)) / 2;
        Params::new(n, rounded.min(max_a))
    }

    pub fn n(&self) -> u32 {
        self.n
    }

    pub fn a(&self) -> u32 {
        self.a
    }

    /// Per-vertex value cap `N − A`.
    pub fn cap(&self) -> u32 {
        self.n - self.a
    }

    /// Effective restriction ratio `A / N`.
    pub fn alpha(&self) -> f64 {
        self.a as f64 / self.n as f64
    }
}

/// Value range available to a neighbor of a vertex held at `n`:
/// `[0, min(N − n, cap)]`.
pub fn s_set(n: u32, params: &Params) -> Result<std::ops::RangeInclusive<u32>> {
    if n > params.cap() {
        return Err(Error::ValueOutOfRange {
            value: n,
            max: params.cap(),
        });
    }
    Ok(0..=(params.n() - n).min(params.cap()))
}

/// Checks whether `x` (one entry per live vertex, ascending index order) is a
/// lattice point: every entry in `[0, cap]` and every live edge sum ≤ `N`.
pub fn is_feasible(g: &Graph, params: &Params, x: &[u32]) -> Result<bool> {
    let live: Vec<u32> = g.live_vertices().collect();
    if live.len() != x.len() {
        return Err(Error::ShapeMismatch(format!(
            "expected {} entries (one per live vertex), got {}",
            live.len(),
            x.len()
        )));
    }
    let mut value = vec![0u32; g.vertex_count() as usize];
    for (&v, &xv) in live.iter().zip(x) {
        if xv > params.cap() {
            return Ok(false);
        }
        value[v as usize] = xv;
    }
    for (u, v) in g.edges() {
        if value[u as usize] + value[v as usize] > params.n() {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Exact lattice-point count as an arbitrary-precision integer.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub struct BigCount(pub BigUint);

impl BigCount {
    pub fn zero() -> Self {
        BigCount(BigUint::zero())
    }

    pub fn is_zero(&self) -> bool {
        self.0.is_zero()
    }

    /// Nearest `f64` (infinite if out of range — callers at desk scale never
    /// see that).
    pub fn to_f64(&self) -> f64 {
        self.0.to_f64().unwrap_or(f64::INFINITY)
    }

    /// Natural log; `-∞` for a zero count.
    pub fn ln(&self) -> f64 {
        if self.is_zero() {
            f64::NEG_INFINITY
        } else {
            // For counts beyond f64 range, fall back to bit-length scaling.
            let f = self.to_f64();
            if f.is_finite() {
                f.ln()
            } else {
                let bits = self.0.bits();
                let top = &self.0 >> (bits.saturating_sub(53));
                top.to_f64().unwrap_or(1.0).ln() + (bits.saturating_sub(53)) as f64 * 2f64.ln()
            }
        }
    }
}

impl From<u64> for BigCount {
    fn from(v: u64) -> Self {
        BigCount(BigUint::from(v))
    }
}

impl std::fmt::Display for BigCount {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        self.0.fmt(f)
    }
}

/// An exact marginal as a ratio of lattice counts, kept unreduced so callers
/// can compare cross-multiplied without precision loss.
///
/// The `0/0` case (infeasible conditioning) is defined to have value zero.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ExactMarginal {
    pub numerator: BigCount,
    pub denominator: BigCount,
}

impl ExactMarginal {
    pub fn value_f64(&self) -> f64 {
        if self.denominator.is_zero() {
            0.0
        } else {
            self.numerator.to_f64() / self.denominator.to_f64()
        }
    }

    pub fn to_rational(&self) -> BigRational {
        if self.denominator.is_zero() {
            BigRational::zero()
        } else {
            BigRational::new(
                BigInt::from(self.numerator.0.clone()),
                BigInt::from(self.denominator.0.clone()),
            )
        }
    }

    /// Exact equality against another ratio, cross-multiplied.
    pub fn eq_ratio(&self, other: &ExactMarginal) -> bool {
        if self.denominator.is_zero() || other.denominator.is_zero() {
            return self.value_f64() == other.value_f64();
        }
        &self.numerator.0 * &other.denominator.0 == &other.numerator.0 * &self.denominator.0
    }
}

/// Default enumeration guard: `free_vertices · log2(cap+1)` may not exceed
/// this many bits (≈16M leaves).
pub const DEFAULT_BUDGET_BITS: f64 = 24.0;

/// Exact count of lattice points consistent with `beta`, using the default
/// enumeration budget.
///
/// Pins on removed vertices are ignored; a pin pair violating an edge makes
/// the count zero (not an error). Pin values above `cap` are an error.
pub fn exact_count(g: &Graph, params: &Params, beta: &ConstraintSet) -> Result<BigCount> {
    exact_count_with_budget(g, params, beta, DEFAULT_BUDGET_BITS)
}

/// `exact_count` with an explicit budget wall in bits of search space.
pub fn exact_count_with_budget(
    g: &Graph,
    params: &Params,
    beta: &ConstraintSet,
    budget_bits: f64,
) -> Result<BigCount> {
    beta.check_ranges(params)?;
    if beta.has_conflicting_pair(g, params) {
        return Ok(BigCount::zero());
    }
    let free: Vec<u32> = g.live_vertices().filter(|&v| !beta.is_pinned(v)).collect();
    let bits = free.len() as f64 * ((params.cap() + 1) as f64).log2();
    if bits > budget_bits {
        return Err(Error::BudgetExceeded(format!(
            "{} free vertices at cap {} need {:.1} bits, budget is {:.1}",
            free.len(),
            params.cap(),
            bits,
            budget_bits
        )));
    }

    let mut value: Vec<Option<u32>> = vec![None; g.vertex_count() as usize];
    for (v, n) in beta.iter() {
        if g.is_live(v) {
            value[v as usize] = Some(n);
        }
    }
    if free.is_empty() {
        return Ok(BigCount(BigUint::one()));
    }

    // Split the first free vertex across workers; integer sums commute, so
    // the result is independent of scheduling.
    let ub0 = assign_upper_bound(g, params, &value, free[0]);
    let total = (0..=ub0)
        .into_par_iter()
        .map(|val| {
            let mut local = value.clone();
            local[free[0] as usize] = Some(val);
            count_rec(g, params, &mut local, &free, 1)
        })
        .reduce(BigUint::zero, |a, b| a + b);
    Ok(BigCount(total))
}

/// Largest value assignable to `v` given already-fixed neighbors.
fn assign_upper_bound(g: &Graph, params: &Params, value: &[Option<u32>], v: u32) -> u32 {
    let mut ub = params.cap();
    for u in g.neighbors(v) {
        if let Some(x) = value[u as usize] {
            ub = ub.min(params.n() - x); // x ≤ cap ≤ N, so no underflow
        }
    }
    ub
}

fn count_rec(
    g: &Graph,
    params: &Params,
    value: &mut Vec<Option<u32>>,
    free: &[u32],
    idx: usize,
) -> BigUint {
    if idx == free.len() {
        return BigUint::one();
    }
    let v = free[idx];
    let ub = assign_upper_bound(g, params, value, v);
    if idx + 1 == free.len() {
        return BigUint::from(ub as u64 + 1);
    }
    let mut acc = BigUint::zero();
    for val in 0..=ub {
        value[v as usize] = Some(val);
        acc += count_rec(g, params, value, free, idx + 1);
    }
    value[v as usize] = None;
    acc
}

/// Exact Gibbs marginal of `v ← n` under `beta`: the fraction of
/// `beta`-consistent lattice points that put `v` at `n`.
pub fn exact_marginal(
    g: &Graph,
    params: &Params,
    v: u32,
    n: u32,
    beta: &ConstraintSet,
) -> Result<ExactMarginal> {
    if !g.is_live(v) {
        return Err(Error::VertexRemoved(v));
    }
    if beta.is_pinned(v) {
        return Err(Error::VertexPinned(v));
    }
    if n > params.cap() {
        return Err(Error::ValueOutOfRange {
            value: n,
            max: params.cap(),
        });
    }
    let numerator = exact_count(g, params, &beta.with_pin(v, n))?;
    let denominator = exact_count(g, params, beta)?;
    Ok(ExactMarginal {
        numerator,
        denominator,
    })
}

/// All marginal numerators of `v` at once, plus their common denominator.
///
/// Since `v` is free, the per-value counts partition the `beta`-consistent
/// points, so the denominator is exactly the numerator sum.
pub fn exact_marginal_distribution(
    g: &Graph,
    params: &Params,
    v: u32,
    beta: &ConstraintSet,
) -> Result<(Vec<BigCount>, BigCount)> {
    if !g.is_live(v) {
        return Err(Error::VertexRemoved(v));
    }
    if beta.is_pinned(v) {
        return Err(Error::VertexPinned(v));
    }
    let numerators = (0..=params.cap())
        .into_par_iter()
        .map(|n| exact_count(g, params, &beta.with_pin(v, n)))
        .collect::<Result<Vec<_>>>()?;
    let mut total = BigUint::zero();
    for c in &numerators {
        total += &c.0;
    }
    Ok((numerators, BigCount(total)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    fn params(n: u32, a: u32) -> Params {
        Params::new(n, a).unwrap()
    }

    /// Independent oracle: odometer enumeration of the full product space,
    /// checking every constraint only at the leaf. No pruning, no recursion —
    /// deliberately nothing in common with `exact_count`'s search.
    fn oracle_count(g: &Graph, params: &Params, beta: &ConstraintSet) -> u64 {
        let live: Vec<u32> = g.live_vertices().collect();
        let cap = params.cap();
        let mut digits = vec![0u32; live.len()];
        let mut count = 0u64;
        'outer: loop {
            let feasible = {
                let mut value = vec![0u32; g.vertex_count() as usize];
                for (&v, &d) in live.iter().zip(&digits) {
                    value[v as usize] = d;
                }
                let mut ok = true;
                for (v, n) in beta.iter() {
                    if g.is_live(v) && value[v as usize] != n {
                        ok = false;
                    }
                }
                if ok {
                    for (u, v) in g.edges() {
                        if value[u as usize] + value[v as usize] > params.n() {
                            ok = false;
                            break;
                        }
                    }
                }
                ok
            };
            if feasible {
                count += 1;
            }
            for d in &mut digits {
                if *d < cap {
                    *d += 1;
                    continue 'outer;
                }
                *d = 0;
            }
            break;
        }
        count
    }

    #[test]
    fn params_validation() {
        assert!(Params::new(4, 1).is_ok());
        assert!(Params::new(4, 2).is_err(), "2A = N rejected");
        assert!(Params::new(0, 0).is_err());
        assert!(Params::new(5, 0).is_ok(), "A = 0 is the unrestricted case");
        assert_eq!(params(4, 1).cap(), 3);
        assert!((params(4, 1).alpha() - 0.25).abs() < 1e-15);
    }

    #[test]
    fn from_alpha_rounds_and_clamps() {
        assert_eq!(Params::from_alpha(40, 0.25).unwrap().a(), 10);
        // round(0.49·10) = 5 would hit 2A = N; clamps to 4
        assert_eq!(Params::from_alpha(10, 0.49).unwrap().a(), 4);
        assert_eq!(Params::from_alpha(20, 0.49).unwrap().a(), 9);
        assert!(Params::from_alpha(10, 0.5).is_err());
    }

    #[test]
    fn s_set_examples() {
        let p = params(4, 1);
        assert_eq!(s_set(0, &p).unwrap(), 0..=3);
        assert_eq!(s_set(2, &p).unwrap(), 0..=2);
        assert_eq!(s_set(3, &p).unwrap(), 0..=1);
        assert!(s_set(4, &p).is_err());
    }

    #[test]
    fn feasibility_examples() {
        let g = Graph::from_edges(2, &[(0, 1)]).unwrap();
        let p = params(4, 1);
        assert!(is_feasible(&g, &p, &[1, 3]).unwrap());
        assert!(!is_feasible(&g, &p, &[2, 3]).unwrap(), "edge sum 5 > 4");
        assert!(!is_feasible(&g, &p, &[0, 4]).unwrap(), "entry above cap");
        assert!(is_feasible(&g, &p, &[3, 1]).unwrap());
        assert!(matches!(
            is_feasible(&g, &p, &[1]),
            Err(Error::ShapeMismatch(_))
        ));
    }

    #[test]
    fn single_edge_counts_frozen() {
        let g = Graph::from_edges(2, &[(0, 1)]).unwrap();
        let p = params(4, 1);
        let beta = ConstraintSet::empty();
        // 16 pairs in [0,3]^2 minus the three with sum > 4.
        assert_eq!(oracle_count(&g, &p, &beta), 13);
        assert_eq!(exact_count(&g, &p, &beta).unwrap(), BigCount::from(13));

        let pinned = beta.with_pin(0, 3);
        assert_eq!(oracle_count(&g, &p, &pinned), 2);
        assert_eq!(exact_count(&g, &p, &pinned).unwrap(), BigCount::from(2));
    }

    #[test]
    fn single_vertex_count() {
        let g = Graph::from_edges(1, &[]).unwrap();
        let p = params(4, 1);
        assert_eq!(
            exact_count(&g, &p, &ConstraintSet::empty()).unwrap(),
            BigCount::from(4)
        );
    }

    #[test]
    fn conflicting_pins_count_zero() {
        let g = Graph::from_edges(2, &[(0, 1)]).unwrap();
        let p = params(4, 1);
        let beta = ConstraintSet::empty().with_pin(0, 2).with_pin(1, 3);
        assert_eq!(exact_count(&g, &p, &beta).unwrap(), BigCount::zero());
    }

    #[test]
    fn out_of_range_pin_is_an_error() {
        let g = Graph::from_edges(2, &[(0, 1)]).unwrap();
        let p = params(4, 1);
        let beta = ConstraintSet::empty().with_pin(0, 4);
        assert!(matches!(
            exact_count(&g, &p, &beta),
            Err(Error::ValueOutOfRange { value: 4, max: 3 })
        ));
    }

    #[test]
    fn budget_guard_trips() {
        let g = Graph::path(30);
        let p = params(16, 4);
        assert!(matches!(
            exact_count(&g, &p, &ConstraintSet::empty()),
            Err(Error::BudgetExceeded(_))
        ));
    }

    #[test]
    fn marginal_examples_frozen() {
        let g = Graph::from_edges(2, &[(0, 1)]).unwrap();
        let p = params(4, 1);
        let beta = ConstraintSet::empty();
        let m0 = exact_marginal(&g, &p, 0, 0, &beta).unwrap();
        assert_eq!(m0.numerator, BigCount::from(4));
        assert_eq!(m0.denominator, BigCount::from(13));
        let m3 = exact_marginal(&g, &p, 0, 3, &beta).unwrap();
        assert_eq!(m3.numerator, BigCount::from(2));
        assert!((m3.value_f64() - 2.0 / 13.0).abs() < 1e-15);
    }

    #[test]
    fn marginal_of_isolated_vertex_is_uniform() {
        let g = Graph::from_edges(1, &[]).unwrap();
        let p = params(4, 1);
        for n in 0..=3 {
            let m = exact_marginal(&g, &p, 0, n, &ConstraintSet::empty()).unwrap();
            assert!((m.value_f64() - 0.25).abs() < 1e-15);
        }
    }

    #[test]
    fn zero_over_zero_marginal_is_zero() {
        let g = Graph::from_edges(2, &[(0, 1)]).unwrap();
        let p = params(4, 1);
        // beta already infeasible on its own would need two pins; instead pin
        // the neighbor so high that conditioning on v←3 is impossible.
        let beta = ConstraintSet::empty().with_pin(1, 3);
        let m = exact_marginal(&g, &p, 0, 3, &beta).unwrap();
        assert!(m.numerator.is_zero());
        assert!(!m.denominator.is_zero());
        assert_eq!(m.value_f64(), 0.0);

        // Force a genuinely 0/0 case via a triangle with clashing pins.
        let t = Graph::complete(3);
        let beta = ConstraintSet::empty().with_pin(0, 3).with_pin(1, 3);
        let m = exact_marginal(&t, &p, 2, 0, &beta).unwrap();
        assert!(m.denominator.is_zero());
        assert_eq!(m.value_f64(), 0.0);
    }

    #[test]
    fn distribution_matches_individual_marginals() {
        let g = Graph::path(3);
        let p = params(6, 2);
        let beta = ConstraintSet::empty().with_pin(0, 3);
        let (nums, den) = exact_marginal_distribution(&g, &p, 1, &beta).unwrap();
        let direct_den = exact_count(&g, &p, &beta).unwrap();
        assert_eq!(den, direct_den);
        for (n, num) in nums.iter().enumerate() {
            let m = exact_marginal(&g, &p, 1, n as u32, &beta).unwrap();
            assert_eq!(&m.numerator, num);
        }
    }

    #[test]
    fn marginals_sum_to_one_and_decrease() {
        let g = Graph::path(4);
        let p = params(6, 2);
        let beta = ConstraintSet::empty();
        let (nums, den) = exact_marginal_distribution(&g, &p, 1, &beta).unwrap();
        let total: BigUint = nums.iter().map(|c| c.0.clone()).sum();
        assert_eq!(total, den.0);
        for w in nums.windows(2) {
            assert!(w[0] >= w[1], "marginals must be non-increasing in n");
        }
        // flat on [0, A]
        for n in 1..=p.a() as usize {
            assert_eq!(nums[n], nums[0]);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn pruned_count_matches_oracle(seed in 0u64..2000) {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let m = rng.random_range(1u32..=4);
            let mut edges = Vec::new();
            for u in 0..m {
                for v in (u + 1)..m {
                    if rng.random_bool(0.5) {
                        edges.push((u, v));
                    }
                }
            }
            let g = Graph::from_edges(m, &edges).unwrap();
            let p = params(6, rng.random_range(0u32..=2));
            let mut beta = ConstraintSet::empty();
            if m > 1 && rng.random_bool(0.4) {
                beta = beta.with_pin(rng.random_range(0..m), rng.random_range(0..=p.cap()));
            }
            let fast = exact_count(&g, &p, &beta).unwrap();
            let slow = oracle_count(&g, &p, &beta);
            prop_assert_eq!(fast, BigCount::from(slow));
        }

        #[test]
        fn counts_invariant_under_flat_pin_swap(seed in 0u64..1000) {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
            let m = rng.random_range(2u32..=5);
            let mut edges = Vec::new();
            for u in 0..m {
                for v in (u + 1)..m {
                    if rng.random_bool(0.5) {
                        edges.push((u, v));
                    }
                }
            }
            let g = Graph::from_edges(m, &edges).unwrap();
            let p = params(6, 2);
            let v = rng.random_range(0..m);
            let n1 = rng.random_range(0..=p.a());
            let n2 = rng.random_range(0..=p.a());
            let c1 = exact_count(&g, &p, &ConstraintSet::empty().with_pin(v, n1)).unwrap();
            let c2 = exact_count(&g, &p, &ConstraintSet::empty().with_pin(v, n2)).unwrap();
            prop_assert_eq!(c1, c2);
        }
    }
}
