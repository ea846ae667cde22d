//! Contraction certificates for the marginal recursion: a closed-form bound
//! on how strongly one recursion step damps input perturbations, the
//! restriction threshold where that bound crosses 1, and analytic /
//! finite-difference derivatives of the recursion for verifying both.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::lattice::Params;
use crate::marginals::{EffectiveCap, MarginalTable};

/// Value of the one-step gradient bound for a given slot count and
/// restriction ratio; below 1 the recursion contracts and depth-`k`
/// estimates are accurate to `c^k`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ContractionBound {
    c: f64,
}

impl ContractionBound {
    /// Wraps an externally supplied bound value (must be finite and
    /// nonnegative); [`gradient_bound`] is the usual source.
    pub fn from_value(c: f64) -> Result<Self> {
        if !(c.is_finite() && c >= 0.0) {
            return Err(Error::InvalidParams(format!(
                "a contraction bound must be a nonnegative finite real, got {c}"
            )));
        }
        Ok(ContractionBound { c })
    }

    pub fn value(&self) -> f64 {
        self.c
    }

    pub fn is_contracting(&self) -> bool {
        self.c < 1.0
    }
}

/// Restriction threshold for a maximum degree: the smallest ratio at which
/// the gradient bound stays at or below 1.
#[derive(Clone, Copy, Debug)]
pub struct AlphaThreshold {
    delta: u32,
    alpha_delta: f64,
    tol: f64,
}

impl AlphaThreshold {
    pub fn delta(&self) -> u32 {
        self.delta
    }

    pub fn value(&self) -> f64 {
        self.alpha_delta
    }

    pub fn tol(&self) -> f64 {
        self.tol
    }
}

/// Worst-case 1-norm of the recursion's gradient over valid input tables
/// with `d` child slots at restriction ratio `alpha`:
/// `2d·r·(r^d − 1)` with `r = (1−alpha)/alpha`.
pub fn gradient_bound(d: u32, alpha: f64) -> Result<ContractionBound> {
    if !(alpha > 0.0 && alpha < 0.5) {
        return Err(Error::InvalidParams(format!(
            "restriction ratio must lie in (0, 0.5), got {alpha}"
        )));
    }
    if d == 0 {
        return Ok(ContractionBound { c: 0.0 });
    }
    let r = (1.0 - alpha) / alpha;
    let c = 2.0 * f64::from(d) * r * (r.powi(d as i32) - 1.0);
    Ok(ContractionBound { c })
}

/// Smallest restriction ratio (up to `tol`) at which the gradient bound for
/// degree `delta` drops to 1, found by bisection.
///
/// The bound decreases in `alpha` on the bracket (numerically evident, not
/// proven), so the solver verifies the sign condition at both ends and fails
/// loudly instead of returning a value from a broken bracket.
pub fn alpha_threshold(delta: u32, tol: f64) -> Result<AlphaThreshold> {
    if delta < 1 {
        return Err(Error::InvalidParams(format!(
            "maximum degree must be at least 1, got {delta}"
        )));
    }
    if tol.is_nan() || tol <= 0.0 {
        return Err(Error::InvalidParams(format!(
            "tolerance must be positive, got {tol}"
        )));
    }
    let g = |alpha: f64| gradient_bound(delta, alpha).map(|b| b.c);
    let mut lo = 0.25;
    while g(lo)? <= 1.0 {
        lo /= 2.0;
        if lo < 1e-300 {
            return Err(Error::BracketFailure(format!(
                "no lower bracket end with bound above 1 for degree {delta}"
            )));
        }
    }
    let mut hi = 0.5 - 1e-12;
    if g(hi)? >= 1.0 {
        return Err(Error::BracketFailure(format!(
            "bound still at least 1 just below one half for degree {delta}"
        )));
    }
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if g(mid)? > 1.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(AlphaThreshold {
        delta,
        alpha_delta: 0.5 * (lo + hi),
        tol,
    })
}

/// Ceiling for any single partial derivative of the recursion:
/// `cap / A^(j+1)` for a value stored at slot `j` (infinite when `A = 0`,
/// where the bound is vacuous).
pub fn loose_partial_bound(params: &Params, j: usize) -> f64 {
    let a = params.a() as f64;
    if a == 0.0 {
        return f64::INFINITY;
    }
    params.cap() as f64 / a.powi(j as i32 + 1)
}

/// Sharper ceiling for partials of slot-`j` values conditioned entirely on
/// low prefixes: `(cap/A^(j+1))·((cap/A)^j − 1)`.
pub fn tighter_partial_bound(params: &Params, j: usize) -> f64 {
    let a = params.a() as f64;
    if a == 0.0 {
        return f64::INFINITY;
    }
    let ratio = params.cap() as f64 / a;
    loose_partial_bound(params, j) * (ratio.powi(j as i32) - 1.0)
}

/// Ceiling for the summed absolute partials of one slot:
/// `(2cap/A)·((cap/A)^j − 1)`.
pub fn per_slot_bound(params: &Params, j: usize) -> f64 {
    let a = params.a() as f64;
    if a == 0.0 {
        return f64::INFINITY;
    }
    let ratio = params.cap() as f64 / a;
    2.0 * ratio * (ratio.powi(j as i32) - 1.0)
}

/// Analytic partial derivative of the recursion output `f_n` with respect to
/// the single stored value at slot `j`, prefix `n̄_j`.
///
/// With `U_n` and `L` both linear in every stored value,
/// `∂f = (L·∂U − U_n·∂L)/L²` where `∂U` is the prefix-path weight times the
/// suffix-completion weight (zero unless the whole prefix fits in `S_n`) and
/// `∂L` sums the completion weights over the target values the prefix
/// permits.
pub fn analytic_partial(
    table: &MarginalTable<f64>,
    j: usize,
    prefix: &[u16],
    n: u32,
) -> Result<f64> {
    let l = table.eval_l(EffectiveCap::none());
    if l == 0.0 {
        return Err(Error::DegenerateTable(
            "normalizer is zero; the recursion has no derivative here".into(),
        ));
    }
    let u_n = table.eval_u(n)?;
    partial_with_normalizers(table, j, prefix, n, u_n, l)
}

fn partial_with_normalizers(
    table: &MarginalTable<f64>,
    j: usize,
    prefix: &[u16],
    n: u32,
    u_n: f64,
    l: f64,
) -> Result<f64> {
    let params = *table.params();
    let cap = params.cap();
    if n > cap {
        return Err(Error::ValueOutOfRange { value: n, max: cap });
    }
    let b_j = table.eval_b(j, prefix);
    let max_coord = u32::from(*prefix.iter().max().expect("prefix is nonempty"));

    // Completion weights for every target value at once.
    let suffix = table.suffix_buckets(j, prefix);
    let mut completion_prefix_sums = Vec::with_capacity(suffix.len());
    let mut acc = 0.0;
    for s in &suffix {
        acc += s;
        completion_prefix_sums.push(acc);
    }
    let a_of = |m: u32| completion_prefix_sums[(params.n() - m).min(cap) as usize];

    let du = if max_coord <= (params.n() - n).min(cap) {
        b_j * a_of(n)
    } else {
        0.0
    };
    let mut dl = 0.0;
    for m in 0..=cap.min(params.n() - max_coord) {
        dl += a_of(m);
    }
    dl *= b_j;
    Ok((l * du - u_n * dl) / (l * l))
}

/// Sum of `|analytic_partial|` over every populated coordinate.
pub fn analytic_gradient_norm1(table: &MarginalTable<f64>, n: u32) -> Result<f64> {
    Ok(per_slot_partial_sums(table, n)?.iter().sum())
}

/// Summed absolute partials per slot (index `j − 1`).
pub fn per_slot_partial_sums(table: &MarginalTable<f64>, n: u32) -> Result<Vec<f64>> {
    let l = table.eval_l(EffectiveCap::none());
    if l == 0.0 {
        return Err(Error::DegenerateTable(
            "normalizer is zero; the recursion has no derivative here".into(),
        ));
    }
    let u_n = table.eval_u(n)?;
    let mut sums = vec![0.0; table.child_count()];
    for (j, prefix) in table.coordinates() {
        sums[j - 1] += partial_with_normalizers(table, j, &prefix, n, u_n, l)?.abs();
    }
    Ok(sums)
}

/// Finite-difference counterpart of [`analytic_gradient_norm1`]: each stored
/// value is perturbed by `±h` independently (no renormalization — the
/// derivative is taken coordinate-wise at the given point) and the central
/// differences of `f_n` are summed in absolute value.
pub fn fd_gradient_norm1(table: &MarginalTable<f64>, n: u32, h: f64) -> f64 {
    assert!(h > 0.0, "step must be positive");
    let coords = table.coordinates();
    let diffs: Vec<f64> = coords
        .par_iter()
        .map(|(j, prefix)| {
            let value = table.get(*j, prefix);
            let up = table
                .with_coordinate(*j, prefix, value + h)
                .eval_f(n, EffectiveCap::none())
                .expect("value in range");
            let down = table
                .with_coordinate(*j, prefix, value - h)
                .eval_f(n, EffectiveCap::none())
                .expect("value in range");
            ((up - down) / (2.0 * h)).abs()
        })
        .collect();
    // Parallel probes, deterministic coordinate-ordered summation.
    diffs.iter().sum()
}
