//! Seeded invariant suites: randomized instances checked against the
//! properties each module promises, with per-property tallies. These back
//! the command-line `verify` subcommand; the acceptance tests cover the
//! fixed instance families, while these sweep random ones.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::decay::{
    analytic_gradient_norm1, analytic_partial, fd_gradient_norm1, gradient_bound,
    loose_partial_bound, per_slot_bound, per_slot_partial_sums, tighter_partial_bound,
};
use crate::error::Result;
use crate::graph::{ConstraintSet, Graph};
use crate::lattice::{exact_count, exact_marginal, Params};
use crate::marginals::{random_fmd, EffectiveCap};
use crate::volume::{
    count_upper, exact_volume_small, mc_volume, sandwich, GridParams, UpperBoundSet,
};
use num::rational::BigRational;
use num::traits::One;

/// The invariant families that can be swept.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Suite {
    /// Table shape: element/head bounds, completion/path-weight bounds,
    /// prefix insensitivity, normalizer range, closure, interpolation.
    Marginals,
    /// Derivative machinery: analytic vs finite-difference gradients and
    /// the loose/tight/per-slot/total contraction bounds.
    Decay,
    /// The exact rational telescoping identity.
    Telescoping,
    /// Volume sandwich ordering, certified fraction, and oracle brackets.
    Sandwich,
}

impl Suite {
    pub fn name(&self) -> &'static str {
        match self {
            Suite::Marginals => "marginals",
            Suite::Decay => "decay",
            Suite::Telescoping => "telescoping",
            Suite::Sandwich => "sandwich",
        }
    }

    pub fn all() -> [Suite; 4] {
        [
            Suite::Marginals,
            Suite::Decay,
            Suite::Telescoping,
            Suite::Sandwich,
        ]
    }
}

/// Tally for one named property across a suite run.
#[derive(Clone, Debug, PartialEq)]
pub struct PropertyOutcome {
    name: &'static str,
    checks: u64,
    violations: u64,
    first_failure: Option<String>,
}

impl PropertyOutcome {
    pub fn name(&self) -> &'static str {
        self.name
    }

    pub fn checks(&self) -> u64 {
        self.checks
    }

    pub fn violations(&self) -> u64 {
        self.violations
    }

    pub fn passed(&self) -> bool {
        self.violations == 0
    }

    /// Description of the first violation, for diagnostics.
    pub fn first_failure(&self) -> Option<&str> {
        self.first_failure.as_deref()
    }
}

/// Result of sweeping one suite.
#[derive(Clone, Debug, PartialEq)]
pub struct SuiteReport {
    suite: Suite,
    seed: u64,
    trials: u64,
    properties: Vec<PropertyOutcome>,
}

impl SuiteReport {
    pub fn suite(&self) -> Suite {
        self.suite
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn trials(&self) -> u64 {
        self.trials
    }

    pub fn properties(&self) -> &[PropertyOutcome] {
        &self.properties
    }

    pub fn passed(&self) -> bool {
        self.properties.iter().all(PropertyOutcome::passed)
    }

    pub fn total_checks(&self) -> u64 {
        self.properties.iter().map(PropertyOutcome::checks).sum()
    }
}

struct Tally {
    order: Vec<&'static str>,
    outcomes: std::collections::HashMap<&'static str, PropertyOutcome>,
}

impl Tally {
    fn new() -> Self {
        Tally {
            order: Vec::new(),
            outcomes: std::collections::HashMap::new(),
        }
    }

    fn check(&mut self, name: &'static str, ok: bool, detail: impl FnOnce() -> String) {
        let entry = self.outcomes.entry(name).or_insert_with(|| {
            self.order.push(name);
            PropertyOutcome {
                name,
                checks: 0,
                violations: 0,
                first_failure: None,
            }
        });
        entry.checks += 1;
        if !ok {
            entry.violations += 1;
            if entry.first_failure.is_none() {
                entry.first_failure = Some(detail());
            }
        }
    }

    fn into_properties(mut self) -> Vec<PropertyOutcome> {
        self.order
            .iter()
            .map(|name| self.outcomes.remove(name).expect("tallied"))
            .collect()
    }
}

fn trial_rng(seed: u64, trial: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed.wrapping_add(trial).wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

fn trial_seed(seed: u64, trial: u64, salt: u64) -> u64 {
    seed.wrapping_add(trial)
        .wrapping_mul(0x9E37_79B9_7F4A_7C15)
        .wrapping_add(salt)
}

fn random_graph(rng: &mut ChaCha8Rng, max_m: u32) -> Graph {
    let m = rng.random_range(1..=max_m);
    let mut edges = Vec::new();
    for u in 0..m {
        for v in (u + 1)..m {
            if rng.random_bool(0.5) {
                edges.push((u, v));
            }
        }
    }
    Graph::from_edges(m, &edges).expect("generated edges are in range")
}

/// Runs `trials` seeded instances of the named suite and tallies every
/// property. Deterministic in `(suite, seed, trials)`.
pub fn run_suite(suite: Suite, seed: u64, trials: u64) -> Result<SuiteReport> {
    let mut tally = Tally::new();
    for trial in 0..trials {
        match suite {
            Suite::Marginals => marginals_trial(&mut tally, seed, trial)?,
            Suite::Decay => decay_trial(&mut tally, seed, trial)?,
            Suite::Telescoping => telescoping_trial(&mut tally, seed, trial)?,
            Suite::Sandwich => sandwich_trial(&mut tally, seed, trial)?,
        }
    }
    Ok(SuiteReport {
        suite,
        seed,
        trials,
        properties: tally.into_properties(),
    })
}

fn marginals_trial(tally: &mut Tally, seed: u64, trial: u64) -> Result<()> {
    let mut rng = trial_rng(seed, trial);
    let n = rng.random_range(6..=16u32);
    let a = rng.random_range(1..=(n - 1) / 2);
    let params = Params::new(n, a)?;
    let d = rng.random_range(0..=3usize);
    let table = random_fmd(trial_seed(seed, trial, 1), d, &params);
    let tol = 1e-12;

    tally.check("table-validates", table.validate().is_ok(), || {
        format!("random table rejected at N={n}, A={a}, d={d}")
    });

    let element_cap = 1.0 / f64::from(a) + tol;
    let worst_element = table
        .coordinates()
        .iter()
        .map(|(j, p)| table.get(*j, p))
        .fold(0.0f64, f64::max);
    tally.check("element-bound", worst_element <= element_cap, || {
        format!("element {worst_element} above 1/A at N={n}, A={a}, d={d}")
    });

    let dist = table.f_all(EffectiveCap::none())?;
    let head: f64 = dist.values()[..=a as usize].iter().sum();
    let head_floor = f64::from(a) / f64::from(params.cap());
    tally.check(
        "head-mass",
        head >= head_floor - tol && head <= 1.0 + tol,
        || format!("head mass {head} outside [{head_floor}, 1] at N={n}, A={a}, d={d}"),
    );

    let l = table.eval_l(EffectiveCap::none());
    tally.check(
        "normalizer-range",
        l >= f64::from(a) - tol && l <= f64::from(params.cap() + 1) + tol,
        || format!("normalizer {l} outside [A, cap+1] at N={n}, A={a}, d={d}"),
    );

    for j in 1..=d {
        let zeros = vec![0u16; j];
        let low: Vec<u16> = (0..j).map(|_| rng.random_range(0..=a) as u16).collect();
        let probe_n = rng.random_range(0..=params.cap());
        let a_val = table.eval_a(j, probe_n, &zeros);
        tally.check("completion-weight-bound", a_val <= 1.0 + tol, || {
            format!("completion weight {a_val} above 1 at level {j}")
        });
        let b_val = table.eval_b(j, &zeros);
        let b_cap = 1.0 / f64::from(a).powi(j as i32 - 1) + tol;
        tally.check("path-weight-bound", b_val <= b_cap, || {
            format!("path weight {b_val} above 1/A^{} at level {j}", j - 1)
        });
        // Low prefixes are interchangeable exactly, bit for bit.
        let same_a = table.eval_a(j, probe_n, &low) == a_val;
        let same_b = table.eval_b(j, &low) == b_val;
        tally.check("low-prefix-insensitivity", same_a && same_b, || {
            format!("low prefix {low:?} disagrees with zeros at level {j}")
        });
    }

    let other = random_fmd(trial_seed(seed, trial, 2), d, &params);
    let mid = table.interpolate(&other, 0.5)?;
    tally.check("interpolation-closure", mid.validate().is_ok(), || {
        format!("midpoint of two valid tables rejected at N={n}, A={a}, d={d}")
    });
    Ok(())
}

fn decay_trial(tally: &mut Tally, seed: u64, trial: u64) -> Result<()> {
    let d = 1 + (trial % 3) as u32;
    let n = if trial.is_multiple_of(2) { 10 } else { 20 };
    let params = Params::from_alpha(n, 0.49)?;
    let a = params.a();
    let table = random_fmd(trial_seed(seed, trial, 3), d as usize, &params);
    let bound = gradient_bound(d, params.alpha())?.value();

    let mut total_ok = true;
    let mut slot_ok = true;
    let mut loose_ok = true;
    let mut tight_ok = true;
    let coords = table.coordinates();
    for probe_n in 0..=params.cap() {
        let sums = per_slot_partial_sums(&table, probe_n)?;
        let total: f64 = sums.iter().sum();
        total_ok &= total <= bound + 1e-4;
        for (idx, s) in sums.iter().enumerate() {
            slot_ok &= *s <= per_slot_bound(&params, idx + 1) + 1e-9;
        }
        for (j, prefix) in &coords {
            let partial = analytic_partial(&table, *j, prefix, probe_n)?.abs();
            loose_ok &= partial <= loose_partial_bound(&params, *j) + 1e-9;
            if prefix.iter().all(|&v| u32::from(v) <= a) {
                tight_ok &= partial <= tighter_partial_bound(&params, *j) + 1e-9;
            }
        }
    }
    let site = || format!("N={n}, A={a}, d={d}, trial {trial}");
    tally.check("gradient-total-bound", total_ok, site);
    tally.check("per-slot-bound", slot_ok, site);
    tally.check("loose-partial-bound", loose_ok, site);
    tally.check("tight-partial-bound", tight_ok, site);

    // Central differences are costly; agreement is spot-checked on a
    // deterministic thinning of the sweep.
    if trial.is_multiple_of(25) {
        for probe_n in [0, a + 1, params.cap()] {
            let analytic = analytic_gradient_norm1(&table, probe_n)?;
            let fd = fd_gradient_norm1(&table, probe_n, 1e-6);
            tally.check("fd-agreement", (analytic - fd).abs() <= 1e-5, || {
                format!("analytic {analytic} vs fd {fd} at n={probe_n}, {}", site())
            });
        }
    }
    Ok(())
}

fn telescoping_trial(tally: &mut Tally, seed: u64, trial: u64) -> Result<()> {
    let mut rng = trial_rng(seed, trial);
    let g = random_graph(&mut rng, 5);
    let n = rng.random_range(4..=8u32);
    let a = rng.random_range(1..=2.min((n - 1) / 2));
    let params = Params::new(n, a)?;

    let z = exact_count(&g, &params, &ConstraintSet::empty())?;
    let mut product = BigRational::one();
    let mut beta = ConstraintSet::empty();
    for v in g.live_vertices().collect::<Vec<_>>() {
        let marginal = exact_marginal(&g, &params, v, 0, &beta)?;
        product *= marginal.to_rational().recip();
        beta = beta.with_pin(v, 0);
    }
    let exact = BigRational::from_integer(z.0.clone().into());
    tally.check("telescoping-identity", product == exact, || {
        format!(
            "product {product} vs count {z} on m={}, N={n}, A={a}",
            g.live_count()
        )
    });
    Ok(())
}

fn sandwich_trial(tally: &mut Tally, seed: u64, trial: u64) -> Result<()> {
    let mut rng = trial_rng(seed, trial);
    let g = match trial % 3 {
        0 => Graph::from_edges(1, &[]).expect("single vertex"),
        1 => Graph::from_edges(2, &[(0, 1)]).expect("single edge"),
        _ => random_graph(&mut rng, 4),
    };
    let m = g.live_count();
    let n = rng.random_range(4..=14u32);
    let alpha = [0.2, 0.25, 0.3, 0.35, 0.4, 0.45][rng.random_range(0..6usize)];
    let grid = GridParams::from_alpha(n, alpha)?;
    let bounds: Vec<u32> = (0..m).map(|_| rng.random_range(grid.a()..=grid.cap())).collect();
    let bounds = UpperBoundSet::new(bounds, &grid)?;

    let s = sandwich(&g, &grid, &bounds)?;
    let site = || format!("m={m}, N={n}, alpha={alpha}, trial {trial}");
    tally.check(
        "count-order",
        s.lower_count().0 <= s.upper_count().0,
        || format!("lower above upper at {}", site()),
    );
    tally.check(
        "certified-fraction-order",
        s.guaranteed_lower() <= s.upper_count().to_f64() + 1e-9,
        || format!("certified fraction above upper count at {}", site()),
    );

    // At full bounds the upper count is the plain lattice count (the strict
    // parameter regime is required for the plain counter).
    if let Ok(params) = Params::new(grid.n(), grid.a()) {
        let full = UpperBoundSet::full(&grid, m);
        let boxed = count_upper(&g, &grid, &full)?;
        let plain = exact_count(&g, &params, &ConstraintSet::empty())?;
        tally.check("full-bounds-match-plain-count", boxed == plain, || {
            format!("{boxed} vs {plain} at {}", site())
        });
    }

    if exact_volume_small(&g, grid.alpha()).is_ok() {
        let scaled = exact_volume_small(&g, grid.alpha())? * f64::from(n).powi(m as i32);
        let full = sandwich(&g, &grid, &UpperBoundSet::full(&grid, m))?;
        let inside = full.lower_count().to_f64() <= scaled + 1e-9
            && scaled <= full.upper_count().to_f64() + 1e-9;
        tally.check("volume-bracket", inside, || {
            format!(
                "volume {scaled} outside [{}, {}] at {}",
                full.lower_count(),
                full.upper_count(),
                site()
            )
        });
        tally.check(
            "certified-fraction-below-volume",
            full.guaranteed_lower() <= scaled + 1e-9,
            || format!("certified fraction above the volume at {}", site()),
        );

        if trial.is_multiple_of(10) {
            let (est, err) = mc_volume(&g, grid.alpha(), 20_000, trial_seed(seed, trial, 4))?;
            let unit = scaled / f64::from(n).powi(m as i32);
            tally.check(
                "mc-cross-check",
                (est - unit).abs() <= 4.0 * err + 1e-12,
                || format!("MC {est} vs {unit} ± {err} at {}", site()),
            );
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_suite_passes_a_short_sweep() {
        for suite in Suite::all() {
            let report = run_suite(suite, 42, 12).unwrap();
            assert!(
                report.passed(),
                "{} failed: {:?}",
                suite.name(),
                report
                    .properties()
                    .iter()
                    .filter(|p| !p.passed())
                    .map(|p| (p.name(), p.first_failure().unwrap_or("")))
                    .collect::<Vec<_>>()
            );
            assert!(!report.properties().is_empty());
            assert!(report.total_checks() > 0);
            assert_eq!(report.trials(), 12);
        }
    }

    #[test]
    fn suite_runs_are_deterministic() {
        let a = run_suite(Suite::Sandwich, 7, 9).unwrap();
        let b = run_suite(Suite::Sandwich, 7, 9).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn suite_names_are_stable() {
        let names: Vec<_> = Suite::all().iter().map(Suite::name).collect();
        assert_eq!(names, ["marginals", "decay", "telescoping", "sandwich"]);
    }
}
