//! End-to-end acceptance checks for the whole pipeline: threshold values,
//! exactness of the one-step recursion and the telescoping identity on every
//! small connected graph, gradient certificates against analytic and
//! finite-difference derivatives, depth-driven error contraction, counting
//! accuracy at the chosen depth, volume sandwiches, resolution convergence,
//! and memoization transparency plus the naive recursion's cost shape.
//!
//! Each test enforces its wall-clock budget and prints a `PASS` summary line
//! (visible with `--nocapture`).

use std::time::{Duration, Instant};

use num::{BigInt, BigRational, One};
use polyvol_core::decay::{
    analytic_gradient_norm1, analytic_partial, fd_gradient_norm1, loose_partial_bound,
    tighter_partial_bound,
};
use polyvol_core::{
    alpha_threshold, choose_depth, exact_child_table, exact_count, exact_marginal,
    exact_marginal_distribution, exact_volume_small, gradient_bound, random_fmd, sandwich,
    volume_estimate_exact, Approximator, BigCount, ConstraintSet, DepthBudget, Graph, GridParams,
    Params, UpperBoundSet,
};
use rayon::prelude::*;

fn is_connected(g: &Graph) -> bool {
    let verts: Vec<u32> = g.live_vertices().collect();
    let Some(&start) = verts.first() else {
        return true;
    };
    let mut seen = vec![false; g.vertex_count() as usize];
    let mut stack = vec![start];
    seen[start as usize] = true;
    let mut reached = 1;
    while let Some(u) = stack.pop() {
        for w in g.neighbors(u) {
            if !seen[w as usize] {
                seen[w as usize] = true;
                reached += 1;
                stack.push(w);
            }
        }
    }
    reached == verts.len()
}

/// Every connected labeled graph on `m` vertices, by edge-subset enumeration.
fn connected_graphs(m: u32) -> Vec<Graph> {
    let pairs: Vec<(u32, u32)> = (0..m)
        .flat_map(|u| (u + 1..m).map(move |v| (u, v)))
        .collect();
    (0u32..1 << pairs.len())
        .filter_map(|mask| {
            let edges: Vec<(u32, u32)> = pairs
                .iter()
                .enumerate()
                .filter(|&(i, _)| mask >> i & 1 == 1)
                .map(|(_, &e)| e)
                .collect();
            let g = Graph::from_edges(m, &edges).expect("enumerated edges are in range");
            is_connected(&g).then_some(g)
        })
        .collect()
}

fn small_connected_family() -> Vec<Graph> {
    let per_m: Vec<Vec<Graph>> = (1..=5).map(connected_graphs).collect();
    let counts: Vec<usize> = per_m.iter().map(Vec::len).collect();
    assert_eq!(
        counts,
        vec![1, 1, 4, 38, 728],
        "connected labeled graph counts on 1..=5 vertices"
    );
    per_m.into_iter().flatten().collect()
}

/// Paths on 1..=5 vertices and stars with 2..=4 leaves.
fn tree_family() -> Vec<Graph> {
    let mut out: Vec<Graph> = (1..=5).map(Graph::path).collect();
    out.extend((2..=4).map(Graph::star));
    out
}

fn count_ratio(num: &BigCount, den: &BigCount) -> BigRational {
    BigRational::new(BigInt::from(num.0.clone()), BigInt::from(den.0.clone()))
}

/// The random-table sweep shared by the gradient-certificate tests: depths
/// 0..=3 at two resolutions, with the restriction rounded as close to the
/// contraction threshold as the parameter validation allows.
fn random_table_sweep() -> Vec<(usize, Params)> {
    let mut out = Vec::new();
    for (n, expected_a) in [(10u32, 4u32), (20, 9)] {
        let params = Params::from_alpha(n, 0.49).expect("valid restriction");
        assert_eq!(params.a(), expected_a);
        for d in 0..=3usize {
            out.push((d, params));
        }
    }
    out
}

/// Depth rule for whole-count estimation: the certified depth when the
/// gradient bound contracts, otherwise enough depth to unroll a tree of
/// `m` vertices exactly.
fn counting_depth(g: &Graph, params: &Params) -> DepthBudget {
    let c = gradient_bound(g.max_degree(), params.alpha()).expect("valid restriction");
    if c.is_contracting() {
        choose_depth(g.live_count(), params, &c).expect("contracting certificate")
    } else {
        DepthBudget::new(g.live_count() as u32 - 1)
    }
}

#[test]
fn t01_degree_three_threshold_value() {
    let start = Instant::now();
    let at = alpha_threshold(3, 1e-6).unwrap();
    let elapsed = start.elapsed();
    assert!(
        (0.4875..=0.4885).contains(&at.value()),
        "threshold at max degree 3 is {}, expected within [0.4875, 0.4885]",
        at.value()
    );
    assert!(elapsed < Duration::from_secs(1), "took {elapsed:?}");
    println!(
        "PASS degree-3 threshold = {:.6} in {elapsed:?}",
        at.value()
    );
}

#[test]
fn t02_threshold_gap_scales_inverse_quadratically() {
    let start = Instant::now();
    let scaled: Vec<f64> = [25u32, 50, 100]
        .iter()
        .map(|&delta| {
            let at = alpha_threshold(delta, 1e-9).unwrap();
            f64::from(delta * delta) * (0.5 - at.value())
        })
        .collect();
    let max = scaled.iter().cloned().fold(f64::MIN, f64::max);
    let min = scaled.iter().cloned().fold(f64::MAX, f64::min);
    let elapsed = start.elapsed();
    assert!(min > 0.0, "thresholds must stay below 1/2");
    assert!(
        max / min < 2.0,
        "scaled gaps {scaled:?} vary by a factor of {}",
        max / min
    );
    assert!(elapsed < Duration::from_secs(5), "took {elapsed:?}");
    println!(
        "PASS threshold gap ~ 1/Δ²: scaled gaps {scaled:?} (spread ×{:.3}) in {elapsed:?}",
        max / min
    );
}

#[test]
fn t03_recursion_matches_exact_marginals() {
    let start = Instant::now();
    let graphs = small_connected_family();
    let beta = ConstraintSet::empty();
    let checked: usize = graphs
        .par_iter()
        .map(|g| {
            let mut instances = 0;
            for a in [1u32, 2] {
                let params = Params::new(6, a).unwrap();
                for v in g.live_vertices() {
                    let (numerators, denominator) =
                        exact_marginal_distribution(g, &params, v, &beta).unwrap();

                    let (ft, fe) = exact_child_table::<f64>(g, &params, v, &beta).unwrap();
                    for n in 0..=params.cap() {
                        let got = ft.eval_f(n, fe).unwrap();
                        let want = numerators[n as usize].to_f64() / denominator.to_f64();
                        assert!(
                            (got - want).abs() <= 1e-12,
                            "float recursion off by {} at m={}, A={a}, v={v}, n={n}",
                            (got - want).abs(),
                            g.live_count()
                        );
                    }

                    let (rt, re) = exact_child_table::<BigRational>(g, &params, v, &beta).unwrap();
                    for n in 0..=params.cap() {
                        let got = rt.eval_f(n, re).unwrap();
                        let want = count_ratio(&numerators[n as usize], &denominator);
                        assert_eq!(
                            got,
                            want,
                            "rational recursion differs at m={}, A={a}, v={v}, n={n}",
                            g.live_count()
                        );
                    }
                    instances += 1;
                }
            }
            instances
        })
        .sum();
    let elapsed = start.elapsed();
    assert!(elapsed < Duration::from_secs(120), "took {elapsed:?}");
    println!(
        "PASS one-step recursion exact on {checked} (graph, A, vertex) instances in {elapsed:?}"
    );
}

#[test]
fn t04_telescoping_product_is_exact() {
    let start = Instant::now();
    let graphs = small_connected_family();
    let checked: usize = graphs
        .par_iter()
        .map(|g| {
            for a in [1u32, 2] {
                let params = Params::new(6, a).unwrap();
                let z = exact_count(g, &params, &ConstraintSet::empty()).unwrap();
                let mut beta = ConstraintSet::empty();
                let mut product = BigRational::one();
                for v in g.live_vertices().collect::<Vec<_>>() {
                    let marginal = exact_marginal(g, &params, v, 0, &beta).unwrap();
                    product *= marginal.to_rational().recip();
                    beta = beta.with_pin(v, 0);
                }
                assert_eq!(
                    product,
                    BigRational::from_integer(BigInt::from(z.0.clone())),
                    "telescoping product differs from the count at m={}, A={a}",
                    g.live_count()
                );
            }
            2
        })
        .sum();
    let elapsed = start.elapsed();
    assert!(elapsed < Duration::from_secs(120), "took {elapsed:?}");
    println!("PASS telescoping identity exact on {checked} (graph, A) instances in {elapsed:?}");
}

#[test]
fn t05_gradient_totals_within_certificate() {
    let start = Instant::now();
    for (d, params) in random_table_sweep() {
        let bound = gradient_bound(d as u32, params.alpha()).unwrap().value();
        (0..200u64).into_par_iter().for_each(|seed| {
            let table = random_fmd(seed, d, &params);
            for n in 0..=params.cap() {
                let total = analytic_gradient_norm1(&table, n).unwrap();
                assert!(
                    total <= bound + 1e-4,
                    "gradient total {total} exceeds certificate {bound} \
                     (d={d}, N={}, seed={seed}, n={n})",
                    params.n()
                );
            }
            if seed % 25 == 0 {
                for n in [0, params.a() + 1, params.cap()] {
                    let analytic = analytic_gradient_norm1(&table, n).unwrap();
                    let fd = fd_gradient_norm1(&table, n, 1e-6);
                    assert!(
                        (analytic - fd).abs() <= 1e-5,
                        "analytic {analytic} vs finite-difference {fd} \
                         (d={d}, N={}, seed={seed}, n={n})",
                        params.n()
                    );
                }
            }
        });
    }
    let elapsed = start.elapsed();
    assert!(elapsed < Duration::from_secs(300), "took {elapsed:?}");
    println!(
        "PASS gradient totals within certificate on 8 sweeps × 200 tables in {elapsed:?}"
    );
}

#[test]
fn t06_per_coordinate_partial_bounds() {
    let start = Instant::now();
    for (d, params) in random_table_sweep() {
        let a = params.a() as u16;
        (0..200u64).into_par_iter().for_each(|seed| {
            let table = random_fmd(seed, d, &params);
            for (j, key) in table.coordinates() {
                let loose = loose_partial_bound(&params, j);
                let tight = tighter_partial_bound(&params, j);
                let low_prefix = key.iter().all(|&x| x <= a);
                for n in 0..=params.cap() {
                    let partial = analytic_partial(&table, j, &key, n).unwrap().abs();
                    assert!(
                        partial <= loose + 1e-9,
                        "|∂f| = {partial} exceeds the loose slot bound {loose} \
                         (d={d}, N={}, seed={seed}, j={j}, n={n})",
                        params.n()
                    );
                    if low_prefix {
                        assert!(
                            partial <= tight + 1e-9,
                            "|∂f| = {partial} exceeds the low-prefix bound {tight} \
                             (d={d}, N={}, seed={seed}, j={j}, n={n})",
                            params.n()
                        );
                    }
                }
            }
        });
    }
    let elapsed = start.elapsed();
    assert!(elapsed < Duration::from_secs(300), "took {elapsed:?}");
    println!("PASS per-coordinate partial bounds on 8 sweeps × 200 tables in {elapsed:?}");
}

#[test]
fn t07_marginal_error_contracts_with_depth() {
    let start = Instant::now();
    let params = Params::new(20, 9).unwrap();
    let beta = ConstraintSet::empty();
    for g in tree_family() {
        let c = gradient_bound(g.max_degree(), params.alpha())
            .unwrap()
            .value();
        let exact: Vec<Vec<f64>> = g
            .live_vertices()
            .map(|v| {
                let (numerators, denominator) =
                    exact_marginal_distribution(&g, &params, v, &beta).unwrap();
                numerators
                    .iter()
                    .map(|num| num.to_f64() / denominator.to_f64())
                    .collect()
            })
            .collect();
        let mut approx = Approximator::new(params);
        let mut errors = Vec::new();
        for k in 1..=3u32 {
            let mut max_error = 0.0f64;
            for (vi, v) in g.live_vertices().enumerate() {
                let dist = approx
                    .prob_dist(&g, v, &beta, DepthBudget::new(k))
                    .unwrap();
                for n in 0..=params.cap() as usize {
                    max_error = max_error.max((dist[n] - exact[vi][n]).abs());
                }
            }
            assert!(
                max_error <= c.powi(k as i32) + 1e-15,
                "max marginal error {max_error} exceeds c^k = {} \
                 (m={}, max degree {}, k={k})",
                c.powi(k as i32),
                g.live_count(),
                g.max_degree()
            );
            errors.push(max_error);
        }
        assert!(
            errors[2] <= errors[0] + 1e-15,
            "error did not shrink with depth on m={}: {errors:?}",
            g.live_count()
        );
    }
    let elapsed = start.elapsed();
    assert!(elapsed < Duration::from_secs(300), "took {elapsed:?}");
    println!("PASS marginal error ≤ c^k with k-monotone decay on paths and stars in {elapsed:?}");
}

#[test]
fn t08_chosen_depth_meets_count_accuracy() {
    let start = Instant::now();
    let params = Params::new(20, 9).unwrap();
    for g in tree_family() {
        let m = g.live_count();
        let k = counting_depth(&g, &params);
        if m == 2 {
            // The one instance whose certificate contracts non-trivially.
            assert_eq!(k.k(), 7, "certified depth for the single edge");
        }
        let z = exact_count(&g, &params, &ConstraintSet::empty()).unwrap();
        let mut approx = Approximator::new(params);
        let estimate = approx.log_z(&g, k).unwrap();
        let ratio = (estimate.log_value() - z.ln()).exp();
        let mf = m as f64;
        let bound = (1.0 + 1.0 / (mf * mf)).powi(m as i32) - 1.0 + 1e-9;
        assert!(
            (ratio - 1.0).abs() <= bound,
            "count ratio {ratio} strays past {bound} at m={m}, k={}",
            k.k()
        );
    }
    let elapsed = start.elapsed();
    assert!(elapsed < Duration::from_secs(300), "took {elapsed:?}");
    println!("PASS count accuracy at the chosen depth on paths and stars in {elapsed:?}");
}

#[test]
fn t09_lattice_sandwich_brackets_volume() {
    let start = Instant::now();
    for n in [4u32, 16] {
        for alpha in [0.25f64, 0.45] {
            for g in [Graph::path(1), Graph::path(2)] {
                let m = g.live_count();
                let grid = GridParams::from_alpha(n, alpha).unwrap();
                let bounds = UpperBoundSet::full(&grid, m);
                let s = sandwich(&g, &grid, &bounds).unwrap();
                let volume = exact_volume_small(&g, grid.alpha()).unwrap();
                let scaled = f64::from(n).powi(m as i32) * volume;
                let lower = s.lower_count().to_f64();
                let upper = s.upper_count().to_f64();
                assert!(
                    lower <= scaled + 1e-9 && scaled <= upper + 1e-9,
                    "sandwich {lower} ≤ {scaled} ≤ {upper} fails at m={m}, N={n}, α={alpha}"
                );
                assert!(
                    s.guaranteed_lower() <= scaled + 1e-9,
                    "certified fraction {} of the upper count exceeds the volume {scaled} \
                     at m={m}, N={n}, α={alpha}",
                    s.guaranteed_lower()
                );
            }
        }
    }

    let grid = GridParams::from_alpha(4, 0.25).unwrap();
    assert_eq!(grid.a(), 1);
    let edge = Graph::path(2);
    let s = sandwich(&edge, &grid, &UpperBoundSet::full(&grid, 2)).unwrap();
    let scaled = 16.0 * exact_volume_small(&edge, grid.alpha()).unwrap();
    assert_eq!(*s.lower_count(), BigCount::from(6u64));
    assert_eq!(*s.upper_count(), BigCount::from(13u64));
    assert!((scaled - 7.0).abs() <= 1e-9, "scaled volume {scaled} ≠ 7");

    let elapsed = start.elapsed();
    assert!(elapsed < Duration::from_secs(10), "took {elapsed:?}");
    println!("PASS volume sandwich on vertex and edge, anchor (6, 7, 13) in {elapsed:?}");
}

#[test]
fn t10_resolution_convergence_on_edge() {
    let start = Instant::now();
    let edge = Graph::path(2);
    let truth = 0.4375;
    let frozen_counts = [13.0f64, 751.0, 70501.0];
    let mut errors = Vec::new();
    for (i, n) in [4u32, 40, 400].into_iter().enumerate() {
        let run = volume_estimate_exact(&edge, 0.25, Some(n)).unwrap();
        let z = run.log_z().value().unwrap();
        assert!(
            (z - frozen_counts[i]).abs() <= 1e-6 * frozen_counts[i],
            "count at N={n} is {z}, expected {}",
            frozen_counts[i]
        );
        let estimate = run.estimate().unwrap();
        let error = (estimate / truth - 1.0).abs();
        assert!(
            error <= 4.0 / (0.25 * f64::from(n)),
            "relative volume error {error} at N={n} exceeds (m+2)/(αN)"
        );
        errors.push(error);
    }
    assert!(
        errors[0] > errors[1] && errors[1] > errors[2],
        "error not monotone in resolution: {errors:?}"
    );
    let elapsed = start.elapsed();
    assert!(elapsed < Duration::from_secs(60), "took {elapsed:?}");
    println!("PASS resolution convergence errors {errors:?} in {elapsed:?}");
}

#[test]
fn t11_memoization_transparent_and_naive_cost_superlinear() {
    let params = Params::new(20, 9).unwrap();

    for g in tree_family() {
        let k = counting_depth(&g, &params);
        let with_memo = Approximator::new(params)
            .log_z(&g, k)
            .unwrap()
            .log_value();
        let without_memo = Approximator::without_memo(params)
            .log_z(&g, k)
            .unwrap()
            .log_value();
        assert_eq!(
            with_memo.to_bits(),
            without_memo.to_bits(),
            "memoization changed the estimate at m={}",
            g.live_count()
        );
    }

    // Cost shape without memoization: each extra level of depth multiplies
    // the recursion's work by roughly the number of lattice values per
    // vertex, until vertex removal exhausts the path. Timings are repeated
    // and the minimum taken so scheduling noise cannot mask a 6–8× step.
    let g = Graph::path(4);
    const REPS: u32 = 100;
    let time_at = |k: u32| -> f64 {
        (0..3)
            .map(|_| {
                let clock = Instant::now();
                for _ in 0..REPS {
                    let mut approx = Approximator::without_memo(params);
                    approx.log_z(&g, DepthBudget::new(k)).unwrap();
                }
                clock.elapsed().as_secs_f64()
            })
            .fold(f64::INFINITY, f64::min)
    };
    let _ = time_at(1); // warm-up
    let times: Vec<f64> = (1..=3).map(time_at).collect();
    assert!(
        times[0] < times[1] && times[1] < times[2],
        "cost not monotone in depth: {times:?}"
    );
    assert!(
        times[1] / times[0] >= 1.5 && times[2] / times[1] >= 1.5,
        "per-level growth below superlinear threshold: {times:?}"
    );
    assert!(
        times[2] - times[1] > times[1] - times[0],
        "increments not growing: {times:?}"
    );
    println!(
        "PASS memoization transparent; depth cost ×{:.1} then ×{:.1} without it",
        times[1] / times[0],
        times[2] / times[1]
    );
}
