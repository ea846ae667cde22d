//! Command-line front end for the volume approximator.
//!
//! Every run prints exactly one JSON object on stdout — the machine-readable
//! run report — and a short human summary on stderr. Reports are
//! deterministic byte-for-byte given the same flags and seed, except for the
//! trailing `timing_ms` field. The exit code is 0 only when the run finished
//! without errors and, for `verify`, without invariant violations.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand, ValueEnum};
use polyvol_core::{
    alpha_threshold, exact_count, exact_marginal, gradient_bound, mc_volume, run_suite, sandwich,
    volume_estimate, Approximator, ConstraintSet, DepthBudget, Error as CoreError, Graph,
    GridParams, Params, Suite, UpperBoundSet,
};
use serde::Serialize;
use sha2::{Digest, Sha256};

#[derive(Parser)]
#[command(
    name = "polyvol",
    version,
    about = "Deterministic counting and volume estimates for restricted independent-set polytopes"
)]
struct Cli {
    /// Worker threads for the parallel oracles (default: POLYVOL_THREADS or all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Contraction threshold for a maximum degree.
    Alpha {
        /// Maximum degree the threshold certifies.
        #[arg(long)]
        delta: u32,
        /// Bisection tolerance.
        #[arg(long, default_value_t = 1e-9)]
        tol: f64,
    },
    /// Estimate the number of restricted assignments of a graph.
    Count {
        /// Path to an edge-list file.
        #[arg(long)]
        graph: PathBuf,
        /// Grid resolution.
        #[arg(long = "N")]
        n: u32,
        /// Integer restriction; wins over --alpha when both are given.
        #[arg(long = "A")]
        a: Option<u32>,
        /// Real restriction, rounded to A = round(alpha*N).
        #[arg(long)]
        alpha: Option<f64>,
        /// Recursion depth.
        #[arg(long)]
        depth: u32,
        /// Also run the exact counting oracle and report the estimate/exact ratio.
        #[arg(long)]
        exact: bool,
        /// Disable memoization (slow; for cost diagnostics).
        #[arg(long)]
        no_memo: bool,
    },
    /// Estimate one vertex-value probability under optional pins.
    Prob {
        /// Path to an edge-list file.
        #[arg(long)]
        graph: PathBuf,
        /// Target vertex.
        #[arg(long)]
        vertex: u32,
        /// Target value.
        #[arg(long)]
        value: u32,
        /// Grid resolution.
        #[arg(long = "N")]
        n: u32,
        /// Integer restriction; wins over --alpha when both are given.
        #[arg(long = "A")]
        a: Option<u32>,
        /// Real restriction, rounded to A = round(alpha*N).
        #[arg(long)]
        alpha: Option<f64>,
        /// Recursion depth.
        #[arg(long)]
        depth: u32,
        /// Pin a vertex to a value, e.g. --pin 2=0 (repeatable).
        #[arg(long = "pin", value_parser = parse_pin)]
        pins: Vec<(u32, u32)>,
        /// Also compute the exact marginal and the error against it.
        #[arg(long)]
        exact: bool,
    },
    /// Estimate the polytope volume of a graph.
    Volume {
        /// Path to an edge-list file.
        #[arg(long)]
        graph: PathBuf,
        /// Restriction parameter in (0, 1/2).
        #[arg(long)]
        alpha: f64,
        /// Grid resolution (default: m^2/alpha within the resolution budget).
        #[arg(long = "N")]
        n: Option<u32>,
        /// Recursion depth (default: the certified depth when contracting).
        #[arg(long)]
        depth: Option<u32>,
        /// Cross-check with this many Monte Carlo samples.
        #[arg(long = "mc")]
        mc: Option<u64>,
    },
    /// Run a randomized invariant suite; nonzero exit on any violation.
    Verify {
        /// Which property family to exercise.
        #[arg(long, value_enum)]
        suite: SuiteArg,
        /// Base seed for the randomized trials.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Number of randomized trials.
        #[arg(long, default_value_t = 100)]
        trials: u64,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum SuiteArg {
    Marginals,
    Decay,
    Telescoping,
    Sandwich,
}

impl From<SuiteArg> for Suite {
    fn from(arg: SuiteArg) -> Self {
        match arg {
            SuiteArg::Marginals => Suite::Marginals,
            SuiteArg::Decay => Suite::Decay,
            SuiteArg::Telescoping => Suite::Telescoping,
            SuiteArg::Sandwich => Suite::Sandwich,
        }
    }
}

fn parse_pin(s: &str) -> Result<(u32, u32), String> {
    let (vertex, value) = s
        .split_once('=')
        .ok_or_else(|| format!("pin `{s}` is not of the form vertex=value"))?;
    let vertex = vertex
        .trim()
        .parse()
        .map_err(|e| format!("pin vertex in `{s}`: {e}"))?;
    let value = value
        .trim()
        .parse()
        .map_err(|e| format!("pin value in `{s}`: {e}"))?;
    Ok((vertex, value))
}

/// The single JSON object a run prints on stdout.
#[derive(Serialize)]
struct RunReport {
    subcommand: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    input_digest: Option<String>,
    parameters: ParameterEcho,
    results: ResultFields,
    warnings: Vec<String>,
    /// Wall-clock for the whole run; the one field that varies between
    /// otherwise identical runs.
    timing_ms: f64,
}

/// Effective (post-default) parameters, echoed back per subcommand.
#[derive(Serialize, Default)]
struct ParameterEcho {
    #[serde(skip_serializing_if = "Option::is_none")]
    n: Option<u32>,
    #[serde(skip_serializing_if = "Option::is_none")]
    a: Option<u32>,
    #[serde(skip_serializing_if = "Option::is_none")]
    alpha: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    k: Option<u32>,
    #[serde(skip_serializing_if = "Option::is_none")]
    c: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    delta: Option<u32>,
    #[serde(skip_serializing_if = "Option::is_none")]
    tol: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    vertex: Option<u32>,
    #[serde(skip_serializing_if = "Option::is_none")]
    value: Option<u32>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pins: Option<Vec<String>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    trials: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    mc_samples: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    memo: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    threads: Option<usize>,
}

#[derive(Serialize, Default)]
struct ResultFields {
    #[serde(skip_serializing_if = "Option::is_none")]
    alpha_delta: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    log_z: Option<f64>,
    /// Estimated count in linear space, present when it fits an f64.
    #[serde(skip_serializing_if = "Option::is_none")]
    z: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    exact_z: Option<f64>,
    /// Estimate/exact count ratio when the exact oracle ran.
    #[serde(skip_serializing_if = "Option::is_none")]
    ratio: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    probability: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    exact_probability: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    absolute_error: Option<f64>,
    /// Contraction-certificate error bound c^k for the probability estimate.
    #[serde(skip_serializing_if = "Option::is_none")]
    error_bound: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    log_volume: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    volume: Option<f64>,
    /// Lattice sandwich counts, as decimal strings (may exceed u64).
    #[serde(skip_serializing_if = "Option::is_none")]
    sandwich_lower: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    sandwich_upper: Option<String>,
    /// Certified volume lower bound from the sandwich, at volume scale.
    #[serde(skip_serializing_if = "Option::is_none")]
    certified_volume_lower: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    mc_volume: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    mc_stderr: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    suite_passed: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    properties: Option<Vec<PropertyReport>>,
}

#[derive(Serialize)]
struct PropertyReport {
    name: String,
    checks: u64,
    violations: u64,
}

struct Outcome {
    report: RunReport,
    summary: Vec<String>,
    exit_code: u8,
}

/// A mistake in how the tool was invoked, as opposed to a failure while
/// computing; reported with exit code 2.
#[derive(Debug)]
struct Usage(String);

impl fmt::Display for Usage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl std::error::Error for Usage {}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let threads = configure_threads(cli.threads);
    let clock = Instant::now();
    match run(cli.command, threads) {
        Ok(mut outcome) => {
            outcome.report.timing_ms = clock.elapsed().as_secs_f64() * 1e3;
            let json = match serde_json::to_string_pretty(&outcome.report) {
                Ok(json) => json,
                Err(err) => {
                    eprintln!("error: cannot encode the run report: {err}");
                    return ExitCode::from(1);
                }
            };
            println!("{json}");
            for line in &outcome.summary {
                eprintln!("{line}");
            }
            for warning in &outcome.report.warnings {
                eprintln!("warning: {warning}");
            }
            ExitCode::from(outcome.exit_code)
        }
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code_for(&err))
        }
    }
}

/// Usage mistakes (bad inputs, out-of-range values) exit with 2; failures
/// while computing exit with 1.
fn exit_code_for(err: &anyhow::Error) -> u8 {
    if err.downcast_ref::<Usage>().is_some() {
        return 2;
    }
    match err.downcast_ref::<CoreError>() {
        Some(
            CoreError::GraphParse { .. }
            | CoreError::VertexOutOfRange(_)
            | CoreError::VertexRemoved(_)
            | CoreError::VertexPinned(_)
            | CoreError::InvalidParams(_)
            | CoreError::ValueOutOfRange { .. },
        ) => 2,
        _ => 1,
    }
}

/// Resolve the worker-thread count from the flag or POLYVOL_THREADS and, if
/// one was requested, size the global worker pool accordingly.
fn configure_threads(flag: Option<usize>) -> Option<usize> {
    let requested = flag.or_else(|| {
        std::env::var("POLYVOL_THREADS")
            .ok()
            .and_then(|value| value.parse().ok())
    });
    if let Some(threads) = requested {
        // Failure means a pool exists already; the run proceeds either way.
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global();
    }
    requested
}

fn run(command: Command, threads: Option<usize>) -> anyhow::Result<Outcome> {
    match command {
        Command::Alpha { delta, tol } => cmd_alpha(delta, tol, threads),
        Command::Count {
            graph,
            n,
            a,
            alpha,
            depth,
            exact,
            no_memo,
        } => cmd_count(&graph, n, a, alpha, depth, exact, no_memo, threads),
        Command::Prob {
            graph,
            vertex,
            value,
            n,
            a,
            alpha,
            depth,
            pins,
            exact,
        } => cmd_prob(&graph, vertex, value, n, a, alpha, depth, &pins, exact, threads),
        Command::Volume {
            graph,
            alpha,
            n,
            depth,
            mc,
        } => cmd_volume(&graph, alpha, n, depth, mc, threads),
        Command::Verify {
            suite,
            seed,
            trials,
        } => cmd_verify(suite.into(), seed, trials, threads),
    }
}

fn load_graph(path: &Path) -> anyhow::Result<(Graph, String)> {
    let bytes = fs::read(path)
        .map_err(|err| Usage(format!("cannot read graph file {}: {err}", path.display())))?;
    let digest = format!("sha256:{:x}", Sha256::digest(&bytes));
    let text = String::from_utf8(bytes)
        .map_err(|_| Usage(format!("graph file {} is not UTF-8", path.display())))?;
    let graph = Graph::parse_edge_list(&text)?;
    Ok((graph, digest))
}

fn resolve_params(n: u32, a: Option<u32>, alpha: Option<f64>) -> anyhow::Result<Params> {
    match (a, alpha) {
        (Some(a), _) => Ok(Params::new(n, a)?),
        (None, Some(alpha)) => Ok(Params::from_alpha(n, alpha)?),
        (None, None) => Err(Usage("one of --A or --alpha is required".into()).into()),
    }
}

fn cmd_alpha(delta: u32, tol: f64, threads: Option<usize>) -> anyhow::Result<Outcome> {
    let threshold = alpha_threshold(delta, tol)?;
    let report = RunReport {
        subcommand: "alpha".into(),
        input_digest: None,
        parameters: ParameterEcho {
            delta: Some(delta),
            tol: Some(tol),
            threads,
            ..Default::default()
        },
        results: ResultFields {
            alpha_delta: Some(threshold.value()),
            ..Default::default()
        },
        warnings: Vec::new(),
        timing_ms: 0.0,
    };
    let summary = vec![format!(
        "restriction threshold for max degree {delta}: {:.9}",
        threshold.value()
    )];
    Ok(Outcome {
        report,
        summary,
        exit_code: 0,
    })
}

#[allow(clippy::too_many_arguments)]
fn cmd_count(
    graph: &Path,
    n: u32,
    a: Option<u32>,
    alpha: Option<f64>,
    depth: u32,
    exact: bool,
    no_memo: bool,
    threads: Option<usize>,
) -> anyhow::Result<Outcome> {
    let (g, digest) = load_graph(graph)?;
    let params = resolve_params(n, a, alpha)?;
    let contraction = gradient_bound(g.max_degree(), params.alpha()).ok();

    let mut approx = if no_memo {
        Approximator::without_memo(params)
    } else {
        Approximator::new(params)
    };
    let estimate = approx.log_z(&g, DepthBudget::new(depth))?;

    let mut results = ResultFields {
        log_z: Some(estimate.log_value()),
        z: estimate.value(),
        ..Default::default()
    };
    let mut warnings = Vec::new();
    let mut summary = vec![format!("log count estimate = {:.12}", estimate.log_value())];
    if let Some(z) = estimate.value() {
        summary.push(format!("count estimate = {z:.6}"));
    } else {
        summary.push("count estimate too large for linear space; see log_z".into());
    }

    if exact {
        match exact_count(&g, &params, &ConstraintSet::empty()) {
            Ok(z) => {
                let ratio = (estimate.log_value() - z.ln()).exp();
                results.exact_z = Some(z.to_f64());
                results.ratio = Some(ratio);
                summary.push(format!("exact count = {z}"));
                summary.push(format!("estimate/exact ratio = {ratio:.9}"));
            }
            Err(CoreError::BudgetExceeded(msg)) => {
                warnings.push(format!("exact count skipped: {msg}"));
            }
            Err(err) => return Err(err.into()),
        }
    }

    let report = RunReport {
        subcommand: "count".into(),
        input_digest: Some(digest),
        parameters: ParameterEcho {
            n: Some(params.n()),
            a: Some(params.a()),
            alpha: Some(params.alpha()),
            k: Some(depth),
            c: contraction.map(|c| c.value()),
            memo: Some(!no_memo),
            threads,
            ..Default::default()
        },
        results,
        warnings,
        timing_ms: 0.0,
    };
    Ok(Outcome {
        report,
        summary,
        exit_code: 0,
    })
}

#[allow(clippy::too_many_arguments)]
fn cmd_prob(
    graph: &Path,
    vertex: u32,
    value: u32,
    n: u32,
    a: Option<u32>,
    alpha: Option<f64>,
    depth: u32,
    pins: &[(u32, u32)],
    exact: bool,
    threads: Option<usize>,
) -> anyhow::Result<Outcome> {
    let (g, digest) = load_graph(graph)?;
    let params = resolve_params(n, a, alpha)?;

    let mut beta = ConstraintSet::empty();
    for &(u, pin_value) in pins {
        beta = beta.with_pin(u, pin_value);
    }
    if beta.is_pinned(vertex) {
        return Err(Usage(format!(
            "the target vertex {vertex} is pinned; unpin it or choose another vertex"
        ))
        .into());
    }

    let mut approx = Approximator::new(params);
    let probability = approx.prob(&g, vertex, value, &beta, DepthBudget::new(depth))?;

    let mut results = ResultFields {
        probability: Some(probability),
        ..Default::default()
    };
    let mut warnings = Vec::new();
    let mut summary = vec![format!(
        "estimated probability of vertex {vertex} at value {value}: {probability:.12}"
    )];

    let contraction = gradient_bound(g.max_degree(), params.alpha()).ok();
    if exact {
        match exact_marginal(&g, &params, vertex, value, &beta) {
            Ok(marginal) => {
                let exact_p = marginal.value_f64();
                let error = (probability - exact_p).abs();
                results.exact_probability = Some(exact_p);
                results.absolute_error = Some(error);
                summary.push(format!("exact probability = {exact_p:.12}"));
                summary.push(format!("absolute error = {error:.3e}"));
                if let Some(c) = contraction {
                    let bound = c.value().powi(depth as i32);
                    results.error_bound = Some(bound);
                    summary.push(format!("contraction error bound c^k = {bound:.3e}"));
                }
            }
            Err(CoreError::BudgetExceeded(msg)) => {
                warnings.push(format!("exact marginal skipped: {msg}"));
            }
            Err(err) => return Err(err.into()),
        }
    }

    let pin_echo: Vec<String> = beta
        .iter()
        .map(|(u, pin_value)| format!("{u}={pin_value}"))
        .collect();
    let report = RunReport {
        subcommand: "prob".into(),
        input_digest: Some(digest),
        parameters: ParameterEcho {
            n: Some(params.n()),
            a: Some(params.a()),
            alpha: Some(params.alpha()),
            k: Some(depth),
            c: contraction.map(|c| c.value()),
            vertex: Some(vertex),
            value: Some(value),
            pins: (!pin_echo.is_empty()).then_some(pin_echo),
            threads,
            ..Default::default()
        },
        results,
        warnings,
        timing_ms: 0.0,
    };
    Ok(Outcome {
        report,
        summary,
        exit_code: 0,
    })
}

fn cmd_volume(
    graph: &Path,
    alpha: f64,
    n: Option<u32>,
    depth: Option<u32>,
    mc: Option<u64>,
    threads: Option<usize>,
) -> anyhow::Result<Outcome> {
    let (g, digest) = load_graph(graph)?;
    let run = volume_estimate(&g, alpha, n, depth.map(DepthBudget::new))?;
    let params = *run.params();
    let m = g.live_count();

    let mut results = ResultFields {
        log_z: Some(run.log_z().log_value()),
        z: run.log_z().value(),
        log_volume: Some(run.log_volume().log_value()),
        volume: run.estimate(),
        ..Default::default()
    };
    let mut warnings: Vec<String> = run.warnings().iter().map(|w| w.to_string()).collect();
    let mut summary = Vec::new();
    match run.estimate() {
        Some(volume) => summary.push(format!("volume estimate = {volume:.9}")),
        None => summary.push(format!(
            "log volume estimate = {:.9}",
            run.log_volume().log_value()
        )),
    }
    summary.push(format!(
        "grid: N = {}, A = {} (effective restriction {:.6})",
        params.n(),
        params.a(),
        params.alpha()
    ));
    if let (Some(k), Some(c)) = (run.depth(), run.contraction()) {
        summary.push(format!(
            "depth k = {} at contraction bound c = {:.6}",
            k.k(),
            c.value()
        ));
    }

    let grid = GridParams::from(params);
    let bounds = UpperBoundSet::full(&grid, m);
    match sandwich(&g, &grid, &bounds) {
        Ok(s) => {
            let scale = f64::from(params.n()).powi(m as i32);
            let certified = s.guaranteed_lower() / scale;
            summary.push(format!(
                "lattice sandwich: {} inner, {} outer points; certified volume >= {certified:.9}",
                s.lower_count(),
                s.upper_count()
            ));
            results.sandwich_lower = Some(s.lower_count().to_string());
            results.sandwich_upper = Some(s.upper_count().to_string());
            results.certified_volume_lower = Some(certified);
        }
        Err(CoreError::BudgetExceeded(msg)) => {
            warnings.push(format!("sandwich counts skipped: {msg}"));
        }
        Err(err) => return Err(err.into()),
    }

    if let Some(samples) = mc {
        let (estimate, stderr) = mc_volume(&g, alpha, samples, 0)?;
        summary.push(format!(
            "Monte Carlo cross-check: {estimate:.9} (stderr {stderr:.3e}, {samples} samples)"
        ));
        results.mc_volume = Some(estimate);
        results.mc_stderr = Some(stderr);
    }

    let report = RunReport {
        subcommand: "volume".into(),
        input_digest: Some(digest),
        parameters: ParameterEcho {
            n: Some(params.n()),
            a: Some(params.a()),
            alpha: Some(alpha),
            k: run.depth().map(|k| k.k()),
            c: run.contraction().map(|c| c.value()),
            mc_samples: mc,
            threads,
            ..Default::default()
        },
        results,
        warnings,
        timing_ms: 0.0,
    };
    Ok(Outcome {
        report,
        summary,
        exit_code: 0,
    })
}

fn cmd_verify(suite: Suite, seed: u64, trials: u64, threads: Option<usize>) -> anyhow::Result<Outcome> {
    let suite_report = run_suite(suite, seed, trials)?;
    let passed = suite_report.passed();

    let mut summary = vec![format!(
        "suite {}: {} trials from seed {seed}",
        suite.name(),
        suite_report.trials()
    )];
    for property in suite_report.properties() {
        let mut line = format!(
            "property {}: {}/{} checks passed",
            property.name(),
            property.checks() - property.violations(),
            property.checks()
        );
        if let Some(first) = property.first_failure() {
            line.push_str(&format!(" (first failure: {first})"));
        }
        summary.push(line);
    }
    summary.push(if passed {
        "all properties passed".into()
    } else {
        "INVARIANT VIOLATIONS FOUND".into()
    });

    let properties: Vec<PropertyReport> = suite_report
        .properties()
        .iter()
        .map(|p| PropertyReport {
            name: p.name().to_string(),
            checks: p.checks(),
            violations: p.violations(),
        })
        .collect();
    let report = RunReport {
        subcommand: "verify".into(),
        input_digest: None,
        parameters: ParameterEcho {
            seed: Some(seed),
            trials: Some(trials),
            threads,
            ..Default::default()
        },
        results: ResultFields {
            suite_passed: Some(passed),
            properties: Some(properties),
            ..Default::default()
        },
        warnings: Vec::new(),
        timing_ms: 0.0,
    };
    Ok(Outcome {
        report,
        summary,
        exit_code: u8::from(!passed),
    })
}
