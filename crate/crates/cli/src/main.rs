use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::warn;
use serde_json::json;

use robust_gram::bounds::{
    b_star, confidence_interval, grid_size, grid_threshold, make_grid, make_grid_clamped,
    sigma_default, zeta_star, Bound, MomentBounds, DEFAULT_A,
};
use robust_gram::covariance::{robust_covariance_with, CovarianceMode, CovarianceOptions};
use robust_gram::gram::{
    empirical_gram, positive_part, robust_gram, sym_eigen_desc, DEFAULT_STOP_TOL, DEFAULT_UPDATES,
};
use robust_gram::harness::{
    estimate_moment_bounds, read_matrix_file, run_benchmark, write_matrix_file, write_outputs,
    ExperimentConfig, DEFAULT_DIRECTIONS, DEFAULT_SAFETY_FACTOR,
};
use robust_gram::{Error, Sample};

const EXIT_CONFIG: u8 = 1;
const EXIT_NUMERICAL: u8 = 2;

/// Robust Gram and covariance matrix estimation.
#[derive(Parser)]
#[command(name = "robust-gram", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Estimate the Gram matrix of one sample, with per-direction intervals.
    Estimate(EstimateArgs),
    /// Evaluate the grid and the bound functions for given moments.
    Bounds(BoundsArgs),
    /// Run the heavy-tail mixture benchmark.
    Benchmark(BenchmarkArgs),
    /// Estimate a covariance matrix with unknown mean from q-blocks.
    Cov(CovArgs),
}

#[derive(Args)]
struct InputArgs {
    /// CSV file, one observation per row.
    #[arg(long)]
    input: PathBuf,
    /// Skip the first line of the input.
    #[arg(long)]
    header: bool,
}

#[derive(Args)]
struct MomentArgs {
    /// Kurtosis bound; with --s4 and --trace-g replaces the plug-in estimates.
    #[arg(long, requires_all = ["s4", "trace_g"])]
    kappa: Option<f64>,
    #[arg(long, requires = "kappa")]
    s4: Option<f64>,
    #[arg(long, requires = "kappa")]
    trace_g: Option<f64>,
    #[arg(long, default_value_t = 0.0)]
    trace_g2: f64,
}

#[derive(Args)]
struct EstimateArgs {
    #[command(flatten)]
    input: InputArgs,
    #[arg(long, default_value_t = 0.1)]
    epsilon: f64,
    #[arg(long, default_value_t = DEFAULT_UPDATES)]
    updates: usize,
    #[arg(long, default_value_t = DEFAULT_STOP_TOL)]
    stop_tol: f64,
    #[command(flatten)]
    moments: MomentArgs,
    /// Seed for the random directions of the plug-in kurtosis.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Args)]
struct BoundsArgs {
    #[arg(long)]
    n: usize,
    #[arg(long)]
    kappa: f64,
    #[arg(long)]
    s4: f64,
    #[arg(long)]
    trace_g: f64,
    #[arg(long, default_value_t = 0.0)]
    trace_g2: f64,
    #[arg(long, default_value_t = 0.05)]
    epsilon: f64,
    #[arg(long, default_value_t = DEFAULT_A)]
    a: f64,
    /// Energy threshold; defaults to the value that keeps B* finite.
    #[arg(long)]
    sigma: Option<f64>,
    /// Energies at which to evaluate ζ* and B*.
    #[arg(long, value_delimiter = ',', default_value = "0.1,1,10")]
    t: Vec<f64>,
}

#[derive(Args)]
struct BenchmarkArgs {
    /// JSON file with the experiment configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long)]
    updates: Option<usize>,
    #[arg(long)]
    q: Option<usize>,
    /// Worker threads (0 = all cores).
    #[arg(long)]
    jobs: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Iterative,
    Certified,
}

#[derive(Args)]
struct CovArgs {
    #[command(flatten)]
    input: InputArgs,
    #[arg(long, default_value_t = 2)]
    q: usize,
    #[arg(long, default_value_t = 0.1)]
    epsilon: f64,
    #[arg(long, value_enum, default_value = "iterative")]
    mode: ModeArg,
    #[arg(long, default_value_t = DEFAULT_UPDATES)]
    updates: usize,
    /// Clamp negative eigenvalues of the result to zero.
    #[arg(long)]
    positive_part: bool,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(EXIT_CONFIG)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let result = match cli.command {
        Command::Estimate(a) => estimate(a),
        Command::Bounds(a) => bounds(a),
        Command::Benchmark(a) => benchmark(a),
        Command::Cov(a) => cov(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::TooManyFailures { .. } | Error::NonFinite { .. } | Error::ScaleFailure { .. } => {
            EXIT_NUMERICAL
        }
        _ => EXIT_CONFIG,
    }
}

fn load(input: &InputArgs) -> Result<Sample, Error> {
    Sample::new(read_matrix_file(&input.input, input.header)?)
}

fn bound_json(b: Bound) -> serde_json::Value {
    match b {
        Bound::Finite(v) => json!(v),
        Bound::Unbounded => json!("inf"),
    }
}

fn print_json(v: &serde_json::Value) -> Result<(), Error> {
    let text = serde_json::to_string_pretty(v)?;
    match writeln!(std::io::stdout().lock(), "{text}") {
        Err(e) if e.kind() == std::io::ErrorKind::BrokenPipe => Ok(()),
        other => Ok(other?),
    }
}

fn estimate(a: EstimateArgs) -> Result<(), Error> {
    let sample = load(&a.input)?;
    let est = robust_gram(&sample, a.epsilon, a.updates, a.stop_tol)?;
    let q_plus = positive_part(&est.matrix);
    let gbar = empirical_gram(&sample);

    let mb = match (a.moments.kappa, a.moments.s4, a.moments.trace_g) {
        (Some(k), Some(s4), Some(tr)) => MomentBounds::new(k, s4, tr, a.moments.trace_g2)?,
        _ => estimate_moment_bounds(&sample, DEFAULT_DIRECTIONS, a.seed, DEFAULT_SAFETY_FACTOR)?,
    };
    let grid = match make_grid(sample.n(), &mb, DEFAULT_A, a.epsilon) {
        Ok(g) => g,
        Err(Error::SampleTooSmall { .. }) => {
            warn!(
                "n = {} is below the grid threshold {:.0}; intervals use a single grid point",
                sample.n(),
                grid_threshold(mb.kappa)
            );
            make_grid_clamped(sample.n(), &mb, DEFAULT_A, a.epsilon)?
        }
        Err(e) => return Err(e),
    };

    fs::create_dir_all(&a.out)?;
    write_matrix_file(&a.out.join("q.csv"), &est.matrix)?;
    write_matrix_file(&a.out.join("q_plus.csv"), &q_plus)?;
    write_matrix_file(&a.out.join("empirical.csv"), &gbar)?;

    let (values, vectors) = sym_eigen_desc(&est.matrix).ok_or(Error::NonFinite {
        iteration: est.iterations,
    })?;
    let mut intervals = Vec::new();
    let mut w = String::from("direction,estimate,lower,upper\n");
    for k in 0..values.len() {
        let theta = vectors.column(k).into_owned();
        let ci = confidence_interval(&sample, &theta, &grid, &mb, a.epsilon)?;
        let upper = match ci.upper {
            Bound::Finite(v) => format!("{v:.16e}"),
            Bound::Unbounded => "inf".into(),
        };
        w.push_str(&format!("{k},{:.16e},{:.16e},{upper}\n", values[k], ci.lower));
        intervals.push(json!({"estimate": values[k], "lower": ci.lower, "upper": bound_json(ci.upper)}));
    }
    fs::write(a.out.join("intervals.csv"), w)?;

    print_json(&json!({
        "n": sample.n(),
        "d": sample.d(),
        "iterations": est.iterations,
        "frobenius_deltas": est.frobenius_deltas,
        "lambda_used": est.lambda_used,
        "moment_bounds": mb,
        "grid_size": grid.k,
        "intervals": intervals,
        "out": a.out,
    }))
}

fn bounds(a: BoundsArgs) -> Result<(), Error> {
    let mb = MomentBounds::new(a.kappa, a.s4, a.trace_g, a.trace_g2)?;
    let grid = make_grid(a.n, &mb, a.a, a.epsilon);
    let k = grid_size(a.n as f64, a.kappa, a.a).max(1) as usize;
    let sigma = match a.sigma {
        Some(s) => Some(s),
        None => sigma_default(a.n, &mb, a.epsilon).ok(),
    };
    let evals: Vec<serde_json::Value> = a
        .t
        .iter()
        .map(|&t| {
            json!({
                "t": t,
                "zeta_star": zeta_star(t, &mb, k, a.epsilon),
                "b_star": bound_json(b_star(t, sigma.unwrap_or(0.0), a.n, &mb, k, a.epsilon)),
            })
        })
        .collect();
    let grid_json = match grid {
        Ok(g) => json!({"k": g.k, "points": g.points}),
        Err(e) => json!({"error": e.to_string()}),
    };
    print_json(&json!({
        "n": a.n,
        "moment_bounds": mb,
        "epsilon": a.epsilon,
        "a": a.a,
        "grid_threshold": grid_threshold(a.kappa),
        "grid": grid_json,
        "sigma": sigma,
        "evaluations": evals,
    }))
}

fn benchmark(a: BenchmarkArgs) -> Result<(), Error> {
    let mut cfg = match &a.config {
        Some(p) => ExperimentConfig::from_file(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(v) = a.seed {
        cfg.seed = v;
    }
    if let Some(v) = a.trials {
        cfg.trials = v;
    }
    if let Some(v) = a.epsilon {
        cfg.epsilon = v;
    }
    if let Some(v) = a.updates {
        cfg.num_updates = v;
    }
    if let Some(v) = a.q {
        cfg.q = v;
    }
    if let Some(v) = a.jobs {
        cfg.jobs = v;
    }
    if let Some(v) = &a.out {
        cfg.output_path = v.to_string_lossy().into_owned();
    }
    cfg.validate()?;
    let report = run_benchmark(&cfg)?;
    let out = Path::new(&cfg.output_path);
    write_outputs(&report, out)?;
    print_json(&serde_json::to_value(&report.summary)?)
}

fn cov(a: CovArgs) -> Result<(), Error> {
    let sample = load(&a.input)?;
    let opts = CovarianceOptions {
        q: a.q,
        epsilon: a.epsilon,
        mode: match a.mode {
            ModeArg::Iterative => CovarianceMode::IterativePractical,
            ModeArg::Certified => CovarianceMode::GridCertified,
        },
        num_updates: a.updates,
        positive_part: a.positive_part,
        ..CovarianceOptions::default()
    };
    let est = robust_covariance_with(&sample, &opts)?;
    fs::create_dir_all(&a.out)?;
    write_matrix_file(&a.out.join("covariance.csv"), &est.matrix)?;
    print_json(&json!({
        "n": sample.n(),
        "d": sample.d(),
        "q": a.q,
        "blocks": sample.n() / a.q,
        "iterations": est.iterations,
        "frobenius_deltas": est.frobenius_deltas,
        "lambda_used": est.lambda_used,
        "out": a.out,
    }))
}
