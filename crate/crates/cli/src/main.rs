use std::path::{Path, PathBuf};
use std::process::ExitCode;

use amc_core::concrete::{oracle_estimate, NondetSpec, OracleError, OracleMode, OracleReport};
use amc_core::estimator::EstimatorError;
use amc_core::interp::Analyzer;
use amc_core::{parse_with_query, plan_trials, run, run_restricted, AnalysisConfig, Program, RestrictionSpec, RunParams};
use clap::{Args, Parser, Subcommand, ValueEnum};

/// Upper bounds on outcome probabilities by randomized abstract interpretation.
#[derive(Debug, Parser)]
#[command(name = "amc", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Bound the probability of reaching the program's outcome.
    Analyze(AnalyzeArgs),
    /// Reference estimate from the concrete semantics.
    Oracle(OracleArgs),
    /// Trials needed for a given margin and failure probability.
    Plan(PlanArgs),
    /// CSV tables of trial counts and exceedance bounds.
    Curves(CurvesArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Format {
    Text,
    Json,
}

#[derive(Debug, Args)]
struct AnalyzeArgs {
    input: PathBuf,
    /// Number of trials.
    #[arg(long, default_value_t = 10_000)]
    trials: u64,
    /// Failure probability of the bound.
    #[arg(long, default_value_t = 0.01)]
    epsilon: f64,
    /// Master seed.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Worker threads (default: available parallelism).
    #[arg(long, env = "AMC_JOBS")]
    jobs: Option<usize>,
    /// Iterations unrolled with sampling before a loop is summarized.
    #[arg(long, default_value_t = 64)]
    unroll: u32,
    #[arg(long, default_value_t = 2)]
    widening_delay: u32,
    #[arg(long, default_value_t = 2)]
    narrowing_passes: u32,
    /// Abstract steps per trial before it is counted as a hit.
    #[arg(long, default_value_t = 1_000_000)]
    step_budget: u64,
    #[arg(long, value_enum, default_value_t = Format::Text)]
    format: Format,
    /// Outcome condition replacing the program's final `know`.
    #[arg(long)]
    query: Option<String>,
    /// JSON restriction spec; rescales by Pr(R) under the user's assertion.
    #[arg(long)]
    restrict: Option<PathBuf>,
    /// Print the trace of the first trial on stderr.
    #[arg(long)]
    trace: bool,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Mode {
    Exact,
    Sampled,
}

#[derive(Debug, Args)]
struct OracleArgs {
    input: PathBuf,
    #[arg(long, value_enum, default_value_t = Mode::Sampled)]
    mode: Mode,
    /// Random inputs drawn in sampled mode.
    #[arg(long, default_value_t = 100_000)]
    n: u64,
    /// Grid points per nondeterministic input.
    #[arg(long, default_value_t = 64)]
    grid: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    query: Option<String>,
    #[arg(long, value_enum, default_value_t = Format::Text)]
    format: Format,
}

#[derive(Debug, Args)]
struct PlanArgs {
    /// Margin between the estimate and the bound.
    #[arg(long)]
    t: f64,
    #[arg(long)]
    epsilon: f64,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum CurveKind {
    /// Trials needed when epsilon = alpha * t, over a log-spaced t grid.
    Speed,
    /// exp(-2 n t^2) for n from 0 to n-max.
    Exceed,
}

#[derive(Debug, Args)]
struct CurvesArgs {
    #[arg(long, value_enum, default_value_t = CurveKind::Speed)]
    kind: CurveKind,
    #[arg(long, default_value_t = 1.0)]
    alpha: f64,
    #[arg(long, default_value_t = 0.001)]
    t_min: f64,
    #[arg(long, default_value_t = 0.1)]
    t_max: f64,
    #[arg(long, default_value_t = 50)]
    points: usize,
    /// Margin for the exceed table.
    #[arg(long, default_value_t = 0.01)]
    t: f64,
    #[arg(long, default_value_t = 50_000)]
    n_max: u64,
}

/// Failure with its exit code: 1 for usage and domain errors, 2 for input
/// that cannot be read, parsed or validated.
enum Failure {
    Usage(String),
    Input(String),
}

impl From<EstimatorError> for Failure {
    fn from(e: EstimatorError) -> Self {
        match e {
            EstimatorError::Trial { .. } => Failure::Input(e.to_string()),
            _ => Failure::Usage(e.to_string()),
        }
    }
}

fn load(path: &Path, query: Option<&str>) -> Result<Program, Failure> {
    let src = std::fs::read_to_string(path).map_err(|e| Failure::Input(format!("{}: {e}", path.display())))?;
    let mut p = parse_with_query(&src, query).map_err(|e| Failure::Input(format!("{}: {e}", path.display())))?;
    p.name = path.file_name().map_or_else(|| path.display().to_string(), |n| n.to_string_lossy().into_owned());
    Ok(p)
}

fn to_json<T: serde::Serialize>(v: &T) -> String {
    serde_json::to_string_pretty(v).expect("report serializes")
}

fn analyze(a: AnalyzeArgs) -> Result<String, Failure> {
    let jobs = a
        .jobs
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    let params = RunParams {
        trials: a.trials,
        epsilon: a.epsilon,
        seed: a.seed,
        jobs,
    };
    if params.trials == 0 || params.jobs == 0 {
        return Err(Failure::Usage("--trials and --jobs must be at least 1".into()));
    }
    amc_core::margin(params.trials, params.epsilon)?;
    let cfg = AnalysisConfig {
        unroll_limit: a.unroll,
        widening_delay: a.widening_delay,
        narrowing_passes: a.narrowing_passes,
        step_budget: a.step_budget,
        ..AnalysisConfig::default()
    };
    let restriction = match &a.restrict {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| Failure::Input(format!("{}: {e}", path.display())))?;
            Some(RestrictionSpec::from_json(&text).map_err(|e| Failure::Input(format!("{}: {e}", path.display())))?)
        }
        None => None,
    };
    let p = load(&a.input, a.query.as_deref())?;
    if a.trace {
        let seed = amc_core::seed::trial_seed(params.seed, 0);
        let t = Analyzer::new(&p, &cfg)
            .traced(true)
            .run(seed)
            .map_err(|e| Failure::Input(e.to_string()))?;
        for line in &t.trace {
            eprintln!("{line}");
        }
    }
    let report = match &restriction {
        Some(spec) => run_restricted(&p, spec, &params, &cfg)?,
        None => run(&p, &params, &cfg)?,
    };
    Ok(match a.format {
        Format::Json => to_json(&report),
        Format::Text => report.render_text(),
    })
}

fn render_oracle(r: &OracleReport, format: Format) -> String {
    match format {
        Format::Json => to_json(r),
        Format::Text => {
            let mode = match r.mode {
                OracleMode::ExactDiscrete => "exact-discrete",
                OracleMode::Sampled => "sampled",
            };
            let mut out = format!(
                "mode      {mode}\nestimate  {}\n{:<10}{}\ngrid      {}\n",
                r.estimate,
                if r.mode == OracleMode::Sampled { "samples" } else { "paths" },
                r.paths_or_samples,
                r.grid
            );
            if let Some(s) = r.seed {
                out.push_str(&format!("seed      {s}\n"));
            }
            out
        }
    }
}

fn oracle(a: OracleArgs) -> Result<String, Failure> {
    let mode = match a.mode {
        Mode::Exact => OracleMode::ExactDiscrete,
        Mode::Sampled => OracleMode::Sampled,
    };
    if a.grid == 0 {
        return Err(Failure::Usage("--grid must be at least 1".into()));
    }
    if mode == OracleMode::Sampled && a.n == 0 {
        return Err(Failure::Usage("--n must be at least 1".into()));
    }
    let p = load(&a.input, a.query.as_deref())?;
    let spec = NondetSpec::infer(&p, a.grid).map_err(oracle_failure)?;
    let r = oracle_estimate(&p, &spec, mode, a.n, a.seed).map_err(oracle_failure)?;
    Ok(render_oracle(&r, a.format))
}

fn oracle_failure(e: OracleError) -> Failure {
    match e {
        OracleError::ContinuousGenerator(_) | OracleError::PathBudget(_) | OracleError::DepthLimit(_) => {
            Failure::Usage(format!("exact mode infeasible: {e}"))
        }
        _ => Failure::Usage(e.to_string()),
    }
}

fn plan(a: PlanArgs) -> Result<String, Failure> {
    Ok(format!("{}\n", plan_trials(a.t, a.epsilon)?))
}

fn curves(a: CurvesArgs) -> Result<String, Failure> {
    if a.points < 2 {
        return Err(Failure::Usage("--points must be at least 2".into()));
    }
    let mut out = String::new();
    match a.kind {
        CurveKind::Speed => {
            if !(a.t_min > 0.0 && a.t_min < a.t_max && a.alpha > 0.0) {
                return Err(Failure::Usage("need 0 < t-min < t-max and alpha > 0".into()));
            }
            out.push_str("t,epsilon,n\n");
            let (l0, l1) = (a.t_min.ln(), a.t_max.ln());
            for i in 0..a.points {
                let t = if i == 0 {
                    a.t_min
                } else if i + 1 == a.points {
                    a.t_max
                } else {
                    (l0 + (l1 - l0) * i as f64 / (a.points - 1) as f64).exp()
                };
                let eps = a.alpha * t;
                out.push_str(&format!("{t},{eps},{}\n", plan_trials(t, eps)?));
            }
        }
        CurveKind::Exceed => {
            if !(a.t > 0.0 && a.t <= 1.0) || a.n_max == 0 {
                return Err(Failure::Usage("need 0 < t <= 1 and n-max >= 1".into()));
            }
            out.push_str("n,probability\n");
            for i in 0..a.points {
                let n = (a.n_max as f64 * i as f64 / (a.points - 1) as f64).round() as u64;
                out.push_str(&format!("{n},{}\n", (-2.0 * n as f64 * a.t * a.t).exp()));
            }
        }
    }
    Ok(out)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let result = match cli.command {
        Command::Analyze(a) => analyze(a),
        Command::Oracle(a) => oracle(a),
        Command::Plan(a) => plan(a),
        Command::Curves(a) => curves(a),
    };
    match result {
        Ok(out) => {
            print!("{out}");
            if !out.ends_with('\n') {
                println!();
            }
            ExitCode::SUCCESS
        }
        Err(Failure::Usage(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
        Err(Failure::Input(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
    }
}
