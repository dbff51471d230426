//! Command-line front end: `run`, `oracle`, `verify` and `compare`.
//!
//! Exit codes: 0 success, 1 verification failure or runtime error,
//! 2 usage, parse or configuration error.

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde_json::json;
use trialwise::engine::{parse_config, preset, AlgorithmConfig, Engine};
use trialwise::harness::{
    compare_presets, emit_metrics, oracle_value_iteration, summarize, verify_preset, MetricsFormat, MetricsRow,
};
use trialwise::mdp::{builtin, builtin_names, load_mdp, AccessHandle, TabularMdp};
use trialwise::Error;

/// Environment variable that overrides `--seed`.
pub const SEED_ENV: &str = "FRAP_SEED";

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAIL: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "trialwise", version, about = "Trial-based MDP planning and learning")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run one algorithm and write `PREFIX.csv` metrics plus `PREFIX.json` summary.
    Run(RunArgs),
    /// Solve an environment exactly and print the result as JSON.
    Oracle {
        #[arg(long)]
        env: String,
        #[arg(long, default_value_t = 1e-10)]
        tol: f64,
    },
    /// Check a preset against the oracle over several seeds.
    Verify {
        #[arg(long)]
        env: String,
        #[arg(long)]
        preset: String,
        /// Replaces every tolerance of the preset's criteria.
        #[arg(long)]
        tol: Option<f64>,
        #[arg(long, default_value_t = 10)]
        seeds: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Paired runs of two presets over the same seeds.
    Compare {
        #[arg(long)]
        env: String,
        /// Exactly two presets.
        #[arg(long = "preset", num_args = 1, required = true)]
        presets: Vec<String>,
        #[arg(long, default_value_t = 10)]
        seeds: usize,
        #[arg(long)]
        roots: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Debug, Args)]
struct RunArgs {
    /// Built-in name or path to an MDP file.
    #[arg(long)]
    env: String,
    #[arg(long, conflicts_with = "config", required_unless_present = "config")]
    preset: Option<String>,
    /// `key = value` file with a `preset` line and overrides.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    roots: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    /// Record real elapsed time in `wall_ms` (otherwise 0, keeping output reproducible).
    #[arg(long)]
    wall_clock: bool,
}

#[derive(Debug)]
enum Failure {
    Usage(String),
    Runtime(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Parse { .. } | Error::Config(_) | Error::UnknownPreset(_) | Error::Validation(_) => {
                Failure::Usage(e.to_string())
            }
            other => Failure::Runtime(other.to_string()),
        }
    }
}

fn load_env(spec: &str) -> Result<TabularMdp, Failure> {
    let path = Path::new(spec);
    if path.is_file() {
        let text = std::fs::read_to_string(path).map_err(|e| Failure::Usage(format!("IoError: {spec}: {e}")))?;
        return Ok(load_mdp(&text)?);
    }
    builtin(spec).ok_or_else(|| {
        Failure::Usage(format!(
            "unknown environment {spec:?}: not a file and not one of {}",
            builtin_names().join(", ")
        ))
    })
}

fn seed_override(seed: u64) -> Result<u64, Failure> {
    match std::env::var(SEED_ENV) {
        Ok(raw) => raw
            .trim()
            .parse()
            .map_err(|_| Failure::Usage(format!("{SEED_ENV} must be an unsigned integer, got {raw:?}"))),
        Err(_) => Ok(seed),
    }
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), Failure> {
    std::fs::write(path, bytes).map_err(|e| Failure::Runtime(format!("IoError: {}: {e}", path.display())))
}

fn with_extension(prefix: &Path, ext: &str) -> PathBuf {
    let mut name = prefix.as_os_str().to_owned();
    name.push(".");
    name.push(ext);
    PathBuf::from(name)
}

fn cmd_run(args: RunArgs, out: &mut dyn Write) -> Result<i32, Failure> {
    let mdp = load_env(&args.env)?;
    let (label, mut config): (String, AlgorithmConfig) = match (&args.preset, &args.config) {
        (Some(name), _) => (name.clone(), preset(name)?),
        (None, Some(path)) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| Failure::Usage(format!("IoError: {}: {e}", path.display())))?;
            (path.display().to_string(), parse_config(&text)?)
        }
        (None, None) => return Err(Failure::Usage("one of --preset or --config is required".into())),
    };
    if let Some(r) = args.roots {
        config.root_budget = r;
    }
    let seed = seed_override(args.seed)?;
    let handle = AccessHandle::new(&mdp, config.access_required, seed);
    let mut engine = Engine::new(config, handle, seed)?.with_wall_clock(args.wall_clock);
    while engine.step()?.is_some() {}
    let result = engine.into_result();

    let rows: Vec<MetricsRow> = result.records.iter().map(MetricsRow::from).collect();
    let csv_path = with_extension(&args.out, "csv");
    let json_path = with_extension(&args.out, "json");
    write_file(&csv_path, &emit_metrics(&rows, MetricsFormat::Csv)?)?;
    let stats = summarize(&result, &mdp)?;
    let summary = json!({
        "algorithm": label,
        "env": args.env,
        "seed": seed,
        "roots": result.records.len(),
        "queries": result.query_count,
        "converged": result.converged,
        "wall_ms": result.wall_ms,
        "v_root": result.records.last().map(|r| r.v_root),
        "mean_return": stats.mean_return,
        "policy_value": stats.policy_value,
    });
    let text = serde_json::to_string_pretty(&summary).map_err(|e| Failure::Runtime(e.to_string()))?;
    write_file(&json_path, text.as_bytes())?;
    let _ = writeln!(out, "{}", text);
    Ok(EXIT_OK)
}

fn cmd_oracle(env: &str, tol: f64, out: &mut dyn Write) -> Result<i32, Failure> {
    if !(tol > 0.0) {
        return Err(Failure::Usage(format!("--tol must be positive, got {tol}")));
    }
    let mdp = load_env(env)?;
    let oracle = oracle_value_iteration(&mdp, tol)?;
    let text = serde_json::to_string(&oracle).map_err(|e| Failure::Runtime(e.to_string()))?;
    let _ = writeln!(out, "{text}");
    Ok(EXIT_OK)
}

fn cmd_verify(
    env: &str,
    name: &str,
    tol: Option<f64>,
    seeds: usize,
    seed: u64,
    out: &mut dyn Write,
) -> Result<i32, Failure> {
    if seeds == 0 {
        return Err(Failure::Usage("--seeds must be at least 1".into()));
    }
    let mdp = load_env(env)?;
    let report = verify_preset(&mdp, name, tol, seeds, seed_override(seed)?)?;
    for check in &report.checks {
        let tol = check.tol.map(|t| format!(" tol={t:e}")).unwrap_or_default();
        let _ = writeln!(
            out,
            "{} {:?}{} {}/{} seeds (need {})",
            if check.pass { "PASS" } else { "FAIL" },
            check.kind,
            tol,
            check.passed_seeds,
            check.seeds,
            check.required_seeds
        );
    }
    let _ = writeln!(out, "{} {} on {}", if report.pass { "PASS" } else { "FAIL" }, name, env);
    Ok(if report.pass { EXIT_OK } else { EXIT_FAIL })
}

fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        0.5 * (xs[n / 2 - 1] + xs[n / 2])
    }
}

fn cmd_compare(
    env: &str,
    presets: &[String],
    seeds: usize,
    roots: Option<usize>,
    seed: u64,
    out: &mut dyn Write,
) -> Result<i32, Failure> {
    let [a, b] = presets else {
        return Err(Failure::Usage(format!("compare needs exactly two --preset values, got {}", presets.len())));
    };
    if seeds == 0 {
        return Err(Failure::Usage("--seeds must be at least 1".into()));
    }
    let mdp = load_env(env)?;
    let rows = compare_presets(&mdp, a, b, roots, seeds, seed_override(seed)?)?;
    let fmt = |x: Option<f64>| x.map(|v| format!("{v:.6}")).unwrap_or_else(|| "-".into());
    let _ = writeln!(out, "seed\t{a}.J\t{a}.return\t{a}.queries\t{b}.J\t{b}.return\t{b}.queries");
    for (x, y) in &rows {
        let _ = writeln!(
            out,
            "{}\t{:.6}\t{}\t{}\t{:.6}\t{}\t{}",
            x.seed,
            x.policy_value,
            fmt(x.mean_return),
            x.queries,
            y.policy_value,
            fmt(y.mean_return),
            y.queries
        );
    }
    let med_j = |pick: fn(&(trialwise::harness::RunSummary, trialwise::harness::RunSummary)) -> f64| {
        median(rows.iter().map(pick).collect())
    };
    let _ = writeln!(
        out,
        "median\t{:.6}\t\t{}\t{:.6}\t\t{}",
        med_j(|r| r.0.policy_value),
        med_j(|r| r.0.queries as f64),
        med_j(|r| r.1.policy_value),
        med_j(|r| r.1.queries as f64)
    );
    Ok(EXIT_OK)
}

/// Parses `argv` (including the program name), executes, and returns the exit code.
pub fn run_cli<I, S>(argv: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = if e.use_stderr() {
                write!(err, "{}", e.render())
            } else {
                write!(out, "{}", e.render())
            };
            return code;
        }
    };
    let outcome = match cli.command {
        Command::Run(args) => cmd_run(args, out),
        Command::Oracle { env, tol } => cmd_oracle(&env, tol, out),
        Command::Verify { env, preset, tol, seeds, seed } => cmd_verify(&env, &preset, tol, seeds, seed, out),
        Command::Compare { env, presets, seeds, roots, seed } => cmd_compare(&env, &presets, seeds, roots, seed, out),
    };
    match outcome {
        Ok(code) => code,
        Err(Failure::Usage(msg)) => {
            let _ = writeln!(err, "error: {msg}");
            EXIT_USAGE
        }
        Err(Failure::Runtime(msg)) => {
            let _ = writeln!(err, "error: {msg}");
            EXIT_FAIL
        }
    }
}
