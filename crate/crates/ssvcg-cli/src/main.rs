//! Experiment harness for the auction library. Five subcommands cover the
//! full pipeline: `optimize` solves for rebate coefficients on sampled
//! constraints, `evaluate` grades saved coefficients on fresh samples,
//! `sweep` tabulates (n, alpha) grids as CSV, `check` runs the self-check
//! battery, and `equilibrium` verifies bid profiles for concrete agents.
//!
//! Exit codes: 0 on success, 1 when an experiment or property fails,
//! 2 for usage and configuration mistakes.

use std::fs;
use std::io::{BufWriter, Write as _};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Deserialize;
use serde_json::json;

use ssvcg::allocation::OrderedProfile;
use ssvcg::checks;
use ssvcg::equilibrium::{
    nash_bids, valuations_from_json_value, verify_best_response, verify_equilibrium_vp,
};
use ssvcg::mechanism::{payments, worst_case_ratio, RebateCoefficients};
use ssvcg::rebate_design::{
    assemble_samples, c_to_x, estimate_violation, optimize_rebates_with_samples, SamplingConfig,
};
use ssvcg::sampling::{
    calafiore_campi_count, ek_profiles, random_f_face_samples, random_ordered_samples,
    theory_constants, write_profiles_csv,
};
use ssvcg::surrogate::SurrogateSpec;

#[derive(Parser)]
#[command(
    name = "ssvcg",
    version,
    about = "Scalar-bid divisible-good auctions with worst-case-optimal rebates"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve for rebate coefficients on sampled constraints
    Optimize(OptimizeArgs),
    /// Evaluate a saved coefficient file on fresh samples
    Evaluate(EvaluateArgs),
    /// Tabulate a grid of (n, alpha) runs
    Sweep(SweepArgs),
    /// Run the self-check battery
    Check(CheckArgs),
    /// Equilibrium bids, mechanism outcome, and verification reports
    Equilibrium(EquilibriumArgs),
}

#[derive(Args)]
struct OptimizeArgs {
    /// Number of agents
    #[arg(long)]
    n: Option<usize>,
    /// Curvature of the announced curve a^(1 - alpha)
    #[arg(long)]
    alpha: Option<f64>,
    /// Seed for the training sampler
    #[arg(long)]
    seed: Option<u64>,
    /// Random training profiles per face (default 5000 * n)
    #[arg(long)]
    train_samples: Option<usize>,
    /// Scenario accuracy; together with --delta it sets the training count
    #[arg(long)]
    epsilon: Option<f64>,
    /// Scenario confidence; together with --epsilon it sets the training count
    #[arg(long)]
    delta: Option<f64>,
    /// Add a deterministic cover of this radius on each face
    #[arg(long, value_name = "EPS")]
    with_cover: Option<f64>,
    /// Give every sample both constraint rows instead of one per face
    #[arg(long)]
    combined_g: bool,
    /// Write the training samples to PREFIX_w.csv and PREFIX_f.csv
    #[arg(long, value_name = "PREFIX")]
    dump_samples: Option<PathBuf>,
    /// Write the result here instead of stdout
    #[arg(long)]
    out: Option<PathBuf>,
    /// Output format (this command emits json)
    #[arg(long, default_value = "json")]
    format: String,
    /// JSON file whose fields override the flags
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, short)]
    verbose: bool,
}

#[derive(Args)]
struct EvaluateArgs {
    /// Coefficient file produced by `optimize` (needs at least {"c": [...]})
    #[arg(long)]
    c_file: Option<PathBuf>,
    /// Number of agents; defaults to the value recorded in the file
    #[arg(long)]
    n: Option<usize>,
    /// Curve exponent; defaults to the value recorded in the file
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Seed for the evaluation sampler (default seed + 1000000007)
    #[arg(long)]
    eval_seed: Option<u64>,
    /// Fresh profiles per face (default 50000 * n)
    #[arg(long)]
    eval_samples: Option<usize>,
    /// Certified bound to count violations against; defaults to the file's
    #[arg(long)]
    t_numerical: Option<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Output format (this command emits json)
    #[arg(long, default_value = "json")]
    format: String,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, short)]
    verbose: bool,
}

#[derive(Args)]
struct SweepArgs {
    /// Inclusive range of agent counts, e.g. 4:8
    #[arg(long, value_name = "A:B")]
    n_range: Option<String>,
    /// Single agent count (alternative to --n-range)
    #[arg(long)]
    n: Option<usize>,
    /// Curve exponent; repeat for several columns of the grid
    #[arg(long)]
    alpha: Vec<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    eval_seed: Option<u64>,
    #[arg(long)]
    train_samples: Option<usize>,
    #[arg(long)]
    eval_samples: Option<usize>,
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long, value_name = "EPS")]
    with_cover: Option<f64>,
    #[arg(long)]
    combined_g: bool,
    #[arg(long)]
    out: Option<PathBuf>,
    /// csv (default) or json
    #[arg(long, default_value = "csv")]
    format: String,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, short)]
    verbose: bool,
}

#[derive(Args)]
struct CheckArgs {
    #[arg(long)]
    seed: Option<u64>,
    /// Also write the report as JSON
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    config: Option<PathBuf>,
    /// Print trial and violation counts per property
    #[arg(long, short)]
    verbose: bool,
}

#[derive(Args)]
struct EquilibriumArgs {
    /// JSON file with one entry per agent: [{"kind": "power", "w": 2.0, "beta": 0.5}, ...]
    #[arg(long)]
    valuations: Option<PathBuf>,
    #[arg(long)]
    alpha: Option<f64>,
    /// Coefficient file; rebates are zero when omitted
    #[arg(long)]
    c_file: Option<PathBuf>,
    /// Grid size for the deviation scan
    #[arg(long)]
    grid: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Output format (this command emits json)
    #[arg(long, default_value = "json")]
    format: String,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, short)]
    verbose: bool,
}

/// Optional overrides loaded with --config. Any field present here wins
/// over the corresponding flag.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    n: Option<usize>,
    n_range: Option<String>,
    alpha: Option<Vec<f64>>,
    seed: Option<u64>,
    eval_seed: Option<u64>,
    train_samples: Option<usize>,
    eval_samples: Option<usize>,
    epsilon: Option<f64>,
    delta: Option<f64>,
    with_cover: Option<f64>,
    combined_g: Option<bool>,
    t_numerical: Option<f64>,
    c_file: Option<PathBuf>,
    valuations: Option<serde_json::Value>,
    grid: Option<usize>,
}

/// Minimal shape `evaluate` and `equilibrium` need from a coefficient file;
/// the full `optimize` output parses because unknown fields are ignored.
#[derive(Debug, Deserialize)]
struct CoefficientFile {
    n: Option<usize>,
    alpha: Option<f64>,
    c: Vec<f64>,
    t_numerical: Option<f64>,
}

#[derive(Debug)]
enum Failure {
    Usage(String),
    Run(String),
}

type CliResult<T> = Result<T, Failure>;

fn usage(msg: impl Into<String>) -> Failure {
    Failure::Usage(msg.into())
}

impl From<ssvcg::Error> for Failure {
    fn from(e: ssvcg::Error) -> Self {
        Failure::Run(e.to_string())
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let setup = configure_threads().and_then(|()| match cli.command {
        Command::Optimize(args) => cmd_optimize(args),
        Command::Evaluate(args) => cmd_evaluate(args),
        Command::Sweep(args) => cmd_sweep(args),
        Command::Check(args) => cmd_check(args),
        Command::Equilibrium(args) => cmd_equilibrium(args),
    });
    match setup {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Run(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}

/// SSVCG_THREADS caps the worker pool; without the parallel feature the
/// value is validated and otherwise ignored.
fn configure_threads() -> CliResult<()> {
    let Some(raw) = std::env::var_os("SSVCG_THREADS") else {
        return Ok(());
    };
    let raw = raw.to_string_lossy();
    let threads: usize = raw
        .parse()
        .ok()
        .filter(|k| *k > 0)
        .ok_or_else(|| usage(format!("SSVCG_THREADS must be a positive integer, got {raw:?}")))?;
    #[cfg(feature = "parallel")]
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| Failure::Run(format!("thread pool setup failed: {e}")))?;
    #[cfg(not(feature = "parallel"))]
    let _ = threads;
    Ok(())
}

fn load_config(path: &Option<PathBuf>) -> CliResult<FileConfig> {
    let Some(p) = path else {
        return Ok(FileConfig::default());
    };
    let text = fs::read_to_string(p)
        .map_err(|e| usage(format!("cannot read config {}: {e}", p.display())))?;
    serde_json::from_str(&text).map_err(|e| usage(format!("bad config {}: {e}", p.display())))
}

fn check_n(n: usize) -> CliResult<usize> {
    if n < 2 {
        return Err(usage(format!("at least 2 agents are required, got n = {n}")));
    }
    Ok(n)
}

fn check_alpha(alpha: f64) -> CliResult<f64> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(usage(format!(
            "alpha must lie strictly between 0 and 1, got {alpha}"
        )));
    }
    Ok(alpha)
}

fn single_alpha(cfg: &FileConfig, flag: Option<f64>) -> CliResult<f64> {
    let from_config = match cfg.alpha.as_deref() {
        Some([one]) => Some(*one),
        Some([]) | None => None,
        Some(list) => {
            return Err(usage(format!(
                "config lists {} alphas; this command takes exactly one",
                list.len()
            )))
        }
    };
    let alpha = from_config
        .or(flag)
        .ok_or_else(|| usage("--alpha is required"))?;
    check_alpha(alpha)
}

/// Training count: explicit wins, then a scenario (epsilon, delta) pair
/// sized for the program's variable count, then the 5000 * n default.
fn resolve_train(
    n: usize,
    cfg: &FileConfig,
    flag_train: Option<usize>,
    flag_eps: Option<f64>,
    flag_delta: Option<f64>,
) -> CliResult<usize> {
    if let Some(k) = cfg.train_samples.or(flag_train) {
        return Ok(k);
    }
    match (cfg.epsilon.or(flag_eps), cfg.delta.or(flag_delta)) {
        (Some(eps), Some(delta)) => {
            calafiore_campi_count(eps, delta, n - 1).map_err(|e| usage(e.to_string()))
        }
        (None, None) => Ok(5000 * n),
        _ => Err(usage("--epsilon and --delta must be given together")),
    }
}

fn require_json(format: &str) -> CliResult<()> {
    match format {
        "json" => Ok(()),
        other => Err(usage(format!(
            "this command only emits json, got --format {other}"
        ))),
    }
}

fn emit(out: &Option<PathBuf>, text: &str) -> CliResult<()> {
    match out {
        None => {
            print!("{text}");
            Ok(())
        }
        Some(p) => {
            fs::write(p, text).map_err(|e| Failure::Run(format!("cannot write {}: {e}", p.display())))
        }
    }
}

fn emit_json(out: &Option<PathBuf>, body: &serde_json::Value) -> CliResult<()> {
    let mut text = serde_json::to_string_pretty(body)
        .map_err(|e| Failure::Run(format!("serialization failed: {e}")))?;
    text.push('\n');
    emit(out, &text)
}

/// Fixed-point formatting with 9 significant digits, used for every float
/// in CSV output so reruns are byte-identical.
fn fmt_sig9(x: f64) -> String {
    if !x.is_finite() {
        return x.to_string();
    }
    if x == 0.0 {
        return "0.00000000".to_string();
    }
    let magnitude = x.abs().log10().floor() as i32;
    let decimals = (8 - magnitude).max(0) as usize;
    format!("{x:.decimals$}")
}

fn parse_n_range(text: &str) -> CliResult<Vec<usize>> {
    let parts: Vec<&str> = text.split(':').collect();
    let [a, b] = parts.as_slice() else {
        return Err(usage(format!("--n-range takes A:B, got {text:?}")));
    };
    let lo: usize = a
        .trim()
        .parse()
        .map_err(|_| usage(format!("bad lower bound in --n-range {text:?}")))?;
    let hi: usize = b
        .trim()
        .parse()
        .map_err(|_| usage(format!("bad upper bound in --n-range {text:?}")))?;
    check_n(lo)?;
    if hi < lo {
        return Err(usage(format!("--n-range {text:?} is empty")));
    }
    Ok((lo..=hi).collect())
}

fn load_coefficient_file(path: &Path) -> CliResult<CoefficientFile> {
    let text = fs::read_to_string(path)
        .map_err(|e| usage(format!("cannot read coefficient file {}: {e}", path.display())))?;
    serde_json::from_str(&text)
        .map_err(|e| usage(format!("bad coefficient file {}: {e}", path.display())))
}

fn dump_samples(
    prefix: &Path,
    f_samples: &[OrderedProfile],
    w_samples: &[OrderedProfile],
) -> CliResult<()> {
    for (suffix, profiles) in [("_w.csv", w_samples), ("_f.csv", f_samples)] {
        let mut name = prefix.as_os_str().to_os_string();
        name.push(suffix);
        let path = PathBuf::from(name);
        let file = fs::File::create(&path)
            .map_err(|e| Failure::Run(format!("cannot create {}: {e}", path.display())))?;
        let mut writer = BufWriter::new(file);
        write_profiles_csv(&mut writer, profiles)
            .and_then(|()| writer.flush())
            .map_err(|e| Failure::Run(format!("cannot write {}: {e}", path.display())))?;
    }
    Ok(())
}

fn cmd_optimize(args: OptimizeArgs) -> CliResult<()> {
    require_json(&args.format)?;
    let cfg = load_config(&args.config)?;
    let n = check_n(cfg.n.or(args.n).ok_or_else(|| usage("--n is required"))?)?;
    let alpha = single_alpha(&cfg, args.alpha)?;
    let spec = SurrogateSpec::power_law(alpha)?;
    let seed = cfg.seed.or(args.seed).unwrap_or(1);
    let train = resolve_train(n, &cfg, args.train_samples, args.epsilon, args.delta)?;
    let cover = cfg.with_cover.or(args.with_cover);
    if let Some(eps) = cover {
        if !(eps > 0.0) {
            return Err(usage(format!("--with-cover needs a positive radius, got {eps}")));
        }
    }
    let sampling = SamplingConfig {
        train_count: train,
        seed,
        include_extremes: true,
        cover_epsilon: cover,
        combined_g: cfg.combined_g.unwrap_or(args.combined_g),
    };

    let (f_samples, w_samples) = assemble_samples(n, &sampling)?;
    if let Some(prefix) = &args.dump_samples {
        dump_samples(prefix, &f_samples, &w_samples)?;
    }
    if args.verbose {
        eprintln!(
            "n = {n}, alpha = {alpha}: {} budget rows, {} ratio rows",
            f_samples.len(),
            w_samples.len()
        );
    }

    let design = optimize_rebates_with_samples(&spec, n, &f_samples, &w_samples, true)?;
    if args.verbose {
        eprintln!(
            "solved in {} pivots (dual path: {}), t = {}",
            design.lp_stats.pivots, design.lp_stats.dual_path, design.t
        );
    }
    let constants = theory_constants(&spec, n)?;
    let body = json!({
        "n": n,
        "alpha": alpha,
        "seed": seed,
        "train_samples": train,
        "c": design.c.c(),
        "t_numerical": design.t,
        "constants": constants,
        "lp_stats": design.lp_stats,
    });
    emit_json(&args.out, &body)
}

fn cmd_evaluate(args: EvaluateArgs) -> CliResult<()> {
    require_json(&args.format)?;
    let cfg = load_config(&args.config)?;
    let path = cfg
        .c_file
        .clone()
        .or(args.c_file)
        .ok_or_else(|| usage("--c-file is required"))?;
    let file = load_coefficient_file(&path)?;
    let n = check_n(
        cfg.n
            .or(args.n)
            .or(file.n)
            .ok_or_else(|| usage("--n is required when the coefficient file does not record it"))?,
    )?;
    let alpha = match (cfg.alpha.as_deref(), args.alpha, file.alpha) {
        (Some([one]), _, _) => *one,
        (_, Some(a), _) => a,
        (_, None, Some(a)) => a,
        _ => return Err(usage("--alpha is required when the coefficient file does not record it")),
    };
    check_alpha(alpha)?;
    let spec = SurrogateSpec::power_law(alpha)?;
    let c = RebateCoefficients::new(n, file.c)
        .map_err(|e| usage(format!("coefficient file rejected: {e}")))?;

    let seed = cfg.seed.or(args.seed).unwrap_or(1);
    let eval_seed = cfg
        .eval_seed
        .or(args.eval_seed)
        .unwrap_or(seed + 1_000_000_007);
    let count = cfg.eval_samples.or(args.eval_samples).unwrap_or(50_000 * n);
    if count == 0 {
        return Err(usage("--eval-samples must be positive"));
    }

    let w_samples = random_ordered_samples(n, count, eval_seed)?;
    let wc = worst_case_ratio(&spec, &c, &w_samples)?;
    let t_reference = cfg.t_numerical.or(args.t_numerical).or(file.t_numerical);
    let violation = match t_reference {
        Some(t) => {
            let xv = c_to_x(&c, t);
            let f_samples = random_f_face_samples(n, count, eval_seed)?;
            Some(estimate_violation(&spec, &xv, &f_samples, &w_samples)?)
        }
        None => None,
    };
    if args.verbose {
        eprintln!(
            "evaluated {count} fresh profiles per face at seed {eval_seed}; worst ratio {}",
            wc.value
        );
    }

    let body = json!({
        "n": n,
        "alpha": alpha,
        "eval_seed": eval_seed,
        "eval_samples": count,
        "t_numerical": t_reference,
        "t_simulated": wc.value,
        "argmax_profile": wc.argmax.theta(),
        "violation_fraction": violation.as_ref().map(|v| v.fraction),
        "violations": violation.as_ref().map(|v| v.violations),
        "checked_constraints": violation.as_ref().map(|v| v.total),
    });
    emit_json(&args.out, &body)
}

fn cmd_sweep(args: SweepArgs) -> CliResult<()> {
    if args.format != "csv" && args.format != "json" {
        return Err(usage(format!(
            "--format must be csv or json, got {}",
            args.format
        )));
    }
    let cfg = load_config(&args.config)?;
    let n_list = match (cfg.n_range.as_deref().or(args.n_range.as_deref()), cfg.n.or(args.n)) {
        (Some(range), _) => parse_n_range(range)?,
        (None, Some(n)) => vec![check_n(n)?],
        (None, None) => return Err(usage("--n or --n-range A:B is required")),
    };
    let alphas = match cfg.alpha.clone() {
        Some(list) if !list.is_empty() => list,
        _ if !args.alpha.is_empty() => args.alpha.clone(),
        _ => return Err(usage("at least one --alpha is required")),
    };
    for &a in &alphas {
        check_alpha(a)?;
    }
    let seed = cfg.seed.or(args.seed).unwrap_or(1);
    let eval_seed = cfg
        .eval_seed
        .or(args.eval_seed)
        .unwrap_or(seed + 1_000_000_007);

    let mut rows = Vec::new();
    for &n in &n_list {
        for &alpha in &alphas {
            let spec = SurrogateSpec::power_law(alpha)?;
            let train = resolve_train(n, &cfg, args.train_samples, args.epsilon, args.delta)?;
            let sampling = SamplingConfig {
                train_count: train,
                seed,
                include_extremes: true,
                cover_epsilon: cfg.with_cover.or(args.with_cover),
                combined_g: cfg.combined_g.unwrap_or(args.combined_g),
            };
            let (f_samples, w_samples) = assemble_samples(n, &sampling)?;
            let design = optimize_rebates_with_samples(&spec, n, &f_samples, &w_samples, true)?;

            let eval_count = cfg.eval_samples.or(args.eval_samples).unwrap_or(50_000 * n);
            // One pool: extremes first so the no-rebate column hits its
            // supremum, fresh profiles after for the simulated column.
            let mut pool = ek_profiles(n);
            pool.extend(random_ordered_samples(n, eval_count, eval_seed)?);
            let t_ssvcg = worst_case_ratio(&spec, &RebateCoefficients::zero(n), &pool)?.value;
            let t_simulated = worst_case_ratio(&spec, &design.c, &pool[n..])?.value;
            let t_scaled = design.t / (1.0 - alpha);
            if args.verbose {
                eprintln!(
                    "n = {n}, alpha = {alpha}: t = {} in {} pivots",
                    design.t, design.lp_stats.pivots
                );
            }
            rows.push((n, alpha, t_ssvcg, design.t, t_simulated, t_scaled));
        }
    }

    let text = if args.format == "csv" {
        let mut out = String::from("n,alpha,t_ssvcg,t_numerical,t_simulated,t_scaled\n");
        for (n, alpha, t_ssvcg, t_numerical, t_simulated, t_scaled) in &rows {
            out.push_str(&format!(
                "{n},{},{},{},{},{}\n",
                fmt_sig9(*alpha),
                fmt_sig9(*t_ssvcg),
                fmt_sig9(*t_numerical),
                fmt_sig9(*t_simulated),
                fmt_sig9(*t_scaled),
            ));
        }
        out
    } else {
        let body: Vec<serde_json::Value> = rows
            .iter()
            .map(|(n, alpha, t_ssvcg, t_numerical, t_simulated, t_scaled)| {
                json!({
                    "n": n,
                    "alpha": alpha,
                    "t_ssvcg": t_ssvcg,
                    "t_numerical": t_numerical,
                    "t_simulated": t_simulated,
                    "t_scaled": t_scaled,
                })
            })
            .collect();
        let mut text = serde_json::to_string_pretty(&body)
            .map_err(|e| Failure::Run(format!("serialization failed: {e}")))?;
        text.push('\n');
        text
    };
    emit(&args.out, &text)
}

fn cmd_check(args: CheckArgs) -> CliResult<()> {
    let cfg = load_config(&args.config)?;
    let seed = cfg.seed.or(args.seed).unwrap_or(12345);
    let outcomes = checks::run_all(seed);
    let mut failed = 0usize;
    for o in &outcomes {
        if o.passed {
            if args.verbose {
                println!(
                    "check {}: PASS ({} trials, {} violations)",
                    o.name, o.trials, o.violations
                );
            } else {
                println!("check {}: PASS", o.name);
            }
        } else {
            failed += 1;
            println!("check {}: FAIL ({})", o.name, o.detail);
        }
    }
    println!("{} checks run, {failed} failed", outcomes.len());

    if args.out.is_some() {
        let body: Vec<serde_json::Value> = outcomes
            .iter()
            .map(|o| {
                json!({
                    "name": o.name,
                    "passed": o.passed,
                    "trials": o.trials,
                    "violations": o.violations,
                    "detail": o.detail,
                })
            })
            .collect();
        emit_json(&args.out, &serde_json::Value::Array(body))?;
    }

    if failed > 0 {
        return Err(Failure::Run(format!(
            "{failed} of {} checks failed",
            outcomes.len()
        )));
    }
    Ok(())
}

fn cmd_equilibrium(args: EquilibriumArgs) -> CliResult<()> {
    require_json(&args.format)?;
    let cfg = load_config(&args.config)?;
    let raw = match (&cfg.valuations, &args.valuations) {
        (Some(value), _) => value.clone(),
        (None, Some(path)) => {
            let text = fs::read_to_string(path).map_err(|e| {
                usage(format!("cannot read valuations {}: {e}", path.display()))
            })?;
            serde_json::from_str(&text)
                .map_err(|e| usage(format!("bad valuations {}: {e}", path.display())))?
        }
        (None, None) => return Err(usage("--valuations FILE is required")),
    };
    let vals = valuations_from_json_value(&raw).map_err(|e| usage(e.to_string()))?;
    if vals.len() < 2 {
        return Err(usage(format!(
            "at least two agents are required, the valuations list has {}",
            vals.len()
        )));
    }
    let n = vals.len();
    let alpha = single_alpha(&cfg, args.alpha)?;
    let spec = SurrogateSpec::power_law(alpha)?;
    let c = match cfg.c_file.clone().or(args.c_file) {
        Some(path) => {
            let file = load_coefficient_file(&path)?;
            RebateCoefficients::new(n, file.c)
                .map_err(|e| usage(format!("coefficient file rejected: {e}")))?
        }
        None => RebateCoefficients::zero(n),
    };
    let grid = cfg.grid.or(args.grid).unwrap_or(48);

    let ne = nash_bids(&vals, &spec)?;
    let outcome = payments(&spec, &ne.theta, &c)?;
    let vp_report = verify_equilibrium_vp(&vals, &spec, &c)?;
    let br_report: Vec<_> = (0..n)
        .map(|i| verify_best_response(&vals, &spec, &ne.theta, i, grid))
        .collect::<Result<_, _>>()?;

    let all_participate = vp_report.agents.iter().all(|a| a.participates);
    let all_best = br_report.iter().all(|r| r.is_best_response);
    if args.verbose {
        for r in &br_report {
            eprintln!(
                "agent {}: bid {}, best deviation {} gains {}",
                r.agent, r.own_bid, r.best_bid, r.gain
            );
        }
    }

    let body = json!({
        "theta_ne": ne.theta.theta(),
        "first_best_allocation": ne.allocation,
        "outcome": outcome,
        "vp_report": vp_report,
        "br_report": br_report,
        "verified": all_participate && all_best,
    });
    emit_json(&args.out, &body)?;

    if !(all_participate && all_best) {
        return Err(Failure::Run(
            "equilibrium verification failed; see vp_report and br_report".into(),
        ));
    }
    Ok(())
}
