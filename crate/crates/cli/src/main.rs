//! Command-line front end for the refresh-interval allocation library.
//!
//! Machine-readable output (JSON, or CSV for sweeps) goes to stdout or
//! `--output`; a one-line human summary goes to stderr. Exit codes: 0 on
//! success, 2 for usage/configuration/I/O problems, 3 for domain or
//! infeasibility errors (and failed verification), 4 for numeric
//! non-convergence.

use std::fs;
use std::io::Read;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Deserialize;
use serde_json::{json, Value};

use refresh_opt::{
    brute_force_discrete, default_budget_grid, default_z_cap, fit_ber_model, load_measurements,
    log_spaced_budgets, min_power_for_mse, mse_for_psnr, psnr, refresh_power, run_sweep, solve,
    solve_discrete, verify_kkt, word_mse, AllocationMethod, BerModel, DeviceParams, Error,
    KktReport, RefreshPlan, SolveReport, SweepRow,
};

/// Residual threshold below which a re-checked certificate passes.
const VERIFY_TOLERANCE: f64 = 1e-8;

#[derive(Parser)]
#[command(
    name = "refresh-opt",
    version,
    about = "Optimal per-bit refresh intervals under a refresh power budget"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the continuous allocation for one power budget
    Solve(SolveArgs),
    /// Solve the integer-step (lattice) allocation for one power budget
    SolveDiscrete(SolveDiscreteArgs),
    /// Fit BER model constants from retention measurements
    Fit(FitArgs),
    /// Compare optimal, uniform, and lattice allocations over a budget grid
    Sweep(SweepArgs),
    /// Minimum powers and power savings at a fidelity target
    Savings(SavingsArgs),
    /// Re-check the optimality certificate of a solve report
    Verify(VerifyArgs),
}

#[derive(Args, Clone, Default)]
struct CommonArgs {
    /// BER model scale constant (default 2.7737e-7)
    #[arg(long)]
    alpha: Option<f64>,
    /// BER model exponential rate in 1/s (default 1.9508)
    #[arg(long)]
    beta: Option<f64>,
    /// Word width in bits (default 8)
    #[arg(long)]
    bits: Option<u32>,
    /// Minimum refresh interval in seconds (default 0.064)
    #[arg(long)]
    delta: Option<f64>,
    /// JSON file supplying any flag by its kebab-case name; explicit flags win
    #[arg(long)]
    config: Option<PathBuf>,
    /// Write machine-readable output to this file instead of stdout
    #[arg(long)]
    output: Option<PathBuf>,
    /// Output format (csv applies to sweep only)
    #[arg(long, value_enum)]
    format: Option<OutputFormat>,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum OutputFormat {
    Json,
    Csv,
}

#[derive(Args)]
struct SolveArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Refresh power budget (sum of 1/t_b)
    #[arg(long, allow_negative_numbers = true)]
    budget: Option<f64>,
}

#[derive(Args)]
struct SolveDiscreteArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Refresh power budget (sum of 1/t_b)
    #[arg(long, allow_negative_numbers = true)]
    budget: Option<f64>,
    /// Step multiplier: intervals are multiples of gamma * delta (default 1)
    #[arg(long)]
    gamma: Vec<u32>,
    /// Largest step count considered per bit (default: model-based)
    #[arg(long)]
    z_cap: Option<u32>,
    /// Cross-check with exhaustive enumeration (small instances only)
    #[arg(long)]
    brute_force: bool,
}

#[derive(Args)]
struct FitArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// CSV file of retention measurements with header `interval_s,ber`
    #[arg(long)]
    measurements: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Budget grid: a file of budgets, or `min:max:count-log` (default:
    /// 200 log-spaced budgets from 1 to the maximum power)
    #[arg(long)]
    budgets: Option<String>,
    /// Add a lattice column with this step multiplier (repeatable)
    #[arg(long)]
    gamma: Vec<u32>,
}

#[derive(Args)]
struct SavingsArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Fidelity target as a word MSE
    #[arg(long)]
    target_mse: Option<f64>,
    /// Fidelity target as a PSNR in dB
    #[arg(long)]
    target_psnr: Option<f64>,
}

#[derive(Args)]
struct VerifyArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Solve report (JSON) to check; reads stdin when omitted. Model
    /// parameters are taken from the report itself.
    #[arg(long)]
    report: Option<PathBuf>,
}

/// Flag values supplied through `--config`; same kebab-case names as flags.
#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
struct FileConfig {
    alpha: Option<f64>,
    beta: Option<f64>,
    bits: Option<u32>,
    delta: Option<f64>,
    budget: Option<f64>,
    target_mse: Option<f64>,
    target_psnr: Option<f64>,
    gamma: Option<Vec<u32>>,
    z_cap: Option<u32>,
    budgets: Option<String>,
    measurements: Option<PathBuf>,
    output: Option<PathBuf>,
    format: Option<String>,
}

/// A failure with its process exit code.
enum Failure {
    /// Bad flags, config, or input files the user must correct (exit 2).
    Usage(String),
    /// An error from the library (exit per its kind).
    Solver(Error),
    /// A verification that ran fine but did not pass (exit 3).
    Check(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Solver(e)
    }
}

impl Failure {
    fn exit_code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 2,
            Failure::Check(_) => 3,
            Failure::Solver(e) => match e {
                Error::NonConvergence(_) => 4,
                Error::Io(_) => 2,
                _ => 3,
            },
        }
    }

    fn message(&self) -> String {
        match self {
            Failure::Usage(m) => m.clone(),
            Failure::Check(m) => m.clone(),
            Failure::Solver(e) => e.to_string(),
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message());
            ExitCode::from(f.exit_code())
        }
    }
}

fn run(command: Command) -> Result<(), Failure> {
    match command {
        Command::Solve(a) => cmd_solve(a),
        Command::SolveDiscrete(a) => cmd_solve_discrete(a),
        Command::Fit(a) => cmd_fit(a),
        Command::Sweep(a) => cmd_sweep(a),
        Command::Savings(a) => cmd_savings(a),
        Command::Verify(a) => cmd_verify(a),
    }
}

// ---------- configuration plumbing ----------

fn load_config(common: &CommonArgs) -> Result<FileConfig, Failure> {
    let Some(path) = &common.config else {
        return Ok(FileConfig::default());
    };
    let text = fs::read_to_string(path)
        .map_err(|e| Failure::Usage(format!("--config {}: {e}", path.display())))?;
    serde_json::from_str(&text)
        .map_err(|e| Failure::Usage(format!("--config {}: {e}", path.display())))
}

/// Merged scalar settings: explicit flag, else config, else default.
struct Resolved {
    model: BerModel,
    params: DeviceParams,
    output: Option<PathBuf>,
    format: OutputFormat,
}

fn resolve(common: &CommonArgs, config: &FileConfig, gamma: u32) -> Result<Resolved, Failure> {
    let alpha = common.alpha.or(config.alpha).unwrap_or(2.7737e-7);
    let beta = common.beta.or(config.beta).unwrap_or(1.9508);
    let bits = common.bits.or(config.bits).unwrap_or(8);
    let delta = common.delta.or(config.delta).unwrap_or(0.064);
    let model = BerModel::new(alpha, beta)?;
    let params = DeviceParams::new(bits, delta, gamma)?;
    let format = match (&common.format, &config.format) {
        (Some(f), _) => *f,
        (None, Some(s)) => match s.as_str() {
            "json" => OutputFormat::Json,
            "csv" => OutputFormat::Csv,
            other => {
                return Err(Failure::Usage(format!(
                    "--format: expected `json` or `csv`, got `{other}`"
                )))
            }
        },
        (None, None) => OutputFormat::Json,
    };
    Ok(Resolved {
        model,
        params,
        output: common.output.clone().or_else(|| config.output.clone()),
        format,
    })
}

fn require_json(format: OutputFormat) -> Result<(), Failure> {
    if format == OutputFormat::Csv {
        return Err(Failure::Usage(
            "--format: csv is only available for sweep".to_string(),
        ));
    }
    Ok(())
}

/// One gamma from a repeatable flag plus config, defaulting to 1.
fn single_gamma(flag: &[u32], config: &FileConfig) -> Result<u32, Failure> {
    let merged: Vec<u32> = if flag.is_empty() {
        config.gamma.clone().unwrap_or_default()
    } else {
        flag.to_vec()
    };
    match merged.len() {
        0 => Ok(1),
        1 => Ok(merged[0]),
        _ => Err(Failure::Usage(
            "--gamma: this command accepts exactly one step multiplier".to_string(),
        )),
    }
}

fn emit(resolved: &Resolved, bytes: &[u8]) -> Result<(), Failure> {
    match &resolved.output {
        Some(path) => fs::write(path, bytes).map_err(|e| Failure::Solver(Error::Io(e))),
        None => {
            use std::io::Write;
            std::io::stdout()
                .write_all(bytes)
                .map_err(|e| Failure::Solver(Error::Io(e)))
        }
    }
}

fn emit_json(resolved: &Resolved, value: &Value) -> Result<(), Failure> {
    let mut text = serde_json::to_string_pretty(value).expect("JSON reports are serializable");
    text.push('\n');
    emit(resolved, text.as_bytes())
}

// ---------- report shapes ----------

fn kkt_json(kkt: &KktReport) -> Value {
    json!({
        "lambda": kkt.lambda,
        "stationarity_residuals": kkt.stationarity_residuals,
        "dual_feasibility_residuals": kkt.dual_feasibility_residuals,
        "primal_feasibility_power": kkt.primal_feasibility_power,
        "primal_feasibility_bounds": kkt.primal_feasibility_bounds,
        "complementary_slackness_power": kkt.complementary_slackness_power,
        "complementary_slackness_bounds": kkt.complementary_slackness_bounds,
        "max_residual": kkt.max_residual(),
    })
}

fn parameters_json(model: &BerModel, params: &DeviceParams) -> Value {
    json!({
        "alpha": model.alpha,
        "beta": model.beta,
        "bits": params.bits,
        "delta": params.delta,
        "gamma": params.gamma,
    })
}

// ---------- subcommands ----------

fn cmd_solve(args: SolveArgs) -> Result<(), Failure> {
    let config = load_config(&args.common)?;
    let resolved = resolve(&args.common, &config, 1)?;
    require_json(resolved.format)?;
    let budget = args
        .budget
        .or(config.budget)
        .ok_or_else(|| Failure::Usage("--budget is required (flag or config)".to_string()))?;

    let report = solve(&resolved.model, &resolved.params, budget)?;
    let mut parameters = parameters_json(&resolved.model, &resolved.params);
    parameters["budget"] = json!(budget);
    let out = json!({
        "plan": {"intervals": report.plan.intervals()},
        "nu": report.nu,
        "power": report.power,
        "mse": report.mse,
        "psnr_db": report.psnr_db,
        "kkt": kkt_json(&report.kkt),
        "meta": {
            "solver": "continuous-kkt-bisection",
            "iterations": report.bisection_iterations,
            "parameters": parameters,
        },
    });
    emit_json(&resolved, &out)?;
    eprintln!(
        "solved budget {budget}: power {:.6}, MSE {:.6e}, PSNR {:.3} dB (nu {:.6e}, {} bisection steps)",
        report.power, report.mse, report.psnr_db, report.nu, report.bisection_iterations
    );
    Ok(())
}

fn cmd_solve_discrete(args: SolveDiscreteArgs) -> Result<(), Failure> {
    let config = load_config(&args.common)?;
    let gamma = single_gamma(&args.gamma, &config)?;
    let resolved = resolve(&args.common, &config, gamma)?;
    require_json(resolved.format)?;
    let budget = args
        .budget
        .or(config.budget)
        .ok_or_else(|| Failure::Usage("--budget is required (flag or config)".to_string()))?;
    let z_cap = args
        .z_cap
        .or(config.z_cap)
        .unwrap_or_else(|| default_z_cap(&resolved.model, &resolved.params));

    let report = if args.brute_force {
        brute_force_discrete(&resolved.model, &resolved.params, budget, z_cap)?
    } else {
        solve_discrete(&resolved.model, &resolved.params, budget, z_cap)?
    };
    let mut parameters = parameters_json(&resolved.model, &resolved.params);
    parameters["budget"] = json!(budget);
    parameters["z_cap"] = json!(z_cap);
    let out = json!({
        "plan": {
            "z": report.plan.z,
            "step": report.plan.step,
            "z_cap": report.plan.z_cap,
            "intervals": report.plan.intervals(),
        },
        "power": report.power,
        "mse": report.mse,
        "psnr_db": report.psnr_db,
        "nodes_explored": report.nodes_explored,
        "relaxation_gap": report.relaxation_gap,
        "proven_optimal": report.proven_optimal,
        "meta": {
            "solver": if args.brute_force { "discrete-brute-force" } else { "discrete-branch-and-bound" },
            "iterations": report.nodes_explored,
            "parameters": parameters,
        },
    });
    emit_json(&resolved, &out)?;
    eprintln!(
        "solved budget {budget} on a {:.3}-second lattice: power {:.6}, MSE {:.6e}, PSNR {:.3} dB ({} nodes, proven optimal: {})",
        report.plan.step, report.power, report.mse, report.psnr_db, report.nodes_explored,
        report.proven_optimal
    );
    Ok(())
}

fn cmd_fit(args: FitArgs) -> Result<(), Failure> {
    let config = load_config(&args.common)?;
    let resolved = resolve(&args.common, &config, 1)?;
    require_json(resolved.format)?;
    let path = args
        .measurements
        .or(config.measurements)
        .ok_or_else(|| Failure::Usage("--measurements is required (flag or config)".to_string()))?;

    let samples = load_measurements(&path)?;
    let fit = fit_ber_model(&samples)?;
    let out = json!({
        "model": {"alpha": fit.model.alpha, "beta": fit.model.beta},
        "r_squared": fit.r_squared,
        "residuals": fit.residuals,
        "meta": {
            "solver": "log-linear-least-squares",
            "iterations": 0,
            "parameters": {"measurements": path.display().to_string(), "count": samples.len()},
        },
    });
    emit_json(&resolved, &out)?;
    eprintln!(
        "fitted alpha {:.6e}, beta {:.6} from {} measurements (r^2 {:.6})",
        fit.model.alpha,
        fit.model.beta,
        samples.len(),
        fit.r_squared
    );
    Ok(())
}

fn parse_budget_grid(spec: &str) -> Result<Vec<f64>, Failure> {
    if let Some(stripped) = spec.strip_suffix("-log") {
        let parts: Vec<&str> = stripped.split(':').collect();
        if parts.len() != 3 {
            return Err(Failure::Usage(format!(
                "--budgets: expected min:max:count-log, got `{spec}`"
            )));
        }
        let bad = |what: &str| Failure::Usage(format!("--budgets: malformed {what} in `{spec}`"));
        let min: f64 = parts[0].parse().map_err(|_| bad("min"))?;
        let max: f64 = parts[1].parse().map_err(|_| bad("max"))?;
        let count: usize = parts[2].parse().map_err(|_| bad("count"))?;
        if !(min.is_finite() && max.is_finite()) || min <= 0.0 || max < min || count == 0 {
            return Err(Failure::Usage(format!(
                "--budgets: need 0 < min <= max and count >= 1, got `{spec}`"
            )));
        }
        return Ok(log_spaced_budgets(min, max, count));
    }
    if spec.contains(':') {
        return Err(Failure::Usage(format!(
            "--budgets: expected min:max:count-log or a file path, got `{spec}`"
        )));
    }
    let text = fs::read_to_string(spec)
        .map_err(|e| Failure::Usage(format!("--budgets {spec}: {e}")))?;
    let mut budgets = Vec::new();
    for token in text.split_whitespace() {
        let value: f64 = token.parse().map_err(|_| {
            Failure::Usage(format!("--budgets {spec}: `{token}` is not a number"))
        })?;
        budgets.push(value);
    }
    if budgets.is_empty() {
        return Err(Failure::Usage(format!("--budgets {spec}: file holds no budgets")));
    }
    Ok(budgets)
}

fn cmd_sweep(args: SweepArgs) -> Result<(), Failure> {
    let config = load_config(&args.common)?;
    let resolved = resolve(&args.common, &config, 1)?;
    let gammas: Vec<u32> = if args.gamma.is_empty() {
        config.gamma.clone().unwrap_or_default()
    } else {
        args.gamma.clone()
    };
    let budgets = match args.budgets.as_ref().or(config.budgets.as_ref()) {
        Some(spec) => parse_budget_grid(spec)?,
        None => default_budget_grid(&resolved.params),
    };

    let rows: Vec<SweepRow> = run_sweep(&resolved.model, &resolved.params, &budgets, &gammas)?;
    match resolved.format {
        OutputFormat::Csv => {
            let mut buf = Vec::new();
            refresh_opt::write_sweep_csv(&mut buf, resolved.params.bits, &gammas, &rows)?;
            emit(&resolved, &buf)?;
        }
        OutputFormat::Json => {
            let mut parameters = parameters_json(&resolved.model, &resolved.params);
            parameters["gammas"] = json!(gammas);
            let out = json!({
                "rows": rows,
                "meta": {
                    "solver": "sweep",
                    "iterations": rows.len(),
                    "parameters": parameters,
                },
            });
            emit_json(&resolved, &out)?;
        }
    }
    eprintln!(
        "swept {} budgets in [{}, {}] with step multipliers {:?}",
        rows.len(),
        budgets.first().unwrap(),
        budgets.last().unwrap(),
        gammas
    );
    Ok(())
}

fn cmd_savings(args: SavingsArgs) -> Result<(), Failure> {
    let config = load_config(&args.common)?;
    let resolved = resolve(&args.common, &config, 1)?;
    require_json(resolved.format)?;
    let target_mse_arg = args.target_mse.or(config.target_mse);
    let target_psnr_arg = args.target_psnr.or(config.target_psnr);
    let (target_mse, target_psnr) = match (target_mse_arg, target_psnr_arg) {
        (Some(m), None) => (m, None),
        (None, Some(p)) => (mse_for_psnr(p, resolved.params.bits)?, Some(p)),
        (None, None) => {
            return Err(Failure::Usage(
                "exactly one of --target-mse / --target-psnr is required".to_string(),
            ))
        }
        (Some(_), Some(_)) => {
            return Err(Failure::Usage(
                "--target-mse and --target-psnr are mutually exclusive".to_string(),
            ))
        }
    };

    let power_optimal = min_power_for_mse(
        &resolved.model,
        &resolved.params,
        target_mse,
        AllocationMethod::Optimal,
    )?;
    let power_uniform = min_power_for_mse(
        &resolved.model,
        &resolved.params,
        target_mse,
        AllocationMethod::Uniform,
    )?;
    let savings = 1.0 - power_optimal / power_uniform;

    let mut parameters = parameters_json(&resolved.model, &resolved.params);
    parameters["target_mse"] = json!(target_mse);
    if let Some(p) = target_psnr {
        parameters["target_psnr_db"] = json!(p);
    }
    let out = json!({
        "target_mse": target_mse,
        "target_psnr_db": target_psnr,
        "power_optimal": power_optimal,
        "power_uniform": power_uniform,
        "savings": savings,
        "meta": {
            "solver": "budget-bisection",
            "iterations": 0,
            "parameters": parameters,
        },
    });
    emit_json(&resolved, &out)?;
    eprintln!(
        "reaching MSE {target_mse:.6e} needs power {power_optimal:.6} (optimal) vs {power_uniform:.6} (uniform): savings {:.2}%",
        savings * 100.0
    );
    Ok(())
}

fn read_report(path: Option<&Path>) -> Result<Value, Failure> {
    let text = match path {
        Some(p) => fs::read_to_string(p)
            .map_err(|e| Failure::Usage(format!("--report {}: {e}", p.display())))?,
        None => {
            let mut buf = String::new();
            std::io::stdin()
                .read_to_string(&mut buf)
                .map_err(|e| Failure::Usage(format!("--report: reading stdin: {e}")))?;
            buf
        }
    };
    serde_json::from_str(&text).map_err(|e| Failure::Usage(format!("--report: {e}")))
}

fn field<'v>(value: &'v Value, path: &[&str]) -> Result<&'v Value, Failure> {
    let mut v = value;
    for key in path {
        v = v.get(key).ok_or_else(|| {
            Failure::Usage(format!("--report: missing field `{}`", path.join(".")))
        })?;
    }
    Ok(v)
}

fn number(value: &Value, path: &[&str]) -> Result<f64, Failure> {
    field(value, path)?.as_f64().ok_or_else(|| {
        Failure::Usage(format!("--report: field `{}` is not a number", path.join(".")))
    })
}

fn cmd_verify(args: VerifyArgs) -> Result<(), Failure> {
    let config = load_config(&args.common)?;
    let resolved_out = resolve(&args.common, &config, 1)?;
    require_json(resolved_out.format)?;
    let report = read_report(args.report.as_deref())?;

    // The report is self-describing: its parameters echo, plan, and dual
    // variable are all that is needed to re-derive the certificate.
    let alpha = number(&report, &["meta", "parameters", "alpha"])?;
    let beta = number(&report, &["meta", "parameters", "beta"])?;
    let bits = number(&report, &["meta", "parameters", "bits"])? as u32;
    let delta = number(&report, &["meta", "parameters", "delta"])?;
    let budget = number(&report, &["meta", "parameters", "budget"])?;
    let nu = number(&report, &["nu"])?;
    let intervals: Vec<f64> = field(&report, &["plan", "intervals"])?
        .as_array()
        .ok_or_else(|| Failure::Usage("--report: `plan.intervals` is not an array".to_string()))?
        .iter()
        .map(|v| {
            v.as_f64()
                .ok_or_else(|| Failure::Usage("--report: non-numeric interval".to_string()))
        })
        .collect::<Result<_, _>>()?;

    let model = BerModel::new(alpha, beta)?;
    let params = DeviceParams::new(bits, delta, 1)?;
    let plan = RefreshPlan::new(intervals)?;
    let power = refresh_power(&plan)?;
    let mse = word_mse(&model, &plan);
    let psnr_db = psnr(mse, params.bits)?;
    let reconstructed = SolveReport {
        plan,
        nu,
        power,
        mse,
        psnr_db,
        bisection_iterations: 0,
        kkt: KktReport {
            lambda: Vec::new(),
            stationarity_residuals: Vec::new(),
            dual_feasibility_residuals: Vec::new(),
            primal_feasibility_power: 0.0,
            primal_feasibility_bounds: Vec::new(),
            complementary_slackness_power: 0.0,
            complementary_slackness_bounds: Vec::new(),
        },
    };
    let kkt = verify_kkt(&model, &params, budget, &reconstructed);
    let max_residual = kkt.max_residual();
    let passed = max_residual <= VERIFY_TOLERANCE;

    let mut parameters = parameters_json(&model, &params);
    parameters["budget"] = json!(budget);
    let out = json!({
        "max_residual": max_residual,
        "tolerance": VERIFY_TOLERANCE,
        "passed": passed,
        "power": power,
        "mse": mse,
        "psnr_db": psnr_db,
        "kkt": kkt_json(&kkt),
        "meta": {
            "solver": "kkt-verifier",
            "iterations": 0,
            "parameters": parameters,
        },
    });
    emit_json(&resolved_out, &out)?;
    eprintln!(
        "max KKT residual {max_residual:.3e} (tolerance {VERIFY_TOLERANCE:.0e}): {}",
        if passed { "pass" } else { "FAIL" }
    );
    if passed {
        Ok(())
    } else {
        Err(Failure::Check(format!(
            "certificate check failed: max KKT residual {max_residual:.3e} exceeds {VERIFY_TOLERANCE:.0e}"
        )))
    }
}
