//! Command-line front end: simulation, estimation, replicate sweeps and
//! truth computation as reproducible file-based workflows.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error, 3 estimation
//! failure.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use stratum::{
    bootstrap_intervals, default_scenario, default_truth_grid, estimate, load_dataset,
    simulate_trial, summarize_hazard_ratio, true_subgroup_curves, write_dataset, BootstrapConfig,
    CovariateSet, Estimand, EstimateReport, IntervalEstimate, MethodKind, MethodSpec, Scenario,
    ScenarioConfig, TruthReport,
};

pub const OUTPUT_DIR_ENV: &str = "STRATUM_OUTPUT_DIR";

/// Seed of the scenario-level truth oracle; fixed so that sweeps split
/// across invocations measure errors against identical truth values.
const TRUTH_SEED: u64 = 0xACC3;

#[derive(Parser)]
#[command(
    name = "stratum",
    version,
    about = "Principal-stratum treatment effect estimation for time-to-event trials"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate one event-driven trial dataset as CSV.
    Simulate(SimulateArgs),
    /// Estimate subgroup effects on a dataset CSV.
    Estimate(EstimateArgs),
    /// Run simulate/estimate replicates against the truth oracle.
    Sweep(SweepArgs),
    /// Compute true subgroup survival curves for a scenario.
    Truth(TruthArgs),
}

#[derive(Args)]
struct SimulateArgs {
    /// Scenario: i, ii or iii.
    #[arg(long)]
    scenario: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output CSV path.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EstimateArgs {
    /// Input dataset CSV.
    #[arg(long)]
    data: PathBuf,
    /// Comma list of methods: PPR, WPP, MEA, NAIVE_FULLPBO, NAIVE_THRES.
    #[arg(long, default_value = "PPR,WPP,MEA,NAIVE_FULLPBO,NAIVE_THRES")]
    methods: String,
    /// Comma list of MEA sensitivity values.
    #[arg(long, default_value = "0.05,50")]
    delta: String,
    /// Covariates for PPR/WPP: none, z0, z1 or both.
    #[arg(long, default_value = "both")]
    covariates: String,
    /// Comma list of survival-difference horizons (years).
    #[arg(long, default_value = "2,5")]
    horizons: String,
    /// Restricted-mean horizon (years).
    #[arg(long, default_value_t = 5.0)]
    tstar: f64,
    /// Biomarker responder threshold.
    #[arg(long, default_value_t = 0.0)]
    threshold: f64,
    /// Bootstrap resamples per method (0 disables bootstrap).
    #[arg(long, default_value_t = 0)]
    bootstrap: usize,
    /// Bootstrap confidence level.
    #[arg(long, default_value_t = 0.9)]
    level: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Worker threads (default: all cores).
    #[arg(long)]
    jobs: Option<usize>,
    /// Output directory (default: $STRATUM_OUTPUT_DIR or ".").
    #[arg(long, alias = "out")]
    output_dir: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long)]
    scenario: String,
    #[arg(long)]
    replicates: usize,
    #[arg(long, default_value = "PPR,WPP,MEA,NAIVE_FULLPBO,NAIVE_THRES")]
    methods: String,
    #[arg(long, default_value = "0.05,50")]
    delta: String,
    #[arg(long, default_value = "both")]
    covariates: String,
    #[arg(long, default_value = "2,5")]
    horizons: String,
    #[arg(long, default_value_t = 5.0)]
    tstar: f64,
    /// Master seed; replicate r uses seed master + r.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Monte Carlo sample size of the truth oracle.
    #[arg(long, default_value_t = 1_000_000)]
    truth_samples: usize,
    #[arg(long)]
    jobs: Option<usize>,
    #[arg(long, alias = "out")]
    output_dir: Option<PathBuf>,
}

#[derive(Args)]
struct TruthArgs {
    #[arg(long)]
    scenario: String,
    /// Monte Carlo sample size.
    #[arg(long, default_value_t = 1_000_000)]
    samples: usize,
    /// Evaluation grid as start:end:step.
    #[arg(long, default_value = "0:5:0.05")]
    grid: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Zero out the treatment-effect parameters (g3 = g4 = g5 = 0).
    #[arg(long, default_value_t = false)]
    null_effect: bool,
    #[arg(long)]
    jobs: Option<usize>,
    #[arg(long, alias = "out")]
    output_dir: Option<PathBuf>,
}

enum CliError {
    Usage(String),
    Data(String),
    Estimation(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
            CliError::Estimation(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Usage(m) | CliError::Data(m) | CliError::Estimation(m) => m,
        }
    }
}

fn classify(err: stratum::Error) -> CliError {
    use stratum::Error as E;
    match err {
        E::Io { .. }
        | E::MalformedRow { .. }
        | E::DuplicateId { .. }
        | E::NegativeTime { .. }
        | E::NonFiniteField { .. }
        | E::EmptyArm { .. } => CliError::Data(err.to_string()),
        _ => CliError::Estimation(err.to_string()),
    }
}

/// Parses and dispatches; returns the process exit code.
pub fn run<I, T>(args: I) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
        }
    };
    let jobs = match &cli.command {
        Command::Simulate(_) => None,
        Command::Estimate(a) => a.jobs,
        Command::Sweep(a) => a.jobs,
        Command::Truth(a) => a.jobs,
    };
    let dispatch = || match cli.command {
        Command::Simulate(args) => cmd_simulate(args),
        Command::Estimate(args) => cmd_estimate(args),
        Command::Sweep(args) => cmd_sweep(args),
        Command::Truth(args) => cmd_truth(args),
    };
    let result = match jobs {
        Some(n) if n > 0 => match rayon::ThreadPoolBuilder::new().num_threads(n).build() {
            Ok(pool) => pool.install(dispatch),
            Err(e) => Err(CliError::Usage(format!("cannot build thread pool: {e}"))),
        },
        Some(_) => Err(CliError::Usage("--jobs must be >= 1".into())),
        None => dispatch(),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {}", e.message());
            e.code()
        }
    }
}

fn parse_scenario(s: &str) -> Result<Scenario, CliError> {
    s.parse::<Scenario>()
        .map_err(|e| CliError::Usage(e.to_string()))
}

fn parse_f64_list(s: &str, what: &str) -> Result<Vec<f64>, CliError> {
    s.split(',')
        .map(str::trim)
        .filter(|p| !p.is_empty())
        .map(|p| {
            p.parse::<f64>()
                .map_err(|_| CliError::Usage(format!("bad {what} value {p:?}")))
        })
        .collect()
}

fn parse_methods(
    methods: &str,
    deltas: &str,
    covariates: &str,
) -> Result<Vec<MethodSpec>, CliError> {
    let covariates: CovariateSet = covariates
        .parse()
        .map_err(|e: stratum::Error| CliError::Usage(e.to_string()))?;
    let deltas = parse_f64_list(deltas, "delta")?;
    let mut specs = Vec::new();
    for name in methods.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        match name.to_ascii_uppercase().as_str() {
            "PPR" => specs.push(MethodSpec::ppr().with_covariates(covariates)),
            "WPP" => specs.push(MethodSpec::wpp().with_covariates(covariates)),
            "MEA" => {
                if deltas.is_empty() {
                    return Err(CliError::Usage("MEA requires at least one --delta".into()));
                }
                for &d in &deltas {
                    specs.push(MethodSpec::mea(d));
                }
            }
            "NAIVE_FULLPBO" => specs.push(MethodSpec::naive_full_pbo()),
            "NAIVE_THRES" => specs.push(MethodSpec::naive_thres()),
            other => {
                return Err(CliError::Usage(format!(
                    "unknown method {other:?} (expected PPR, WPP, MEA, NAIVE_FULLPBO or NAIVE_THRES)"
                )))
            }
        }
    }
    if specs.is_empty() {
        return Err(CliError::Usage("no methods selected".into()));
    }
    for spec in &specs {
        spec.validate()
            .map_err(|e| CliError::Usage(e.to_string()))?;
    }
    Ok(specs)
}

/// `start:end:step` inclusive of both endpoints (step grid clipped to end).
fn parse_grid(s: &str) -> Result<Vec<f64>, CliError> {
    let parts: Vec<&str> = s.split(':').collect();
    if parts.len() != 3 {
        return Err(CliError::Usage(format!(
            "bad grid {s:?} (expected start:end:step)"
        )));
    }
    let nums: Vec<f64> = parts
        .iter()
        .map(|p| {
            p.trim()
                .parse::<f64>()
                .map_err(|_| CliError::Usage(format!("bad grid component {p:?}")))
        })
        .collect::<Result<_, _>>()?;
    let (start, end, step) = (nums[0], nums[1], nums[2]);
    if !(step > 0.0) || end < start || start < 0.0 {
        return Err(CliError::Usage(format!(
            "bad grid {s:?}: need 0 <= start <= end and step > 0"
        )));
    }
    let n = ((end - start) / step).round() as usize;
    let mut grid: Vec<f64> = (0..=n)
        .map(|i| start + i as f64 * step)
        .filter(|&t| t <= end + step * 1e-9)
        .collect();
    if let Some(last) = grid.last_mut() {
        // Snap the final tick onto the requested endpoint.
        if (*last - end).abs() < step * 1e-9 {
            *last = end;
        }
    }
    Ok(grid)
}

fn output_dir(arg: Option<PathBuf>) -> Result<PathBuf, CliError> {
    let dir = arg
        .or_else(|| std::env::var_os(OUTPUT_DIR_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("."));
    fs::create_dir_all(&dir)
        .map_err(|e| CliError::Data(format!("cannot create {}: {e}", dir.display())))?;
    Ok(dir)
}

fn write_text(path: &Path, contents: &str) -> Result<(), CliError> {
    fs::write(path, contents)
        .map_err(|e| CliError::Data(format!("cannot write {}: {e}", path.display())))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value)
        .map_err(|e| CliError::Estimation(format!("serialization failed: {e}")))?;
    write_text(path, &(text + "\n"))
}

fn scenario_config(name: &str, seed: u64) -> Result<ScenarioConfig, CliError> {
    Ok(default_scenario(parse_scenario(name)?).with_seed(seed))
}

fn cmd_simulate(args: SimulateArgs) -> Result<(), CliError> {
    let cfg = scenario_config(&args.scenario, args.seed)?;
    let dataset = simulate_trial(&cfg).map_err(classify)?;
    write_dataset(&dataset, &args.out).map_err(classify)?;
    println!(
        "wrote {} ({} patients, {} events)",
        args.out.display(),
        dataset.patients().len(),
        dataset.patients().iter().filter(|p| p.event).count()
    );
    Ok(())
}

#[derive(Serialize)]
struct MethodEntry {
    method: String,
    status: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    covariates: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    delta_t: Option<Vec<HorizonValue>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    delta_rmst: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    hazard_ratio_approx: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    intervals: Option<Vec<IntervalEntry>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    control_curve_csv: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    error: Option<String>,
}

#[derive(Serialize)]
struct HorizonValue {
    t: f64,
    delta: f64,
}

#[derive(Serialize)]
struct IntervalEntry {
    estimand: String,
    point: f64,
    lower: f64,
    upper: f64,
    n_failed_resamples: usize,
}

#[derive(Serialize)]
struct EstimateOutput {
    data: String,
    threshold: f64,
    horizons: Vec<f64>,
    t_star: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    bootstrap: Option<BootstrapConfig>,
    treatment_curve_csv: String,
    methods: Vec<MethodEntry>,
}

fn estimands_for(horizons: &[f64], t_star: f64) -> Vec<Estimand> {
    let mut out: Vec<Estimand> = horizons
        .iter()
        .map(|&h| Estimand::SurvivalDiff { horizon: h })
        .collect();
    out.push(Estimand::RmstDiff { t_star });
    out
}

fn cmd_estimate(args: EstimateArgs) -> Result<(), CliError> {
    let methods = parse_methods(&args.methods, &args.delta, &args.covariates)?;
    let horizons = parse_f64_list(&args.horizons, "horizon")?;
    if !(args.tstar > 0.0) {
        return Err(CliError::Usage("--tstar must be positive".into()));
    }
    if args.bootstrap > 0 && !(args.level > 0.0 && args.level < 1.0) {
        return Err(CliError::Usage("--level must be in (0, 1)".into()));
    }
    let dataset = load_dataset(&args.data, args.threshold).map_err(classify)?;
    let dir = output_dir(args.output_dir)?;

    let bootstrap_cfg = (args.bootstrap > 0).then(|| BootstrapConfig {
        n_resamples: args.bootstrap,
        level: args.level,
        seed: args.seed,
    });
    let estimands = estimands_for(&horizons, args.tstar);

    let mut entries = Vec::with_capacity(methods.len());
    let mut treatment_written = false;
    let mut any_ok = false;
    for method in &methods {
        match estimate(&dataset, method, &horizons, args.tstar) {
            Ok(report) => {
                any_ok = true;
                if !treatment_written {
                    write_curve(&dir.join("treatment_curve.csv"), &report, true)?;
                    treatment_written = true;
                }
                let curve_name = format!("control_curve_{}.csv", method.slug());
                write_curve(&dir.join(&curve_name), &report, false)?;
                let intervals = match &bootstrap_cfg {
                    Some(cfg) => Some(run_bootstrap(&dataset, method, &estimands, cfg)?),
                    None => None,
                };
                entries.push(MethodEntry {
                    method: method.label(),
                    status: "ok",
                    covariates: matches!(method.kind, MethodKind::Ppr | MethodKind::Wpp)
                        .then(|| method.covariates.to_string()),
                    delta_t: Some(
                        report
                            .delta_t
                            .iter()
                            .map(|h| HorizonValue {
                                t: h.t,
                                delta: h.delta,
                            })
                            .collect(),
                    ),
                    delta_rmst: Some(report.delta_rmst),
                    hazard_ratio_approx: summarize_hazard_ratio(
                        &report.treat_curve,
                        &report.control_curve,
                    )
                    .ok(),
                    intervals,
                    control_curve_csv: Some(curve_name),
                    error: None,
                });
            }
            Err(e) => entries.push(MethodEntry {
                method: method.label(),
                status: "error",
                covariates: None,
                delta_t: None,
                delta_rmst: None,
                hazard_ratio_approx: None,
                intervals: None,
                control_curve_csv: None,
                error: Some(e.to_string()),
            }),
        }
    }

    let output = EstimateOutput {
        data: args.data.display().to_string(),
        threshold: args.threshold,
        horizons,
        t_star: args.tstar,
        bootstrap: bootstrap_cfg,
        treatment_curve_csv: "treatment_curve.csv".into(),
        methods: entries,
    };
    write_json(&dir.join("report.json"), &output)?;
    if !any_ok {
        return Err(CliError::Estimation(
            "all methods failed; see report.json".into(),
        ));
    }
    println!("wrote {}", dir.join("report.json").display());
    Ok(())
}

fn run_bootstrap(
    dataset: &stratum::TrialDataset,
    method: &MethodSpec,
    estimands: &[Estimand],
    cfg: &BootstrapConfig,
) -> Result<Vec<IntervalEntry>, CliError> {
    let intervals: Vec<IntervalEstimate> =
        bootstrap_intervals(dataset, method, estimands, cfg).map_err(classify)?;
    Ok(estimands
        .iter()
        .zip(intervals)
        .map(|(e, iv)| IntervalEntry {
            estimand: e.label(),
            point: iv.point,
            lower: iv.lower,
            upper: iv.upper,
            n_failed_resamples: iv.n_failed_resamples,
        })
        .collect())
}

fn write_curve(path: &Path, report: &EstimateReport, treatment: bool) -> Result<(), CliError> {
    let curve = if treatment {
        &report.treat_curve
    } else {
        &report.control_curve
    };
    let mut buf = Vec::new();
    curve
        .write_csv(&mut buf)
        .map_err(|e| CliError::Data(format!("cannot serialize curve: {e}")))?;
    fs::write(path, buf).map_err(|e| CliError::Data(format!("cannot write {}: {e}", path.display())))
}

#[derive(Serialize)]
struct SweepSummaryEntry {
    method: String,
    estimand: String,
    replicates: usize,
    failures: usize,
    median_error: f64,
    error_q25: f64,
    error_q75: f64,
}

#[derive(Serialize)]
struct SweepOutput {
    scenario: String,
    replicates: usize,
    master_seed: u64,
    truth_samples: usize,
    truth: TruthSummary,
    summary: Vec<SweepSummaryEntry>,
}

#[derive(Serialize)]
struct TruthSummary {
    delta_t: Vec<HorizonValue>,
    delta_rmst: f64,
    mc_samples: usize,
}

fn cmd_sweep(args: SweepArgs) -> Result<(), CliError> {
    use rayon::prelude::*;

    if args.replicates == 0 {
        return Err(CliError::Usage("--replicates must be >= 1".into()));
    }
    let methods = parse_methods(&args.methods, &args.delta, &args.covariates)?;
    let horizons = parse_f64_list(&args.horizons, "horizon")?;
    if !(args.tstar > 0.0) {
        return Err(CliError::Usage("--tstar must be positive".into()));
    }
    if horizons.iter().any(|&h| h > args.tstar) {
        return Err(CliError::Usage(
            "sweep horizons must not exceed --tstar (truth is integrated up to tstar)".into(),
        ));
    }
    let base = scenario_config(&args.scenario, 0)?;
    let dir = output_dir(args.output_dir)?;

    // Truth on a grid that contains every horizon and ends at tstar, so
    // horizon lookups are exact and the restricted mean integrates to tstar.
    let mut grid: Vec<f64> = default_truth_grid()
        .into_iter()
        .filter(|&t| t < args.tstar)
        .collect();
    grid.extend(horizons.iter().copied());
    grid.push(args.tstar);
    grid.sort_unstable_by(f64::total_cmp);
    grid.dedup();
    let truth = true_subgroup_curves(
        &base.clone().with_seed(TRUTH_SEED),
        args.truth_samples,
        &grid,
    )
    .map_err(classify)?;

    let estimands = estimands_for(&horizons, args.tstar);
    let truth_values: Vec<f64> = estimands
        .iter()
        .map(|e| match *e {
            Estimand::SurvivalDiff { horizon } => truth.delta_at(horizon),
            Estimand::RmstDiff { .. } => truth.delta_rmst_true,
        })
        .collect();

    struct Row {
        replicate_seed: u64,
        method_idx: usize,
        estimand_idx: usize,
        estimate: f64,
    }

    let results: Vec<(u64, Vec<Option<Vec<f64>>>)> = (0..args.replicates as u64)
        .into_par_iter()
        .map(|r| {
            let seed = args.seed.wrapping_add(r);
            let cfg = base.clone().with_seed(seed);
            let per_method: Vec<Option<Vec<f64>>> = match simulate_trial(&cfg) {
                Ok(dataset) => methods
                    .iter()
                    .map(|m| {
                        estimate(&dataset, m, &horizons, args.tstar).ok().map(|rep| {
                            let mut values: Vec<f64> =
                                rep.delta_t.iter().map(|h| h.delta).collect();
                            values.push(rep.delta_rmst);
                            values
                        })
                    })
                    .collect(),
                Err(_) => vec![None; methods.len()],
            };
            (seed, per_method)
        })
        .collect();

    let mut rows = Vec::new();
    let mut failures = vec![0usize; methods.len()];
    for (seed, per_method) in &results {
        for (mi, values) in per_method.iter().enumerate() {
            match values {
                Some(values) => {
                    for (ei, &v) in values.iter().enumerate() {
                        rows.push(Row {
                            replicate_seed: *seed,
                            method_idx: mi,
                            estimand_idx: ei,
                            estimate: v,
                        });
                    }
                }
                None => failures[mi] += 1,
            }
        }
    }
    rows.sort_by(|a, b| {
        (a.replicate_seed, a.method_idx, a.estimand_idx).cmp(&(
            b.replicate_seed,
            b.method_idx,
            b.estimand_idx,
        ))
    });

    let csv_path = dir.join("replicates.csv");
    let mut csv = String::from("replicate,method,estimand,estimate,truth,error\n");
    for row in &rows {
        let truth_v = truth_values[row.estimand_idx];
        csv.push_str(&format!(
            "{},{},{},{},{},{}\n",
            row.replicate_seed,
            methods[row.method_idx].label(),
            estimands[row.estimand_idx].label(),
            row.estimate,
            truth_v,
            row.estimate - truth_v
        ));
    }
    write_text(&csv_path, &csv)?;

    let mut summary = Vec::new();
    for (mi, method) in methods.iter().enumerate() {
        for (ei, estimand) in estimands.iter().enumerate() {
            let mut errors: Vec<f64> = rows
                .iter()
                .filter(|r| r.method_idx == mi && r.estimand_idx == ei)
                .map(|r| r.estimate - truth_values[ei])
                .collect();
            errors.sort_unstable_by(f64::total_cmp);
            if errors.is_empty() {
                continue;
            }
            summary.push(SweepSummaryEntry {
                method: method.label(),
                estimand: estimand.label(),
                replicates: errors.len(),
                failures: failures[mi],
                median_error: stratum::bootstrap::quantile_type7(&errors, 0.5),
                error_q25: stratum::bootstrap::quantile_type7(&errors, 0.25),
                error_q75: stratum::bootstrap::quantile_type7(&errors, 0.75),
            });
        }
    }

    let output = SweepOutput {
        scenario: base.label.clone(),
        replicates: args.replicates,
        master_seed: args.seed,
        truth_samples: args.truth_samples,
        truth: TruthSummary {
            delta_t: horizons
                .iter()
                .map(|&h| HorizonValue {
                    t: h,
                    delta: truth.delta_at(h),
                })
                .collect(),
            delta_rmst: truth.delta_rmst_true,
            mc_samples: truth.mc_samples,
        },
        summary,
    };
    write_json(&dir.join("summary.json"), &output)?;
    println!(
        "wrote {} and {}",
        csv_path.display(),
        dir.join("summary.json").display()
    );
    Ok(())
}

#[derive(Serialize)]
struct TruthOutput {
    scenario: String,
    samples_requested: usize,
    seed: u64,
    null_effect: bool,
    grid_points: usize,
    #[serde(flatten)]
    report: TruthReport,
}

fn cmd_truth(args: TruthArgs) -> Result<(), CliError> {
    if args.samples == 0 {
        return Err(CliError::Usage("--samples must be >= 1".into()));
    }
    let mut cfg = scenario_config(&args.scenario, args.seed)?;
    if args.null_effect {
        cfg.gamma[3] = 0.0;
        cfg.gamma[4] = 0.0;
        cfg.gamma[5] = 0.0;
        cfg.label.push_str(" (null effect)");
    }
    let grid = parse_grid(&args.grid)?;
    let dir = output_dir(args.output_dir)?;
    let report = true_subgroup_curves(&cfg, args.samples, &grid).map_err(classify)?;

    for (name, curve) in [
        ("truth_treat.csv", &report.treat_curve_true),
        ("truth_control.csv", &report.control_curve_true),
    ] {
        let mut buf = Vec::new();
        curve
            .write_csv_on_grid(&mut buf, &grid)
            .map_err(|e| CliError::Data(format!("cannot serialize curve: {e}")))?;
        let path = dir.join(name);
        fs::write(&path, buf)
            .map_err(|e| CliError::Data(format!("cannot write {}: {e}", path.display())))?;
    }

    let output = TruthOutput {
        scenario: cfg.label.clone(),
        samples_requested: args.samples,
        seed: args.seed,
        null_effect: args.null_effect,
        grid_points: grid.len(),
        report,
    };
    write_json(&dir.join("truth.json"), &output)?;
    println!("wrote {}", dir.join("truth.json").display());
    let _ = std::io::stdout().flush();
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_parsing() {
        let g = parse_grid("0:5:0.05").unwrap();
        assert_eq!(g.len(), 101);
        assert_eq!(g[0], 0.0);
        assert_eq!(*g.last().unwrap(), 5.0);
        assert!(parse_grid("5:0:0.05").is_err());
        assert!(parse_grid("0:5").is_err());
        assert!(parse_grid("0:5:x").is_err());
    }

    #[test]
    fn method_parsing() {
        let specs = parse_methods("PPR,WPP,MEA,NAIVE_FULLPBO,NAIVE_THRES", "0.05,50", "both")
            .unwrap();
        assert_eq!(specs.len(), 6);
        let specs = parse_methods("mea", "0.05,0.15,0.5,50", "both").unwrap();
        assert_eq!(specs.len(), 4);
        assert!(parse_methods("XXX", "0.05", "both").is_err());
        assert!(parse_methods("PPR", "0.05", "bogus").is_err());
        assert!(parse_methods("", "0.05", "both").is_err());
    }
}
