//! Command-line front end: predict one configuration, sweep and rank
//! configurations under a budget, compare predictions against measured
//! logs, fit communication parameters from benchmarks, and run the
//! closed-form vs. simulator verification suite.
//!
//! Exit codes: 0 success, 1 infeasible configuration or empty
//! recommendation, 2 input error.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use traincost_core::calibrate::{fit_alpha_beta, parse_benchmarks, CalibrationProfile};
use traincost_core::cost::CommPattern;
use traincost_core::recommend::{recommend, RecommendOptions, RejectCause};
use traincost_core::report::{
    emit_breakdown, load_measured_run, load_prediction_csv, projection_accuracy, BreakdownFormat,
};
use traincost_core::strategies::{parse_strategy, predict, Feasibility};
use traincost_core::verify::run_verification;
use traincost_core::{parse_model, parse_system, ModelDescriptor, SystemDescriptor};

#[derive(Parser)]
#[command(
    name = "traincost",
    about = "Analytical time/memory projection for distributed CNN training",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ModelInputs {
    /// Model descriptor file.
    #[arg(long)]
    model: PathBuf,
    /// System descriptor file.
    #[arg(long)]
    system: PathBuf,
    /// Per-layer timings CSV (layer,fw,bw,wu).
    #[arg(long)]
    timings: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Project one strategy configuration.
    Predict {
        #[command(flatten)]
        inputs: ModelInputs,
        /// Strategy string, e.g. data:p=64 or ds:p1=4,pw=2,ph=2.
        #[arg(long)]
        strategy: String,
        /// Scale the grand total by this many epochs.
        #[arg(long, default_value_t = 1)]
        epochs: u64,
        /// Output format: table, csv or json.
        #[arg(long, default_value = "table")]
        format: String,
    },
    /// Enumerate and rank feasible configurations under a PE budget.
    Recommend {
        #[command(flatten)]
        inputs: ModelInputs,
        /// Largest PE count to consider.
        #[arg(long)]
        budget: u64,
        /// Sweep every PE count instead of powers of two.
        #[arg(long)]
        dense: bool,
        /// Override the per-PE memory capacity in bytes.
        #[arg(long)]
        memory_cap: Option<f64>,
        /// Show every rejected configuration.
        #[arg(long)]
        show_rejected: bool,
    },
    /// Compare a prediction CSV against a measured per-phase CSV.
    Compare {
        /// Prediction breakdown CSV (from `predict --format csv`).
        #[arg(long)]
        prediction: PathBuf,
        /// Measured per-phase CSV (phase,seconds).
        #[arg(long)]
        measured: PathBuf,
    },
    /// Fit latency/bandwidth parameters from collective benchmarks.
    Calibrate {
        /// Benchmark CSV (pattern,p,bytes,seconds).
        #[arg(long)]
        benchmarks: PathBuf,
        /// Pattern to fit: allreduce, allgather or p2p.
        #[arg(long)]
        pattern: String,
        /// Optional system file; fits one (alpha, beta) per tier range.
        #[arg(long)]
        system: Option<PathBuf>,
    },
    /// Run the closed-form vs. simulator verification suite.
    Verify {
        #[arg(long, default_value_t = 0xC0FFEE)]
        seed: u64,
        #[arg(long, default_value_t = 100)]
        instances: usize,
    },
}

fn read(path: &Path) -> Result<String, String> {
    std::fs::read_to_string(path).map_err(|e| format!("cannot read {}: {e}", path.display()))
}

struct Loaded {
    model: ModelDescriptor,
    system: SystemDescriptor,
    profile: CalibrationProfile,
}

fn load_inputs(inputs: &ModelInputs) -> Result<Loaded, String> {
    let model = parse_model(&read(&inputs.model)?)
        .map_err(|e| format!("{}: {e}", inputs.model.display()))?;
    let system = parse_system(&read(&inputs.system)?)
        .map_err(|e| format!("{}: {e}", inputs.system.display()))?;
    let timings = traincost_core::load_layer_timings(&read(&inputs.timings)?)
        .map_err(|e| format!("{}: {e}", inputs.timings.display()))?;
    Ok(Loaded { model, system, profile: CalibrationProfile::from_timings(timings) })
}

fn input_error(msg: &str) -> ExitCode {
    eprintln!("error: {msg}");
    ExitCode::from(2)
}

fn run_predict(
    inputs: &ModelInputs,
    strategy: &str,
    epochs: u64,
    format: &str,
) -> Result<ExitCode, String> {
    let format: BreakdownFormat = format.parse()?;
    let loaded = load_inputs(inputs)?;
    let cfg = parse_strategy(strategy).map_err(|e| e.to_string())?;
    let pred = predict(&loaded.model, &loaded.system, &loaded.profile, &cfg)
        .map_err(|e| e.to_string())?;
    print!("{}", emit_breakdown(&pred, format, epochs, loaded.model.iterations()));
    Ok(match pred.feasibility {
        Feasibility::Feasible => ExitCode::SUCCESS,
        Feasibility::Infeasible(_) => ExitCode::from(1),
    })
}

fn run_recommend(
    inputs: &ModelInputs,
    budget: u64,
    dense: bool,
    memory_cap: Option<f64>,
    show_rejected: bool,
) -> Result<ExitCode, String> {
    if budget == 0 {
        return Err("budget must be >= 1".into());
    }
    let loaded = load_inputs(inputs)?;
    let opts = RecommendOptions { budget, dense, memory_cap };
    let rec = recommend(&loaded.model, &loaded.system, &loaded.profile, &opts);

    if rec.ranked.is_empty() {
        println!("no feasible configuration under budget {budget}");
    } else {
        println!(
            "{:<4} {:<28} {:>5} {:>12} {:>12} {:>12} {:>10}",
            "rank", "strategy", "PEs", "comp s/ep", "comm s/ep", "total s/ep", "mem GB"
        );
        for (idx, pred) in rec.ranked.iter().enumerate() {
            println!(
                "{:<4} {:<28} {:>5} {:>12.4} {:>12.4} {:>12.4} {:>10.3}",
                idx + 1,
                pred.strategy.to_string(),
                pred.p_used,
                pred.t_comp(),
                pred.t_comm_total(),
                pred.total(),
                pred.mem_bytes / 1e9
            );
        }
    }
    println!("rejected {} configurations", rec.rejected.len());
    if show_rejected || rec.ranked.is_empty() {
        for rejection in &rec.rejected {
            let cause = match &rejection.cause {
                RejectCause::Infeasible(reason) => reason.to_string(),
                RejectCause::Error(msg) => format!("error: {msg}"),
            };
            println!("  {:<28} {}", rejection.strategy.to_string(), cause);
        }
    }
    Ok(if rec.ranked.is_empty() { ExitCode::from(1) } else { ExitCode::SUCCESS })
}

fn run_compare(prediction: &Path, measured: &Path) -> Result<ExitCode, String> {
    let pred = load_prediction_csv(&read(prediction)?)
        .map_err(|e| format!("{}: {e}", prediction.display()))?;
    let meas = load_measured_run(&read(measured)?)
        .map_err(|e| format!("{}: {e}", measured.display()))?;
    let accuracy = projection_accuracy(pred.measured_total(), meas.measured_total())
        .map_err(|e| e.to_string())?;
    println!(
        "projection accuracy: {:.2}% (raw ratio {:.4})",
        accuracy.fraction * 100.0,
        accuracy.raw_ratio
    );
    println!(
        "predicted: comp {:.6} s + comm {:.6} s = {:.6} s",
        pred.measured_comp,
        pred.measured_comm,
        pred.measured_total()
    );
    println!(
        "measured:  comp {:.6} s + comm {:.6} s = {:.6} s",
        meas.measured_comp,
        meas.measured_comm,
        meas.measured_total()
    );
    Ok(ExitCode::SUCCESS)
}

fn run_calibrate(
    benchmarks: &Path,
    pattern: &str,
    system: Option<&PathBuf>,
) -> Result<ExitCode, String> {
    let pattern: CommPattern = pattern.parse()?;
    let samples = parse_benchmarks(&read(benchmarks)?)
        .map_err(|e| format!("{}: {e}", benchmarks.display()))?;

    let mut out = String::new();
    match system {
        Some(path) => {
            let system = parse_system(&read(path)?).map_err(|e| e.to_string())?;
            let mut lower = 1;
            for tier in &system.tiers {
                match fit_alpha_beta(&samples, pattern, (lower, tier.max_pes)) {
                    Ok((alpha, beta)) => {
                        let _ = writeln!(
                            out,
                            "tier {} pes={} alpha={alpha:.6e} beta={beta:.6e}",
                            tier.name, tier.max_pes
                        );
                    }
                    Err(e) => {
                        let _ = writeln!(
                            out,
                            "tier {} pes={}: not fitted ({e})",
                            tier.name, tier.max_pes
                        );
                    }
                }
                lower = tier.max_pes + 1;
            }
        }
        None => {
            let (alpha, beta) =
                fit_alpha_beta(&samples, pattern, (1, u64::MAX)).map_err(|e| e.to_string())?;
            let _ = writeln!(out, "alpha={alpha:.6e} beta={beta:.6e}");
        }
    }
    print!("{out}");
    Ok(ExitCode::SUCCESS)
}

fn run_verify(seed: u64, instances: usize) -> ExitCode {
    let report = run_verification(seed, instances);
    for check in &report.checks {
        println!(
            "{:<44} {} ({} cases, worst rel err {:.3e})",
            check.name,
            if check.passed { "PASS" } else { "FAIL" },
            check.cases,
            check.worst_rel_err
        );
        if !check.passed {
            println!("  {}", check.detail);
        }
    }
    if report.all_passed() {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Predict { inputs, strategy, epochs, format } => {
            run_predict(inputs, strategy, *epochs, format)
        }
        Command::Recommend { inputs, budget, dense, memory_cap, show_rejected } => {
            run_recommend(inputs, *budget, *dense, *memory_cap, *show_rejected)
        }
        Command::Compare { prediction, measured } => run_compare(prediction, measured),
        Command::Calibrate { benchmarks, pattern, system } => {
            run_calibrate(benchmarks, pattern, system.as_ref())
        }
        Command::Verify { seed, instances } => Ok(run_verify(*seed, *instances)),
    };
    match result {
        Ok(code) => code,
        Err(msg) => input_error(&msg),
    }
}
