use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use nhmech::harness::{
    check_exact_identities, compare_methods, estimate_order, run_experiment, ConfigDraft,
    MethodKind, OrderMethod, OrderSystem,
};
use nhmech::{Error, Result, SolverSettings};

/// Drift runs, method comparisons, order estimates, and exact-layer checks
/// for nonholonomically constrained Lagrangian systems.
#[derive(Parser)]
#[command(name = "nhmech", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one method on one system and report its energy drift.
    Simulate(RunArgs),
    /// Run two methods on the same seed and compare them against the
    /// continuous baseline.
    Compare(RunArgs),
    /// Estimate a method's convergence order from a list of step sizes.
    Order(OrderArgs),
    /// Check the exact-layer identities on random reachable pairs.
    CheckExact(CheckExactArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Config file of `key = value` lines; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// System name: particle, knife-edge, or knife-edge-perturbed.
    #[arg(long)]
    system: Option<String>,
    /// Method name: mla, dla, exact, or continuous. Compare takes two
    /// names separated by a comma, e.g. `mla,dla`.
    #[arg(long)]
    method: Option<String>,
    /// Step size.
    #[arg(long = "h")]
    step: Option<String>,
    /// Number of integrator steps past the seed pair.
    #[arg(long)]
    steps: Option<String>,
    /// Constraint perturbation of the knife edge.
    #[arg(long)]
    epsilon: Option<String>,
    /// Starting configuration, comma separated.
    #[arg(long)]
    q0: Option<String>,
    /// Second seed configuration; one slot may be `auto`.
    #[arg(long)]
    q1: Option<String>,
    /// Fraction of the series treated as the tail window.
    #[arg(long = "tail-fraction")]
    tail_fraction: Option<String>,
    /// Write the per-step table to this CSV file.
    #[arg(long)]
    out: Option<String>,
}

impl RunArgs {
    fn draft(&self) -> Result<ConfigDraft> {
        let mut draft = ConfigDraft::default();
        if let Some(path) = &self.config {
            draft.merge_file(path)?;
        }
        let flags = [
            ("system", &self.system),
            ("method", &self.method),
            ("h", &self.step),
            ("steps", &self.steps),
            ("epsilon", &self.epsilon),
            ("q0", &self.q0),
            ("q1", &self.q1),
            ("tail_fraction", &self.tail_fraction),
            ("out", &self.out),
        ];
        for (key, value) in flags {
            if let Some(v) = value {
                draft.set(key, v)?;
            }
        }
        Ok(draft)
    }
}

#[derive(Args)]
struct OrderArgs {
    /// System: particle, knife-edge, knife-edge-perturbed,
    /// harmonic-oscillator, or free-particle.
    #[arg(long, default_value = "particle")]
    system: String,
    /// Discretization: mla, dla, or del.
    #[arg(long, default_value = "mla")]
    method: String,
    /// Comma-separated step sizes.
    #[arg(long = "h", default_value = "0.4,0.2,0.1,0.05")]
    steps: String,
    /// Final time of each run (rounded to a whole number of steps).
    #[arg(long, default_value_t = 2.0)]
    horizon: f64,
}

#[derive(Args)]
struct CheckExactArgs {
    /// Pair spacing.
    #[arg(long = "h", default_value_t = 0.5)]
    step: f64,
    /// Number of random reachable pairs to draw.
    #[arg(long, default_value_t = 20)]
    samples: usize,
}

fn cell(x: f64) -> String {
    format!("{x:.16e}")
}

fn join_coords(coords: &nalgebra::DVector<f64>) -> String {
    coords
        .iter()
        .map(|x| cell(*x))
        .collect::<Vec<_>>()
        .join(",")
}

fn cmd_simulate(args: &RunArgs, settings: &SolverSettings) -> Result<ExitCode> {
    let config = args.draft()?.build()?;
    let report = run_experiment(&config, settings)?;
    println!("system={}", config.system);
    println!("method={}", config.method);
    println!("h={}", cell(config.step));
    println!("steps={}", config.n_steps);
    println!("epsilon={}", cell(config.epsilon));
    println!("q0={}", join_coords(report.q0.coords()));
    println!("q1={}", join_coords(report.q1.coords()));
    println!("rows={}", report.rows.len());
    println!("reference_value={}", cell(report.drift.reference_value));
    println!("max_abs_drift={}", cell(report.drift.max_abs_drift));
    println!("tail_std={}", cell(report.drift.tail_std));
    println!("tail_start={}", report.drift.tail_start);
    if let Some(path) = &config.output {
        println!("out={}", path.display());
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_compare(args: &RunArgs, settings: &SolverSettings) -> Result<ExitCode> {
    let mut draft = args.draft()?;
    let pair = draft.get("method").unwrap_or("mla,dla").to_string();
    let (first, second) = pair.split_once(',').ok_or_else(|| {
        Error::InvalidConfig("compare needs two methods, e.g. --method mla,dla".into())
    })?;
    let method_b: MethodKind = second.trim().parse()?;
    draft.set("method", first.trim())?;
    let config = draft.build()?;
    let report = compare_methods(&config, method_b, settings)?;
    println!("system={}", config.system);
    println!("h={}", cell(config.step));
    println!("steps={}", config.n_steps);
    for (label, summary) in [("a", &report.a), ("b", &report.b)] {
        println!("method_{label}={}", summary.method);
        println!("tail_std_{label}={}", cell(summary.tail_std));
        println!("max_abs_drift_{label}={}", cell(summary.max_abs_drift));
        println!("max_error_{label}={}", cell(summary.max_error));
    }
    println!("rows={}", report.rows.len());
    if let Some(path) = &config.output {
        println!("out={}", path.display());
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_order(args: &OrderArgs, settings: &SolverSettings) -> Result<ExitCode> {
    let system: OrderSystem = args.system.parse()?;
    let method: OrderMethod = args.method.parse()?;
    let steps: Vec<f64> = args
        .steps
        .split(',')
        .map(|part| {
            part.trim().parse::<f64>().map_err(|_| {
                Error::InvalidConfig(format!("step size '{}' is not a number", part.trim()))
            })
        })
        .collect::<Result<_>>()?;
    let estimate = estimate_order(system, method, &steps, args.horizon, settings)?;
    println!("system={system}");
    println!("method={method}");
    for point in &estimate.points {
        println!("h={} error={}", cell(point.step), cell(point.error));
    }
    for h in &estimate.excluded {
        println!("h={} error=floor", cell(*h));
    }
    match estimate.slope {
        Some(slope) => println!("slope={}", cell(slope)),
        None => println!("slope=none"),
    }
    println!("fit_residual={}", cell(estimate.fit_residual));
    println!("at_floor={}", estimate.at_floor);
    Ok(ExitCode::SUCCESS)
}

fn cmd_check_exact(args: &CheckExactArgs, settings: &SolverSettings) -> Result<ExitCode> {
    let report = check_exact_identities(args.step, args.samples, settings)?;
    for row in &report.rows {
        println!(
            "sample={} momentum_gap={} retraction_gap={} mu_residual={} one_form_gap={} pass={}",
            row.sample,
            cell(row.momentum_gap),
            cell(row.retraction_gap),
            cell(row.mu_residual),
            cell(row.one_form_gap),
            row.pass()
        );
    }
    let ok = report.all_pass();
    println!("all_pass={ok}");
    Ok(if ok { ExitCode::SUCCESS } else { ExitCode::from(3) })
}

fn dispatch(cli: &Cli) -> Result<ExitCode> {
    let settings = SolverSettings::default();
    match &cli.command {
        Command::Simulate(args) => cmd_simulate(args, &settings),
        Command::Compare(args) => cmd_compare(args, &settings),
        Command::Order(args) => cmd_order(args, &settings),
        Command::CheckExact(args) => cmd_check_exact(args, &settings),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            let code = match err.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = err.print();
            return ExitCode::from(code);
        }
    };
    match dispatch(&cli) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(match err {
                Error::InvalidConfig(_) | Error::Io(_) => 1,
                _ => 2,
            })
        }
    }
}
