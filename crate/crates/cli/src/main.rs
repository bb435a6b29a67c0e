use clap::{Args, Parser, Subcommand};
use sigma_cli::config::{parse_config, Experiment, Value};
use sigma_cli::experiments::{run, RunOptions};
use sigma_cli::output::CheckKind;
use sigma_cli::report::{report, ReportStatus};
use sigma_cli::{exit, OUT_DIR_ENV};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "sigma",
    version,
    about = "Large-N sigma model experiments on the 2d torus"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the gap equations over a (lambda, beta, L) grid.
    GapSolve(RunArgs),
    /// Draw exact Gaussian free field samples.
    GffSample(RunArgs),
    /// Run a checkpointed HMC chain.
    McmcRun(RunArgs),
    /// Estimate log Z and the relative entropy by thermodynamic integration.
    ThermoIntegrate(RunArgs),
    /// Correlators, effective mass and smeared cumulants from one chain.
    Analyze(RunArgs),
    /// Run the Poisson, Riemann, Nelson, Talagrand and Hermite suites.
    VerifyIdentities(RunArgs),
    /// Scan beta (gap masses) or N (smeared cumulants).
    Scan(RunArgs),
    /// Summarize a run directory from its measurement stream.
    Report { dir: PathBuf },
}

#[derive(Args)]
struct RunArgs {
    /// Configuration file (sections with key = value lines).
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Overrides run.seed.
    #[arg(long, value_name = "U64")]
    seed: Option<u64>,
    /// Output directory; overrides run.output and the environment.
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Continue from the checkpoint in the output directory.
    #[arg(long)]
    resume: bool,
    /// Worker threads for concurrent chains and samples.
    #[arg(long, value_name = "K")]
    threads: Option<usize>,
    #[arg(long, hide = true, value_name = "SWEEP")]
    stop_after: Option<u64>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (experiment, args) = match cli.command {
        Command::Report { dir } => return ExitCode::from(report_command(&dir) as u8),
        Command::GapSolve(a) => (Experiment::GapSolve, a),
        Command::GffSample(a) => (Experiment::GffSample, a),
        Command::McmcRun(a) => (Experiment::McmcRun, a),
        Command::ThermoIntegrate(a) => (Experiment::ThermoIntegrate, a),
        Command::Analyze(a) => (Experiment::Analyze, a),
        Command::VerifyIdentities(a) => (Experiment::VerifyIdentities, a),
        Command::Scan(a) => (Experiment::Scan, a),
    };
    ExitCode::from(run_command(experiment, args) as u8)
}

fn run_command(experiment: Experiment, args: RunArgs) -> i32 {
    let (text, origin) = match &args.config {
        Some(p) => match std::fs::read_to_string(p) {
            Ok(t) => (t, p.display().to_string()),
            Err(e) => {
                eprintln!("error: cannot read {}: {e}", p.display());
                return exit::USAGE;
            }
        },
        None => (String::new(), "<no config>".into()),
    };
    let mut config = match parse_config(&text, Some(experiment)) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {origin}: {e}");
            return exit::USAGE;
        }
    };
    if let Some(seed) = args.seed {
        config.set("run", "seed", Value::UInt(seed));
    }
    let out = args
        .out
        .or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from(config.output()));
    config.set("run", "output", Value::Text(out.display().to_string()));
    if let Some(k) = args.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(k)
            .build_global()
        {
            eprintln!("error: --threads {k}: {e}");
            return exit::USAGE;
        }
    }
    eprintln!(
        "{} -> {} (config_hash {})",
        experiment.name(),
        out.display(),
        config.hash()
    );
    let opts = RunOptions {
        out,
        resume: args.resume,
        stop_after: args.stop_after,
    };
    let outcome = match run(&config, &opts) {
        Ok(o) => o,
        Err(e) => {
            eprintln!("error: {e}");
            return exit::RUNTIME;
        }
    };
    for m in &outcome.messages {
        eprintln!("{m}");
    }
    for c in outcome.checks.iter().filter(|c| !c.pass) {
        match c.kind {
            CheckKind::Identity => eprintln!("violation: {}: {}", c.name, c.detail),
            CheckKind::Statistical => eprintln!("warning: {}: {}", c.name, c.detail),
        }
    }
    let failures = outcome.identity_failures();
    println!(
        "status: {}; {} checks, {failures} violations, {} warnings",
        if !outcome.complete {
            "incomplete"
        } else if failures > 0 {
            "violations"
        } else {
            "ok"
        },
        outcome.checks.len(),
        outcome.warnings()
    );
    if failures > 0 {
        exit::IDENTITY_VIOLATION
    } else {
        exit::OK
    }
}

fn report_command(dir: &std::path::Path) -> i32 {
    match report(dir) {
        Ok(r) => {
            print!("{}", r.text);
            if r.status != ReportStatus::NoData {
                if let Err(e) = std::fs::write(dir.join("report.txt"), &r.text) {
                    eprintln!("warning: cannot write report.txt: {e}");
                }
            }
            match r.status {
                ReportStatus::Ok => exit::OK,
                ReportStatus::Violations(_) => exit::IDENTITY_VIOLATION,
                ReportStatus::NoData => exit::NO_DATA,
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            exit::RUNTIME
        }
    }
}
