use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use qokd::experiments::{
    cmd_attack, cmd_dilution, cmd_run, cmd_table1, cmd_table2, ExperimentConfig, ExperimentReport,
};
use qokd::Error;

#[derive(Parser)]
#[command(name = "qokd", version, about = "Quantum oblivious key distribution simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run full three-party sessions and check the retrieved bits.
    Run(Flags),
    /// Streak counts in Bernoulli raw keys over a grid of (N, k).
    Table1(Flags),
    /// Closed-form statistics of the generalized scheme.
    Table2(Flags),
    /// Known-bit survival when two or more keys are combined.
    Dilution(Flags),
    /// USD eavesdropping or conclusiveness biasing.
    Attack(Flags),
}

#[derive(Args, Default)]
struct Flags {
    /// key = value file applied before the flags below.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<String>,
    #[arg(long)]
    runs: Option<String>,
    /// Output file; standard output when absent.
    #[arg(long)]
    out: Option<String>,
    /// json or csv.
    #[arg(long)]
    format: Option<String>,
    /// original, modified or generalized.
    #[arg(long)]
    scheme: Option<String>,
    /// Key (database) length N.
    #[arg(long)]
    n: Option<String>,
    #[arg(long)]
    k: Option<String>,
    /// Raw key length of the generalized scheme.
    #[arg(long)]
    m: Option<String>,
    /// Number of diluted keys.
    #[arg(long)]
    r: Option<String>,
    /// Conclusive probability override.
    #[arg(long)]
    p: Option<String>,
    /// inproc or tcp.
    #[arg(long)]
    transport: Option<String>,
    #[arg(long)]
    port: Option<String>,
    /// Known bits per key for dilution.
    #[arg(long)]
    known: Option<String>,
    /// alice-usd or bob-bias.
    #[arg(long)]
    model: Option<String>,
    /// honest or usd.
    #[arg(long)]
    alice: Option<String>,
    /// honest or split-bias.
    #[arg(long)]
    bob: Option<String>,
    #[arg(long = "restart-cap")]
    restart_cap: Option<String>,
    /// Largest raw key (in qubits) a session may hold.
    #[arg(long = "memory-budget")]
    memory_budget: Option<String>,
    /// Monte Carlo runs used to calibrate the bias detector.
    #[arg(long = "null-runs")]
    null_runs: Option<String>,
}

impl Flags {
    fn config(&self) -> qokd::Result<ExperimentConfig> {
        let mut config = ExperimentConfig::default();
        if let Some(path) = &self.config {
            config.apply_file_text(&std::fs::read_to_string(path)?)?;
        }
        let pairs = [
            ("seed", &self.seed),
            ("runs", &self.runs),
            ("out", &self.out),
            ("format", &self.format),
            ("scheme", &self.scheme),
            ("n", &self.n),
            ("k", &self.k),
            ("m", &self.m),
            ("r", &self.r),
            ("p", &self.p),
            ("transport", &self.transport),
            ("port", &self.port),
            ("known", &self.known),
            ("model", &self.model),
            ("alice", &self.alice),
            ("bob", &self.bob),
            ("restart_cap", &self.restart_cap),
            ("memory_budget", &self.memory_budget),
            ("null_runs", &self.null_runs),
        ];
        for (key, value) in pairs {
            if let Some(v) = value {
                config.set(key, v)?;
            }
        }
        Ok(config)
    }
}

fn emit(report: &ExperimentReport, config: &ExperimentConfig) -> qokd::Result<()> {
    let text = report.render(config.format);
    match &config.out {
        Some(path) => std::fs::write(path, text)?,
        None => print!("{text}"),
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (flags, command): (&Flags, fn(&ExperimentConfig) -> qokd::Result<ExperimentReport>) = match &cli.command {
        Command::Run(f) => (f, cmd_run),
        Command::Table1(f) => (f, cmd_table1),
        Command::Table2(f) => (f, cmd_table2),
        Command::Dilution(f) => (f, cmd_dilution),
        Command::Attack(f) => (f, cmd_attack),
    };
    let result = flags.config().and_then(|config| {
        let report = command(&config)?;
        emit(&report, &config)?;
        Ok(report)
    });
    match result {
        Ok(report) => {
            let aborted = report.summary.get("aborted").and_then(|v| v.as_u64()).unwrap_or(0);
            if aborted > 0 {
                eprintln!("qokd: {aborted} session(s) aborted");
                ExitCode::from(3)
            } else {
                ExitCode::SUCCESS
            }
        }
        Err(e @ Error::Io(_)) => {
            eprintln!("qokd: {e}");
            ExitCode::FAILURE
        }
        Err(e) => {
            eprintln!("qokd: {e}");
            ExitCode::from(2)
        }
    }
}
