use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use xbarsim::frontend::{
    emit_report, parse_config_file, run_experiment, ExperimentKind, Format, SimConfig,
};
use xbarsim::Error;

#[derive(Parser)]
#[command(
    name = "xbarsim",
    version,
    about = "Memristor crossbar and RGC neuron simulator"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
    /// Experiment config (defaults to the reference preset).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output file (stdout when absent).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true)]
    format: Option<Format>,
    /// Monte Carlo run count override.
    #[arg(long, global = true)]
    runs: Option<usize>,
    #[arg(long, global = true)]
    verbose: bool,
}

#[derive(Subcommand, Clone, Copy)]
enum Cmd {
    /// DC operating point and transfer curve
    Op,
    /// Small-signal gain and impedances
    Smallsignal,
    /// SAR convergence grid and array calibration
    Sar,
    /// Monte Carlo mismatch study
    Mc,
    /// Network inference
    Infer,
    /// Energy report
    Energy,
}

impl From<Cmd> for ExperimentKind {
    fn from(c: Cmd) -> Self {
        match c {
            Cmd::Op => ExperimentKind::Op,
            Cmd::Smallsignal => ExperimentKind::SmallSignal,
            Cmd::Sar => ExperimentKind::Sar,
            Cmd::Mc => ExperimentKind::Mc,
            Cmd::Infer => ExperimentKind::Infer,
            Cmd::Energy => ExperimentKind::Energy,
        }
    }
}

fn run(cli: &Cli) -> Result<(), Error> {
    let mut cfg = match &cli.config {
        Some(p) => parse_config_file(p)?,
        None => SimConfig::reference(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(r) = cli.runs {
        cfg.mc.runs = r;
    }
    let kind = ExperimentKind::from(cli.cmd);
    if cli.verbose {
        eprintln!(
            "xbarsim {}: {} seed={} digest={}",
            env!("CARGO_PKG_VERSION"),
            kind.name(),
            cfg.seed,
            cfg.digest()
        );
    }
    let record = run_experiment(&cfg, kind)?;
    let format = cli.format.unwrap_or(cfg.output.format);
    let bytes = emit_report(&record, format)?;
    match cli.out.as_ref().or(cfg.output.path.as_ref()) {
        Some(path) => std::fs::write(path, bytes)
            .map_err(|e| Error::Io(e).context(format!("writing {}", path.display())))?,
        None => std::io::stdout().write_all(&bytes)?,
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
