use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use steer_cli::pipeline;
use steer_cli::report::report;
use steer_cli::sweep::{parse_grid, run_sweep};
use steer_cli::{Failure, FailureKind, PipelineConfig};
use steer_core::Execution;

/// Steering-certified random number generation: simulate, reconstruct,
/// certify, extract.
#[derive(Parser)]
#[command(name = "steer", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Pipeline configuration (TOML).
    #[arg(short, long)]
    config: PathBuf,
    /// Run directory; overrides `output_dir` from the config.
    #[arg(short, long)]
    out: Option<PathBuf>,
    /// Overrides experiment.rng_seed.
    #[arg(long)]
    rng_seed: Option<u64>,
    /// Overrides certification.bootstrap_seed.
    #[arg(long)]
    bootstrap_seed: Option<u64>,
    /// Overrides extraction.seed.
    #[arg(long)]
    extraction_seed: Option<u64>,
    /// Run data-parallel loops on one thread.
    #[arg(long)]
    sequential: bool,
}

impl Common {
    fn load(&self) -> Result<(PipelineConfig, PathBuf, Execution), Failure> {
        let mut cfg = PipelineConfig::load(&self.config)?;
        if let Some(s) = self.rng_seed {
            cfg.experiment.rng_seed = s;
        }
        if let Some(s) = self.bootstrap_seed {
            cfg.certification.bootstrap_seed = s;
        }
        if let Some(s) = self.extraction_seed {
            cfg.extraction.seed = s;
        }
        let dir = self.out.clone().unwrap_or_else(|| cfg.output_dir.clone());
        Ok((cfg, dir, exec(self.sequential)))
    }
}

fn exec(sequential: bool) -> Execution {
    if sequential {
        Execution::Sequential
    } else {
        Execution::Parallel
    }
}

#[derive(Subcommand)]
enum Command {
    /// Simulate tomography counts, time tags and sifted raw bits.
    Simulate {
        #[command(flatten)]
        common: Common,
        /// Also write the ground-truth pairing of detections.
        #[arg(long)]
        truth_log: bool,
    },
    /// Reconstruct the assemblage from the tomography counts.
    Tomo(Common),
    /// Certify the reconstructed assemblage.
    Certify(Common),
    /// Extract random bits from the raw bits at the certified min-entropy.
    Extract(Common),
    /// All stages followed by the report.
    Run(Common),
    /// Summarize a run directory.
    Report {
        /// Run directory.
        dir: PathBuf,
    },
    /// Certify ideal assemblages over a grid of efficiencies and visibilities.
    Sweep {
        /// Configuration supplying the settings and x* policy; defaults apply
        /// when omitted.
        #[arg(short, long)]
        config: Option<PathBuf>,
        #[arg(short, long, default_value = "steer-sweep")]
        out: PathBuf,
        /// `start:stop:step` or a comma-separated list.
        #[arg(long, default_value = "0.48:1.00:0.02")]
        eta: String,
        #[arg(long, default_value = "1.0")]
        visibility: String,
        #[arg(long)]
        sequential: bool,
    },
}

fn usage(e: String) -> Failure {
    Failure::new(FailureKind::Usage, "arguments", e)
}

fn print_summary(dir: &Path) {
    if let Ok(text) = std::fs::read_to_string(dir.join(steer_cli::report::REPORT_TEXT)) {
        print!("{text}");
    }
}

fn dispatch(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Simulate { common, truth_log } => {
            let (cfg, dir, _) = common.load()?;
            pipeline::simulate(&cfg, &dir, truth_log)
        }
        Command::Tomo(c) => {
            let (cfg, dir, _) = c.load()?;
            pipeline::tomo(&cfg, &dir)
        }
        Command::Certify(c) => {
            let (cfg, dir, exec) = c.load()?;
            pipeline::certify(&cfg, &dir, exec)
        }
        Command::Extract(c) => {
            let (cfg, dir, exec) = c.load()?;
            pipeline::extract(&cfg, &dir, exec)
        }
        Command::Run(c) => {
            let (cfg, dir, exec) = c.load()?;
            let r = pipeline::run(&cfg, &dir, exec);
            print_summary(&dir);
            r.map(|_| ())
        }
        Command::Report { dir } => {
            if report(&dir)?.is_some() {
                print_summary(&dir);
            }
            Ok(())
        }
        Command::Sweep { config, out, eta, visibility, sequential } => {
            let cfg = match config {
                Some(p) => PipelineConfig::load(&p)?,
                None => PipelineConfig::parse("version = 1\n[experiment]\n")?,
            };
            let etas = parse_grid(&eta).map_err(usage)?;
            let vs = parse_grid(&visibility).map_err(usage)?;
            let rows = run_sweep(&cfg, &out, &vs, &etas, exec(sequential))?;
            print!("{}", steer_cli::sweep::sweep_tsv(&rows));
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("steer: {f}");
            ExitCode::from(f.exit_code())
        }
    }
}
