use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use filmfield::cli::{exit_code, run, Command, RunConfig, RunOptions};
use filmfield::Error;

#[derive(Parser)]
#[command(name = "filmfield", version, about = "Thin-film field mutual information and covariance reconstruction")]
struct Args {
    #[command(subcommand)]
    command: Cmd,
    /// Run configuration file (flat `key = value`).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory; overrides `output.dir`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Also write SVG plots.
    #[arg(long, global = true)]
    svg: bool,
    /// Worker thread cap.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Overrides `reconstruct.seed`.
    #[arg(long, global = true)]
    seed: Option<u64>,
}

#[derive(Subcommand, Clone, Copy)]
enum Cmd {
    /// Print film, derived and regime parameters.
    Params,
    /// Mutual information against subsystem volume.
    SweepVolume,
    /// Mutual information against boundary length at fixed volume.
    SweepArea,
    /// Per-pixel mutual information with the cell interior.
    MiMap,
    /// Synthesise two-point data and reconstruct the mode covariance.
    Reconstruct,
    /// Volume sweep plus the finite-size fit.
    FitCalabrese,
    /// Area sweep plus the linear area-law fit.
    FitArea,
}

impl From<Cmd> for Command {
    fn from(c: Cmd) -> Self {
        match c {
            Cmd::Params => Command::Params,
            Cmd::SweepVolume => Command::SweepVolume,
            Cmd::SweepArea => Command::SweepArea,
            Cmd::MiMap => Command::MiMap,
            Cmd::Reconstruct => Command::Reconstruct,
            Cmd::FitCalabrese => Command::FitCalabrese,
            Cmd::FitArea => Command::FitArea,
        }
    }
}

fn main() -> ExitCode {
    let args = Args::parse();
    match execute(&args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e) as u8)
        }
    }
}

fn execute(args: &Args) -> Result<(), Error> {
    let path = args.config.as_ref().ok_or_else(|| Error::Config("--config PATH is required".into()))?;
    let mut cfg = RunConfig::from_file(path)?;
    if let Some(seed) = args.seed {
        cfg.reconstruct.seed = seed;
    }
    if let Some(out) = &args.out {
        cfg.output_dir = out.clone();
    }
    if let Some(n) = args.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build_global()
            .map_err(|e| Error::Config(format!("--threads: {e}")))?;
    }
    let opts = RunOptions { out_dir: cfg.output_dir.clone(), svg: args.svg };
    let (report, written) = run(args.command.into(), &cfg, &opts)?;
    if let Some(r) = report {
        print!("{r}");
    }
    for p in written {
        println!("wrote {}", p.display());
    }
    Ok(())
}
