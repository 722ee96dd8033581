mod commands;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

/// Failure classes mapped to exit codes.
#[derive(Debug)]
pub enum Failure {
    /// Bad flags or unreadable / malformed input files.
    Input(anyhow::Error),
    /// A result broke an internal guarantee.
    Invariant(anyhow::Error),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Input(_) => 2,
            Failure::Invariant(_) => 3,
        }
    }
}

pub type CmdResult = Result<(), Failure>;

pub trait InputContext<T> {
    fn input(self) -> Result<T, Failure>;
    fn invariant(self) -> Result<T, Failure>;
}

impl<T, E: Into<anyhow::Error>> InputContext<T> for Result<T, E> {
    fn input(self) -> Result<T, Failure> {
        self.map_err(|e| Failure::Input(e.into()))
    }

    fn invariant(self) -> Result<T, Failure> {
        self.map_err(|e| Failure::Invariant(e.into()))
    }
}

#[derive(Parser)]
#[command(name = "detgeom", version, about = "Detection geometry toolkit")]
struct Cli {
    /// Directory for output files and run manifests.
    #[arg(long, global = true, env = "DETGEOM_OUT_DIR", default_value = ".")]
    out_dir: PathBuf,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Evaluate one box measure on a pair of boxes.
    Metric(commands::MetricArgs),
    /// Sweep prediction offset along the ground-truth diagonal.
    Sweep(commands::SweepArgs),
    /// Precision, recall and mAP of detections against VOC annotations.
    Eval(commands::EvalArgs),
    /// Count anchor positives per ground truth on a regular grid.
    Assign(commands::AssignArgs),
    /// JS divergence between two image sets or two histograms.
    Shift(commands::ShiftArgs),
    /// Relative sizes and size classes of annotated boxes.
    Sizes(commands::SizesArgs),
    /// Forward pass of the gather-distribute fusion reference.
    Fuse(commands::FuseArgs),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Err(e) = std::fs::create_dir_all(&cli.out_dir) {
        eprintln!("error: cannot create {}: {e}", cli.out_dir.display());
        return ExitCode::from(2);
    }
    let out = cli.out_dir.as_path();
    let result = match &cli.command {
        Command::Metric(a) => commands::metric(a, out),
        Command::Sweep(a) => commands::sweep(a, out),
        Command::Eval(a) => commands::eval(a, out),
        Command::Assign(a) => commands::assign(a, out),
        Command::Shift(a) => commands::shift(a, out),
        Command::Sizes(a) => commands::sizes(a, out),
        Command::Fuse(a) => commands::fuse(a, out),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            let (Failure::Input(e) | Failure::Invariant(e)) = &f;
            eprintln!("error: {e:#}");
            ExitCode::from(f.code())
        }
    }
}
