//! `orchard` command line pipeline: synthesize datasets, train segmentation
//! models, segment whole images, detect fruits, score the results and build
//! yield maps.

mod commands;

use clap::{Parser, Subcommand};

#[derive(Parser, Debug)]
#[command(
    name = "orchard",
    about = "Orchard fruit segmentation, detection and yield estimation",
    version
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Generate a synthetic orchard dataset.
    Synthgen(commands::synthgen::SynthgenArgs),
    /// Train a segmentation model.
    #[command(subcommand)]
    Train(commands::train::TrainCommand),
    /// Segment images into fruit probability maps.
    Segment(commands::segment::SegmentArgs),
    /// Detect individual fruits on probability maps.
    #[command(subcommand)]
    Detect(commands::detect::DetectCommand),
    /// Score pixel, detection or count quality.
    #[command(subcommand)]
    Evaluate(commands::evaluate::EvaluateCommand),
    /// Accumulate detections into per-row yields and a yield raster.
    Yieldmap(commands::yieldmap::YieldmapArgs),
}

/// Runs the CLI on explicit arguments and returns the process exit code:
/// 0 on success, 1 on runtime failure, 2 on usage errors.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            // Clap renders help/version through the error path too.
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let result = match cli.command {
        Command::Synthgen(args) => commands::synthgen::run(args),
        Command::Train(cmd) => commands::train::run(cmd),
        Command::Segment(args) => commands::segment::run(args),
        Command::Detect(cmd) => commands::detect::run(cmd),
        Command::Evaluate(cmd) => commands::evaluate::run(cmd),
        Command::Yieldmap(args) => commands::yieldmap::run(args),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e:#}");
            1
        }
    }
}

/// Installs the global rayon pool honoring `ORCHARD_THREADS`.
pub fn init_threads() {
    if let Ok(v) = std::env::var("ORCHARD_THREADS") {
        if let Ok(n) = v.parse::<usize>() {
            if n > 0 {
                let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
            }
        }
    }
}
