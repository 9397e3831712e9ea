//! `stereokit` batch command-line front end.

mod commands;
mod dataset;

use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

pub use commands::CliError;

#[derive(Debug, Parser)]
#[command(
    name = "stereokit",
    version,
    about = "Stereo disparity geometry and dataset analysis"
)]
pub struct Cli {
    /// Worker threads (defaults to STEREOKIT_THREADS, else all cores).
    #[arg(long, global = true, env = "STEREOKIT_THREADS")]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Estimate surface normals from disparity maps.
    D2n(D2nArgs),
    /// Dataset distribution histograms.
    #[command(subcommand)]
    Stats(StatsCommand),
    /// Evaluation metrics.
    #[command(subcommand)]
    Eval(EvalCommand),
    /// Reconstruct a PLY point cloud from a disparity map.
    Pcd(PcdArgs),
    /// Render analytic stereo ground truth.
    Synth(SynthArgs),
    /// Multi-scale smooth-L1 disparity loss.
    Loss(LossArgs),
}

#[derive(Debug, Args)]
pub struct D2nArgs {
    /// Disparity PFM file, or a directory of them.
    #[arg(long)]
    pub disp: std::path::PathBuf,
    #[arg(long)]
    pub rig: std::path::PathBuf,
    /// Output file, or directory when --disp is a directory.
    #[arg(long)]
    pub out: std::path::PathBuf,
    /// Write 16-bit PNG instead of PFM.
    #[arg(long)]
    pub png16: bool,
}

#[derive(Debug, Subcommand)]
pub enum StatsCommand {
    /// Histogram of 200 * disparity / width.
    Disparity {
        #[arg(long)]
        disp: std::path::PathBuf,
        #[arg(long, default_value_t = stereokit::stats::DEFAULT_DISPARITY_BINS)]
        bins: usize,
        #[command(flatten)]
        out: HistOut,
    },
    /// Per-sample averaged normal angle histogram.
    Normal {
        #[arg(long)]
        normal: std::path::PathBuf,
        #[arg(long, default_value_t = stereokit::stats::DEFAULT_NORMAL_BIN_DEG)]
        bin_deg: f64,
        #[command(flatten)]
        out: HistOut,
    },
    /// Left/right brightness joint histogram over matched pixels.
    Brightness {
        #[arg(long)]
        left: std::path::PathBuf,
        #[arg(long)]
        right: std::path::PathBuf,
        #[arg(long)]
        disp: std::path::PathBuf,
        /// Also write overexposure fractions as JSON.
        #[arg(long)]
        overexposure: Option<std::path::PathBuf>,
        #[command(flatten)]
        out: HistOut,
    },
}

#[derive(Debug, Args)]
pub struct HistOut {
    /// Histogram JSON output.
    #[arg(long)]
    pub out: std::path::PathBuf,
    /// Optional CSV output.
    #[arg(long)]
    pub csv: Option<std::path::PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum EvalCommand {
    /// Endpoint error.
    Disparity(EvalArgs),
    /// Normal angle error statistics.
    Normal(EvalArgs),
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Prediction file or directory.
    #[arg(long)]
    pub pred: std::path::PathBuf,
    /// Ground-truth file or directory.
    #[arg(long)]
    pub gt: std::path::PathBuf,
    /// Write the metric JSON here instead of standard output.
    #[arg(long)]
    pub out: Option<std::path::PathBuf>,
    /// Per-pixel error map (PFM); single-file mode only.
    #[arg(long)]
    pub error_map: Option<std::path::PathBuf>,
}

#[derive(Debug, Args)]
pub struct PcdArgs {
    #[arg(long)]
    pub disp: std::path::PathBuf,
    #[arg(long)]
    pub rig: std::path::PathBuf,
    /// Left image for point colors.
    #[arg(long)]
    pub left: Option<std::path::PathBuf>,
    /// Normal map (PFM or 16-bit PNG) for point normals.
    #[arg(long)]
    pub normal: Option<std::path::PathBuf>,
    #[arg(long)]
    pub out: std::path::PathBuf,
    #[arg(long, value_enum, default_value_t = PlyEncoding::Binary)]
    pub format: PlyEncoding,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum PlyEncoding {
    Ascii,
    Binary,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Scene JSON; renders one sample into --out.
    #[arg(long, conflicts_with = "random", required_unless_present = "random")]
    pub scene: Option<std::path::PathBuf>,
    /// Render this many random plane scenes in dataset layout.
    #[arg(long)]
    pub random: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub rig: std::path::PathBuf,
    #[arg(long)]
    pub width: usize,
    #[arg(long)]
    pub height: usize,
    /// Output directory.
    #[arg(long)]
    pub out: std::path::PathBuf,
}

#[derive(Debug, Args)]
pub struct LossArgs {
    /// Ground-truth disparity at full resolution.
    #[arg(long)]
    pub gt: std::path::PathBuf,
    /// Predicted disparity: seven files from full resolution down, or one
    /// full-resolution file that is downsampled like the ground truth.
    #[arg(long, num_args = 1.., required = true)]
    pub pred: Vec<std::path::PathBuf>,
    /// Comma-separated per-scale weights.
    #[arg(long, value_delimiter = ',')]
    pub weights: Option<Vec<f64>>,
    #[arg(long)]
    pub out: Option<std::path::PathBuf>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(CliError::USAGE)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("stereokit: {e}");
            ExitCode::from(e.code())
        }
    }
}
