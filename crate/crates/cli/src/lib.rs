//! Command-line workflow: generate data, train the baseline, operate,
//! train per-class heads, evaluate and compare.

mod commands;
pub mod config;
pub mod manifest;

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use splitseg::Error;

pub const OUT_ENV: &str = "SPLITSEG_OUT";

#[derive(Parser, Debug)]
#[command(name = "splitseg", version, about = "Per-class mask heads for a small two-stage segmenter")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Render a synthetic shapes dataset (train and val splits).
    Generate(GenerateArgs),
    /// Train the multi-class baseline until plateau or the epoch cap.
    TrainBaseline(TrainBaselineArgs),
    /// Replace the multi-class mask head with one head per class.
    Surgery(SurgeryArgs),
    /// Train the per-class mask heads of a split checkpoint.
    TrainHeads(TrainHeadsArgs),
    /// Per-class mask AP on every per-class validation sub-dataset.
    Evaluate(EvaluateArgs),
    /// Before/after table, CSV and bar chart from two evaluations.
    Compare(CompareArgs),
    /// Re-run a command from its manifest and check the output digests.
    Rerun(RerunArgs),
}

#[derive(Args, Debug, Default)]
pub struct TrainFlags {
    /// JSON file with training settings; flags take precedence.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub warmup_steps: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Args, Debug)]
pub struct GenerateArgs {
    /// Master seed of the dataset.
    #[arg(long)]
    pub seed: u64,
    #[arg(long)]
    pub classes: Option<usize>,
    #[arg(long)]
    pub train: Option<usize>,
    #[arg(long)]
    pub val: Option<usize>,
    #[arg(long)]
    pub height: Option<usize>,
    #[arg(long)]
    pub width: Option<usize>,
    #[arg(long)]
    pub max_instances: Option<usize>,
    /// Under-sampled class id (default: the last class).
    #[arg(long)]
    pub rare_class: Option<u32>,
    /// JSON file with dataset settings; flags take precedence.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output directory (default: $SPLITSEG_OUT/data).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct TrainBaselineArgs {
    /// Dataset directory written by `generate`.
    #[arg(long)]
    pub data: PathBuf,
    #[command(flatten)]
    pub train: TrainFlags,
    /// Skip per-epoch validation (and with it the plateau stop).
    #[arg(long)]
    pub no_val: bool,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum InitArg {
    Slice,
    Fresh,
}

#[derive(Args, Debug)]
pub struct SurgeryArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long, value_enum, default_value = "slice")]
    pub init: InitArg,
    /// Build a cascade with this many stages (at least 2) on top.
    #[arg(long)]
    pub cascade_stages: Option<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum ModeArg {
    Sequential,
    Parallel,
}

#[derive(Args, Debug)]
pub struct TrainHeadsArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    /// `all` or a comma-separated list of class ids or names.
    #[arg(long, default_value = "all")]
    pub classes: String,
    #[arg(long, value_enum, default_value = "sequential")]
    pub mode: ModeArg,
    /// Worker threads in parallel mode (default: number of classes).
    #[arg(long)]
    pub jobs: Option<usize>,
    #[command(flatten)]
    pub train: TrainFlags,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum KindArg {
    Mask,
    Box,
}

#[derive(Args, Debug)]
pub struct EvaluateArgs {
    /// Checkpoint of any kind; omit with `--oracle`.
    #[arg(long, required_unless_present = "oracle")]
    pub checkpoint: Option<PathBuf>,
    #[arg(long)]
    pub data: PathBuf,
    /// Use the ground truth as predictions (score 1).
    #[arg(long)]
    pub oracle: bool,
    #[arg(long, value_enum, default_value = "mask")]
    pub kind: KindArg,
    /// Label stored in the report (default: checkpoint kind).
    #[arg(long)]
    pub tag: Option<String>,
    #[arg(long)]
    pub score_thresh: Option<f64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct CompareArgs {
    #[arg(long)]
    pub before: PathBuf,
    #[arg(long)]
    pub after: PathBuf,
    /// Also write the table as CSV.
    #[arg(long)]
    pub csv: Option<PathBuf>,
    /// Also write an SVG bar chart of per-class AP.
    #[arg(long)]
    pub plot: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct RerunArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// Where the re-run writes its outputs (default: a fresh directory
    /// under $SPLITSEG_OUT/rerun).
    #[arg(long)]
    pub scratch: Option<PathBuf>,
}

pub const EXIT_USAGE: u8 = 2;
pub const EXIT_DATA: u8 = 3;
pub const EXIT_DIVERGENCE: u8 = 4;
pub const EXIT_INCOMPARABLE: u8 = 5;

pub fn exit_code(err: &Error) -> u8 {
    match err {
        Error::ClassTraining { source, .. } => exit_code(source),
        Error::Divergence { .. } | Error::NonFinite(_) => EXIT_DIVERGENCE,
        Error::Incomparable(_) => EXIT_INCOMPARABLE,
        Error::InvalidArgument(_) => EXIT_USAGE,
        _ => EXIT_DATA,
    }
}

/// Parses `argv` (without the program name) and runs the command.
/// Returns the process exit code.
pub fn run_argv(argv: &[String]) -> u8 {
    let cli = match Cli::try_parse_from(std::iter::once("splitseg".to_string()).chain(argv.iter().cloned())) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => 0,
                _ => EXIT_USAGE,
            };
        }
    };
    match execute(cli.command, argv) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

/// Runs a parsed command; `argv` is recorded in its manifest.
pub fn execute(command: Command, argv: &[String]) -> splitseg::Result<()> {
    commands::run(command, argv)
}

fn rebase_path(p: &mut PathBuf, dir: &Path) {
    if p.is_relative() {
        *p = dir.join(&*p);
    }
}

fn redirect(p: &mut Option<PathBuf>, scratch: &Path, default_name: &str) {
    let name = p
        .as_ref()
        .and_then(|p| p.file_name())
        .map(|n| n.to_os_string())
        .unwrap_or_else(|| default_name.into());
    *p = Some(scratch.join(name));
}

impl Command {
    /// Resolves relative paths against `dir`, the directory the command
    /// originally ran in.
    pub fn rebase(&mut self, dir: &Path) {
        let r = |p: &mut PathBuf| rebase_path(p, dir);
        let ro = |p: &mut Option<PathBuf>| {
            if let Some(p) = p {
                rebase_path(p, dir)
            }
        };
        match self {
            Command::Generate(a) => {
                ro(&mut a.config);
                ro(&mut a.out);
            }
            Command::TrainBaseline(a) => {
                r(&mut a.data);
                ro(&mut a.train.config);
                ro(&mut a.out);
            }
            Command::Surgery(a) => {
                r(&mut a.checkpoint);
                ro(&mut a.out);
            }
            Command::TrainHeads(a) => {
                r(&mut a.checkpoint);
                r(&mut a.data);
                ro(&mut a.train.config);
                ro(&mut a.out);
            }
            Command::Evaluate(a) => {
                ro(&mut a.checkpoint);
                r(&mut a.data);
                ro(&mut a.out);
            }
            Command::Compare(a) => {
                r(&mut a.before);
                r(&mut a.after);
                ro(&mut a.csv);
                ro(&mut a.plot);
                ro(&mut a.out);
            }
            Command::Rerun(a) => {
                r(&mut a.manifest);
                ro(&mut a.scratch);
            }
        }
    }

    /// Sends every output into `scratch`, keeping file names. Returns the
    /// primary output path, or `None` for commands that write nothing.
    pub fn redirect_outputs(&mut self, scratch: &Path) -> Option<PathBuf> {
        let out = match self {
            Command::Generate(a) => {
                redirect(&mut a.out, scratch, "data");
                &a.out
            }
            Command::TrainBaseline(a) => {
                redirect(&mut a.out, scratch, "baseline.ckpt");
                &a.out
            }
            Command::Surgery(a) => {
                redirect(&mut a.out, scratch, "split.ckpt");
                &a.out
            }
            Command::TrainHeads(a) => {
                redirect(&mut a.out, scratch, "heads.ckpt");
                &a.out
            }
            Command::Evaluate(a) => {
                redirect(&mut a.out, scratch, "report.json");
                &a.out
            }
            Command::Compare(a) => {
                if a.csv.is_some() {
                    redirect(&mut a.csv, scratch, "comparison.csv");
                }
                if a.plot.is_some() {
                    redirect(&mut a.plot, scratch, "comparison.svg");
                }
                redirect(&mut a.out, scratch, "comparison.json");
                &a.out
            }
            Command::Rerun(_) => return None,
        };
        out.clone()
    }
}
