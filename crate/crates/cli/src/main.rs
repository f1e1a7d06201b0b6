//! `nnbmc` command-line front end.
//!
//! Exit status: 0 property holds or task done, 10 property violated,
//! 2 usage or input error, 3 resource or bound limit reached.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

pub const EXIT_OK: u8 = 0;
pub const EXIT_VIOLATED: u8 = 10;
pub const EXIT_USAGE: u8 = 2;
pub const EXIT_EXHAUSTED: u8 = 3;

#[derive(Parser, Debug)]
#[command(name = "nnbmc", version, about = "Coverage and adversarial checks for small fixed-point MLPs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Evaluate a network on one image and print its activation trace.
    Eval(EvalArgs),
    /// Check a covering method against a coverage threshold.
    Cover(CoverArgs),
    /// Search the grid inside the gamma ball for a misclassified image.
    Verify(VerifyArgs),
    /// Write the adversarial query as an SMT-LIB2 QF_BV script.
    EmitSmt(EmitSmtArgs),
    /// Read a solver transcript back into a counterexample.
    IngestModel(IngestArgs),
    /// Generate the seeded 200-image vowel dataset.
    GenDataset(GenDatasetArgs),
    /// Compare a kernel against its naive reference on random inputs.
    Conform(ConformArgs),
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    #[arg(long)]
    pub net: PathBuf,
    #[arg(long)]
    pub image: PathBuf,
    /// Evaluate in double precision with the exact logistic.
    #[arg(long)]
    pub real: bool,
}

#[derive(Args, Debug)]
pub struct CoverArgs {
    #[arg(long)]
    pub net: PathBuf,
    /// A DATASET file (images are evaluated) or a TRACES file (pairs in
    /// file order).
    #[arg(long)]
    pub dataset: PathBuf,
    /// ss, ds, sv or dv.
    #[arg(long)]
    pub method: String,
    /// Required coverage P in (0, 1].
    #[arg(long)]
    pub threshold: f64,
    /// Threshold of the layer distance metric (DS, DV).
    #[arg(long = "d-h")]
    pub d_h: Option<f64>,
    /// rate or l2.
    #[arg(long = "h-metric", default_value = "l2")]
    pub h_metric: String,
    /// Threshold of the neuron value metric (SV, DV).
    #[arg(long = "d-g")]
    pub d_g: Option<f64>,
    /// rate or l2.
    #[arg(long = "g-metric", default_value = "rate")]
    pub g_metric: String,
    /// Compare every pair of dataset images.
    #[arg(long)]
    pub all_pairs: bool,
    /// Write the uncovered neurons here when the property fails.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug, Clone)]
pub struct ProblemArgs {
    #[arg(long)]
    pub net: PathBuf,
    /// Reference image I^d.
    #[arg(long)]
    pub image: PathBuf,
    /// Output index D the reference must keep.
    #[arg(long)]
    pub target: usize,
    #[arg(long)]
    pub gamma: f64,
    /// Reference value V.
    #[arg(long = "v")]
    pub v: Option<f64>,
    /// Grid levels per pixel.
    #[arg(long, default_value_t = 5)]
    pub levels: usize,
    /// Grid radius per pixel; defaults to gamma / sqrt(pixels).
    #[arg(long)]
    pub radius: Option<f64>,
    /// Require every other output above V.
    #[arg(long)]
    pub strict: bool,
    /// Apply the literal to final potentials (V defaults to 0).
    #[arg(long)]
    pub potentials: bool,
}

#[derive(Args, Debug)]
pub struct VerifyArgs {
    #[command(flatten)]
    pub problem: ProblemArgs,
    #[arg(long, default_value_t = 1)]
    pub granularity: usize,
    /// Number of equal bound steps between 0 and gamma.
    #[arg(long = "max-bound", default_value_t = 10)]
    pub max_bound: usize,
    /// Seconds.
    #[arg(long = "time-limit")]
    pub time_limit: Option<f64>,
    /// Bytes.
    #[arg(long = "memory-limit")]
    pub memory_limit: Option<u64>,
    /// Maximum number of iterations.
    #[arg(long = "step-limit")]
    pub step_limit: Option<usize>,
    /// Report per-iteration wall-clock time.
    #[arg(long)]
    pub timing: bool,
    /// Counterexample files are written as PREFIX.img and PREFIX.pgm.
    #[arg(long, default_value = "counterexample")]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct EmitSmtArgs {
    #[command(flatten)]
    pub problem: ProblemArgs,
    /// Also restrict pixels to the native grid levels.
    #[arg(long)]
    pub grid_restrict: bool,
    #[arg(long = "max-bytes")]
    pub max_bytes: Option<usize>,
    /// Output file; standard output if omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct IngestArgs {
    #[command(flatten)]
    pub problem: ProblemArgs,
    /// The emitted SMT-LIB2 script.
    #[arg(long)]
    pub smt: PathBuf,
    /// Solver standard output.
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long, default_value = "counterexample")]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct GenDatasetArgs {
    #[arg(long)]
    pub seed: u64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct ConformArgs {
    /// gemm, bias_add or activation.
    #[arg(long)]
    pub op: String,
    #[arg(long, default_value_t = 1000)]
    pub cases: usize,
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::from(EXIT_OK);
        }
        Err(e) => {
            let rendered = e.render().to_string();
            let line = rendered.lines().next().unwrap_or("error: invalid arguments");
            eprintln!("nnbmc: {}", line.trim_start_matches("error: "));
            return ExitCode::from(EXIT_USAGE);
        }
    };
    let result = match &cli.command {
        Command::Eval(a) => commands::eval(a),
        Command::Cover(a) => commands::cover(a),
        Command::Verify(a) => commands::verify(a),
        Command::EmitSmt(a) => commands::emit_smt(a),
        Command::IngestModel(a) => commands::ingest_model(a),
        Command::GenDataset(a) => commands::gen_dataset(a),
        Command::Conform(a) => commands::conform(a),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(message) => {
            eprintln!("nnbmc: {}", message.replace('\n', " "));
            ExitCode::from(EXIT_USAGE)
        }
    }
}
