use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use mvq::accel::Setting;
use mvq::pipeline::DEFAULT_SEED;
use mvq::sparsity::NmPattern;

mod commands;
mod fail;
mod files;
mod simulate;

use fail::Failure;

fn parse_pattern(s: &str) -> Result<NmPattern, String> {
    s.parse().map_err(|e: mvq::Error| e.to_string())
}

fn parse_array(s: &str) -> Result<(usize, usize), String> {
    let (h, l) = s
        .split_once(['x', 'X'])
        .ok_or_else(|| format!("expected HxL, got '{s}'"))?;
    let dim = |v: &str| v.trim().parse::<usize>().map_err(|_| format!("bad array size '{s}'"));
    Ok((dim(h)?, dim(l)?))
}

fn parse_ews(s: &str) -> Result<(usize, usize, usize), String> {
    let parts: Vec<usize> = s
        .split(',')
        .map(|p| p.trim().parse().map_err(|_| format!("bad extension '{p}'")))
        .collect::<Result<_, _>>()?;
    match parts[..] {
        [a, b, d] => Ok((a, b, d)),
        _ => Err(format!("expected A,B,D, got '{s}'")),
    }
}

fn parse_setting(s: &str) -> Result<Setting, String> {
    s.parse().map_err(|e: mvq::Error| e.to_string())
}

#[derive(Parser)]
#[command(name = "mvq", version, about = "Masked vector quantization toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Mode {
    Masked,
    Common,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Scope {
    Layerwise,
    Crosslayer,
}

#[derive(Args)]
pub struct CompressArgs {
    /// Tensor manifests, one per layer, in container order.
    #[arg(required = true, value_name = "MANIFEST")]
    pub inputs: Vec<PathBuf>,
    #[arg(long, default_value_t = 16)]
    pub d: usize,
    #[arg(long, default_value_t = 512)]
    pub k: usize,
    #[arg(long, default_value = "4:16", value_parser = parse_pattern)]
    pub nm: NmPattern,
    /// Codebook bits.
    #[arg(long, default_value_t = 8)]
    pub qc: u32,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    pub seed: u64,
    #[arg(long, value_enum, default_value = "masked")]
    pub mode: Mode,
    #[arg(long, value_enum, default_value = "layerwise")]
    pub scope: Scope,
    /// Per-layer overrides and include/exclude list.
    #[arg(long, value_name = "FILE")]
    pub layers: Option<PathBuf>,
    #[arg(long, value_name = "PATH")]
    pub out: PathBuf,
    /// Encode against the codebooks of an existing container instead of
    /// clustering; layer i uses that container's layer i.
    #[arg(long, value_name = "CONTAINER")]
    pub reuse_codebooks: Option<PathBuf>,
    /// Search the codebook scale instead of using the absolute maximum.
    #[arg(long)]
    pub grid_scale: bool,
}

#[derive(Args)]
pub struct AblateArgs {
    /// Tensor manifest; a 4096x16 Gaussian tensor drawn from the seed is
    /// used when omitted.
    #[arg(value_name = "MANIFEST")]
    pub input: Option<PathBuf>,
    #[arg(long, default_value = "4:16", value_parser = parse_pattern)]
    pub nm: NmPattern,
    /// Codebook size and subvector length for masked VQ (cases C, D).
    #[arg(long, default_value_t = 512)]
    pub k: usize,
    #[arg(long, default_value_t = 16)]
    pub d: usize,
    /// Codebook size and subvector length for common VQ (cases A, B).
    #[arg(long, default_value_t = 1024)]
    pub k_common: usize,
    #[arg(long, default_value_t = 8)]
    pub d_common: usize,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    pub seed: u64,
}

#[derive(Args)]
pub struct SimulateArgs {
    /// Layer table (`name Cout Cin Kh Kw OH OW` per line); the bundled
    /// ResNet-18 table when omitted.
    #[arg(value_name = "TABLE")]
    pub table: Option<PathBuf>,
    #[arg(long, default_value = "32x32", value_parser = parse_array)]
    pub array: (usize, usize),
    #[arg(long, default_value = "4,2,2", value_parser = parse_ews)]
    pub ews: (usize, usize, usize),
    /// Settings to run; all six when omitted.
    #[arg(long, value_delimiter = ',', value_parser = parse_setting)]
    pub setting: Vec<Setting>,
    #[arg(long, default_value_t = 64)]
    pub dma_bits: u32,
    #[arg(long, default_value_t = 256)]
    pub l1_kb: u64,
    #[arg(long, default_value = "4:16", value_parser = parse_pattern)]
    pub nm: NmPattern,
    /// Fraction of zero weights, for MAC gating.
    #[arg(long, default_value_t = 0.0)]
    pub weight_zeros: f64,
    /// Fraction of zero activations, for MAC gating.
    #[arg(long, default_value_t = 0.0)]
    pub act_zeros: f64,
    /// Write `<PREFIX>.txt` and `<PREFIX>.csv` instead of printing.
    #[arg(long, value_name = "PREFIX")]
    pub out: Option<PathBuf>,
}

#[derive(Args)]
pub struct StatsArgs {
    pub container: PathBuf,
    /// Original tensors, in container order, to report SSE against.
    #[arg(long, value_name = "MANIFEST", num_args = 1..)]
    pub reference: Vec<PathBuf>,
}

#[derive(Args)]
pub struct ReconstructArgs {
    pub container: PathBuf,
    /// Output directory for `layer_NNN.txt` / `layer_NNN.bin`.
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Prune, cluster and quantize tensors into an MVQ1 container.
    Compress(CompressArgs),
    /// Compare dense, pruned, common and masked clustering on one tensor.
    Ablate(AblateArgs),
    /// Model access counts, energy and throughput on a systolic array.
    Simulate(SimulateArgs),
    /// Report the contents of a container.
    Stats(StatsArgs),
    /// Decode a container back to tensor files.
    Reconstruct(ReconstructArgs),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let run = std::panic::catch_unwind(|| match cli.command {
        Command::Compress(a) => commands::compress(&a),
        Command::Ablate(a) => commands::ablate(&a),
        Command::Simulate(a) => simulate::run(&a),
        Command::Stats(a) => commands::stats(&a),
        Command::Reconstruct(a) => commands::reconstruct(&a),
    });
    let result = run.unwrap_or_else(|_| Err(Failure::Internal("panic".into())));
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("mvq: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
