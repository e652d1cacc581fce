//! `sparse-restore`: sparsify, corrupt, restore, embed/recover, estimate and
//! benchmark from the command line.
//!
//! Exit status is 0 on full success, 1 on errors, and 2 when restoration
//! stops without converging (the best iterate is still written).

use std::fs::File;
use std::io::BufWriter;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use sparse_restore::image::{apply_mask, generate_block_loss_mask, BlockLossSpec};
use sparse_restore::pnm::{read_pbm, read_pgm, write_pbm, write_pgm};
use sparse_restore::quality::{build_gap_histogram, estimate_psnr_ro, estimate_psnr_rs, psnr};
use sparse_restore::sidechannel::{
    compression_rate, pack_side_info, read_sinf, recover_side_info, recover_side_info_with_header, write_sinf,
};
use sparse_restore::sweep::{format_db, load_images, parse_rate_range, run_benchmark, write_csv, SweepConfig};
use sparse_restore::transform::{make_sparsity_pattern, read_spat, sparsity_project, write_spat};
use sparse_restore::{restore, RestorationOptions};

const EXIT_NOT_CONVERGED: u8 = 2;

#[derive(Parser)]
#[command(
    name = "sparse-restore",
    version,
    about = "Block-loss image restoration with DCT sparsity side information"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Zero the smallest DCT coefficients and write the sparse image and its pattern.
    Sparsify(SparsifyArgs),
    /// Drop random square blocks and write the corrupted image and its mask.
    Corrupt(CorruptArgs),
    /// Restore a corrupted image from its mask and sparsity pattern.
    Restore(RestoreArgs),
    /// Hide the coded pattern in the low bits of a sparse image.
    Embed(EmbedArgs),
    /// Extract the pattern from a (possibly corrupted) stego image.
    Recover(RecoverArgs),
    /// No-reference PSNR estimates for a restored image.
    Estimate(EstimateArgs),
    /// Sweep images, block sizes, rates and seeds into a CSV file.
    Benchmark(BenchmarkArgs),
}

#[derive(Args)]
struct SparsifyArgs {
    /// Input image (binary PGM)
    input: PathBuf,
    /// Fraction of DCT coefficients to zero, in [0, 1]
    #[arg(long)]
    rate: f64,
    #[arg(long)]
    out: PathBuf,
    /// Where to write the pattern (SPAT format)
    #[arg(long)]
    pattern: PathBuf,
}

#[derive(Args)]
struct CorruptArgs {
    input: PathBuf,
    /// Side of the square loss blocks in pixels
    #[arg(long, default_value_t = 8)]
    block: usize,
    /// Probability that a block is lost
    #[arg(long, default_value_t = 0.5)]
    prob: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    /// Where to write the loss mask (PBM, black = missing)
    #[arg(long)]
    mask: PathBuf,
}

#[derive(Args)]
struct RestoreArgs {
    corrupted: PathBuf,
    mask: PathBuf,
    pattern: PathBuf,
    /// Start from the received pixels instead of the adaptive mean fill
    #[arg(long)]
    no_preinterp: bool,
    #[arg(long, default_value_t = 1000)]
    max_iters: usize,
    /// Low bits per pixel that carry embedded data and must be kept
    #[arg(long, default_value_t = 0)]
    lsb_bits: u8,
    /// Original image, to report PSNR-RO
    #[arg(long)]
    original: Option<PathBuf>,
    /// Transmitted sparse image, to report PSNR-RS
    #[arg(long)]
    sparse: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EmbedArgs {
    sparse: PathBuf,
    pattern: PathBuf,
    /// Erasure probability the code is designed for
    #[arg(long, default_value_t = 0.5)]
    epsilon: f64,
    #[arg(long)]
    out: PathBuf,
    /// Also write the packet header as a SINF sidecar
    #[arg(long)]
    sidecar: Option<PathBuf>,
}

#[derive(Args)]
struct RecoverArgs {
    stego: PathBuf,
    mask: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Take the header from a SINF sidecar instead of the embedded copies
    #[arg(long)]
    sidecar: Option<PathBuf>,
}

#[derive(Args)]
struct EstimateArgs {
    restored: PathBuf,
    pattern: PathBuf,
    /// Loss mask, needed for the PSNR-RS estimate
    #[arg(long, requires = "proxy")]
    mask: Option<PathBuf>,
    /// A different natural image of the same size used as stand-in
    #[arg(long, requires = "mask")]
    proxy: Option<PathBuf>,
}

#[derive(Args)]
struct BenchmarkArgs {
    /// Directory of PGM images
    #[arg(long)]
    images: PathBuf,
    /// Comma-separated block sizes
    #[arg(long, value_delimiter = ',', default_value = "1,2,4,8,16")]
    blocks: Vec<usize>,
    /// start:stop:step (inclusive) or a comma list
    #[arg(long, default_value = "0.75:0.95:0.05")]
    rates: String,
    #[arg(long, default_value_t = 0.5)]
    prob: f64,
    /// Number of loss seeds per cell, starting at 0
    #[arg(long, default_value_t = 1)]
    seeds: u64,
    #[arg(long)]
    out: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Sparsify(a) => sparsify(a),
        Command::Corrupt(a) => corrupt(a),
        Command::Restore(a) => restore_cmd(a),
        Command::Embed(a) => embed(a),
        Command::Recover(a) => recover(a),
        Command::Estimate(a) => estimate(a),
        Command::Benchmark(a) => benchmark(a),
    };
    match outcome {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn sparsify(a: SparsifyArgs) -> Result<ExitCode> {
    let image = read_pgm(&a.input).with_context(|| format!("reading {}", a.input.display()))?;
    let pattern = make_sparsity_pattern(&image, a.rate)?;
    let sparse = sparsity_project(&image, &pattern)?.quantized();
    write_pgm(&a.out, &sparse)?;
    write_spat(&a.pattern, &pattern)?;
    println!("kept {} of {} coefficients", pattern.kept_count(), pattern.len());
    println!("psnr_so_db {}", format_db(psnr(&sparse, &image).ok()));
    Ok(ExitCode::SUCCESS)
}

fn corrupt(a: CorruptArgs) -> Result<ExitCode> {
    let image = read_pgm(&a.input).with_context(|| format!("reading {}", a.input.display()))?;
    let mask = generate_block_loss_mask(
        image.width(),
        image.height(),
        &BlockLossSpec::new(a.block, a.prob, a.seed),
    )?;
    write_pgm(&a.out, &apply_mask(&image, &mask)?)?;
    write_pbm(&a.mask, &mask)?;
    println!("missing fraction {:.4}", mask.missing_fraction());
    Ok(ExitCode::SUCCESS)
}

fn restore_cmd(a: RestoreArgs) -> Result<ExitCode> {
    let corrupted = read_pgm(&a.corrupted).with_context(|| format!("reading {}", a.corrupted.display()))?;
    let mask = read_pbm(&a.mask).with_context(|| format!("reading {}", a.mask.display()))?;
    let pattern = read_spat(&a.pattern).with_context(|| format!("reading {}", a.pattern.display()))?;
    let opts = RestorationOptions {
        max_iterations: a.max_iters,
        use_preinterpolation: !a.no_preinterp,
        embedded_lsb_bits: a.lsb_bits,
        ..RestorationOptions::default()
    };
    let result = restore(&corrupted, &mask, &pattern, &opts)?;
    write_pgm(&a.out, &result.restored)?;

    println!("iterations {}", result.iterations);
    println!("converged {}", result.converged);
    if let Some(last) = result.sci_trace.last() {
        println!("final_sci {last:.4}");
    }
    if let Some(path) = &a.original {
        println!(
            "psnr_ro_db {}",
            format_db(Some(psnr(&result.restored, &read_pgm(path)?)?))
        );
    }
    if let Some(path) = &a.sparse {
        println!(
            "psnr_rs_db {}",
            format_db(Some(psnr(&result.restored, &read_pgm(path)?)?))
        );
    }
    let estimate = build_gap_histogram(&result.restored, &pattern).and_then(|h| estimate_psnr_ro(&h));
    println!("est_psnr_ro_db {}", format_db(estimate.ok()));
    if !result.converged {
        eprintln!("restoration did not converge; wrote the best iterate");
        return Ok(ExitCode::from(EXIT_NOT_CONVERGED));
    }
    Ok(ExitCode::SUCCESS)
}

fn embed(a: EmbedArgs) -> Result<ExitCode> {
    let sparse = read_pgm(&a.sparse).with_context(|| format!("reading {}", a.sparse.display()))?;
    let pattern = read_spat(&a.pattern).with_context(|| format!("reading {}", a.pattern.display()))?;
    let (stego, packet) = pack_side_info(&sparse, &pattern, a.epsilon)?;
    write_pgm(&a.out, &stego)?;
    if let Some(path) = &a.sidecar {
        write_sinf(path, &packet.header)?;
    }
    let h = &packet.header;
    println!("compression_rate {:.4}", compression_rate(&pattern));
    println!("codewords {} x ({}, {})", h.codewords(), h.ldpc_n, h.ldpc_k);
    println!("lsb_budget {}", h.lsb_budget);
    println!("psnr_stego_db {}", format_db(psnr(&stego, &sparse).ok()));
    Ok(ExitCode::SUCCESS)
}

fn recover(a: RecoverArgs) -> Result<ExitCode> {
    let stego = read_pgm(&a.stego).with_context(|| format!("reading {}", a.stego.display()))?;
    let mask = read_pbm(&a.mask).with_context(|| format!("reading {}", a.mask.display()))?;
    let pattern = match &a.sidecar {
        Some(path) => recover_side_info_with_header(&stego, &mask, &read_sinf(path)?)?,
        None => recover_side_info(&stego, &mask)?,
    };
    write_spat(&a.out, &pattern)?;
    println!("recovered pattern with {} kept coefficients", pattern.kept_count());
    Ok(ExitCode::SUCCESS)
}

fn estimate(a: EstimateArgs) -> Result<ExitCode> {
    let restored = read_pgm(&a.restored).with_context(|| format!("reading {}", a.restored.display()))?;
    let pattern = read_spat(&a.pattern).with_context(|| format!("reading {}", a.pattern.display()))?;
    let hist = build_gap_histogram(&restored, &pattern)?;
    println!("gap_half_width {}", hist.m);
    println!("est_psnr_ro_db {}", format_db(Some(estimate_psnr_ro(&hist)?)));
    if let (Some(mask), Some(proxy)) = (&a.mask, &a.proxy) {
        let value = estimate_psnr_rs(
            &read_pbm(mask)?,
            pattern.sparsity_rate(),
            &read_pgm(proxy)?,
            &RestorationOptions::default(),
        )?;
        println!("est_psnr_rs_db {}", format_db(Some(value)));
    }
    Ok(ExitCode::SUCCESS)
}

fn benchmark(a: BenchmarkArgs) -> Result<ExitCode> {
    let images = load_images(&a.images).with_context(|| format!("reading {}", a.images.display()))?;
    if images.is_empty() {
        bail!("no .pgm images in {}", a.images.display());
    }
    let config = SweepConfig {
        block_sizes: a.blocks,
        rates: parse_rate_range(&a.rates)?,
        missing_prob: a.prob,
        seeds: a.seeds,
        ..SweepConfig::default()
    };
    let rows = run_benchmark(&images, &config)?;
    let file = File::create(&a.out).with_context(|| format!("creating {}", a.out.display()))?;
    write_csv(BufWriter::new(file), &rows)?;
    let converged = rows.iter().filter(|r| r.converged).count();
    println!("{} rows, {converged} converged", rows.len());
    Ok(ExitCode::SUCCESS)
}
