//! Benchmark sweep over images, block sizes, sparsity rates and seeds.
//!
//! Every cell sparsifies one image, drops blocks with its own seed, restores,
//! and reports measured and estimated PSNRs. Cells run independently (in
//! parallel when allowed) and come back in sorted order.

use std::borrow::Cow;
use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Serialize, Serializer};

use crate::error::{Error, Result};
use crate::image::{apply_mask, generate_block_loss_mask, BlockLossSpec, Image};
use crate::par::{self, Execution};
use crate::pnm::read_pgm;
use crate::quality::{build_gap_histogram, estimate_psnr_ro, estimate_psnr_rs, psnr};
use crate::restore::{restore, RestorationOptions};
use crate::sidechannel::compression_rate;
use crate::transform::{make_sparsity_pattern, sparsity_project};

/// One CSV line. PSNR columns are in dB with two decimals, `inf` for a
/// perfect match and empty when the value could not be computed.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchmarkRow {
    pub image_name: String,
    pub block_size: usize,
    pub missing_prob: f64,
    pub sparsity_rate: f64,
    #[serde(serialize_with = "db")]
    pub psnr_ro_db: Option<f64>,
    #[serde(serialize_with = "db")]
    pub psnr_rs_db: Option<f64>,
    #[serde(serialize_with = "db")]
    pub psnr_so_db: Option<f64>,
    #[serde(serialize_with = "db")]
    pub est_psnr_ro_db: Option<f64>,
    #[serde(serialize_with = "db")]
    pub est_psnr_rs_db: Option<f64>,
    pub iterations: usize,
    pub converged: bool,
    #[serde(serialize_with = "ratio")]
    pub achieved_c: Option<f64>,
    pub seed: u64,
}

/// Column names in CSV order.
pub const CSV_COLUMNS: [&str; 13] = [
    "image_name",
    "block_size",
    "missing_prob",
    "sparsity_rate",
    "psnr_ro_db",
    "psnr_rs_db",
    "psnr_so_db",
    "est_psnr_ro_db",
    "est_psnr_rs_db",
    "iterations",
    "converged",
    "achieved_c",
    "seed",
];

/// Two decimals, `inf` for infinite values, empty for missing ones.
pub fn format_db(value: Option<f64>) -> String {
    match value {
        Some(v) if v == f64::INFINITY => "inf".into(),
        Some(v) if v.is_finite() => format!("{v:.2}"),
        _ => String::new(),
    }
}

fn db<S: Serializer>(value: &Option<f64>, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.serialize_str(&format_db(*value))
}

fn ratio<S: Serializer>(value: &Option<f64>, s: S) -> std::result::Result<S::Ok, S::Error> {
    match value {
        Some(v) => s.serialize_str(&format!("{v:.4}")),
        None => s.serialize_str(""),
    }
}

#[derive(Debug, Clone)]
pub struct NamedImage {
    pub name: String,
    pub image: Image,
}

#[derive(Debug, Clone)]
pub struct SweepConfig {
    pub block_sizes: Vec<usize>,
    pub rates: Vec<f64>,
    pub missing_prob: f64,
    /// Seeds `0..seeds` are run for every combination.
    pub seeds: u64,
    pub options: RestorationOptions,
    /// How cells are scheduled; each restoration uses `options.execution`.
    pub execution: Execution,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            block_sizes: vec![1, 2, 4, 8, 16],
            rates: parse_rate_range("0.75:0.95:0.05").expect("default range parses"),
            missing_prob: 0.5,
            seeds: 1,
            options: RestorationOptions::default(),
            execution: Execution::default(),
        }
    }
}

/// A single benchmark cell.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cell {
    pub image: usize,
    pub block_size: usize,
    pub rate: f64,
    pub seed: u64,
}

/// Parses `start:stop:step` (both ends included when the step divides the
/// interval), a comma list, or a single rate.
pub fn parse_rate_range(text: &str) -> Result<Vec<f64>> {
    let bad = |what: &str| Error::InvalidArgument(format!("bad rate range {text:?}: {what}"));
    let num = |s: &str| s.trim().parse::<f64>().map_err(|_| bad("not a number"));
    let rates = match text.split(':').collect::<Vec<_>>()[..] {
        [start, stop, step] => {
            let (start, stop, step) = (num(start)?, num(stop)?, num(step)?);
            if step.is_nan() || step <= 0.0 || stop < start {
                return Err(bad("need start <= stop and a positive step"));
            }
            let count = ((stop - start) / step + 1e-9).floor() as usize + 1;
            (0..count)
                .map(|i| ((start + i as f64 * step) * 1e9).round() / 1e9)
                .collect()
        }
        [_] => text.split(',').map(num).collect::<Result<Vec<_>>>()?,
        _ => return Err(bad("expected start:stop:step")),
    };
    if let Some(r) = rates.iter().find(|r| !(0.0..=1.0).contains(*r)) {
        return Err(bad(&format!("rate {r} outside [0, 1]")));
    }
    Ok(rates)
}

/// Loads every `*.pgm` in `dir`, sorted by file name; names are file stems.
pub fn load_images(dir: impl AsRef<Path>) -> Result<Vec<NamedImage>> {
    let mut paths: Vec<_> = fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e.eq_ignore_ascii_case("pgm")))
        .collect();
    paths.sort();
    paths
        .into_iter()
        .map(|p| {
            let name = p.file_stem().unwrap_or_default().to_string_lossy().into_owned();
            Ok(NamedImage {
                name,
                image: read_pgm(&p)?,
            })
        })
        .collect()
}

/// Cells in output order: image name, block size, rate, seed.
pub fn cells(images: &[NamedImage], config: &SweepConfig) -> Vec<Cell> {
    let mut order: Vec<usize> = (0..images.len()).collect();
    order.sort_by(|&a, &b| images[a].name.cmp(&images[b].name));
    let mut blocks = config.block_sizes.clone();
    blocks.sort_unstable();
    blocks.dedup();
    let mut rates = config.rates.clone();
    rates.sort_by(f64::total_cmp);
    rates.dedup();

    let mut out = Vec::new();
    for &image in &order {
        for &block_size in &blocks {
            for &rate in &rates {
                for seed in 0..config.seeds {
                    out.push(Cell {
                        image,
                        block_size,
                        rate,
                        seed,
                    });
                }
            }
        }
    }
    out
}

/// The proxy for the PSNR-RS estimate is the next image of the same size,
/// in name order. A lone image falls back to its mirror, see [`mirrored`].
fn proxy_for(images: &[NamedImage], index: usize) -> Option<&Image> {
    let mut order: Vec<usize> = (0..images.len()).collect();
    order.sort_by(|&a, &b| images[a].name.cmp(&images[b].name));
    let pos = order.iter().position(|&i| i == index)?;
    let dims = images[index].image.dims();
    (1..order.len())
        .map(|k| &images[order[(pos + k) % order.len()]].image)
        .find(|img| img.dims() == dims)
}

/// Runs one cell. Failures leave the affected columns empty instead of
/// aborting.
pub fn run_cell(images: &[NamedImage], cell: &Cell, config: &SweepConfig) -> BenchmarkRow {
    let named = &images[cell.image];
    let mut row = BenchmarkRow {
        image_name: named.name.clone(),
        block_size: cell.block_size,
        missing_prob: config.missing_prob,
        sparsity_rate: cell.rate,
        psnr_ro_db: None,
        psnr_rs_db: None,
        psnr_so_db: None,
        est_psnr_ro_db: None,
        est_psnr_rs_db: None,
        iterations: 0,
        converged: false,
        achieved_c: None,
        seed: cell.seed,
    };
    let proxy = match proxy_for(images, cell.image) {
        Some(p) => Cow::Borrowed(p),
        None => Cow::Owned(mirrored(&named.image)),
    };
    let _ = fill_cell(&mut row, named, &proxy, cell, config);
    row
}

/// Left-right mirror. The mask then falls on different content, which is
/// all the PSNR-RS estimate needs from its proxy.
pub fn mirrored(image: &Image) -> Image {
    let w = image.width();
    Image::from_fn(w, image.height(), |r, c| image.get(r, w - 1 - c)).expect("same dimensions")
}

fn fill_cell(
    row: &mut BenchmarkRow,
    named: &NamedImage,
    proxy: &Image,
    cell: &Cell,
    config: &SweepConfig,
) -> Result<()> {
    let original = named.image.quantized();
    let (w, h) = original.dims();
    let pattern = make_sparsity_pattern(&original, cell.rate)?;
    row.achieved_c = Some(compression_rate(&pattern));
    let sparse = sparsity_project(&original, &pattern)?.quantized();
    row.psnr_so_db = psnr(&sparse, &original).ok();

    let spec = BlockLossSpec::new(cell.block_size, config.missing_prob, cell.seed);
    let mask = generate_block_loss_mask(w, h, &spec)?;
    let corrupted = apply_mask(&sparse, &mask)?;
    let result = restore(&corrupted, &mask, &pattern, &config.options)?;
    row.iterations = result.iterations;
    row.converged = result.converged;
    row.psnr_ro_db = psnr(&result.restored, &original).ok();
    row.psnr_rs_db = psnr(&result.restored, &sparse).ok();
    row.est_psnr_ro_db = build_gap_histogram(&result.restored, &pattern)
        .and_then(|hist| estimate_psnr_ro(&hist))
        .ok();
    row.est_psnr_rs_db = estimate_psnr_rs(&mask, cell.rate, proxy, &config.options).ok();
    Ok(())
}

/// Runs every cell and returns the rows in sorted order.
pub fn run_benchmark(images: &[NamedImage], config: &SweepConfig) -> Result<Vec<BenchmarkRow>> {
    if config.seeds == 0 || config.block_sizes.is_empty() || config.rates.is_empty() {
        return Err(Error::InvalidArgument("the sweep has no cells".into()));
    }
    if config.block_sizes.contains(&0) {
        return Err(Error::InvalidArgument("block size must be at least 1".into()));
    }
    if !(0.0..=1.0).contains(&config.missing_prob) {
        return Err(Error::InvalidArgument(format!(
            "missing probability {} outside [0, 1]",
            config.missing_prob
        )));
    }
    config.options.validate()?;
    let cells = cells(images, config);
    Ok(par::map(config.execution, &cells, |cell| {
        run_cell(images, cell, config)
    }))
}

pub fn write_csv<W: Write>(out: W, rows: &[BenchmarkRow]) -> Result<()> {
    let mut writer = csv::Writer::from_writer(out);
    if rows.is_empty() {
        writer.write_record(CSV_COLUMNS).map_err(csv_error)?;
    }
    for row in rows {
        writer.serialize(row).map_err(csv_error)?;
    }
    writer.flush()?;
    Ok(())
}

fn csv_error(e: csv::Error) -> Error {
    Error::Format(e.to_string())
}
