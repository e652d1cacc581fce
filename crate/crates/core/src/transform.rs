//! Orthonormal global 2D DCT, sparsity patterns and the sparsity projector.
//!
//! The transform is the separable DCT-II over the whole image (not 8x8
//! blocks), normalized so that it is orthogonal: Parseval holds with no scale
//! factor and the inverse is the transpose.

use std::fs;
use std::path::Path;
use std::sync::Arc;

use rustdct::{DctPlanner, TransformType2And3};

use crate::error::{check_dims, Error, Result};
use crate::image::Image;
use crate::par::{self, Execution};

/// Planned 2D transform for one image size.
#[derive(Clone)]
pub struct Dct2d {
    width: usize,
    height: usize,
    row: Arc<dyn TransformType2And3<f64>>,
    col: Arc<dyn TransformType2And3<f64>>,
    exec: Execution,
}

impl std::fmt::Debug for Dct2d {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Dct2d")
            .field("width", &self.width)
            .field("height", &self.height)
            .field("exec", &self.exec)
            .finish()
    }
}

impl Dct2d {
    pub fn new(width: usize, height: usize) -> Self {
        let mut planner = DctPlanner::new();
        Dct2d {
            width,
            height,
            row: planner.plan_dct2(width),
            col: planner.plan_dct2(height),
            exec: Execution::default(),
        }
    }

    pub fn with_execution(mut self, exec: Execution) -> Self {
        self.exec = exec;
        self
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    /// In-place forward transform of a row-major `width x height` buffer.
    pub fn forward(&self, data: &mut [f64]) {
        assert_eq!(data.len(), self.width * self.height);
        forward_rows(self.exec, &self.row, data, self.width);
        let mut t = transpose(data, self.width, self.height);
        forward_rows(self.exec, &self.col, &mut t, self.height);
        transpose_into(&t, data, self.height, self.width);
    }

    /// In-place inverse transform.
    pub fn inverse(&self, data: &mut [f64]) {
        assert_eq!(data.len(), self.width * self.height);
        inverse_rows(self.exec, &self.row, data, self.width);
        let mut t = transpose(data, self.width, self.height);
        inverse_rows(self.exec, &self.col, &mut t, self.height);
        transpose_into(&t, data, self.height, self.width);
    }
}

fn forward_rows(exec: Execution, plan: &Arc<dyn TransformType2And3<f64>>, data: &mut [f64], len: usize) {
    let dc = (1.0 / len as f64).sqrt();
    let ac = (2.0 / len as f64).sqrt();
    par::for_each_row_with(
        exec,
        data,
        len,
        || vec![0.0; plan.get_scratch_len()],
        |scratch, _, row| {
            plan.process_dct2_with_scratch(row, scratch);
            row[0] *= dc;
            row[1..].iter_mut().for_each(|v| *v *= ac);
        },
    );
}

fn inverse_rows(exec: Execution, plan: &Arc<dyn TransformType2And3<f64>>, data: &mut [f64], len: usize) {
    // the unnormalized DCT-III halves the DC term
    let ac = (2.0 / len as f64).sqrt();
    par::for_each_row_with(
        exec,
        data,
        len,
        || vec![0.0; plan.get_scratch_len()],
        |scratch, _, row| {
            row[0] *= std::f64::consts::SQRT_2;
            plan.process_dct3_with_scratch(row, scratch);
            row.iter_mut().for_each(|v| *v *= ac);
        },
    );
}

/// Unnormalized DCT-II (`dct3` false) or DCT-III (`dct3` true) of every row.
/// DCT-III after DCT-II scales by `len / 2`.
fn raw_rows(exec: Execution, plan: &Arc<dyn TransformType2And3<f64>>, data: &mut [f64], len: usize, dct3: bool) {
    par::for_each_row_with(
        exec,
        data,
        len,
        || vec![0.0; plan.get_scratch_len()],
        |scratch, _, row| {
            if dct3 {
                plan.process_dct3_with_scratch(row, scratch)
            } else {
                plan.process_dct2_with_scratch(row, scratch)
            }
        },
    );
}

const TILE: usize = 8;

fn transpose<T: Copy + Default>(src: &[T], width: usize, height: usize) -> Vec<T> {
    let mut dst = vec![T::default(); src.len()];
    transpose_into(src, &mut dst, width, height);
    dst
}

/// `src` is `width x height` row-major; `dst` becomes `height x width`.
fn transpose_into<T: Copy>(src: &[T], dst: &mut [T], width: usize, height: usize) {
    for r0 in (0..height).step_by(TILE) {
        for c0 in (0..width).step_by(TILE) {
            for r in r0..(r0 + TILE).min(height) {
                for c in c0..(c0 + TILE).min(width) {
                    dst[c * height + r] = src[r * width + c];
                }
            }
        }
    }
}

/// DCT-II coefficients of an image, row-major over frequency `(u, v)`.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientGrid {
    width: usize,
    height: usize,
    coeffs: Vec<f64>,
}

impl CoefficientGrid {
    pub fn new(width: usize, height: usize, coeffs: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 || coeffs.len() != width * height {
            return Err(Error::InvalidArgument(format!(
                "{} coefficients for a {width}x{height} grid",
                coeffs.len()
            )));
        }
        Ok(CoefficientGrid { width, height, coeffs })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.coeffs
    }

    pub fn get(&self, u: usize, v: usize) -> f64 {
        self.coeffs[u * self.width + v]
    }

    pub fn energy(&self) -> f64 {
        self.coeffs.iter().map(|c| c * c).sum()
    }
}

pub fn dct2(image: &Image) -> CoefficientGrid {
    let (w, h) = image.dims();
    let mut data = image.as_slice().to_vec();
    Dct2d::new(w, h).forward(&mut data);
    CoefficientGrid {
        width: w,
        height: h,
        coeffs: data,
    }
}

pub fn idct2(grid: &CoefficientGrid) -> Image {
    let (w, h) = grid.dims();
    let mut data = grid.coeffs.clone();
    Dct2d::new(w, h).inverse(&mut data);
    Image::new(w, h, data).expect("grid dimensions are valid")
}

/// Keep/zero map over DCT coefficient positions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SparsityPattern {
    width: usize,
    height: usize,
    keep: Vec<bool>,
}

impl SparsityPattern {
    pub fn new(width: usize, height: usize, keep: Vec<bool>) -> Result<Self> {
        if width == 0 || height == 0 || keep.len() != width * height {
            return Err(Error::InvalidArgument(format!(
                "{} entries for a {width}x{height} pattern",
                keep.len()
            )));
        }
        Ok(SparsityPattern { width, height, keep })
    }

    pub fn keep_all(width: usize, height: usize) -> Result<Self> {
        SparsityPattern::new(width, height, vec![true; width * height])
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn len(&self) -> usize {
        self.keep.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keep.is_empty()
    }

    pub fn keep(&self) -> &[bool] {
        &self.keep
    }

    pub fn is_kept(&self, index: usize) -> bool {
        self.keep[index]
    }

    pub fn kept_count(&self) -> usize {
        self.keep.iter().filter(|&&k| k).count()
    }

    pub fn zero_count(&self) -> usize {
        self.len() - self.kept_count()
    }

    /// Fraction of zeroed coefficients.
    pub fn sparsity_rate(&self) -> f64 {
        self.zero_count() as f64 / self.len() as f64
    }

    /// True when every coefficient zeroed by `self` is also zeroed by `other`.
    pub fn zeros_subset_of(&self, other: &SparsityPattern) -> bool {
        self.dims() == other.dims() && self.keep.iter().zip(&other.keep).all(|(&a, &b)| a || !b)
    }
}

/// Number of coefficients zeroed at `rate`, i.e. `floor(rate * n)`.
pub fn zero_count_for_rate(n: usize, rate: f64) -> usize {
    ((rate * n as f64 + 1e-6).floor() as usize).min(n)
}

/// Keeps the largest-magnitude coefficients. Ties go to the lower row-major
/// index, so the kept set at a higher rate is always a subset of the kept set
/// at a lower rate.
pub fn make_sparsity_pattern(image: &Image, sparsity_rate: f64) -> Result<SparsityPattern> {
    if !(0.0..=1.0).contains(&sparsity_rate) {
        return Err(Error::InvalidArgument(format!(
            "sparsity rate {sparsity_rate} outside [0, 1]"
        )));
    }
    let grid = dct2(image);
    let keep_count = grid.coeffs.len() - zero_count_for_rate(grid.coeffs.len(), sparsity_rate);
    pattern_keeping_largest(&grid, keep_count)
}

pub fn pattern_keeping_largest(grid: &CoefficientGrid, keep_count: usize) -> Result<SparsityPattern> {
    let n = grid.coeffs.len();
    if keep_count > n {
        return Err(Error::InvalidArgument(format!(
            "cannot keep {keep_count} of {n} coefficients"
        )));
    }
    let mut keep = vec![false; n];
    if keep_count > 0 {
        let c = &grid.coeffs;
        let mut order: Vec<usize> = (0..n).collect();
        order.select_nth_unstable_by(keep_count - 1, |&a, &b| {
            c[b].abs().total_cmp(&c[a].abs()).then(a.cmp(&b))
        });
        for &i in &order[..keep_count] {
            keep[i] = true;
        }
    }
    SparsityPattern::new(grid.width, grid.height, keep)
}

/// The linear projector `x -> idct(Z dct(x))` for a fixed pattern.
///
/// Between the two transforms the coefficients stay column-major, which saves
/// two transposes, and all normalization collapses into one factor applied
/// while zeroing.
#[derive(Debug, Clone)]
pub struct SparsityProjector {
    dct: Dct2d,
    /// Keep mask in column-major order.
    keep_t: Vec<bool>,
}

impl SparsityProjector {
    pub fn new(pattern: &SparsityPattern) -> Self {
        let keep_t = transpose(&pattern.keep, pattern.width, pattern.height);
        SparsityProjector {
            dct: Dct2d::new(pattern.width, pattern.height),
            keep_t,
        }
    }

    pub fn with_execution(mut self, exec: Execution) -> Self {
        self.dct = self.dct.with_execution(exec);
        self
    }

    pub fn dims(&self) -> (usize, usize) {
        self.dct.dims()
    }

    pub fn apply_in_place(&self, data: &mut [f64]) {
        let Dct2d {
            width,
            height,
            ref row,
            ref col,
            exec,
        } = self.dct;
        assert_eq!(data.len(), width * height);
        raw_rows(exec, row, data, width, false);
        let mut t = transpose(data, width, height);
        raw_rows(exec, col, &mut t, height, false);
        let scale = 4.0 / (width * height) as f64;
        for (c, &k) in t.iter_mut().zip(&self.keep_t) {
            *c = if k { *c * scale } else { 0.0 };
        }
        raw_rows(exec, col, &mut t, height, true);
        transpose_into(&t, data, height, width);
        raw_rows(exec, row, data, width, true);
    }

    pub fn apply(&self, image: &Image) -> Result<Image> {
        check_dims(self.dims(), image.dims())?;
        let mut data = image.as_slice().to_vec();
        self.apply_in_place(&mut data);
        Image::new(image.width(), image.height(), data)
    }
}

pub fn sparsity_project(image: &Image, pattern: &SparsityPattern) -> Result<Image> {
    check_dims(pattern.dims(), image.dims())?;
    SparsityProjector::new(pattern).apply(image)
}

const SPAT_MAGIC: &[u8; 4] = b"SPAT";

/// `SPAT`, width and height as big-endian u32, then the keep grid packed
/// row-major, MSB first, zero-padded to a byte.
pub fn encode_spat(pattern: &SparsityPattern) -> Vec<u8> {
    let mut out = Vec::with_capacity(12 + pattern.len().div_ceil(8));
    out.extend_from_slice(SPAT_MAGIC);
    out.extend_from_slice(&(pattern.width as u32).to_be_bytes());
    out.extend_from_slice(&(pattern.height as u32).to_be_bytes());
    for chunk in pattern.keep.chunks(8) {
        let byte = chunk
            .iter()
            .enumerate()
            .fold(0u8, |acc, (i, &k)| acc | ((k as u8) << (7 - i)));
        out.push(byte);
    }
    out
}

pub fn decode_spat(bytes: &[u8]) -> Result<SparsityPattern> {
    if bytes.len() < 12 || &bytes[..4] != SPAT_MAGIC {
        return Err(Error::Format("not a SPAT pattern file".into()));
    }
    let width = u32::from_be_bytes(bytes[4..8].try_into().unwrap()) as usize;
    let height = u32::from_be_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let n = width
        .checked_mul(height)
        .ok_or_else(|| Error::Format("pattern dimensions overflow".into()))?;
    let body = &bytes[12..];
    if body.len() < n.div_ceil(8) {
        return Err(Error::Format("truncated SPAT body".into()));
    }
    let keep = (0..n).map(|i| body[i / 8] & (0x80 >> (i % 8)) != 0).collect();
    SparsityPattern::new(width, height, keep)
}

pub fn read_spat(path: impl AsRef<Path>) -> Result<SparsityPattern> {
    decode_spat(&fs::read(path)?)
}

pub fn write_spat(path: impl AsRef<Path>, pattern: &SparsityPattern) -> Result<()> {
    fs::write(path, encode_spat(pattern))?;
    Ok(())
}
