//! Image and mask value types and the block-loss channel.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{check_dims, Error, Result};

/// Real-valued grayscale image, row-major.
///
/// Pixel values are unconstrained while a restoration is running; the PGM
/// boundary rounds and clamps them to `0..=255`.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl Image {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidArgument(format!(
                "image dimensions must be positive, got {width}x{height}"
            )));
        }
        if data.len() != width * height {
            return Err(Error::InvalidArgument(format!(
                "{} values for a {width}x{height} image",
                data.len()
            )));
        }
        Ok(Image { width, height, data })
    }

    pub fn filled(width: usize, height: usize, value: f64) -> Result<Self> {
        Image::new(width, height, vec![value; width * height])
    }

    pub fn from_fn(width: usize, height: usize, f: impl Fn(usize, usize) -> f64) -> Result<Self> {
        let data = (0..height)
            .flat_map(|r| (0..width).map(move |c| (r, c)))
            .map(|(r, c)| f(r, c))
            .collect();
        Image::new(width, height, data)
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
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.width + col]
    }

    pub fn set(&mut self, row: usize, col: usize, value: f64) {
        self.data[row * self.width + col] = value;
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    /// Rounds half away from zero and clamps every pixel to `0..=255`.
    pub fn quantized(&self) -> Image {
        Image {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(|&v| quantize(v)).collect(),
        }
    }

    pub fn is_quantized(&self) -> bool {
        self.data
            .iter()
            .all(|&v| v.fract() == 0.0 && (0.0..=255.0).contains(&v))
    }
}

/// Rounds to the nearest integer and clamps to the 8-bit range.
pub fn quantize(v: f64) -> f64 {
    v.round().clamp(0.0, 255.0)
}

/// Per-pixel known/missing indicator (the diagonal of the sampling matrix).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SamplingMask {
    width: usize,
    height: usize,
    known: Vec<bool>,
}

impl SamplingMask {
    pub fn new(width: usize, height: usize, known: Vec<bool>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidArgument(format!(
                "mask dimensions must be positive, got {width}x{height}"
            )));
        }
        if known.len() != width * height {
            return Err(Error::InvalidArgument(format!(
                "{} entries for a {width}x{height} mask",
                known.len()
            )));
        }
        Ok(SamplingMask { width, height, known })
    }

    pub fn all_known(width: usize, height: usize) -> Result<Self> {
        SamplingMask::new(width, height, vec![true; width * height])
    }

    pub fn all_missing(width: usize, height: usize) -> Result<Self> {
        SamplingMask::new(width, height, vec![false; width * height])
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
        self.known.len()
    }

    pub fn is_empty(&self) -> bool {
        self.known.is_empty()
    }

    pub fn is_known(&self, index: usize) -> bool {
        self.known[index]
    }

    pub fn known(&self) -> &[bool] {
        &self.known
    }

    pub fn known_count(&self) -> usize {
        self.known.iter().filter(|&&k| k).count()
    }

    pub fn missing_count(&self) -> usize {
        self.len() - self.known_count()
    }

    pub fn missing_fraction(&self) -> f64 {
        self.missing_count() as f64 / self.len() as f64
    }
}

/// Parameters of the simulated block-loss channel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlockLossSpec {
    pub block_size: usize,
    pub missing_prob: f64,
    pub seed: u64,
}

impl BlockLossSpec {
    pub fn new(block_size: usize, missing_prob: f64, seed: u64) -> Self {
        BlockLossSpec {
            block_size,
            missing_prob,
            seed,
        }
    }
}

/// Tiles the image with `block_size` squares anchored at the origin (edge
/// tiles clipped) and drops each tile independently with `missing_prob`.
pub fn generate_block_loss_mask(width: usize, height: usize, spec: &BlockLossSpec) -> Result<SamplingMask> {
    if width == 0 || height == 0 {
        return Err(Error::InvalidArgument(format!(
            "mask dimensions must be positive, got {width}x{height}"
        )));
    }
    if spec.block_size == 0 {
        return Err(Error::InvalidArgument("block size must be at least 1".into()));
    }
    if !(0.0..=1.0).contains(&spec.missing_prob) {
        return Err(Error::InvalidArgument(format!(
            "missing probability {} outside [0, 1]",
            spec.missing_prob
        )));
    }
    let b = spec.block_size;
    let tiles_x = width.div_ceil(b);
    let tiles_y = height.div_ceil(b);
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let lost: Vec<bool> = (0..tiles_x * tiles_y)
        .map(|_| rng.random::<f64>() < spec.missing_prob)
        .collect();

    let mut known = vec![true; width * height];
    for (r, row) in known.chunks_mut(width).enumerate() {
        let tile_row = &lost[(r / b) * tiles_x..(r / b + 1) * tiles_x];
        for (c, k) in row.iter_mut().enumerate() {
            *k = !tile_row[c / b];
        }
    }
    SamplingMask::new(width, height, known)
}

/// Zeroes the missing pixels; known pixels keep their value.
pub fn apply_mask(image: &Image, mask: &SamplingMask) -> Result<Image> {
    check_dims(image.dims(), mask.dims())?;
    let data = image
        .as_slice()
        .iter()
        .zip(mask.known())
        .map(|(&v, &k)| if k { v } else { 0.0 })
        .collect();
    Image::new(image.width(), image.height(), data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn degenerate_probabilities() {
        let none = generate_block_loss_mask(37, 21, &BlockLossSpec::new(4, 0.0, 1)).unwrap();
        assert_eq!(none.missing_count(), 0);
        let all = generate_block_loss_mask(37, 21, &BlockLossSpec::new(4, 1.0, 1)).unwrap();
        assert_eq!(all.known_count(), 0);
    }

    #[test]
    fn invalid_arguments() {
        assert!(generate_block_loss_mask(0, 4, &BlockLossSpec::new(1, 0.5, 0)).is_err());
        assert!(generate_block_loss_mask(4, 4, &BlockLossSpec::new(0, 0.5, 0)).is_err());
        assert!(generate_block_loss_mask(4, 4, &BlockLossSpec::new(1, 1.5, 0)).is_err());
        let img = Image::filled(4, 4, 1.0).unwrap();
        let mask = SamplingMask::all_known(4, 5).unwrap();
        assert!(matches!(apply_mask(&img, &mask), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn half_loss_over_seeds() {
        let mean = (0..20)
            .map(|seed| {
                generate_block_loss_mask(512, 512, &BlockLossSpec::new(8, 0.5, seed))
                    .unwrap()
                    .missing_fraction()
            })
            .sum::<f64>()
            / 20.0;
        assert!((mean - 0.5).abs() <= 0.02, "mean missing fraction {mean}");
    }

    #[test]
    fn apply_mask_cases() {
        let img = Image::filled(4, 4, 100.0).unwrap();
        assert_eq!(apply_mask(&img, &SamplingMask::all_known(4, 4).unwrap()).unwrap(), img);
        let zero = apply_mask(&img, &SamplingMask::all_missing(4, 4).unwrap()).unwrap();
        assert!(zero.as_slice().iter().all(|&v| v == 0.0));

        let known = (0..16).map(|i| !(i / 4 < 2 && i % 4 < 2)).collect();
        let corner = apply_mask(&img, &SamplingMask::new(4, 4, known).unwrap()).unwrap();
        assert_eq!(corner.as_slice().iter().filter(|&&v| v == 0.0).count(), 4);
        assert_eq!(corner.as_slice().iter().filter(|&&v| v == 100.0).count(), 12);
        assert_eq!(corner.get(1, 1), 0.0);
        assert_eq!(corner.get(2, 2), 100.0);
    }

    proptest! {
        #[test]
        fn mask_is_reproducible_and_tiled(
            w in 1usize..70, h in 1usize..70, b in 1usize..17, p in 0.0f64..=1.0, seed: u64,
        ) {
            let spec = BlockLossSpec::new(b, p, seed);
            let m1 = generate_block_loss_mask(w, h, &spec).unwrap();
            let m2 = generate_block_loss_mask(w, h, &spec).unwrap();
            prop_assert_eq!(&m1, &m2);
            for r in 0..h {
                for c in 0..w {
                    let anchor = (r / b * b) * w + c / b * b;
                    prop_assert_eq!(m1.is_known(r * w + c), m1.is_known(anchor));
                }
            }
        }

        #[test]
        fn apply_mask_is_idempotent(w in 1usize..20, h in 1usize..20, seed: u64) {
            let img = Image::from_fn(w, h, |r, c| ((r * 31 + c * 17 + seed as usize) % 256) as f64).unwrap();
            let mask = generate_block_loss_mask(w, h, &BlockLossSpec::new(2, 0.5, seed)).unwrap();
            let once = apply_mask(&img, &mask).unwrap();
            prop_assert_eq!(apply_mask(&once, &mask).unwrap(), once);
        }
    }
}
