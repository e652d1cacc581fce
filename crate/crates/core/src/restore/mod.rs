//! Alternating projections between the pixel and DCT domains.

mod aim;
pub mod oracle;

pub use aim::{aim_interpolate, aim_interpolate_with};
pub use oracle::{error_floor, oracle_restore, DenseOracle};

use crate::error::{check_dims, Error, Result};
use crate::image::{quantize, Image, SamplingMask};
use crate::par::Execution;
use crate::transform::{SparsityPattern, SparsityProjector};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RestorationOptions {
    pub max_iterations: usize,
    pub use_preinterpolation: bool,
    /// Stop once the mean absolute change the data projector makes at known
    /// pixels falls below this.
    pub sci_threshold: f64,
    /// Give up after this many iterations without a new SCI minimum.
    pub divergence_patience: usize,
    /// Low bits of every pixel that carry embedded data and must not be
    /// overwritten by the data projector.
    pub embedded_lsb_bits: u8,
    pub execution: Execution,
}

impl Default for RestorationOptions {
    fn default() -> Self {
        RestorationOptions {
            max_iterations: 1000,
            use_preinterpolation: true,
            sci_threshold: 0.25,
            divergence_patience: 50,
            embedded_lsb_bits: 0,
            execution: Execution::default(),
        }
    }
}

impl RestorationOptions {
    pub fn validate(&self) -> Result<()> {
        if self.max_iterations == 0 {
            return Err(Error::InvalidArgument("max_iterations must be at least 1".into()));
        }
        if self.sci_threshold.is_nan() || self.sci_threshold <= 0.0 {
            return Err(Error::InvalidArgument(format!(
                "sci_threshold must be positive, got {}",
                self.sci_threshold
            )));
        }
        check_lsb_bits(self.embedded_lsb_bits)
    }
}

fn check_lsb_bits(bits: u8) -> Result<()> {
    if bits > 7 {
        return Err(Error::InvalidArgument(format!(
            "embedded_lsb_bits must be at most 7, got {bits}"
        )));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct RestorationResult {
    pub restored: Image,
    pub iterations: usize,
    pub converged: bool,
    pub sci_trace: Vec<f64>,
}

/// Known pixels take `y0`, missing pixels keep `w`.
pub fn data_project(w: &Image, y0: &Image, mask: &SamplingMask) -> Result<Image> {
    check_dims(w.dims(), y0.dims())?;
    check_dims(w.dims(), mask.dims())?;
    let data = w
        .as_slice()
        .iter()
        .zip(y0.as_slice())
        .zip(mask.known())
        .map(|((&w, &y), &k)| if k { y } else { w })
        .collect();
    Image::new(w.width(), w.height(), data)
}

/// Like [`data_project`], but at known pixels only the bits above the
/// `embedded_lsb_bits` low bits come from `y0`; the low bits come from the
/// rounded, clamped `w`.
pub fn data_project_lsb_aware(w: &Image, y0: &Image, mask: &SamplingMask, embedded_lsb_bits: u8) -> Result<Image> {
    check_lsb_bits(embedded_lsb_bits)?;
    check_dims(w.dims(), y0.dims())?;
    check_dims(w.dims(), mask.dims())?;
    let data = w
        .as_slice()
        .iter()
        .zip(y0.as_slice())
        .zip(mask.known())
        .map(|((&w, &y), &k)| {
            if k {
                merge_bits(w, quantize(y) as u8, embedded_lsb_bits)
            } else {
                w
            }
        })
        .collect();
    Image::new(w.width(), w.height(), data)
}

#[inline]
fn merge_bits(w: f64, y0: u8, bits: u8) -> f64 {
    let low = ((1u16 << bits) - 1) as u8;
    ((quantize(w) as u8 & low) | (y0 & !low)) as f64
}

/// One restoration in progress. `step` applies the sparsity projector and
/// then the data projector; no rounding happens here.
#[derive(Debug, Clone)]
pub struct RestorationEngine {
    projector: SparsityProjector,
    known: Vec<bool>,
    known_count: usize,
    y0: Vec<f64>,
    y0_int: Vec<u8>,
    lsb_bits: u8,
    current: Vec<f64>,
    width: usize,
    height: usize,
}

impl RestorationEngine {
    /// `y0` holds the received values at known pixels; `start` is the first
    /// iterate.
    pub fn new(y0: &Image, start: &Image, mask: &SamplingMask, pattern: &SparsityPattern) -> Result<Self> {
        check_dims(y0.dims(), mask.dims())?;
        check_dims(y0.dims(), start.dims())?;
        check_dims(y0.dims(), pattern.dims())?;
        let known_count = mask.known_count();
        if known_count == 0 {
            return Err(Error::UnrecoverableInput("every pixel is missing".into()));
        }
        Ok(RestorationEngine {
            projector: SparsityProjector::new(pattern),
            known: mask.known().to_vec(),
            known_count,
            y0: y0.as_slice().to_vec(),
            y0_int: Vec::new(),
            lsb_bits: 0,
            current: start.as_slice().to_vec(),
            width: y0.width(),
            height: y0.height(),
        })
    }

    /// Switches to the LSB-aware data projector. Zero bits keeps the plain
    /// projector.
    pub fn with_lsb_bits(mut self, bits: u8) -> Result<Self> {
        check_lsb_bits(bits)?;
        self.lsb_bits = bits;
        self.y0_int = if bits > 0 {
            self.y0.iter().map(|&v| quantize(v) as u8).collect()
        } else {
            Vec::new()
        };
        Ok(self)
    }

    pub fn with_execution(mut self, exec: Execution) -> Self {
        self.projector = self.projector.with_execution(exec);
        self
    }

    /// Runs one iteration and returns its SCI: the mean absolute change the
    /// data projector made at known pixels.
    pub fn step(&mut self) -> f64 {
        self.projector.apply_in_place(&mut self.current);
        let mut total = 0.0;
        if self.lsb_bits == 0 {
            for ((v, &y), &k) in self.current.iter_mut().zip(&self.y0).zip(&self.known) {
                if k {
                    total += (y - *v).abs();
                    *v = y;
                }
            }
        } else {
            for ((v, &y), &k) in self.current.iter_mut().zip(&self.y0_int).zip(&self.known) {
                if k {
                    let out = merge_bits(*v, y, self.lsb_bits);
                    total += (out - *v).abs();
                    *v = out;
                }
            }
        }
        total / self.known_count as f64
    }

    pub fn current(&self) -> &[f64] {
        &self.current
    }

    pub fn current_image(&self) -> Image {
        Image::new(self.width, self.height, self.current.clone()).expect("engine dimensions are valid")
    }
}

/// Full restoration: rounds the received pixels, optionally pre-fills the
/// holes, iterates until the SCI drops below the threshold, and returns the
/// rounded result. Without convergence the iterate with the smallest SCI is
/// returned.
pub fn restore(
    corrupted: &Image,
    mask: &SamplingMask,
    pattern: &SparsityPattern,
    opts: &RestorationOptions,
) -> Result<RestorationResult> {
    opts.validate()?;
    check_dims(corrupted.dims(), mask.dims())?;
    check_dims(corrupted.dims(), pattern.dims())?;
    if mask.known_count() == 0 {
        return Err(Error::UnrecoverableInput("every pixel is missing".into()));
    }
    let y0_data = corrupted
        .as_slice()
        .iter()
        .zip(mask.known())
        .map(|(&v, &k)| if k { quantize(v) } else { 0.0 })
        .collect();
    let y0 = Image::new(corrupted.width(), corrupted.height(), y0_data)?;
    let start = if opts.use_preinterpolation {
        aim_interpolate_with(&y0, mask, opts.execution)?
    } else {
        y0.clone()
    };
    let mut engine = RestorationEngine::new(&y0, &start, mask, pattern)?
        .with_lsb_bits(opts.embedded_lsb_bits)?
        .with_execution(opts.execution);

    let mut trace = Vec::new();
    let mut best = f64::INFINITY;
    let mut best_iterate = Vec::new();
    let mut since_best = 0;
    let mut converged = false;
    while trace.len() < opts.max_iterations {
        let sci = engine.step();
        trace.push(sci);
        if sci < opts.sci_threshold {
            converged = true;
            break;
        }
        if sci < best {
            best = sci;
            best_iterate.clear();
            best_iterate.extend_from_slice(engine.current());
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= opts.divergence_patience {
                break;
            }
        }
    }
    let final_iterate = if converged || best_iterate.is_empty() {
        engine.current()
    } else {
        &best_iterate
    };
    let restored = Image::new(
        corrupted.width(),
        corrupted.height(),
        final_iterate.iter().map(|&v| quantize(v)).collect(),
    )?;
    Ok(RestorationResult {
        restored,
        iterations: trace.len(),
        converged,
        sci_trace: trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::image::{apply_mask, generate_block_loss_mask, BlockLossSpec};
    use crate::transform::{dct2, make_sparsity_pattern, pattern_keeping_largest, sparsity_project};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn smooth_image(w: usize, h: usize, seed: u64) -> Image {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (a, b, p) = (
            rng.random_range(10.0..40.0),
            rng.random_range(10.0..40.0),
            rng.random_range(0.0..6.0),
        );
        Image::from_fn(w, h, |r, c| {
            120.0 + a * (r as f64 * 0.3 + p).sin() + b * (c as f64 * 0.2 - p).cos() + rng_free_noise(r, c, seed)
        })
        .unwrap()
    }

    fn rng_free_noise(r: usize, c: usize, seed: u64) -> f64 {
        (((r * 131 + c * 71) as u64 ^ seed).wrapping_mul(2654435761) % 17) as f64 - 8.0
    }

    #[test]
    fn data_projector_cases() {
        let w = Image::from_fn(3, 2, |r, c| (r * 3 + c) as f64).unwrap();
        let y0 = Image::filled(3, 2, 9.0).unwrap();
        let all = SamplingMask::all_known(3, 2).unwrap();
        let none = SamplingMask::all_missing(3, 2).unwrap();
        assert_eq!(data_project(&y0, &y0, &none).unwrap(), y0);
        assert_eq!(data_project(&w, &y0, &all).unwrap(), y0);
        assert_eq!(data_project(&w, &y0, &none).unwrap(), w);

        let mask = SamplingMask::new(3, 2, vec![true, false, true, false, false, true]).unwrap();
        let once = data_project(&w, &y0, &mask).unwrap();
        assert_eq!(data_project(&once, &y0, &mask).unwrap(), once);
        assert!(data_project(&w, &Image::filled(2, 3, 0.0).unwrap(), &mask).is_err());
    }

    #[test]
    fn lsb_aware_projector() {
        let w = Image::new(1, 1, vec![77.0]).unwrap();
        let y0 = Image::new(1, 1, vec![200.0]).unwrap();
        let mask = SamplingMask::all_known(1, 1).unwrap();
        assert_eq!(data_project_lsb_aware(&w, &y0, &mask, 1).unwrap().as_slice(), &[201.0]);
        assert!(data_project_lsb_aware(&w, &y0, &mask, 8).is_err());

        let w = Image::new(4, 1, vec![3.4, -2.0, 260.0, 17.0]).unwrap();
        let y0 = Image::new(4, 1, vec![10.6, 44.0, 100.0, 0.0]).unwrap();
        let mask = SamplingMask::new(4, 1, vec![true, true, true, false]).unwrap();
        let rounded_y0 = Image::new(4, 1, y0.as_slice().iter().map(|&v| quantize(v)).collect()).unwrap();
        assert_eq!(
            data_project_lsb_aware(&w, &y0, &mask, 0).unwrap(),
            data_project(&w, &rounded_y0, &mask).unwrap()
        );
        // 3 low bits from round(clamp(w)), the rest from y0
        let out = data_project_lsb_aware(&w, &y0, &mask, 3).unwrap();
        assert_eq!(out.as_slice(), &[11.0, 40.0, 103.0, 17.0]);
    }

    #[test]
    fn options_validation() {
        let base = RestorationOptions::default();
        assert!(base.validate().is_ok());
        assert!(RestorationOptions {
            max_iterations: 0,
            ..base
        }
        .validate()
        .is_err());
        assert!(RestorationOptions {
            sci_threshold: 0.0,
            ..base
        }
        .validate()
        .is_err());
        assert!(RestorationOptions {
            sci_threshold: f64::NAN,
            ..base
        }
        .validate()
        .is_err());
        assert!(RestorationOptions {
            embedded_lsb_bits: 8,
            ..base
        }
        .validate()
        .is_err());
    }

    #[test]
    fn all_missing_is_unrecoverable() {
        let img = Image::filled(4, 4, 1.0).unwrap();
        let p = SparsityPattern::keep_all(4, 4).unwrap();
        let res = restore(
            &img,
            &SamplingMask::all_missing(4, 4).unwrap(),
            &p,
            &RestorationOptions::default(),
        );
        assert!(matches!(res, Err(Error::UnrecoverableInput(_))));
    }

    #[test]
    fn sparse_image_with_full_mask_converges_at_once() {
        let img = Image::filled(16, 16, 93.0).unwrap();
        let pattern = make_sparsity_pattern(&img, 0.9).unwrap();
        let xs = sparsity_project(&img, &pattern).unwrap().quantized();
        let res = restore(
            &xs,
            &SamplingMask::all_known(16, 16).unwrap(),
            &pattern,
            &RestorationOptions::default(),
        )
        .unwrap();
        assert!(res.converged);
        assert_eq!(res.iterations, 1);
        assert_eq!(res.restored, xs);
    }

    #[test]
    fn fixed_point_of_one_iteration() {
        let img = smooth_image(16, 12, 1);
        let pattern = make_sparsity_pattern(&img, 0.7).unwrap();
        let xs = sparsity_project(&img, &pattern).unwrap();
        let mask = generate_block_loss_mask(16, 12, &BlockLossSpec::new(2, 0.4, 2)).unwrap();
        let mut engine = RestorationEngine::new(&xs, &xs, &mask, &pattern).unwrap();
        let sci = engine.step();
        assert!(sci < 1e-9);
        let diff = engine
            .current()
            .iter()
            .zip(xs.as_slice())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(diff < 1e-9);
    }

    #[test]
    fn result_invariants_and_best_iterate() {
        let img = smooth_image(32, 32, 3);
        let pattern = make_sparsity_pattern(&img, 0.8).unwrap();
        let xs = sparsity_project(&img, &pattern).unwrap().quantized();
        let mask = generate_block_loss_mask(32, 32, &BlockLossSpec::new(1, 0.5, 4)).unwrap();
        let corrupted = apply_mask(&xs, &mask).unwrap();
        let opts = RestorationOptions::default();
        let res = restore(&corrupted, &mask, &pattern, &opts).unwrap();
        assert_eq!(res.iterations, res.sci_trace.len());
        assert!(res.restored.is_quantized());
        if res.converged {
            assert!(*res.sci_trace.last().unwrap() < opts.sci_threshold);
        }

        // wrong pattern: more zeros than the transmission has
        let wrong = pattern_keeping_largest(&dct2(&xs), pattern.kept_count() / 2).unwrap();
        let short = RestorationOptions {
            max_iterations: 40,
            ..opts
        };
        let res = restore(&corrupted, &mask, &wrong, &short).unwrap();
        assert!(!res.converged);
        assert!(res.iterations <= 40);
    }

    #[test]
    fn preinterpolation_reaches_threshold_sooner() {
        let img = smooth_image(64, 64, 5);
        let pattern = make_sparsity_pattern(&img, 0.85).unwrap();
        let xs = sparsity_project(&img, &pattern).unwrap().quantized();
        let mask = generate_block_loss_mask(64, 64, &BlockLossSpec::new(4, 0.5, 6)).unwrap();
        let corrupted = apply_mask(&xs, &mask).unwrap();
        let with = restore(&corrupted, &mask, &pattern, &RestorationOptions::default()).unwrap();
        let without = restore(
            &corrupted,
            &mask,
            &pattern,
            &RestorationOptions {
                use_preinterpolation: false,
                ..Default::default()
            },
        )
        .unwrap();
        assert!(with.converged && without.converged);
        assert!(
            with.iterations < without.iterations,
            "{} vs {}",
            with.iterations,
            without.iterations
        );
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn sci_running_minimum_decreases(seed: u64) {
            let img = smooth_image(24, 24, seed);
            let pattern = make_sparsity_pattern(&img, 0.8).unwrap();
            let xs = sparsity_project(&img, &pattern).unwrap().quantized();
            let mask = generate_block_loss_mask(24, 24, &BlockLossSpec::new(2, 0.4, seed)).unwrap();
            prop_assume!(mask.known_count() > 0);
            let corrupted = apply_mask(&xs, &mask).unwrap();
            let res = restore(&corrupted, &mask, &pattern, &RestorationOptions::default()).unwrap();
            prop_assume!(res.converged);
            // every iteration sets a new running minimum up to the crossing
            for pair in res.sci_trace.windows(2) {
                prop_assert!(pair[1] < pair[0], "trace {:?}", res.sci_trace);
            }
        }

        #[test]
        fn restore_is_deterministic(seed in 0u64..1000) {
            let img = smooth_image(16, 16, seed);
            let pattern = make_sparsity_pattern(&img, 0.75).unwrap();
            let mask = generate_block_loss_mask(16, 16, &BlockLossSpec::new(2, 0.5, seed)).unwrap();
            prop_assume!(mask.known_count() > 0);
            let corrupted = apply_mask(&img.quantized(), &mask).unwrap();
            let a = restore(&corrupted, &mask, &pattern, &RestorationOptions::default()).unwrap();
            let b = restore(&corrupted, &mask, &pattern, &RestorationOptions::default()).unwrap();
            prop_assert_eq!(a, b);
        }
    }
}
