//! PSNR and the two no-reference quality estimates.
//!
//! `estimate_psnr_rs` runs the whole chain on a stand-in image, since the
//! restored-vs-sparse error depends on the mask and rate but hardly on the
//! image. `estimate_psnr_ro` reconstructs the coefficient histogram inside
//! the zeroed gap by straight lines from its edges and integrates the energy
//! that sparsification removed.

use crate::error::{check_dims, Error, Result};
use crate::image::{apply_mask, Image, SamplingMask};
use crate::restore::{restore, RestorationOptions};
use crate::transform::{dct2, make_sparsity_pattern, sparsity_project, SparsityPattern};

const PEAK: f64 = 255.0;

pub fn mse(a: &Image, b: &Image) -> Result<f64> {
    check_dims(a.dims(), b.dims())?;
    let sum: f64 = a
        .as_slice()
        .iter()
        .zip(b.as_slice())
        .map(|(x, y)| (x - y) * (x - y))
        .sum();
    Ok(sum / a.len() as f64)
}

/// Peak signal-to-noise ratio for 8-bit images; identical inputs give
/// `f64::INFINITY`.
pub fn psnr(a: &Image, b: &Image) -> Result<f64> {
    Ok(psnr_from_mse(mse(a, b)?))
}

pub fn psnr_from_mse(mse: f64) -> f64 {
    if mse <= 0.0 {
        f64::INFINITY
    } else {
        10.0 * (PEAK * PEAK / mse).log10()
    }
}

/// Summary of the rounded coefficient histogram around its zero gap.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GapHistogram {
    /// Half-width of the gap; the histogram edges sit at `±m`.
    pub m: u64,
    pub h_neg: u64,
    pub h_pos: u64,
    /// Number of zeroed coefficients.
    pub n_zeros: u64,
    pub total: u64,
}

impl GapHistogram {
    pub fn new(m: u64, h_neg: u64, h_pos: u64, n_zeros: u64, total: u64) -> Result<Self> {
        if m < 1 {
            return Err(Error::InvalidArgument("gap half-width must be at least 1".into()));
        }
        if n_zeros > total || total == 0 {
            return Err(Error::InvalidArgument(format!(
                "{n_zeros} zeroed coefficients out of {total}"
            )));
        }
        Ok(GapHistogram {
            m,
            h_neg,
            h_pos,
            n_zeros,
            total,
        })
    }

    /// `6 N MSE-hat = m(m-1)(m-2)(H_m + H_-m) + (m^2 - 1) N_s`, exactly.
    pub fn scaled_mse_numerator(&self) -> u128 {
        let m = self.m as u128;
        let edges = (self.h_neg + self.h_pos) as u128;
        m * (m - 1) * m.saturating_sub(2) * edges + (m * m - 1) * self.n_zeros as u128
    }

    pub fn mse_estimate(&self) -> f64 {
        self.scaled_mse_numerator() as f64 / (6.0 * self.total as f64)
    }
}

/// Kept coefficients below this quantile of the rounded kept magnitudes are
/// treated as leakage across the gap edge rather than as the edge itself.
pub const GAP_EDGE_QUANTILE: f64 = 0.02;

/// Rounds the coefficients of `restored` to integer bins and locates the gap
/// edge from the kept positions of `pattern`.
pub fn build_gap_histogram(restored: &Image, pattern: &SparsityPattern) -> Result<GapHistogram> {
    check_dims(restored.dims(), pattern.dims())?;
    let n_zeros = pattern.zero_count();
    if n_zeros == 0 {
        return Err(Error::GapNotFound("the pattern zeroes no coefficient".into()));
    }
    if n_zeros == pattern.len() {
        return Err(Error::GapNotFound("the pattern keeps no coefficient".into()));
    }
    let rounded: Vec<i64> = dct2(restored).as_slice().iter().map(|c| c.round() as i64).collect();
    let mut kept: Vec<u64> = rounded
        .iter()
        .zip(pattern.keep())
        .filter(|(_, &k)| k)
        .map(|(c, _)| c.unsigned_abs())
        .collect();
    kept.sort_unstable();
    let m = kept[(GAP_EDGE_QUANTILE * kept.len() as f64) as usize];
    if m < 1 {
        return Err(Error::GapNotFound("kept coefficients reach the zero bin".into()));
    }
    let h_neg = rounded.iter().filter(|&&c| c == -(m as i64)).count() as u64;
    let h_pos = rounded.iter().filter(|&&c| c == m as i64).count() as u64;
    GapHistogram::new(m, h_neg, h_pos, n_zeros as u64, pattern.len() as u64)
}

/// Estimated PSNR between the restored image and the unknown original.
pub fn estimate_psnr_ro(hist: &GapHistogram) -> Result<f64> {
    if hist.m < 1 {
        return Err(Error::InvalidArgument("gap half-width must be at least 1".into()));
    }
    Ok(psnr_from_mse(hist.mse_estimate()))
}

/// Estimated PSNR between the restored and the sparse image, measured by
/// running sparsification, the same loss mask and restoration on `proxy`.
pub fn estimate_psnr_rs(
    mask: &SamplingMask,
    pattern_rate: f64,
    proxy: &Image,
    opts: &RestorationOptions,
) -> Result<f64> {
    check_dims(mask.dims(), proxy.dims())?;
    let pattern = make_sparsity_pattern(proxy, pattern_rate)?;
    let sparse = sparsity_project(proxy, &pattern)?.quantized();
    let corrupted = apply_mask(&sparse, mask)?;
    let result = restore(&corrupted, mask, &pattern, opts)?;
    let value = psnr(&result.restored, &sparse)?;
    if !result.converged {
        return Err(Error::EstimationUnavailable { partial_db: value });
    }
    Ok(value)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::transform::{idct2, CoefficientGrid};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn mse_and_psnr_basics() {
        let a = Image::filled(2, 2, 10.0).unwrap();
        let mut b = a.clone();
        assert_eq!(mse(&a, &b).unwrap(), 0.0);
        assert_eq!(psnr(&a, &b).unwrap(), f64::INFINITY);
        b.set(1, 0, 13.0);
        assert_eq!(mse(&a, &b).unwrap(), 9.0 / 4.0);

        let black = Image::filled(3, 3, 0.0).unwrap();
        let white = Image::filled(3, 3, 255.0).unwrap();
        assert_eq!(psnr(&black, &white).unwrap(), 0.0);
        assert!(psnr(&black, &Image::filled(3, 2, 0.0).unwrap()).is_err());
    }

    #[test]
    fn mse_matches_coefficient_domain() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut img = || Image::new(24, 16, (0..384).map(|_| rng.random_range(0.0..255.0)).collect()).unwrap();
        let (a, b) = (img(), img());
        let (ca, cb) = (dct2(&a), dct2(&b));
        let coeff_mse: f64 = ca
            .as_slice()
            .iter()
            .zip(cb.as_slice())
            .map(|(x, y)| (x - y).powi(2))
            .sum::<f64>()
            / 384.0;
        let spatial = mse(&a, &b).unwrap();
        assert!((spatial - coeff_mse).abs() / spatial < 1e-9);
    }

    #[test]
    fn gap_is_found_from_constructed_coefficients() {
        // 16x16 grid: 200 zeroed positions hold 0, kept ones are +-5 or larger
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let keep: Vec<bool> = (0..256).map(|i| i % 9 == 0 || i < 40).collect();
        let mut coeffs = vec![0.0; 256];
        for (i, c) in coeffs.iter_mut().enumerate() {
            if keep[i] {
                let mag = if i % 2 == 0 {
                    5.0
                } else {
                    rng.random_range(6..40) as f64
                };
                *c = if rng.random_bool(0.5) { mag } else { -mag };
            }
        }
        coeffs[0] = 900.0;
        let restored = idct2(&CoefficientGrid::new(16, 16, coeffs.clone()).unwrap());
        let pattern = SparsityPattern::new(16, 16, keep).unwrap();
        let hist = build_gap_histogram(&restored, &pattern).unwrap();
        assert_eq!(hist.m, 5);
        assert_eq!(hist.n_zeros as usize, pattern.zero_count());
        assert_eq!(hist.h_pos, coeffs.iter().filter(|&&c| c == 5.0).count() as u64);
        assert_eq!(hist.h_neg, coeffs.iter().filter(|&&c| c == -5.0).count() as u64);
    }

    #[test]
    fn gap_not_found() {
        let img = Image::from_fn(8, 8, |r, c| (r * 8 + c) as f64).unwrap();
        let all = SparsityPattern::keep_all(8, 8).unwrap();
        assert!(matches!(build_gap_histogram(&img, &all), Err(Error::GapNotFound(_))));

        // kept coefficients that round to zero
        let mut keep = vec![false; 64];
        keep[..32].fill(true);
        let flat = Image::filled(8, 8, 0.0).unwrap();
        let p = SparsityPattern::new(8, 8, keep).unwrap();
        assert!(matches!(build_gap_histogram(&flat, &p), Err(Error::GapNotFound(_))));
    }

    #[test]
    fn estimator_edge_cases() {
        let h = GapHistogram::new(1, 30, 40, 100, 1000).unwrap();
        assert_eq!(estimate_psnr_ro(&h).unwrap(), f64::INFINITY);
        assert!(GapHistogram::new(0, 0, 0, 0, 10).is_err());
        assert!(GapHistogram::new(2, 0, 0, 11, 10).is_err());
        let bad = GapHistogram {
            m: 0,
            h_neg: 0,
            h_pos: 0,
            n_zeros: 0,
            total: 1,
        };
        assert!(estimate_psnr_ro(&bad).is_err());

        // m = 2: only the zero count contributes, 3 N_s / 6N
        let h = GapHistogram::new(2, 7, 9, 600, 1000).unwrap();
        assert!((h.mse_estimate() - 0.3).abs() < 1e-15);
    }

    #[test]
    fn rs_estimate_with_nothing_missing() {
        let proxy = Image::from_fn(32, 32, |r, c| 100.0 + 40.0 * ((r as f64) * 0.2).sin() + (c % 5) as f64).unwrap();
        let mask = SamplingMask::all_known(32, 32).unwrap();
        let est = estimate_psnr_rs(&mask, 0.8, &proxy, &RestorationOptions::default()).unwrap();
        assert_eq!(est, f64::INFINITY);
    }

    /// `2 m^2` times the explicit double sum with the line slopes, times 6.
    fn double_sum_scaled(m: i128, h_neg: i128, h_pos: i128, n_s: i128) -> i128 {
        // twice the bracket of each slope, so everything stays integral
        let left2 = 2 * n_s - (m - 1) * h_pos - (3 * m + 1) * h_neg;
        let right2 = 2 * n_s - (3 * m + 1) * h_pos - (m - 1) * h_neg;
        let (al, ar) = (left2.abs(), right2.abs());
        let mut total = 0i128;
        for i in 1..m {
            total += (2 * m * m * h_neg + i * al) * (m - i) * (m - i);
            total += (2 * m * m * h_pos + (m - i) * ar) * i * i;
        }
        6 * total
    }

    #[test]
    fn power_sums() {
        for m in 1i128..60 {
            let squares: i128 = (1..m).map(|i| i * i).sum();
            let mixed: i128 = (1..m).map(|i| i * (m - i) * (m - i)).sum();
            assert_eq!(6 * squares, m * (m - 1) * (2 * m - 1));
            assert_eq!(12 * mixed, m * m * (m * m - 1));
        }
    }

    proptest! {
        #[test]
        fn closed_form_equals_double_sum(m in 1u64..=50, h_neg in 0u64..5000, h_pos in 0u64..5000, extra in 0u64..1_000_000) {
            // the slopes are the magnitudes of the edge lines only while both
            // brackets are non-negative, i.e. N_s is at least this large
            let need = |a: u64, b: u64| ((m - 1) * a + (3 * m + 1) * b).div_ceil(2);
            let n_s = need(h_pos, h_neg).max(need(h_neg, h_pos)) + extra;
            let hist = GapHistogram::new(m, h_neg, h_pos, n_s, n_s + 1).unwrap();
            let lhs = double_sum_scaled(m as i128, h_neg as i128, h_pos as i128, n_s as i128);
            let rhs = 2 * (m as i128).pow(2) * hist.scaled_mse_numerator() as i128;
            prop_assert_eq!(lhs, rhs);
        }

        #[test]
        fn estimate_monotone_in_m_and_zeros(m in 2u64..60, h_neg in 0u64..1000, h_pos in 0u64..1000, n_s in 0u64..100_000) {
            let total = 200_000;
            let base = GapHistogram::new(m, h_neg, h_pos, n_s, total).unwrap();
            let wider = GapHistogram::new(m + 1, h_neg, h_pos, n_s, total).unwrap();
            let more = GapHistogram::new(m, h_neg, h_pos, n_s + 1, total).unwrap();
            prop_assert!(wider.mse_estimate() >= base.mse_estimate());
            prop_assert!(more.mse_estimate() >= base.mse_estimate());
        }

        #[test]
        fn psnr_is_symmetric(seed: u64) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let a = Image::new(5, 4, (0..20).map(|_| rng.random_range(0.0..255.0)).collect()).unwrap();
            let b = Image::new(5, 4, (0..20).map(|_| rng.random_range(0.0..255.0)).collect()).unwrap();
            prop_assert_eq!(psnr(&a, &b).unwrap(), psnr(&b, &a).unwrap());
        }
    }
}
