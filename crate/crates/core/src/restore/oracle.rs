//! Closed-form restoration on small images with explicit matrices.
//!
//! With `A = M̂S` (missing-pixel selector times sparsity projector) the
//! iteration `y_k = M̂S y_{k-1} + M y_0` has the solution
//! `y_k = A^k y_0 + (I - A^k) b` where `b = (I - A)^{-1} M y_0`.
//! Everything here is built from the cosine basis directly, independent of the
//! fast transform, so it can check the engine.

use nalgebra::{DMatrix, DVector};

use crate::error::{check_dims, Error, Result};
use crate::image::{Image, SamplingMask};
use crate::transform::SparsityPattern;

/// Largest image (in pixels) the dense oracle accepts.
pub const MAX_ORACLE_PIXELS: usize = 256;

/// Orthonormal DCT-II matrix of size `n`.
pub fn dct_matrix(n: usize) -> DMatrix<f64> {
    DMatrix::from_fn(n, n, |k, i| {
        let s = if k == 0 {
            (1.0 / n as f64).sqrt()
        } else {
            (2.0 / n as f64).sqrt()
        };
        s * (std::f64::consts::PI * k as f64 * (2 * i + 1) as f64 / (2 * n) as f64).cos()
    })
}

/// The 2D transform `Φ` acting on row-major vectorized images.
pub fn transform_matrix(width: usize, height: usize) -> DMatrix<f64> {
    dct_matrix(height).kronecker(&dct_matrix(width))
}

/// `S = Φ^T Z Φ`.
pub fn sparsity_matrix(pattern: &SparsityPattern) -> DMatrix<f64> {
    let (w, h) = pattern.dims();
    let phi = transform_matrix(w, h);
    let mut zphi = phi.clone();
    for (row, &keep) in pattern.keep().iter().enumerate() {
        if !keep {
            zphi.row_mut(row).fill(0.0);
        }
    }
    phi.transpose() * zphi
}

fn missing_selector(mask: &SamplingMask) -> DMatrix<f64> {
    DMatrix::from_diagonal(&DVector::from_iterator(
        mask.len(),
        mask.known().iter().map(|&k| if k { 0.0 } else { 1.0 }),
    ))
}

fn check_size(dims: (usize, usize)) -> Result<()> {
    if dims.0 * dims.1 > MAX_ORACLE_PIXELS {
        return Err(Error::InvalidArgument(format!(
            "dense oracle limited to {MAX_ORACLE_PIXELS} pixels, got {}x{}",
            dims.0, dims.1
        )));
    }
    Ok(())
}

/// Solves `(I - a) x = rhs`, refusing numerically singular systems.
fn solve_identity_minus(a: &DMatrix<f64>, rhs: &DVector<f64>) -> Result<DVector<f64>> {
    let n = a.nrows();
    let lu = (DMatrix::identity(n, n) - a).lu();
    let u = lu.u();
    // entries of I - M̂S are O(1), so an absolute pivot floor is meaningful
    if u.diagonal().iter().any(|p| p.is_nan() || p.abs() <= 1e-10) {
        return Err(Error::SingularSystem);
    }
    lu.solve(rhs).ok_or(Error::SingularSystem)
}

#[derive(Debug, Clone)]
pub struct DenseOracle {
    width: usize,
    height: usize,
    a: DMatrix<f64>,
    b: DVector<f64>,
    y0: DVector<f64>,
}

impl DenseOracle {
    /// `y0` is both the data at known pixels and the starting iterate.
    pub fn new(y0: &Image, mask: &SamplingMask, pattern: &SparsityPattern) -> Result<Self> {
        check_dims(y0.dims(), mask.dims())?;
        check_dims(y0.dims(), pattern.dims())?;
        check_size(y0.dims())?;
        let a = missing_selector(mask) * sparsity_matrix(pattern);
        let y = DVector::from_column_slice(y0.as_slice());
        let my = DVector::from_iterator(
            y.len(),
            y.iter().zip(mask.known()).map(|(&v, &k)| if k { v } else { 0.0 }),
        );
        let b = solve_identity_minus(&a, &my)?;
        Ok(DenseOracle {
            width: y0.width(),
            height: y0.height(),
            a,
            b,
            y0: y,
        })
    }

    /// The iteration matrix `M̂S`.
    pub fn operator(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn spectral_norm(&self) -> f64 {
        self.a.clone().singular_values().max()
    }

    /// The limit `(I - M̂S)^{-1} M y_0`.
    pub fn fixed_point(&self) -> Image {
        self.to_image(&self.b)
    }

    /// `y_k` from the closed form, with `A^k` by repeated squaring.
    pub fn iterate(&self, k: u32) -> Image {
        let ak = matrix_power(&self.a, k);
        let yk = &ak * &self.y0 + &self.b - &ak * &self.b;
        self.to_image(&yk)
    }

    /// `y_0 ..= y_k_max` as `b + A^k (y_0 - b)`, accumulating `A^k` applied to
    /// the initial offset.
    pub fn trajectory(&self, k_max: usize) -> Vec<Image> {
        let mut offset = &self.y0 - &self.b;
        let mut out = Vec::with_capacity(k_max + 1);
        out.push(self.to_image(&(&self.b + &offset)));
        for _ in 0..k_max {
            offset = &self.a * offset;
            out.push(self.to_image(&(&self.b + &offset)));
        }
        out
    }

    fn to_image(&self, v: &DVector<f64>) -> Image {
        Image::new(self.width, self.height, v.iter().copied().collect()).expect("oracle dimensions are valid")
    }
}

fn matrix_power(a: &DMatrix<f64>, mut k: u32) -> DMatrix<f64> {
    let n = a.nrows();
    let mut result = DMatrix::identity(n, n);
    let mut base = a.clone();
    while k > 0 {
        if k & 1 == 1 {
            result = &result * &base;
        }
        k >>= 1;
        if k > 0 {
            base = &base * &base;
        }
    }
    result
}

/// The `k`-th iterate of the restoration (pre-interpolation off, no rounding)
/// in closed form.
pub fn oracle_restore(corrupted: &Image, mask: &SamplingMask, pattern: &SparsityPattern, k: u32) -> Result<Image> {
    Ok(DenseOracle::new(corrupted, mask, pattern)?.iterate(k))
}

/// Residual `x_s - y_∞` left by restoring with `used`, whose zero set contains
/// the zero set of `truth`: `(I - M̂S^P)^{-1} M̂ S^δ x_s` with
/// `S^δ = S^truth - S^P`.
pub fn error_floor(
    sparse: &Image,
    mask: &SamplingMask,
    truth: &SparsityPattern,
    used: &SparsityPattern,
) -> Result<Image> {
    check_dims(sparse.dims(), mask.dims())?;
    check_dims(sparse.dims(), truth.dims())?;
    check_dims(sparse.dims(), used.dims())?;
    check_size(sparse.dims())?;
    let m_hat = missing_selector(mask);
    let s_used = sparsity_matrix(used);
    let s_delta = sparsity_matrix(truth) - &s_used;
    let xs = DVector::from_column_slice(sparse.as_slice());
    let rhs = &m_hat * (s_delta * xs);
    let floor = solve_identity_minus(&(m_hat * s_used), &rhs)?;
    Image::new(sparse.width(), sparse.height(), floor.iter().copied().collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::image::{apply_mask, generate_block_loss_mask, BlockLossSpec};
    use crate::restore::RestorationEngine;
    use crate::transform::{dct2, make_sparsity_pattern, sparsity_project};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn max_abs(a: &Image, b: &Image) -> f64 {
        a.as_slice()
            .iter()
            .zip(b.as_slice())
            .map(|(x, y)| (x - y).abs())
            .fold(0.0, f64::max)
    }

    fn integer_image(w: usize, h: usize, rng: &mut ChaCha8Rng) -> Image {
        Image::new(w, h, (0..w * h).map(|_| rng.random_range(0..256) as f64).collect()).unwrap()
    }

    #[test]
    fn transform_matrix_matches_fast_dct() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let img = integer_image(6, 4, &mut rng);
        let dense = transform_matrix(6, 4) * DVector::from_column_slice(img.as_slice());
        let fast = dct2(&img);
        let diff = dense
            .iter()
            .zip(fast.as_slice())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(diff < 1e-9);
    }

    #[test]
    fn zeroth_iterate_is_the_input() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let img = integer_image(4, 4, &mut rng);
        let mask = SamplingMask::new(4, 4, (0..16).map(|i| i % 3 != 0).collect()).unwrap();
        let pattern = make_sparsity_pattern(&img, 0.5).unwrap();
        let corrupted = apply_mask(&img, &mask).unwrap();
        let y0 = oracle_restore(&corrupted, &mask, &pattern, 0).unwrap();
        assert!(max_abs(&y0, &corrupted) < 1e-12);
    }

    #[test]
    fn rejects_large_and_singular() {
        let img = Image::filled(17, 16, 1.0).unwrap();
        let mask = SamplingMask::all_known(17, 16).unwrap();
        let p = SparsityPattern::keep_all(17, 16).unwrap();
        assert!(matches!(
            oracle_restore(&img, &mask, &p, 1),
            Err(Error::InvalidArgument(_))
        ));

        // nothing known and nothing zeroed: I - M̂S = 0
        let img = Image::filled(4, 4, 0.0).unwrap();
        let res = oracle_restore(
            &img,
            &SamplingMask::all_missing(4, 4).unwrap(),
            &SparsityPattern::keep_all(4, 4).unwrap(),
            3,
        );
        assert!(matches!(res, Err(Error::SingularSystem)));
    }

    #[test]
    fn matches_engine_on_8x8() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let img = integer_image(8, 8, &mut rng);
        let mask = generate_block_loss_mask(8, 8, &BlockLossSpec::new(1, 0.5, 3)).unwrap();
        let keep = (0..64).map(|_| rng.random_bool(0.4)).collect();
        let pattern = SparsityPattern::new(8, 8, keep).unwrap();
        let corrupted = apply_mask(&img, &mask).unwrap();
        let mut engine = RestorationEngine::new(&corrupted, &corrupted, &mask, &pattern).unwrap();
        for _ in 0..20 {
            engine.step();
        }
        let expected = oracle_restore(&corrupted, &mask, &pattern, 20).unwrap();
        assert!(max_abs(&engine.current_image(), &expected) < 1e-8);
    }

    #[test]
    fn trajectory_agrees_with_powers() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let img = integer_image(5, 5, &mut rng);
        let mask = generate_block_loss_mask(5, 5, &BlockLossSpec::new(2, 0.4, 4)).unwrap();
        let pattern = make_sparsity_pattern(&img, 0.6).unwrap();
        let oracle = DenseOracle::new(&apply_mask(&img, &mask).unwrap(), &mask, &pattern).unwrap();
        let traj = oracle.trajectory(13);
        for k in [0u32, 1, 5, 13] {
            assert!(max_abs(&traj[k as usize], &oracle.iterate(k)) < 1e-9);
        }
    }

    #[test]
    fn decays_to_sparse_image_under_contraction() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut checked = 0;
        for seed in 0..40 {
            let img = integer_image(8, 8, &mut rng);
            let pattern = make_sparsity_pattern(&img, 0.8).unwrap();
            let xs = sparsity_project(&img, &pattern).unwrap();
            let mask = generate_block_loss_mask(8, 8, &BlockLossSpec::new(1, 0.3, seed)).unwrap();
            let oracle = DenseOracle::new(&apply_mask(&xs, &mask).unwrap(), &mask, &pattern).unwrap();
            if oracle.spectral_norm() < 0.9 {
                assert!(max_abs(&oracle.iterate(200), &xs) < 1e-6);
                checked += 1;
            }
        }
        assert!(checked >= 5, "only {checked} contracting instances");
    }
}
