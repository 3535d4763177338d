//! Full-covariance Gaussian denoisers, including the exact per-level priors of
//! a Laplacian pyramid of an isotropic Gaussian image.
//!
//! A linear map of a Gaussian vector is Gaussian, so every pyramid level (and
//! every level conditioned on the coarser ones) has a closed-form prior. These
//! denoisers are oracle instruments for the cascaded sampler at desk scale.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::diffusion::denoiser::{check_denoiser_inputs, Denoiser};
use crate::error::{Error, Result};
use crate::field::{Field, Shape};
use crate::operators::{materialize_dense, LinearMap};
use crate::pyramid::{PyramidKernel, BINOMIAL};

/// `x_0 | c ~ N(mean + gain (c - cond_mean), cov)` over fields of one shape.
#[derive(Debug, Clone)]
pub struct LinearGaussianPrior {
    shape: Shape,
    mean: DVector<f64>,
    eigvecs: DMatrix<f64>,
    eigvals: DVector<f64>,
    conditioning: Option<(DMatrix<f64>, DVector<f64>)>,
}

impl LinearGaussianPrior {
    pub fn new(shape: Shape, mean: DVector<f64>, cov: DMatrix<f64>) -> Result<Self> {
        let n = shape.len();
        if mean.len() != n || cov.nrows() != n || cov.ncols() != n {
            return Err(Error::InvalidArgument(format!(
                "mean/covariance sizes {}/{}x{} do not match {shape}",
                mean.len(),
                cov.nrows(),
                cov.ncols()
            )));
        }
        let sym = (&cov + cov.transpose()) * 0.5;
        let eig = SymmetricEigen::new(sym);
        let scale = eig.eigenvalues.amax().max(f64::MIN_POSITIVE);
        // Clamp round-off negatives of a PSD matrix.
        let eigvals = eig.eigenvalues.map(|l| if l < 1e-13 * scale { 0.0 } else { l });
        Ok(Self { shape, mean, eigvecs: eig.eigenvectors, eigvals, conditioning: None })
    }

    /// Makes the mean depend on one conditioning field: `mean + gain (c - cond_mean)`.
    pub fn with_conditioning(mut self, gain: DMatrix<f64>, cond_mean: DVector<f64>) -> Result<Self> {
        let n = self.shape.len();
        if gain.nrows() != n || gain.ncols() != n || cond_mean.len() != n {
            return Err(Error::InvalidArgument("conditioning gain must be n x n with an n-vector mean".into()));
        }
        self.conditioning = Some((gain, cond_mean));
        Ok(self)
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn covariance(&self) -> DMatrix<f64> {
        &self.eigvecs * DMatrix::from_diagonal(&self.eigvals) * self.eigvecs.transpose()
    }

    /// Prior mean given the conditioning fields.
    pub fn conditional_mean(&self, cond: &[Field]) -> DVector<f64> {
        match (&self.conditioning, cond.first()) {
            (Some((gain, cmean)), Some(c)) => &self.mean + gain * (DVector::from_column_slice(c.data()) - cmean),
            _ => self.mean.clone(),
        }
    }
}

impl Denoiser for LinearGaussianPrior {
    fn denoise(&self, xt: &Field, sigma: f64, cond: &[Field]) -> Result<Field> {
        check_denoiser_inputs(self, xt, cond)?;
        let mu = self.conditional_mean(cond);
        let centered = DVector::from_column_slice(xt.data()) - &mu;
        let s2 = sigma * sigma;
        let coeffs = self.eigvecs.tr_mul(&centered);
        let shrunk = coeffs.zip_map(&self.eigvals, |c, l| if l + s2 > 0.0 { c * l / (l + s2) } else { 0.0 });
        let out = mu + &self.eigvecs * shrunk;
        Field::from_vec(self.shape, out.as_slice().to_vec())
    }

    fn num_cond(&self) -> usize {
        usize::from(self.conditioning.is_some())
    }

    fn input_shape(&self) -> Option<Shape> {
        Some(self.shape)
    }

    fn cost(&self) -> f64 {
        (self.shape.len() * self.shape.len()) as f64
    }
}

/// Dense matrix of `up` (level `i+1` resolution to level `i`).
fn up_matrix(kernel: &PyramidKernel, coarse: Shape) -> DMatrix<f64> {
    let n = coarse.len();
    let fine = coarse.doubled();
    let mut m = DMatrix::zeros(fine.len(), n);
    let mut e = Field::zeros(coarse);
    for j in 0..n {
        e.data_mut()[j] = 1.0;
        m.column_mut(j).copy_from_slice(kernel.up(&e).data());
        e.data_mut()[j] = 0.0;
    }
    m
}

/// Dense linear maps from the base image to each level and its conditioning input.
///
/// Returns, for `i = 1..=L` (index `i - 1`), the pair `(A_i, U_i)` with
/// `x^(i) = A_i x` and conditioning `U_i x = up(down^i x)` (`U_L` is unused and empty).
fn level_maps(base: Shape, num_levels: usize, kernel: &PyramidKernel) -> Result<Vec<(DMatrix<f64>, DMatrix<f64>)>> {
    let n = base.len();
    // g[j] = matrix of down^j
    let mut g = vec![DMatrix::identity(n, n)];
    let mut shapes = vec![base];
    for j in 1..num_levels {
        let d = materialize_dense(&LinearMap::Down2(*kernel), shapes[j - 1])?;
        g.push(d * &g[j - 1]);
        shapes.push(shapes[j - 1].halved()?);
    }
    let mut out = Vec::with_capacity(num_levels);
    for i in 1..=num_levels {
        if i == num_levels {
            out.push((g[i - 1].clone(), DMatrix::zeros(0, n)));
        } else {
            let u = up_matrix(kernel, shapes[i]) * &g[i];
            out.push((&g[i - 1] - &u, u));
        }
    }
    Ok(out)
}

/// Exact per-level priors for the pyramid of `x ~ N(mean, variance I)` on `base`.
///
/// Element `i - 1` models `x^(i)`; levels below `L` are conditioned on
/// `up(down^i x)` (the upsampled coarser reconstruction) through the
/// Gaussian conditional `K = C_xc C_cc^+`.
pub fn pyramid_gaussian_priors(
    base: Shape,
    mean: &Field,
    variance: f64,
    num_levels: usize,
) -> Result<Vec<LinearGaussianPrior>> {
    if mean.shape() != base {
        return Err(Error::ShapeMismatch(mean.shape(), base));
    }
    let kernel = BINOMIAL;
    let mu = DVector::from_column_slice(mean.data());
    let maps = level_maps(base, num_levels, &kernel)?;
    let mut priors = Vec::with_capacity(num_levels);
    for (idx, (a, u)) in maps.iter().enumerate() {
        let level = idx + 1;
        let shape = {
            let f = 1 << idx;
            Shape { height: base.height / f, width: base.width / f, ..base }
        };
        let m_x = a * &mu;
        let c_xx = a * a.transpose() * variance;
        if level == num_levels {
            priors.push(LinearGaussianPrior::new(shape, m_x, c_xx)?);
            continue;
        }
        let m_c = u * &mu;
        let c_xc = a * u.transpose() * variance;
        let c_cc = u * u.transpose() * variance;
        let c_cc_pinv = c_cc
            .pseudo_inverse(1e-10 * variance)
            .map_err(|e| Error::InvalidArgument(format!("pseudo-inverse failed: {e}")))?;
        let gain = &c_xc * c_cc_pinv;
        let cond_cov = &c_xx - &gain * c_xc.transpose();
        priors.push(LinearGaussianPrior::new(shape, m_x, cond_cov)?.with_conditioning(gain, m_c)?);
    }
    Ok(priors)
}

/// Closed-form posterior mean of `x ~ N(mean, variance I)` given `y = H x + z`, `z ~ N(0, noise^2 I)`.
pub fn gaussian_posterior_mean(op: &LinearMap, y: &Field, mean: &Field, variance: f64, noise_sigma: f64) -> Result<Field> {
    let h = materialize_dense(op, mean.shape())?;
    let n = mean.shape().len();
    let prec = DMatrix::identity(n, n) / variance + h.transpose() * &h / (noise_sigma * noise_sigma);
    let rhs = DVector::from_column_slice(mean.data()) / variance
        + h.transpose() * DVector::from_column_slice(y.data()) / (noise_sigma * noise_sigma);
    let sol = prec
        .cholesky()
        .ok_or_else(|| Error::InvalidArgument("posterior precision is not positive definite".into()))?
        .solve(&rhs);
    Field::from_vec(mean.shape(), sol.as_slice().to_vec())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffusion::denoiser::{gaussian_denoise, GaussianPrior};
    use crate::field::gaussian_field;
    use crate::pyramid::{decompose, up};
    use crate::rng::Rng;

    #[test]
    fn isotropic_case_matches_scalar_formula() {
        let s = Shape::new(3, 3, 1).unwrap();
        let mean = Field::constant(s, 0.2);
        let p = LinearGaussianPrior::new(s, DVector::from_element(9, 0.2), DMatrix::identity(9, 9) * 0.5).unwrap();
        let iso = GaussianPrior::new(mean, 0.5).unwrap();
        let x = gaussian_field(&mut Rng::new(1), s, 1.0).unwrap();
        let a = p.denoise(&x, 0.7, &[]).unwrap();
        let b = gaussian_denoise(&iso, &x, 0.7).unwrap();
        assert!(a.max_abs_diff(&b).unwrap() < 1e-14);
    }

    #[test]
    fn level_one_prior_respects_the_coarse_level() {
        let base = Shape::new(8, 8, 1).unwrap();
        let mean = Field::constant(base, 0.5);
        let priors = pyramid_gaussian_priors(base, &mean, 1.0, 2).unwrap();
        assert_eq!(priors[0].shape(), base);
        assert_eq!(priors[1].shape(), Shape::new(4, 4, 1).unwrap());
        assert_eq!(priors[0].num_cond(), 1);
        assert_eq!(priors[1].num_cond(), 0);

        // down(x^(1)) is fixed by the coarse level, so the conditional mean must reproduce it
        let mut rng = Rng::new(3);
        let x = mean.add(&gaussian_field(&mut rng, base, 1.0).unwrap()).unwrap();
        let p = decompose(&x, 2).unwrap();
        let cond = up(p.level(2));
        let mu1 = priors[0].conditional_mean(std::slice::from_ref(&cond));
        let mu1 = Field::from_vec(base, mu1.as_slice().to_vec()).unwrap();
        let d_true = crate::pyramid::down(p.level(1)).unwrap();
        let d_mean = crate::pyramid::down(&mu1).unwrap();
        assert!(d_true.max_abs_diff(&d_mean).unwrap() < 1e-8);
    }

    #[test]
    fn posterior_mean_identity_operator() {
        let s = Shape::new(2, 2, 1).unwrap();
        let y = Field::constant(s, 1.0);
        let m = gaussian_posterior_mean(&LinearMap::Identity, &y, &Field::zeros(s), 1.0, 1.0).unwrap();
        assert!(m.data().iter().all(|v| (v - 0.5).abs() < 1e-14));
    }
}
