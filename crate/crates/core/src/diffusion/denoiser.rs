use crate::error::{Error, Result};
use crate::field::{Field, Shape};

/// Estimates `E[x_0 | x_t]` for the variance-exploding process `x_t = x_0 + sigma * eps`.
///
/// Conditioning fields are coarser-scale reconstructions upsampled to the
/// input resolution; a denoiser declares how many it expects.
pub trait Denoiser {
    fn denoise(&self, xt: &Field, sigma: f64, cond: &[Field]) -> Result<Field>;

    /// Number of conditioning fields `denoise` expects.
    fn num_cond(&self) -> usize {
        0
    }

    /// Input shape, when the denoiser is tied to one.
    fn input_shape(&self) -> Option<Shape> {
        None
    }

    /// Relative cost of one evaluation; the parameter count for learned models.
    fn cost(&self) -> f64;

    fn is_trainable(&self) -> bool {
        false
    }
}

/// Checks the input and conditioning shapes against what `d` declares.
pub fn check_denoiser_inputs<D: Denoiser + ?Sized>(d: &D, xt: &Field, cond: &[Field]) -> Result<()> {
    if let Some(s) = d.input_shape() {
        if xt.shape() != s {
            return Err(Error::ShapeMismatch(xt.shape(), s));
        }
    }
    if cond.len() != d.num_cond() {
        return Err(Error::InvalidArgument(format!(
            "denoiser expects {} conditioning fields, got {}",
            d.num_cond(),
            cond.len()
        )));
    }
    for c in cond {
        if c.shape() != xt.shape() {
            return Err(Error::ShapeMismatch(c.shape(), xt.shape()));
        }
    }
    Ok(())
}

/// Isotropic Gaussian prior `N(mean, variance * I)`.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianPrior {
    mean: Field,
    variance: f64,
}

impl GaussianPrior {
    pub fn new(mean: Field, variance: f64) -> Result<Self> {
        if !(variance > 0.0 && variance.is_finite()) {
            return Err(Error::InvalidArgument(format!("prior variance must be positive, got {variance}")));
        }
        Ok(Self { mean, variance })
    }

    pub fn mean(&self) -> &Field {
        &self.mean
    }

    pub fn variance(&self) -> f64 {
        self.variance
    }

    /// Coefficient `a` in `E[x_0 | x_t] = a x_t + (1 - a) mean`.
    pub fn shrinkage(&self, sigma: f64) -> f64 {
        self.variance / (self.variance + sigma * sigma)
    }
}

/// Conjugate posterior mean `(v x_t + sigma^2 mean) / (v + sigma^2)`.
pub fn gaussian_denoise(prior: &GaussianPrior, xt: &Field, sigma: f64) -> Result<Field> {
    if !(sigma >= 0.0) {
        return Err(Error::InvalidArgument(format!("sigma must be >= 0, got {sigma}")));
    }
    let a = prior.shrinkage(sigma);
    xt.lin_comb(a, &prior.mean, 1.0 - a)
}

impl Denoiser for GaussianPrior {
    fn denoise(&self, xt: &Field, sigma: f64, cond: &[Field]) -> Result<Field> {
        check_denoiser_inputs(self, xt, cond)?;
        gaussian_denoise(self, xt, sigma)
    }

    fn input_shape(&self) -> Option<Shape> {
        Some(self.mean.shape())
    }

    fn cost(&self) -> f64 {
        self.mean.shape().len() as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn s4() -> Shape {
        Shape::new(4, 4, 1).unwrap()
    }

    #[test]
    fn conjugate_mean() {
        let p = GaussianPrior::new(Field::zeros(s4()), 1.0).unwrap();
        let out = gaussian_denoise(&p, &Field::constant(s4(), 2.0), 1.0).unwrap();
        assert!(out.data().iter().all(|v| (v - 1.0).abs() < 1e-15));
    }

    #[test]
    fn limits() {
        let mu = Field::constant(s4(), 0.7);
        let p = GaussianPrior::new(mu.clone(), 0.3).unwrap();
        let x = Field::from_fn(s4(), |r, c, _| (r * 4 + c) as f64);
        assert_eq!(gaussian_denoise(&p, &x, 0.0).unwrap(), x);
        let far = gaussian_denoise(&p, &x, 1e6).unwrap();
        assert!(far.rel_err(&mu).unwrap() < 1e-6);
        // continuity near zero noise
        let near = p.denoise(&x, 1e-6, &[]).unwrap();
        assert!(near.rel_err(&x).unwrap() < 1e-4);
    }

    #[test]
    fn contract_errors() {
        let p = GaussianPrior::new(Field::zeros(s4()), 1.0).unwrap();
        assert!(p.denoise(&Field::zeros2(2, 2), 1.0, &[]).is_err());
        assert!(p.denoise(&Field::zeros(s4()), 1.0, &[Field::zeros(s4())]).is_err());
        assert!(GaussianPrior::new(Field::zeros(s4()), 0.0).is_err());
        assert!(gaussian_denoise(&p, &Field::zeros(s4()), -1.0).is_err());
    }
}
