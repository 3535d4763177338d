use crate::diffusion::denoiser::{gaussian_denoise, GaussianPrior};
use crate::diffusion::sampler::ancestral_step;
use crate::error::{Error, Result};
use crate::field::{gaussian_field, Field};
use crate::operators::Measurement;
use crate::posterior::config::SamplerConfig;
use crate::rng::Rng;

/// Residual norms below this skip guidance for the step.
pub const MIN_RESIDUAL: f64 = 1e-12;

/// Gradient of `||y - H x0_hat(x_t)||^2` with respect to `x_t`, where
/// `x0_hat = a x_t + (1 - a) mean` is the conjugate Gaussian denoiser.
///
/// Returns the gradient and the residual norm `||y - H x0_hat||`.
pub fn dps_gradient(m: &Measurement, prior: &GaussianPrior, xt: &Field, sigma: f64) -> Result<(Field, f64)> {
    let x0 = gaussian_denoise(prior, xt, sigma)?;
    let r = m.y().sub(&m.op().apply(&x0)?)?;
    let grad = m.op().adjoint(&r)?.scale(-2.0 * prior.shrinkage(sigma));
    Ok((grad, r.norm()))
}

/// Diffusion posterior sampling with the analytic Gaussian denoiser.
///
/// Each step takes the ancestral step of the prior sampler and subtracts
/// `zeta / ||y - H x0_hat|| * grad`. With `zeta = 0` this is exactly
/// [`ancestral_sample`](crate::diffusion::ancestral_sample) with the same seed.
pub fn dps_solve(m: &Measurement, prior: &GaussianPrior, cfg: &SamplerConfig) -> Result<Field> {
    cfg.validate(1)?;
    if prior.mean().shape() != m.in_shape() {
        return Err(Error::ShapeMismatch(prior.mean().shape(), m.in_shape()));
    }
    let schedule = cfg.schedule_with(cfg.total_steps)?;
    let mut rng = Rng::new(cfg.seed);
    let mut x = gaussian_field(&mut rng, m.in_shape(), schedule.sigma_max)?;
    for step in 0..schedule.num_steps {
        let sigma = schedule.sigma_at(step)?;
        let x0 = gaussian_denoise(prior, &x, sigma)?;
        let mut next = ancestral_step(prior, &x, &x0, sigma, schedule.next_sigma(step), &[], &mut rng)?;
        if cfg.zeta > 0.0 {
            let (grad, res) = dps_gradient(m, prior, &x, sigma)?;
            if res >= MIN_RESIDUAL {
                next.axpy(-cfg.zeta / res, &grad)?;
            }
        }
        x = next;
    }
    x.ensure_finite("dps_solve")
}
