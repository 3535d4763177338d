use crate::diffusion::denoiser::{check_denoiser_inputs, Denoiser};
use crate::diffusion::schedule::NoiseSchedule;
use crate::error::{Error, Result};
use crate::field::{gaussian_field, Field, Shape};
use crate::rng::Rng;

/// `x0 + sigma * eps` with fresh standard normal `eps`.
pub fn add_noise(x0: &Field, sigma: f64, rng: &mut Rng) -> Result<Field> {
    if sigma == 0.0 {
        return Ok(x0.clone());
    }
    x0.add(&gaussian_field(rng, x0.shape(), sigma)?)
}

fn denoise_checked<D: Denoiser + ?Sized>(d: &D, x: &Field, sigma: f64, cond: &[Field]) -> Result<Field> {
    let out = d.denoise(x, sigma, cond)?;
    if out.shape() != x.shape() {
        return Err(Error::ShapeMismatch(out.shape(), x.shape()));
    }
    Ok(out)
}

/// One reverse step from `sigma` to `sigma_next`, given `x0_hat = D(x, sigma)`.
///
/// The deterministic part moves to `sigma_down = sigma_next^2 / sigma` along the
/// probability-flow direction with a Heun correction; fresh noise of standard
/// deviation `sqrt(sigma_next^2 - sigma_down^2)` brings the level to
/// `sigma_next`. Returns `x0_hat` when `sigma_next` is zero.
pub(crate) fn ancestral_step<D: Denoiser + ?Sized>(
    d: &D,
    x: &Field,
    x0_hat: &Field,
    sigma: f64,
    sigma_next: f64,
    cond: &[Field],
    rng: &mut Rng,
) -> Result<Field> {
    if sigma_next == 0.0 {
        return Ok(x0_hat.clone());
    }
    let sigma_down = sigma_next * sigma_next / sigma;
    let sigma_up = (sigma_next * sigma_next - sigma_down * sigma_down).max(0.0).sqrt();
    let h = sigma_down - sigma;
    let slope = x.sub(x0_hat)?.scale(1.0 / sigma);
    let x_pred = x.lin_comb(1.0, &slope, h)?;
    let x0_pred = denoise_checked(d, &x_pred, sigma_down, cond)?;
    let slope_pred = x_pred.sub(&x0_pred)?.scale(1.0 / sigma_down);
    let mut next = x.lin_comb(1.0, &slope.add(&slope_pred)?, 0.5 * h)?;
    next.axpy(1.0, &gaussian_field(rng, x.shape(), sigma_up)?)?;
    next.ensure_finite("ancestral_step")
}

/// Draws a sample from the prior represented by `d`.
///
/// Starts at `sigma_max * eps`; each step denoises and renoises to the next
/// level, and the final step returns the clean estimate.
pub fn ancestral_sample<D: Denoiser + ?Sized>(
    d: &D,
    schedule: &NoiseSchedule,
    shape: Shape,
    cond: &[Field],
    rng: &mut Rng,
) -> Result<Field> {
    schedule.validate()?;
    let mut x = gaussian_field(rng, shape, schedule.sigma_max)?;
    check_denoiser_inputs(d, &x, cond)?;
    for step in 0..schedule.num_steps {
        let sigma = schedule.sigma_at(step)?;
        let x0_hat = denoise_checked(d, &x, sigma, cond)?;
        x = ancestral_step(d, &x, &x0_hat, sigma, schedule.next_sigma(step), cond, rng)?;
    }
    Ok(x)
}
