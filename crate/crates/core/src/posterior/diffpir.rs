use crate::diffusion::denoiser::{check_denoiser_inputs, Denoiser};
use crate::diffusion::NoiseSchedule;
use crate::error::{Error, Result};
use crate::field::{gaussian_field, Field};
use crate::operators::{prox_data_consistency, Measurement};
use crate::posterior::config::SamplerConfig;
use crate::rng::Rng;

/// Alternates denoising with the proximal data-consistency solve.
///
/// Each step: `x0 = D(x, sigma_t)`, `x0' = prox(x0, tau_t)`, `x = x0' + sigma_{t+1} eps`.
/// Returns the last `x0'`.
pub(crate) fn diffpir_run<D: Denoiser + ?Sized>(
    m: &Measurement,
    denoiser: &D,
    schedule: &NoiseSchedule,
    cfg: &SamplerConfig,
    cond: &[Field],
    rng: &mut Rng,
) -> Result<Field> {
    let mut x = gaussian_field(rng, m.in_shape(), schedule.sigma_max)?;
    check_denoiser_inputs(denoiser, &x, cond)?;
    let mut estimate = x.clone();
    for step in 0..schedule.num_steps {
        let sigma = schedule.sigma_at(step)?;
        let x0 = denoiser.denoise(&x, sigma, cond)?;
        if x0.shape() != x.shape() {
            return Err(Error::ShapeMismatch(x0.shape(), x.shape()));
        }
        estimate = prox_data_consistency(m, &x0, cfg.tau(m.noise_sigma(), sigma), cfg.cg)?;
        let next = schedule.next_sigma(step);
        if next > 0.0 {
            x = estimate.add(&gaussian_field(rng, x.shape(), next)?)?;
        }
    }
    Ok(estimate)
}

/// Single-scale DiffPIR over `cfg.total_steps` steps, seeded from `cfg.seed`.
pub fn diffpir_solve<D: Denoiser + ?Sized>(
    m: &Measurement,
    denoiser: &D,
    cfg: &SamplerConfig,
    cond: &[Field],
) -> Result<Field> {
    cfg.validate(1)?;
    let schedule = cfg.schedule_with(cfg.total_steps)?;
    diffpir_run(m, denoiser, &schedule, cfg, cond, &mut Rng::new(cfg.seed))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::{prop_assert, proptest, ProptestConfig};

    use crate::diffusion::{gaussian_posterior_mean, GaussianPrior};
    use crate::field::Shape;
    use crate::operators::{make_down2, LinearMap};
    use crate::stats::MomentAccumulator;

    #[test]
    fn noiseless_identity_recovers_measurement() {
        let s = Shape::new(8, 8, 1).unwrap();
        let y = gaussian_field(&mut Rng::new(1), s, 1.0).unwrap();
        let m = Measurement::new(y.clone(), LinearMap::Identity, 0.0, s).unwrap();
        let prior = GaussianPrior::new(Field::zeros(s), 1.0).unwrap();
        let x = diffpir_solve(&m, &prior, &SamplerConfig::default(), &[]).unwrap();
        assert!(x.rel_err(&y).unwrap() < 1e-2, "{}", x.rel_err(&y).unwrap());
    }

    #[test]
    fn fixed_seed_is_bit_identical() {
        let s = Shape::new(8, 8, 1).unwrap();
        let y = gaussian_field(&mut Rng::new(2), Shape::new(4, 4, 1).unwrap(), 1.0).unwrap();
        let m = Measurement::new(y, make_down2(), 0.05, s).unwrap();
        let prior = GaussianPrior::new(Field::zeros(s), 1.0).unwrap();
        let cfg = SamplerConfig { seed: 5, total_steps: 40, ..SamplerConfig::default() };
        let a = diffpir_solve(&m, &prior, &cfg, &[]).unwrap();
        let b = diffpir_solve(&m, &prior, &cfg, &[]).unwrap();
        assert!(a.data().iter().zip(b.data()).all(|(p, q)| p.to_bits() == q.to_bits()));
        let c = diffpir_solve(&m, &prior, &SamplerConfig { seed: 6, ..cfg }, &[]).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn sample_mean_matches_gaussian_posterior() {
        let s = Shape::new(8, 8, 1).unwrap();
        let (var, sigma_n): (f64, f64) = (0.6, 0.05);
        let mean = Field::from_fn(s, |r, c, _| 0.1 * (r as f64) - 0.05 * (c as f64));
        let mut rng = Rng::new(9);
        let truth = mean.add(&gaussian_field(&mut rng, s, var.sqrt()).unwrap()).unwrap();
        let op = make_down2();
        let y = op.apply(&truth).unwrap().add(&gaussian_field(&mut rng, s.halved().unwrap(), sigma_n).unwrap()).unwrap();
        let exact = gaussian_posterior_mean(&op, &y, &mean, var, sigma_n).unwrap();
        let m = Measurement::new(y, op, sigma_n, s).unwrap();
        let prior = GaussianPrior::new(mean, var).unwrap();
        let mut acc = MomentAccumulator::new(s.len());
        for seed in 0..500 {
            let cfg = SamplerConfig { seed, ..SamplerConfig::default() };
            acc.push(diffpir_solve(&m, &prior, &cfg, &[]).unwrap().data());
        }
        let t = acc.mean_test(exact.data());
        assert!(t.passes(3.0), "{t:?}");
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn prox_never_increases_the_residual(seed in 0u64..1000, tau in 1e-4f64..10.0) {
            let s = Shape::new(8, 8, 1).unwrap();
            let mut rng = Rng::new(seed);
            let y = gaussian_field(&mut rng, Shape::new(4, 4, 1).unwrap(), 1.0).unwrap();
            let x0 = gaussian_field(&mut rng, s, 1.0).unwrap();
            let m = Measurement::new(y, make_down2(), 0.05, s).unwrap();
            let x = prox_data_consistency(&m, &x0, tau, Default::default()).unwrap();
            prop_assert!(m.residual_sq(&x).unwrap() <= m.residual_sq(&x0).unwrap() * (1.0 + 1e-12));
        }
    }

    #[test]
    fn shape_mismatch_is_reported() {
        let s = Shape::new(8, 8, 1).unwrap();
        let m = Measurement::new(Field::zeros2(4, 4), make_down2(), 0.05, s).unwrap();
        let prior = GaussianPrior::new(Field::zeros2(4, 4), 1.0).unwrap();
        assert!(diffpir_solve(&m, &prior, &SamplerConfig::default(), &[]).is_err());
    }
}
