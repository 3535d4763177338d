use crate::diffusion::Denoiser;
use crate::error::{Error, Result};
use crate::field::{Field, Shape};
use crate::operators::{down2_chain, Measurement};
use crate::posterior::config::SamplerConfig;
use crate::posterior::diffpir::diffpir_run;
use crate::pyramid::{up, LaplacianPyramid, PyramidKernel};
use crate::rng::Rng;

/// Per-level denoisers for the cascaded sampler.
///
/// `denoisers[i - 1]` models level `i`: the coarsest (`L`) takes no
/// conditioning, every finer level takes the upsampled coarser reconstruction.
pub struct CascadeSpec<'a> {
    pub denoisers: Vec<&'a dyn Denoiser>,
    pub factor: usize,
}

impl<'a> CascadeSpec<'a> {
    pub fn new(denoisers: Vec<&'a dyn Denoiser>, factor: usize) -> Result<Self> {
        let spec = Self { denoisers, factor };
        spec.validate()?;
        Ok(spec)
    }

    pub fn num_levels(&self) -> usize {
        self.denoisers.len()
    }

    pub fn validate(&self) -> Result<()> {
        let l = self.num_levels();
        if !(2..=3).contains(&l) {
            return Err(Error::Config(format!("cascade needs 2 or 3 levels, got {l}")));
        }
        log2_factor(self.factor)?;
        for i in 1..=l {
            self.operator_count(i)?;
            let want = usize::from(i < l);
            let got = self.denoisers[i - 1].num_cond();
            if got != want {
                return Err(Error::Config(format!(
                    "level {i} denoiser takes {got} conditioning fields, expected {want}"
                )));
            }
        }
        Ok(())
    }

    /// Number of `Down2` factors between level `i` and the measurement: `log2(k) - (i - 1)`.
    pub fn operator_count(&self, level: usize) -> Result<usize> {
        let k = log2_factor(self.factor)?;
        k.checked_sub(level - 1).ok_or_else(|| {
            Error::Config(format!("level {level} is coarser than the measurement for factor {}", self.factor))
        })
    }
}

fn log2_factor(k: usize) -> Result<usize> {
    if k < 2 || !k.is_power_of_two() {
        return Err(Error::Config(format!("factor must be a power of two >= 2, got {k}")));
    }
    Ok(k.trailing_zeros() as usize)
}

/// `floor(T / L)` steps per level with the remainder going to level 1; element `i - 1` is level `i`.
pub fn steps_per_level(total_steps: usize, num_levels: usize) -> Result<Vec<usize>> {
    if num_levels == 0 || total_steps < 2 * num_levels {
        return Err(Error::Config(format!("{total_steps} steps cannot cover {num_levels} levels")));
    }
    let base = total_steps / num_levels;
    let mut steps = vec![base; num_levels];
    steps[0] += total_steps % num_levels;
    Ok(steps)
}

fn level_shape(base: Shape, level: usize) -> Shape {
    let f = 1 << (level - 1);
    Shape { height: base.height / f, width: base.width / f, ..base }
}

/// Samples one level against `y` with the coarser part `offset` frozen.
#[allow(clippy::too_many_arguments)]
fn sample_level(
    y: &Field,
    shape: Shape,
    halvings: usize,
    offset: Option<&Field>,
    denoiser: &dyn Denoiser,
    steps: usize,
    cfg: &SamplerConfig,
    sigma_n: f64,
    rng: &mut Rng,
) -> Result<Field> {
    let m = Measurement::new(y.clone(), down2_chain(halvings), sigma_n, shape)?;
    let (m, cond) = match offset {
        Some(o) => (m.shifted(o)?, vec![o.clone()]),
        None => (m, Vec::new()),
    };
    diffpir_run(&m, denoiser, &cfg.schedule_with(steps)?, cfg, &cond, rng)
}

/// Scale-cascaded DiffPIR.
///
/// Levels are sampled coarsest first. Level `i` fits `y` through
/// `Down2^(log2 k - i + 1)` applied to `x^(i) + up(coarser)`, with the
/// coarser levels frozen and passed to the denoiser as conditioning.
/// Returns `reconstruct(pyramid)` and the sampled pyramid.
pub fn cascade_solve(
    y: &Field,
    spec: &CascadeSpec<'_>,
    cfg: &SamplerConfig,
    sigma_n: f64,
) -> Result<(Field, LaplacianPyramid)> {
    spec.validate()?;
    let l = spec.num_levels();
    cfg.validate(l)?;
    let k = spec.factor;
    let base = Shape { height: y.height() * k, width: y.width() * k, ..y.shape() };
    let steps = steps_per_level(cfg.total_steps, l)?;
    let root = Rng::new(cfg.seed);

    // levels[j] holds x^(L - j)
    let mut levels: Vec<Field> = Vec::with_capacity(l);
    let mut coarse: Option<Field> = None;
    for i in (1..=l).rev() {
        let offset = coarse.as_ref().map(up);
        let mut rng = root.fork(i as u64);
        let x = sample_level(
            y,
            level_shape(base, i),
            spec.operator_count(i)?,
            offset.as_ref(),
            spec.denoisers[i - 1],
            steps[i - 1],
            cfg,
            sigma_n,
            &mut rng,
        )?;
        coarse = Some(match &offset {
            Some(o) => x.add(o)?,
            None => x.clone(),
        });
        levels.push(x);
    }
    let pyramid = LaplacianPyramid::from_levels(levels, PyramidKernel::default())?;
    let image = pyramid.reconstruct()?;
    Ok((image, pyramid))
}

/// 2x super-resolution with a level-1 model conditioned on `up(y)`.
///
/// Treats `y` as the frozen coarse reconstruction and samples only the
/// finest detail level over all `cfg.total_steps` steps.
pub fn conditioned_sr(
    y: &Field,
    denoiser: &dyn Denoiser,
    cfg: &SamplerConfig,
    sigma_n: f64,
) -> Result<(Field, LaplacianPyramid)> {
    cfg.validate(1)?;
    if denoiser.num_cond() != 1 {
        return Err(Error::Config("level-1 model must take one conditioning field".into()));
    }
    let base = y.shape().doubled();
    let offset = up(y);
    let mut rng = Rng::new(cfg.seed).fork(1);
    let x = sample_level(y, base, 1, Some(&offset), denoiser, cfg.total_steps, cfg, sigma_n, &mut rng)?;
    let pyramid = LaplacianPyramid::from_levels(vec![y.clone(), x], PyramidKernel::default())?;
    let image = pyramid.reconstruct()?;
    Ok((image, pyramid))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffusion::{gaussian_posterior_mean, pyramid_gaussian_priors, GaussianPrior};
    use crate::field::gaussian_field;
    use crate::operators::make_sr_operator;
    use crate::stats::MomentAccumulator;

    struct Conditioned(GaussianPrior);

    impl Denoiser for Conditioned {
        fn denoise(&self, xt: &Field, sigma: f64, _cond: &[Field]) -> Result<Field> {
            self.0.denoise(xt, sigma, &[])
        }
        fn num_cond(&self) -> usize {
            1
        }
        fn cost(&self) -> f64 {
            1.0
        }
    }

    fn flat(s: Shape, v: f64) -> GaussianPrior {
        GaussianPrior::new(Field::zeros(s), v).unwrap()
    }

    #[test]
    fn step_split() {
        assert_eq!(steps_per_level(200, 3).unwrap(), vec![68, 66, 66]);
        assert_eq!(steps_per_level(200, 2).unwrap(), vec![100, 100]);
        assert!(steps_per_level(5, 3).is_err());
    }

    #[test]
    fn operator_counts_and_guards() {
        let (a, b, c) = (flat(Shape::new(8, 8, 1).unwrap(), 1.0), Conditioned(flat(Shape::new(16, 16, 1).unwrap(), 1.0)), Conditioned(flat(Shape::new(32, 32, 1).unwrap(), 1.0)));
        let spec = CascadeSpec::new(vec![&c, &b, &a], 4).unwrap();
        assert_eq!(spec.operator_count(3).unwrap(), 0);
        assert_eq!(spec.operator_count(2).unwrap(), 1);
        assert_eq!(spec.operator_count(1).unwrap(), 2);
        // three levels cannot fit a 2x problem
        assert!(CascadeSpec::new(vec![&c, &b, &a], 2).is_err());
        assert!(CascadeSpec::new(vec![&c, &b, &a], 3).is_err());
        // coarsest must be unconditional
        assert!(CascadeSpec::new(vec![&c, &b], 4).is_err());
    }

    #[test]
    fn coarsest_level_approaches_y_when_noiseless() {
        let y = gaussian_field(&mut Rng::new(2), Shape::new(8, 8, 1).unwrap(), 1.0).unwrap();
        let l3 = flat(y.shape(), 1.0);
        let l2 = Conditioned(flat(Shape::new(16, 16, 1).unwrap(), 1.0));
        let l1 = Conditioned(flat(Shape::new(32, 32, 1).unwrap(), 1.0));
        let spec = CascadeSpec::new(vec![&l1, &l2, &l3], 4).unwrap();
        let cfg = SamplerConfig { lambda: 1e-4, ..SamplerConfig::default() };
        let (img, pyr) = cascade_solve(&y, &spec, &cfg, 0.0).unwrap();
        assert!(pyr.level(3).rel_err(&y).unwrap() < 1e-2);
        assert_eq!(img, pyr.reconstruct().unwrap());
        for i in 1..=3 {
            assert_eq!(pyr.level(i).shape(), level_shape(img.shape(), i));
        }
    }

    #[test]
    fn two_level_variant_shapes_for_4x() {
        let y = gaussian_field(&mut Rng::new(3), Shape::new(8, 8, 1).unwrap(), 1.0).unwrap();
        let l2 = flat(Shape::new(16, 16, 1).unwrap(), 1.0);
        let l1 = Conditioned(flat(Shape::new(32, 32, 1).unwrap(), 1.0));
        let spec = CascadeSpec::new(vec![&l1, &l2], 4).unwrap();
        let cfg = SamplerConfig { total_steps: 20, ..SamplerConfig::default() };
        let (img, pyr) = cascade_solve(&y, &spec, &cfg, 0.05).unwrap();
        assert_eq!(img.shape(), Shape::new(32, 32, 1).unwrap());
        assert_eq!(pyr.level(2).shape(), Shape::new(16, 16, 1).unwrap());
        let again = cascade_solve(&y, &spec, &cfg, 0.05).unwrap().0;
        assert!(img.data().iter().zip(again.data()).all(|(a, b)| a.to_bits() == b.to_bits()));
    }

    #[test]
    fn gaussian_cascade_matches_single_scale_posterior() {
        let base = Shape::new(16, 16, 1).unwrap();
        let mean = Field::from_fn(base, |r, c, _| 0.3 * ((r as f64) / 5.0).sin() + 0.1 * (c as f64 / 7.0).cos());
        let var: f64 = 0.5;
        let sigma_n = 0.05;
        let mut rng = Rng::new(11);
        let truth = mean.add(&gaussian_field(&mut rng, base, var.sqrt()).unwrap()).unwrap();
        let op = make_sr_operator(2).unwrap();
        let y = op.apply(&truth).unwrap().add(&gaussian_field(&mut rng, base.halved().unwrap(), sigma_n).unwrap()).unwrap();
        let exact = gaussian_posterior_mean(&op, &y, &mean, var, sigma_n).unwrap();

        let priors = pyramid_gaussian_priors(base, &mean, var, 2).unwrap();
        let spec = CascadeSpec::new(vec![&priors[0], &priors[1]], 2).unwrap();
        let mut acc = MomentAccumulator::new(base.len());
        for seed in 0..300 {
            let cfg = SamplerConfig { seed, ..SamplerConfig::default() };
            acc.push(cascade_solve(&y, &spec, &cfg, sigma_n).unwrap().0.data());
        }
        let test = acc.mean_test(exact.data());
        assert!(test.passes(3.0), "{test:?}");
    }

    #[test]
    fn conditioned_sr_contract() {
        let y = gaussian_field(&mut Rng::new(4), Shape::new(8, 8, 1).unwrap(), 1.0).unwrap();
        let l1 = Conditioned(flat(Shape::new(16, 16, 1).unwrap(), 0.1));
        let cfg = SamplerConfig { total_steps: 30, ..SamplerConfig::default() };
        let (img, pyr) = conditioned_sr(&y, &l1, &cfg, 0.05).unwrap();
        assert_eq!(img, pyr.reconstruct().unwrap());
        assert_eq!(pyr.level(2), &y);
        assert!(conditioned_sr(&y, &flat(Shape::new(16, 16, 1).unwrap(), 1.0), &cfg, 0.05).is_err());
    }
}
