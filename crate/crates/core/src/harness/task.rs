use crate::diffusion::{GaussianPrior, TrainingExample};
use crate::error::{Error, Result};
use crate::field::{gaussian_field, Field};
use crate::operators::{make_sr_operator, Measurement};
use crate::pyramid::{decompose, up};
use crate::rng::Rng;

/// `y = H_k x + sigma_n eps`.
pub fn make_sr_task(x: &Field, k: usize, sigma_n: f64, rng: &mut Rng) -> Result<Measurement> {
    if !(sigma_n >= 0.0) {
        return Err(Error::InvalidArgument(format!("noise level {sigma_n} must be non-negative")));
    }
    let op = make_sr_operator(k)?;
    x.shape().check_divisible(k)?;
    let clean = op.apply(x)?;
    let y = if sigma_n > 0.0 { clean.add(&gaussian_field(rng, clean.shape(), sigma_n)?)? } else { clean };
    Measurement::new(y, op, sigma_n, x.shape())
}

/// One of the eight symmetries of the square: `t & 1` flips columns, `t & 2` flips rows, `t & 4` transposes.
pub fn dihedral(x: &Field, t: usize) -> Result<Field> {
    let (h, w) = (x.height(), x.width());
    if t & 4 != 0 && h != w {
        return Err(Error::InvalidShape(format!("transpose needs a square field, got {}", x.shape())));
    }
    Ok(Field::from_fn(x.shape(), |r, c, ch| {
        let (r, c) = if t & 4 != 0 { (c, r) } else { (r, c) };
        let r = if t & 2 != 0 { h - 1 - r } else { r };
        let c = if t & 1 != 0 { w - 1 - c } else { c };
        x.get(r, c, ch)
    }))
}

/// Periodic translation by `(dr, dc)`.
pub fn cyclic_shift(x: &Field, dr: usize, dc: usize) -> Field {
    let (h, w) = (x.height(), x.width());
    Field::from_fn(x.shape(), |r, c, ch| x.get((r + h - dr % h) % h, (c + w - dc % w) % w, ch))
}

/// Every symmetric copy of every image (eight, or four when not square), each
/// followed by `shifts` random cyclic translations of it.
///
/// Translations only make sense for periodic data such as the FFT textures.
pub fn augment(images: &[Field], shifts: usize, rng: &mut Rng) -> Result<Vec<Field>> {
    let mut out = Vec::with_capacity(images.len() * 8 * (1 + shifts));
    for img in images {
        let n = if img.height() == img.width() { 8 } else { 4 };
        for t in 0..n {
            let base = dihedral(img, t)?;
            for _ in 0..shifts {
                out.push(cyclic_shift(&base, rng.below(img.height()), rng.below(img.width())));
            }
            out.push(base);
        }
    }
    Ok(out)
}

/// Training pairs for the level-`level` model of an `num_levels`-level cascade.
///
/// Targets are the pyramid level itself; finer levels are conditioned on the
/// ground-truth coarser reconstruction, upsampled. `num_levels = 1` gives the
/// single-scale (whole image, unconditional) set.
pub fn level_examples(images: &[Field], level: usize, num_levels: usize) -> Result<Vec<TrainingExample>> {
    if level == 0 || level > num_levels {
        return Err(Error::Config(format!("level {level} outside 1..={num_levels}")));
    }
    images
        .iter()
        .map(|img| {
            if num_levels == 1 {
                return Ok(TrainingExample { target: img.clone(), cond: vec![] });
            }
            let p = decompose(img, num_levels)?;
            let cond = if level < num_levels { vec![up(&p.partial_reconstruct(level + 1)?)] } else { vec![] };
            Ok(TrainingExample { target: p.level(level).clone(), cond })
        })
        .collect()
}

/// Isotropic Gaussian fit: per-pixel mean and the pixel-averaged variance.
pub fn fit_gaussian_prior(images: &[Field]) -> Result<GaussianPrior> {
    let first = images.first().ok_or_else(|| Error::InvalidArgument("no images to fit".into()))?;
    let n = images.len() as f64;
    let mut mean = Field::zeros(first.shape());
    for img in images {
        mean.axpy(1.0 / n, img)?;
    }
    let mut var = 0.0;
    for img in images {
        var += img.sub(&mean)?.norm_sq();
    }
    var /= (n - 1.0).max(1.0) * first.shape().len() as f64;
    GaussianPrior::new(mean, var.max(1e-12))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::Shape;
    use crate::pyramid::down;

    #[test]
    fn sr_task_noise_and_guards() {
        let s = Shape::new(100, 100, 1).unwrap();
        let x = gaussian_field(&mut Rng::new(1), s, 1.0).unwrap();
        let clean = make_sr_task(&x, 2, 0.0, &mut Rng::new(2)).unwrap();
        assert_eq!(clean.y(), &down(&x).unwrap());
        assert!(make_sr_task(&x, 1, 0.0, &mut Rng::new(2)).is_err());
        assert!(make_sr_task(&x, 8, 0.0, &mut Rng::new(2)).is_err());

        let big = gaussian_field(&mut Rng::new(3), Shape::new(200, 200, 1).unwrap(), 1.0).unwrap();
        let m = make_sr_task(&big, 2, 0.05, &mut Rng::new(4)).unwrap();
        let noise = m.y().sub(&down(&big).unwrap()).unwrap();
        let std = (noise.norm_sq() / noise.data().len() as f64).sqrt();
        assert!((std / 0.05 - 1.0).abs() < 0.02, "{std}");
    }

    #[test]
    fn dihedral_group() {
        let x = gaussian_field(&mut Rng::new(5), Shape::new(4, 4, 2).unwrap(), 1.0).unwrap();
        let all = augment(std::slice::from_ref(&x), 0, &mut Rng::new(0)).unwrap();
        assert_eq!(all.len(), 8);
        for (i, a) in all.iter().enumerate() {
            for b in &all[i + 1..] {
                assert_ne!(a, b);
            }
        }
        // flips are involutions
        for t in [1, 2, 4] {
            assert_eq!(dihedral(&dihedral(&x, t).unwrap(), t).unwrap(), x);
        }
        assert!(dihedral(&Field::zeros2(2, 4), 4).is_err());
        assert_eq!(augment(&[Field::zeros2(2, 4)], 0, &mut Rng::new(0)).unwrap().len(), 4);
        assert_eq!(augment(&[Field::zeros2(2, 4)], 2, &mut Rng::new(0)).unwrap().len(), 12);
    }

    #[test]
    fn cyclic_shifts_wrap() {
        let x = gaussian_field(&mut Rng::new(7), Shape::new(4, 6, 1).unwrap(), 1.0).unwrap();
        let s = cyclic_shift(&x, 1, 2);
        assert_eq!(s.get(1, 2, 0), x.get(0, 0, 0));
        assert_eq!(s.get(0, 0, 0), x.get(3, 4, 0));
        assert_eq!(cyclic_shift(&s, 3, 4), x);
    }

    #[test]
    fn level_examples_use_true_coarse_levels() {
        let x = gaussian_field(&mut Rng::new(6), Shape::new(16, 16, 1).unwrap(), 1.0).unwrap();
        let p = decompose(&x, 3).unwrap();
        let l1 = &level_examples(std::slice::from_ref(&x), 1, 3).unwrap()[0];
        assert_eq!(&l1.target, p.level(1));
        assert!(l1.cond[0].rel_err(&up(&down(&x).unwrap())).unwrap() < 1e-14);
        let l3 = &level_examples(std::slice::from_ref(&x), 3, 3).unwrap()[0];
        assert!(l3.cond.is_empty());
        // target + cond rebuilds the reconstruction at that level
        let l2 = &level_examples(std::slice::from_ref(&x), 2, 3).unwrap()[0];
        assert!(l2.target.add(&l2.cond[0]).unwrap().rel_err(&down(&x).unwrap()).unwrap() < 1e-14);
        let single = &level_examples(std::slice::from_ref(&x), 1, 1).unwrap()[0];
        assert_eq!(single.target, x);
        assert!(level_examples(&[x], 4, 3).is_err());
    }

    #[test]
    fn gaussian_fit_recovers_moments() {
        let s = Shape::new(4, 4, 1).unwrap();
        let mut rng = Rng::new(9);
        let mean = Field::constant(s, 0.3);
        let imgs: Vec<_> = (0..4000).map(|_| mean.add(&gaussian_field(&mut rng, s, 0.5).unwrap()).unwrap()).collect();
        let p = fit_gaussian_prior(&imgs).unwrap();
        assert!((p.variance() - 0.25).abs() < 0.01);
        assert!(p.mean().max_abs_diff(&mean).unwrap() < 0.05);
    }
}
