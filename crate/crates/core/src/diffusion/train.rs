use ndarray::Array2;

use crate::diffusion::mlp::{Batch, Gradients, MlpDenoiser};
use crate::diffusion::schedule::NoiseSchedule;
use crate::error::{Error, Result};
use crate::field::Field;
use crate::rng::Rng;

/// A clean target and the conditioning fields that accompany it.
#[derive(Debug, Clone)]
pub struct TrainingExample {
    pub target: Field,
    pub cond: Vec<Field>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Optimizer {
    /// Heavy-ball momentum: `v = m v + g`, `w -= lr v`.
    Sgd { momentum: f64 },
    /// Adam with bias correction.
    Adam { beta1: f64, beta2: f64, eps: f64 },
}

impl Optimizer {
    pub const ADAM: Optimizer = Optimizer::Adam { beta1: 0.9, beta2: 0.999, eps: 1e-8 };
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub steps: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub optimizer: Optimizer,
    /// Learning rate at the last step relative to the first (cosine decay).
    pub final_lr_fraction: f64,
    /// Global gradient-norm clip.
    pub grad_clip: Option<f64>,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            steps: 2000,
            batch_size: 32,
            learning_rate: 1e-3,
            optimizer: Optimizer::ADAM,
            final_lr_fraction: 0.05,
            grad_clip: Some(1.0),
            seed: 0,
        }
    }
}

fn validate(model: &MlpDenoiser, data: &[TrainingExample]) -> Result<()> {
    if data.is_empty() {
        return Err(Error::InvalidArgument("training set is empty".into()));
    }
    let cfg = model.config();
    for (i, ex) in data.iter().enumerate() {
        if ex.target.shape() != cfg.shape {
            return Err(Error::ShapeMismatch(ex.target.shape(), cfg.shape));
        }
        if ex.cond.len() != cfg.num_cond {
            return Err(Error::InvalidArgument(format!(
                "example {i} has {} conditioning fields, model expects {}",
                ex.cond.len(),
                cfg.num_cond
            )));
        }
        if let Some(c) = ex.cond.iter().find(|c| c.shape() != cfg.shape) {
            return Err(Error::ShapeMismatch(c.shape(), cfg.shape));
        }
    }
    Ok(())
}

/// Draws `batch_size` examples with `sigma ~ log-uniform[sigma_min, sigma_max]` and fresh noise.
pub fn sample_batch(
    data: &[TrainingExample],
    schedule: &NoiseSchedule,
    batch_size: usize,
    rng: &mut Rng,
) -> Batch {
    let n = data[0].target.shape().len();
    let nc = n * data[0].cond.len();
    let (lo, hi) = (schedule.sigma_min.ln(), schedule.sigma_max.ln());
    let mut noisy = Array2::zeros((batch_size, n));
    let mut cond = Array2::zeros((batch_size, nc));
    let mut targets = Array2::zeros((batch_size, n));
    let mut sigmas = Vec::with_capacity(batch_size);
    for b in 0..batch_size {
        let ex = &data[rng.below(data.len())];
        let sigma = rng.uniform_range(lo, hi).exp();
        sigmas.push(sigma);
        for (j, &v) in ex.target.data().iter().enumerate() {
            targets[[b, j]] = v;
            noisy[[b, j]] = v + sigma * rng.normal();
        }
        for (j, v) in ex.cond.iter().flat_map(|c| c.data().iter()).enumerate() {
            cond[[b, j]] = *v;
        }
    }
    Batch { noisy, sigmas, cond, targets }
}

/// Minimizes `E || D(x0 + sigma eps, sigma, cond) - x0 ||^2` over minibatches.
///
/// Returns the trained model and the per-step minibatch loss.
pub fn train_denoiser(
    mut model: MlpDenoiser,
    data: &[TrainingExample],
    schedule: &NoiseSchedule,
    cfg: &TrainConfig,
) -> Result<(MlpDenoiser, Vec<f64>)> {
    validate(&model, data)?;
    let valid = match cfg.optimizer {
        Optimizer::Sgd { momentum } => (0.0..1.0).contains(&momentum),
        Optimizer::Adam { beta1, beta2, eps } => (0.0..1.0).contains(&beta1) && (0.0..1.0).contains(&beta2) && eps > 0.0,
    };
    if !valid || cfg.batch_size == 0 || cfg.learning_rate <= 0.0 {
        return Err(Error::Config(format!("invalid optimizer settings {cfg:?}")));
    }
    let mut rng = Rng::new(cfg.seed);
    let mut first: Option<Gradients> = None;
    let mut second: Option<Gradients> = None;
    let mut trace = Vec::with_capacity(cfg.steps);
    for step in 0..cfg.steps {
        let batch = sample_batch(data, schedule, cfg.batch_size, &mut rng);
        let (loss, mut grads) = model.loss_and_grad(&batch);
        if !loss.is_finite() {
            return Err(Error::Divergence { step, loss });
        }
        trace.push(loss);
        if let Some(clip) = cfg.grad_clip {
            let norm = grads.norm();
            if norm > clip {
                grads.scale(clip / norm);
            }
        }
        let progress = step as f64 / cfg.steps.max(1) as f64;
        let cosine = 0.5 * (1.0 + (std::f64::consts::PI * progress).cos());
        let lr = cfg.learning_rate * (cfg.final_lr_fraction + (1.0 - cfg.final_lr_fraction) * cosine);

        match cfg.optimizer {
            Optimizer::Sgd { momentum } => {
                let v = first.get_or_insert_with(|| grads.zeros_like());
                for ((layer, vl), gl) in model.layers_mut().iter_mut().zip(&mut v.layers).zip(&grads.layers) {
                    vl.weight.zip_mut_with(&gl.weight, |a, &g| *a = momentum * *a + g);
                    vl.bias.zip_mut_with(&gl.bias, |a, &g| *a = momentum * *a + g);
                    layer.weight.scaled_add(-lr, &vl.weight);
                    layer.bias.scaled_add(-lr, &vl.bias);
                }
            }
            Optimizer::Adam { beta1, beta2, eps } => {
                let m = first.get_or_insert_with(|| grads.zeros_like());
                let v = second.get_or_insert_with(|| grads.zeros_like());
                let t = (step + 1) as i32;
                let (c1, c2) = (1.0 - beta1.powi(t), 1.0 - beta2.powi(t));
                let update = |w: &mut f64, m: &mut f64, v: &mut f64, g: f64| {
                    *m = beta1 * *m + (1.0 - beta1) * g;
                    *v = beta2 * *v + (1.0 - beta2) * g * g;
                    *w -= lr * (*m / c1) / ((*v / c2).sqrt() + eps);
                };
                let layers = model.layers_mut().iter_mut().zip(&mut m.layers).zip(&mut v.layers).zip(&grads.layers);
                for (((layer, ml), vl), gl) in layers {
                    for (((w, m), v), &g) in layer.weight.iter_mut().zip(ml.weight.iter_mut()).zip(vl.weight.iter_mut()).zip(gl.weight.iter()) {
                        update(w, m, v, g);
                    }
                    for (((w, m), v), &g) in layer.bias.iter_mut().zip(ml.bias.iter_mut()).zip(vl.bias.iter_mut()).zip(gl.bias.iter()) {
                        update(w, m, v, g);
                    }
                }
            }
        }
    }
    Ok((model, trace))
}
