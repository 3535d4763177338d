//! A small fully connected denoiser over flattened fields.
//!
//! The network input is the scaled noisy field, a Fourier embedding of
//! `ln(sigma)`, and the conditioning fields, concatenated. Its output `F`
//! is mixed with the input through a noise-dependent skip:
//!
//! ```text
//! D(x, sigma) = c_skip(sigma) x + c_out(sigma) F(c_in(sigma) x, embed(sigma), cond / cond_scale)
//! c_skip = s_d^2 / (sigma^2 + s_d^2)
//! c_out  = sigma s_d / sqrt(sigma^2 + s_d^2)
//! c_in   = 1 / sqrt(sigma^2 + s_d^2)
//! ```
//!
//! where `s_d` is the data standard deviation. Hidden layers use SiLU.

use ndarray::{Array1, Array2, ArrayView2, Axis};

use crate::diffusion::denoiser::{check_denoiser_inputs, Denoiser};
use crate::diffusion::schedule::NoiseSchedule;
use crate::error::{Error, Result};
use crate::field::{Field, Shape};
use crate::rng::Rng;

#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    /// `(outputs, inputs)`
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

impl Dense {
    fn zeros(inputs: usize, outputs: usize) -> Self {
        Self { weight: Array2::zeros((outputs, inputs)), bias: Array1::zeros(outputs) }
    }

    pub fn inputs(&self) -> usize {
        self.weight.ncols()
    }

    pub fn outputs(&self) -> usize {
        self.weight.nrows()
    }

    fn param_count(&self) -> usize {
        self.weight.len() + self.bias.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpConfig {
    pub shape: Shape,
    pub num_cond: usize,
    pub hidden: Vec<usize>,
    pub embed_dim: usize,
    pub sigma_data: f64,
    pub cond_scale: f64,
}

/// Where a model sits in a cascade; stored in checkpoints.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelMeta {
    pub level: usize,
    pub num_levels: usize,
    pub schedule: NoiseSchedule,
}

impl Default for ModelMeta {
    fn default() -> Self {
        Self { level: 1, num_levels: 1, schedule: NoiseSchedule::default() }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpDenoiser {
    config: MlpConfig,
    layers: Vec<Dense>,
    meta: ModelMeta,
}

#[inline]
fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

#[inline]
fn silu(z: f64) -> f64 {
    z * sigmoid(z)
}

#[inline]
fn silu_grad(z: f64) -> f64 {
    let s = sigmoid(z);
    s * (1.0 + z * (1.0 - s))
}

/// Noise-dependent skip, output and input scalings.
#[derive(Debug, Clone, Copy)]
pub struct Preconditioning {
    pub c_skip: f64,
    pub c_out: f64,
    pub c_in: f64,
}

impl Preconditioning {
    pub fn new(sigma: f64, sigma_data: f64) -> Self {
        let s2 = sigma * sigma;
        let d2 = sigma_data * sigma_data;
        let root = (s2 + d2).sqrt();
        Self { c_skip: d2 / (s2 + d2), c_out: sigma * sigma_data / root, c_in: 1.0 / root }
    }
}

/// Fourier features of `ln(sigma) / 4`.
pub fn sigma_embedding(sigma: f64, dim: usize) -> Vec<f64> {
    let c = sigma.max(1e-12).ln() / 4.0;
    let mut out = Vec::with_capacity(dim);
    for k in 0..dim / 2 {
        let w = (k + 1) as f64;
        out.push((w * c).sin());
        out.push((w * c).cos());
    }
    out
}

/// One minibatch in network layout; row `b` holds one example.
#[derive(Debug, Clone)]
pub struct Batch {
    pub noisy: Array2<f64>,
    pub sigmas: Vec<f64>,
    pub cond: Array2<f64>,
    pub targets: Array2<f64>,
}

/// Per-layer gradients, aligned with the model's layers.
#[derive(Debug, Clone)]
pub struct Gradients {
    pub layers: Vec<Dense>,
}

impl Gradients {
    pub fn norm(&self) -> f64 {
        self.layers
            .iter()
            .map(|l| l.weight.iter().chain(l.bias.iter()).map(|g| g * g).sum::<f64>())
            .sum::<f64>()
            .sqrt()
    }

    pub fn scale(&mut self, s: f64) {
        for l in &mut self.layers {
            l.weight *= s;
            l.bias *= s;
        }
    }

    pub fn zeros_like(&self) -> Self {
        Self { layers: self.layers.iter().map(|l| Dense::zeros(l.inputs(), l.outputs())).collect() }
    }
}

impl MlpDenoiser {
    /// Random initialization with `N(0, 1/fan_in)` weights and zero biases.
    pub fn new(config: MlpConfig, rng: &mut Rng) -> Result<Self> {
        if !config.embed_dim.is_multiple_of(2) {
            return Err(Error::Config(format!("embedding size must be even, got {}", config.embed_dim)));
        }
        if !(config.sigma_data > 0.0) || !(config.cond_scale > 0.0) {
            return Err(Error::Config("sigma_data and cond_scale must be positive".into()));
        }
        let n = config.shape.len();
        let mut sizes = vec![n * (1 + config.num_cond) + config.embed_dim];
        sizes.extend(&config.hidden);
        sizes.push(n);
        let layers = sizes
            .windows(2)
            .map(|w| {
                let mut d = Dense::zeros(w[0], w[1]);
                let std = (1.0 / w[0] as f64).sqrt();
                d.weight.mapv_inplace(|_| std * rng.normal());
                d
            })
            .collect();
        Ok(Self { config, layers, meta: ModelMeta::default() })
    }

    /// Rebuilds a model from explicit layers, validating the layer chain.
    pub fn from_layers(config: MlpConfig, layers: Vec<Dense>, meta: ModelMeta) -> Result<Self> {
        let n = config.shape.len();
        let expected_in = n * (1 + config.num_cond) + config.embed_dim;
        let mut prev = expected_in;
        for (i, l) in layers.iter().enumerate() {
            if l.inputs() != prev || l.bias.len() != l.outputs() {
                return Err(Error::Config(format!("layer {i} has inconsistent size")));
            }
            prev = l.outputs();
        }
        if layers.is_empty() || prev != n {
            return Err(Error::Config(format!("network must end with {n} outputs")));
        }
        Ok(Self { config, layers, meta })
    }

    pub fn config(&self) -> &MlpConfig {
        &self.config
    }

    pub fn layers(&self) -> &[Dense] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Dense] {
        &mut self.layers
    }

    pub fn meta(&self) -> &ModelMeta {
        &self.meta
    }

    pub fn set_meta(&mut self, meta: ModelMeta) {
        self.meta = meta;
    }

    pub fn parameter_count(&self) -> usize {
        self.layers.iter().map(Dense::param_count).sum()
    }

    /// Layer widths including input and output.
    pub fn layer_sizes(&self) -> Vec<usize> {
        let mut v = vec![self.layers[0].inputs()];
        v.extend(self.layers.iter().map(Dense::outputs));
        v
    }

    fn input_matrix(&self, batch: &Batch) -> Array2<f64> {
        let n = self.config.shape.len();
        let e = self.config.embed_dim;
        let nc = n * self.config.num_cond;
        let rows = batch.noisy.nrows();
        let mut x = Array2::zeros((rows, n + e + nc));
        for b in 0..rows {
            let pre = Preconditioning::new(batch.sigmas[b], self.config.sigma_data);
            let mut row = x.row_mut(b);
            for j in 0..n {
                row[j] = pre.c_in * batch.noisy[[b, j]];
            }
            for (j, v) in sigma_embedding(batch.sigmas[b], e).into_iter().enumerate() {
                row[n + j] = v;
            }
            for j in 0..nc {
                row[n + e + j] = batch.cond[[b, j]] / self.config.cond_scale;
            }
        }
        x
    }

    /// Returns pre-activations of every layer and the network output `F`.
    fn forward(&self, input: &Array2<f64>) -> (Vec<Array2<f64>>, Array2<f64>) {
        let mut pre = Vec::with_capacity(self.layers.len());
        let mut act = input.clone();
        for (i, l) in self.layers.iter().enumerate() {
            let z = act.dot(&l.weight.t()) + &l.bias;
            act = if i + 1 < self.layers.len() { z.mapv(silu) } else { z.clone() };
            pre.push(z);
        }
        (pre, act)
    }

    fn combine(&self, batch: &Batch, f: &Array2<f64>) -> Array2<f64> {
        let mut out = f.clone();
        for (b, mut row) in out.axis_iter_mut(Axis(0)).enumerate() {
            let pre = Preconditioning::new(batch.sigmas[b], self.config.sigma_data);
            let noisy = batch.noisy.row(b);
            row.zip_mut_with(&noisy, |o, &x| *o = pre.c_skip * x + pre.c_out * *o);
        }
        out
    }

    /// Denoised estimates for a batch (targets ignored).
    pub fn denoise_batch(&self, batch: &Batch) -> Array2<f64> {
        let (_, f) = self.forward(&self.input_matrix(batch));
        self.combine(batch, &f)
    }

    /// Mean squared error of the denoised batch against its targets.
    pub fn batch_loss(&self, batch: &Batch) -> f64 {
        let d = self.denoise_batch(batch);
        (&d - &batch.targets).mapv(|v| v * v).mean().unwrap_or(0.0)
    }

    /// Loss and its gradient with respect to every weight and bias.
    pub fn loss_and_grad(&self, batch: &Batch) -> (f64, Gradients) {
        let input = self.input_matrix(batch);
        let (pre, f) = self.forward(&input);
        let d = self.combine(batch, &f);
        let diff = &d - &batch.targets;
        let count = diff.len() as f64;
        let loss = diff.mapv(|v| v * v).sum() / count;

        let mut delta = diff * (2.0 / count);
        for (b, mut row) in delta.axis_iter_mut(Axis(0)).enumerate() {
            row *= Preconditioning::new(batch.sigmas[b], self.config.sigma_data).c_out;
        }

        let mut grads: Vec<Dense> = Vec::with_capacity(self.layers.len());
        for i in (0..self.layers.len()).rev() {
            let prev_act: ArrayView2<f64>;
            let owned;
            if i == 0 {
                prev_act = input.view();
            } else {
                owned = pre[i - 1].mapv(silu);
                prev_act = owned.view();
            }
            let gw = delta.t().dot(&prev_act);
            let gb = delta.sum_axis(Axis(0));
            if i > 0 {
                let back = delta.dot(&self.layers[i].weight);
                delta = back * &pre[i - 1].mapv(silu_grad);
            }
            grads.push(Dense { weight: gw, bias: gb });
        }
        grads.reverse();
        (loss, Gradients { layers: grads })
    }

    /// Builds a single-example batch for `denoise`.
    fn single_batch(&self, xt: &Field, sigma: f64, cond: &[Field]) -> Batch {
        let n = self.config.shape.len();
        let noisy = Array2::from_shape_vec((1, n), xt.data().to_vec()).expect("shape checked");
        let cond_flat: Vec<f64> = cond.iter().flat_map(|c| c.data().iter().copied()).collect();
        let cond = Array2::from_shape_vec((1, cond_flat.len()), cond_flat).expect("shape checked");
        Batch { noisy, sigmas: vec![sigma], cond, targets: Array2::zeros((0, n)) }
    }
}

impl Denoiser for MlpDenoiser {
    fn denoise(&self, xt: &Field, sigma: f64, cond: &[Field]) -> Result<Field> {
        check_denoiser_inputs(self, xt, cond)?;
        let out = self.denoise_batch(&self.single_batch(xt, sigma, cond));
        Field::from_vec(self.config.shape, out.into_raw_vec_and_offset().0)
            .map_err(|_| Error::NonFinite("MlpDenoiser::denoise"))
    }

    fn num_cond(&self) -> usize {
        self.config.num_cond
    }

    fn input_shape(&self) -> Option<Shape> {
        Some(self.config.shape)
    }

    fn cost(&self) -> f64 {
        self.parameter_count() as f64
    }

    fn is_trainable(&self) -> bool {
        true
    }
}
