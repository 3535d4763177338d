use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use crate::diffusion::{load_checkpoint, save_checkpoint, Denoiser, GaussianPrior, MlpConfig, MlpDenoiser, ModelMeta};
use crate::diffusion::{train_denoiser, NoiseSchedule, TrainConfig, TrainingExample};
use crate::error::{Error, Result};
use crate::field::{Field, Shape};
use crate::harness::task::{augment, level_examples};
use crate::io::{load_field, save_field};
use crate::operators::{make_sr_operator, Measurement};
use crate::posterior::{cascade_solve, conditioned_sr, diffpir_solve, dps_solve, CascadeSpec, SamplerConfig};
use crate::posterior::config::parse_kv;
use crate::rng::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Algo {
    /// Single-scale DiffPIR with the full-resolution model.
    Diffpir,
    /// DPS with the fitted Gaussian prior.
    Dps,
    /// Scale-cascaded DiffPIR over 2 or 3 levels.
    Cascade(usize),
    /// 2x only: the level-1 model conditioned on `up(y)`.
    Level1,
}

impl fmt::Display for Algo {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Algo::Diffpir => f.write_str("diffpir"),
            Algo::Dps => f.write_str("dps"),
            Algo::Cascade(l) => write!(f, "cascade{l}"),
            Algo::Level1 => f.write_str("level1"),
        }
    }
}

impl FromStr for Algo {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "diffpir" => Ok(Algo::Diffpir),
            "dps" => Ok(Algo::Dps),
            "cascade2" => Ok(Algo::Cascade(2)),
            "cascade" | "cascade3" => Ok(Algo::Cascade(3)),
            "level1" => Ok(Algo::Level1),
            _ => Err(Error::Config(format!("unknown algorithm `{s}`"))),
        }
    }
}

/// Checkpoint file name for the level-`level` model of a `num_levels` cascade.
///
/// The conditioned level-1 model is the same for every depth (it always sees
/// `up(down x)`), so it has a single name.
pub fn model_file(level: usize, num_levels: usize) -> String {
    match (level, num_levels) {
        (1, 1) => "single.ckpt".into(),
        (1, _) => "level1.ckpt".into(),
        (i, l) => format!("level{i}_of{l}.ckpt"),
    }
}

pub const PRIOR_MEAN_FILE: &str = "prior_mean.fld";
pub const PRIOR_FILE: &str = "prior.txt";

/// Trained models keyed by checkpoint file name, plus the optional Gaussian prior for DPS.
#[derive(Debug, Clone, Default)]
pub struct ModelSet {
    pub models: BTreeMap<String, MlpDenoiser>,
    pub prior: Option<GaussianPrior>,
}

impl ModelSet {
    pub fn insert(&mut self, model: MlpDenoiser) {
        let m = model.meta();
        self.models.insert(model_file(m.level, m.num_levels), model);
    }

    pub fn get(&self, level: usize, num_levels: usize) -> Result<&MlpDenoiser> {
        let name = model_file(level, num_levels);
        self.models.get(&name).ok_or_else(|| Error::Config(format!("model `{name}` is missing")))
    }

    pub fn prior(&self) -> Result<&GaussianPrior> {
        self.prior.as_ref().ok_or_else(|| Error::Config(format!("Gaussian prior (`{PRIOR_FILE}`) is missing")))
    }

    /// Loads every `*.ckpt` and the Gaussian prior when present.
    ///
    /// Models are keyed by the level recorded in their checkpoint, not by file name.
    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let mut set = Self::default();
        let mut paths: Vec<_> = fs::read_dir(dir)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "ckpt"))
            .collect();
        paths.sort();
        for p in paths {
            let m = load_checkpoint(&p)?;
            let key = model_file(m.meta().level, m.meta().num_levels);
            if set.models.contains_key(&key) {
                return Err(Error::Config(format!("{} duplicates the `{key}` model", p.display())));
            }
            set.models.insert(key, m);
        }
        if dir.join(PRIOR_FILE).exists() {
            set.prior = Some(load_prior(dir)?);
        }
        Ok(set)
    }

    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir)?;
        for (name, m) in &self.models {
            save_checkpoint(m, dir.join(name))?;
        }
        if let Some(p) = &self.prior {
            save_prior(p, dir)?;
        }
        Ok(())
    }
}

pub fn save_prior(p: &GaussianPrior, dir: &Path) -> Result<()> {
    save_field(p.mean(), dir.join(PRIOR_MEAN_FILE))?;
    fs::write(dir.join(PRIOR_FILE), format!("variance={:e}\nmean={PRIOR_MEAN_FILE}\n", p.variance()))?;
    Ok(())
}

pub fn load_prior(dir: &Path) -> Result<GaussianPrior> {
    let kv = parse_kv(&fs::read_to_string(dir.join(PRIOR_FILE))?)?;
    let var = kv
        .get("variance")
        .and_then(|v| v.parse().ok())
        .ok_or_else(|| Error::Config(format!("`{PRIOR_FILE}` needs a numeric variance")))?;
    let mean_file = kv.get("mean").map(String::as_str).unwrap_or(PRIOR_MEAN_FILE);
    GaussianPrior::new(load_field(dir.join(mean_file))?, var)
}

/// Runs one algorithm on `y` for a `factor`x problem.
pub fn solve(algo: Algo, y: &Field, factor: usize, models: &ModelSet, cfg: &SamplerConfig, sigma_n: f64) -> Result<Field> {
    let base = Shape { height: y.height() * factor, width: y.width() * factor, ..y.shape() };
    match algo {
        Algo::Diffpir => {
            let m = Measurement::new(y.clone(), make_sr_operator(factor)?, sigma_n, base)?;
            diffpir_solve(&m, models.get(1, 1)?, cfg, &[])
        }
        Algo::Dps => {
            let m = Measurement::new(y.clone(), make_sr_operator(factor)?, sigma_n, base)?;
            dps_solve(&m, models.prior()?, cfg)
        }
        Algo::Cascade(l) => {
            let denoisers: Vec<&dyn Denoiser> =
                (1..=l).map(|i| models.get(i, l).map(|m| m as &dyn Denoiser)).collect::<Result<_>>()?;
            Ok(cascade_solve(y, &CascadeSpec::new(denoisers, factor)?, cfg, sigma_n)?.0)
        }
        Algo::Level1 => {
            if factor != 2 {
                return Err(Error::Config(format!("level1 mode is 2x only, got factor {factor}")));
            }
            Ok(conditioned_sr(y, models.get(1, 2)?, cfg, sigma_n)?.0)
        }
    }
}

/// Architecture for the level-`level` model on `d x d` images: hidden width shrinks with resolution.
pub fn default_mlp_config(d: usize, level: usize, num_levels: usize, hidden: usize) -> Result<MlpConfig> {
    let f = 1 << (level - 1);
    if !d.is_multiple_of(f) {
        return Err(Error::Config(format!("size {d} has no level {level}")));
    }
    let width = (hidden / f).max(32);
    Ok(MlpConfig {
        shape: Shape::new(d / f, d / f, 1)?,
        num_cond: usize::from(num_levels > 1 && level < num_levels),
        hidden: vec![width, width],
        embed_dim: 16,
        sigma_data: 1.0,
        cond_scale: 1.0,
    })
}

fn rms<'a>(fields: impl Iterator<Item = &'a Field>) -> f64 {
    let (mut s, mut n) = (0.0, 0usize);
    for f in fields {
        s += f.norm_sq();
        n += f.data().len();
    }
    if n == 0 || s == 0.0 {
        1.0
    } else {
        (s / n as f64).sqrt()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LevelTraining {
    pub level: usize,
    pub num_levels: usize,
    /// Hidden width at full resolution; halves per level.
    pub hidden: usize,
    /// Train on the eight symmetric copies of each image.
    pub augment: bool,
    /// Random cyclic translations added per symmetric copy (periodic data only).
    pub shifts: usize,
    pub train: TrainConfig,
    pub schedule: NoiseSchedule,
}

/// Trains one cascade level (or the single-scale model) from full-resolution images.
pub fn train_level(images: &[Field], spec: &LevelTraining) -> Result<(MlpDenoiser, Vec<f64>)> {
    let first = images.first().ok_or_else(|| Error::InvalidArgument("no training images".into()))?;
    if first.height() != first.width() {
        return Err(Error::InvalidShape(format!("training images must be square, got {}", first.shape())));
    }
    let mut rng = Rng::new(spec.train.seed).fork(1_000 + spec.level as u64);
    let pool = if spec.augment { augment(images, spec.shifts, &mut rng.fork(0))? } else { images.to_vec() };
    let data: Vec<TrainingExample> = level_examples(&pool, spec.level, spec.num_levels)?;
    let mut cfg = default_mlp_config(first.height(), spec.level, spec.num_levels, spec.hidden)?;
    cfg.sigma_data = rms(data.iter().map(|e| &e.target));
    cfg.cond_scale = rms(data.iter().flat_map(|e| e.cond.iter()));
    let mut model = MlpDenoiser::new(cfg, &mut rng)?;
    model.set_meta(ModelMeta { level: spec.level, num_levels: spec.num_levels, schedule: spec.schedule });
    train_denoiser(model, &data, &spec.schedule, &spec.train)
}
