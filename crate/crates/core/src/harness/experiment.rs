use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use crate::error::{Error, Result};
use crate::field::Field;
use crate::harness::models::{solve, Algo, ModelSet};
use crate::harness::task::make_sr_task;
use crate::io::{load_field, save_field};
use crate::metrics::{format_metric, ImageMetrics, MetricReport};
use crate::posterior::config::parse_kv;
use crate::posterior::SamplerConfig;
use crate::rng::Rng;

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub factor: usize,
    pub algos: Vec<Algo>,
    pub sampler: SamplerConfig,
    pub sigma_n: f64,
    /// Seeds the measurement noise; image `i` uses `Rng::new(seed).fork(i)`.
    pub seed: u64,
    /// Repeated solves of the first image used for the median wall-clock time; 0 disables timing.
    pub timing_repeats: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self { factor: 4, algos: vec![], sampler: SamplerConfig::default(), sigma_n: 0.01, seed: 0, timing_repeats: 3 }
    }
}

impl ExperimentConfig {
    /// `factor`, `algos` (comma separated), `sigma_n`, `seed`, `timing_repeats`; other keys go to [`SamplerConfig`].
    pub fn from_kv(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        let mut rest = String::new();
        for (k, v) in parse_kv(text)? {
            let bad = || Error::Config(format!("bad value `{v}` for `{k}`"));
            match k.as_str() {
                "factor" => cfg.factor = v.parse().map_err(|_| bad())?,
                "algos" => {
                    cfg.algos = v.split(',').map(str::trim).filter(|s| !s.is_empty()).map(str::parse).collect::<Result<_>>()?
                }
                "sigma_n" => cfg.sigma_n = v.parse().map_err(|_| bad())?,
                "seed" => cfg.seed = v.parse().map_err(|_| bad())?,
                "timing_repeats" => cfg.timing_repeats = v.parse().map_err(|_| bad())?,
                _ => {
                    let _ = writeln!(rest, "{k}={v}");
                }
            }
        }
        cfg.sampler = SamplerConfig::from_kv(&rest)?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone)]
pub struct AlgoResult {
    pub algo: Algo,
    pub report: MetricReport,
    pub outputs: Vec<Field>,
    /// Median wall-clock seconds per solve; NaN when timing is disabled.
    pub median_seconds: f64,
}

fn median(mut v: Vec<f64>) -> f64 {
    if v.is_empty() {
        return f64::NAN;
    }
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Median wall-clock seconds of `repeats` calls.
pub fn time_median(repeats: usize, mut f: impl FnMut() -> Result<()>) -> Result<f64> {
    let mut t = Vec::with_capacity(repeats);
    for _ in 0..repeats {
        let start = Instant::now();
        f()?;
        t.push(start.elapsed().as_secs_f64());
    }
    Ok(median(t))
}

/// Degrades every image with the same noise for all algorithms, solves, and scores.
///
/// The sampler seed for image `i` is `sampler.seed + i`.
pub fn run_experiment(cfg: &ExperimentConfig, models: &ModelSet, images: &[(String, Field)]) -> Result<Vec<AlgoResult>> {
    let root = Rng::new(cfg.seed);
    let tasks = images
        .iter()
        .enumerate()
        .map(|(i, (_, x))| Ok(make_sr_task(x, cfg.factor, cfg.sigma_n, &mut root.fork(i as u64))?.y().clone()))
        .collect::<Result<Vec<_>>>()?;
    let mut results = Vec::with_capacity(cfg.algos.len());
    for &algo in &cfg.algos {
        let mut report = MetricReport::default();
        let mut outputs = Vec::with_capacity(images.len());
        for (i, ((name, x), y)) in images.iter().zip(&tasks).enumerate() {
            let sampler = SamplerConfig { seed: cfg.sampler.seed.wrapping_add(i as u64), ..cfg.sampler };
            let xhat = solve(algo, y, cfg.factor, models, &sampler, cfg.sigma_n)?;
            report.push(ImageMetrics::compute(name.clone(), &xhat, x)?);
            outputs.push(xhat);
        }
        let median_seconds = match tasks.first() {
            Some(y) if cfg.timing_repeats > 0 => time_median(cfg.timing_repeats, || {
                solve(algo, y, cfg.factor, models, &cfg.sampler, cfg.sigma_n).map(|_| ())
            })?,
            _ => f64::NAN,
        };
        results.push(AlgoResult { algo, report, outputs, median_seconds });
    }
    Ok(results)
}

/// `algo,filename,psnr_db,ssim` rows for every algorithm.
pub fn metrics_csv(results: &[AlgoResult]) -> String {
    let mut s = String::from("algo,filename,psnr_db,ssim\n");
    for r in results {
        for m in &r.report.images {
            let _ = writeln!(s, "{},{},{},{}", r.algo, m.name, format_metric(m.psnr_db), format_metric(m.ssim));
        }
    }
    s
}

pub fn summary_csv(results: &[AlgoResult]) -> String {
    let mut s = String::from("algo,count,psnr_mean,psnr_std,ssim_mean,ssim_std\n");
    for r in results {
        let (pm, ps) = r.report.psnr_stats();
        let (sm, ss) = r.report.ssim_stats();
        let _ = writeln!(
            s,
            "{},{},{},{},{},{}",
            r.algo,
            r.report.images.len(),
            format_metric(pm),
            format_metric(ps),
            format_metric(sm),
            format_metric(ss)
        );
    }
    s
}

pub fn timing_csv(results: &[AlgoResult]) -> String {
    let mut s = String::from("algo,median_seconds\n");
    for r in results {
        let _ = writeln!(s, "{},{:.6}", r.algo, r.median_seconds);
    }
    s
}

/// Writes reconstructions under `out/<algo>/`, plus `metrics.csv`, `summary.csv` and `timing.csv`.
pub fn write_experiment(results: &[AlgoResult], names: &[String], out: &Path) -> Result<()> {
    fs::create_dir_all(out)?;
    for r in results {
        let dir = out.join(r.algo.to_string());
        fs::create_dir_all(&dir)?;
        for (name, x) in names.iter().zip(&r.outputs) {
            save_field(x, dir.join(name))?;
        }
    }
    fs::write(out.join("metrics.csv"), metrics_csv(results))?;
    fs::write(out.join("summary.csv"), summary_csv(results))?;
    fs::write(out.join("timing.csv"), timing_csv(results))?;
    Ok(())
}

/// `*.fld` files in `dir`, sorted by name.
pub fn list_fields(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut v: Vec<PathBuf> = fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "fld"))
        .collect();
    v.sort();
    Ok(v)
}

pub fn load_dataset(dir: &Path) -> Result<Vec<(String, Field)>> {
    list_fields(dir)?
        .into_iter()
        .map(|p| Ok((p.file_name().unwrap().to_string_lossy().into_owned(), load_field(&p)?)))
        .collect()
}

pub fn save_dataset(images: &[Field], dir: &Path, prefix: &str) -> Result<Vec<String>> {
    fs::create_dir_all(dir)?;
    images
        .iter()
        .enumerate()
        .map(|(i, x)| {
            let name = format!("{prefix}_{i:04}.fld");
            save_field(x, dir.join(&name))?;
            Ok(name)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffusion::GaussianPrior;
    use crate::harness::phantoms::{generate_phantoms, PhantomKind, PhantomSpec};

    fn setup() -> (ModelSet, Vec<(String, Field)>) {
        let imgs = generate_phantoms(&PhantomSpec { kind: PhantomKind::Ellipses, size: 16, count: 2, ..PhantomSpec::default() }).unwrap();
        let models = ModelSet { prior: Some(GaussianPrior::new(Field::constant(imgs[0].shape(), 0.2), 0.1).unwrap()), ..ModelSet::default() };
        (models, imgs.into_iter().enumerate().map(|(i, x)| (format!("p{i}.fld"), x)).collect())
    }

    #[test]
    fn empty_algo_set_is_empty_report() {
        let (models, data) = setup();
        let res = run_experiment(&ExperimentConfig::default(), &models, &data).unwrap();
        assert!(res.is_empty());
        assert_eq!(metrics_csv(&res), "algo,filename,psnr_db,ssim\n");
    }

    #[test]
    fn rerun_gives_identical_rows() {
        let (models, data) = setup();
        let cfg = ExperimentConfig {
            factor: 2,
            algos: vec![Algo::Dps],
            sampler: SamplerConfig { total_steps: 20, ..SamplerConfig::default() },
            timing_repeats: 1,
            ..ExperimentConfig::default()
        };
        let a = run_experiment(&cfg, &models, &data).unwrap();
        let b = run_experiment(&cfg, &models, &data).unwrap();
        assert_eq!(metrics_csv(&a), metrics_csv(&b));
        assert_eq!(a[0].report.images.len(), 2);

        let dir = tempfile::tempdir().unwrap();
        let names: Vec<String> = data.iter().map(|d| d.0.clone()).collect();
        write_experiment(&a, &names, dir.path()).unwrap();
        let back = load_dataset(&dir.path().join("dps")).unwrap();
        assert_eq!(back[0].1, a[0].outputs[0]);
        assert!(fs::read_to_string(dir.path().join("timing.csv")).unwrap().starts_with("algo,median_seconds\ndps,"));
    }

    #[test]
    fn missing_models_are_errors() {
        let (models, data) = setup();
        let cfg = ExperimentConfig { factor: 2, algos: vec![Algo::Diffpir], ..ExperimentConfig::default() };
        assert!(run_experiment(&cfg, &models, &data).is_err());
    }

    #[test]
    fn config_text() {
        let cfg = ExperimentConfig::from_kv("factor=2\nalgos=diffpir, cascade2\nsigma_n=0.02\ntotal_steps=50\nlambda=2\n").unwrap();
        assert_eq!(cfg.algos, vec![Algo::Diffpir, Algo::Cascade(2)]);
        assert_eq!(cfg.sampler.total_steps, 50);
        assert_eq!(cfg.sampler.lambda, 2.0);
        assert!(ExperimentConfig::from_kv("algos=nope").is_err());
        assert_eq!(median(vec![3.0, 1.0, 2.0]), 2.0);
    }
}
