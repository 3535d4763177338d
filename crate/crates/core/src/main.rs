use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use cascade_sr::diffusion::{save_checkpoint, NoiseSchedule, TrainConfig};
use cascade_sr::harness::{
    fit_gaussian_prior, generate_phantoms, load_dataset, make_sr_task, run_experiment, save_dataset, save_prior,
    solve, train_level, write_experiment, Algo, ExperimentConfig, LevelTraining, ModelSet, PhantomKind, PhantomSpec,
};
use cascade_sr::io::{load_field, save_field};
use cascade_sr::metrics::{ImageMetrics, MetricReport};
use cascade_sr::posterior::{flop_estimate, level_stages, SamplerConfig};
use cascade_sr::pyramid::{decompose, LaplacianPyramid, PyramidKernel};
use cascade_sr::Rng;

/// Scale-cascaded diffusion posterior sampling for super-resolution.
#[derive(Parser)]
#[command(version)]
struct Cli {
    /// Root that every relative path is resolved against.
    #[arg(long, global = true, default_value = ".")]
    workdir: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic phantom dataset as numbered .fld files.
    GenData {
        #[arg(long, default_value = "texture")]
        kind: PhantomKind,
        #[arg(long, default_value_t = 32)]
        size: usize,
        #[arg(long, default_value_t = 200)]
        count: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Spectral exponent of the power-law textures.
        #[arg(long, default_value_t = 2.0)]
        exponent: f64,
        #[arg(long, default_value_t = 8)]
        max_ellipses: usize,
        #[arg(long, default_value = "img")]
        prefix: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the denoiser for one pyramid level of an L-level cascade (level 1 of 1 is the single-scale model).
    Train(TrainArgs),
    /// Fit the isotropic Gaussian prior used by DPS.
    FitPrior {
        #[arg(long)]
        data: PathBuf,
        /// Model directory to write prior.txt and prior_mean.fld into.
        #[arg(long)]
        out: PathBuf,
    },
    /// Simulate a measurement y = H x + noise.
    Degrade {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value_t = 4)]
        factor: usize,
        #[arg(long, default_value_t = 0.01)]
        sigma_n: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Super-resolve one measurement.
    Solve(SolveArgs),
    /// Score predictions against references with matching file names.
    Eval {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long = "ref")]
        reference: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Degrade, solve and score a dataset with several algorithms, timing each.
    Bench(BenchArgs),
    /// Write the Laplacian pyramid levels of a field as <prefix>.l<i>.fld.
    Decompose {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value_t = 3)]
        levels: usize,
        #[arg(long)]
        out_prefix: PathBuf,
    },
    /// Rebuild a field from <prefix>.l<i>.fld levels.
    Reconstruct {
        #[arg(long)]
        prefix: PathBuf,
        #[arg(long, default_value_t = 3)]
        levels: usize,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long, default_value_t = 1)]
    level: usize,
    /// Number of pyramid levels of the cascade this model belongs to.
    #[arg(long, default_value_t = 1)]
    levels: usize,
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 3000)]
    steps: usize,
    /// Hidden width at full resolution; halved per level.
    #[arg(long, default_value_t = 512)]
    hidden: usize,
    #[arg(long, default_value_t = 32)]
    batch_size: usize,
    #[arg(long, default_value_t = 1e-3)]
    lr: f64,
    /// Random cyclic translations per symmetric copy; only meaningful for periodic data.
    #[arg(long, default_value_t = 4)]
    shifts: usize,
    /// Train on the images as given, without symmetric copies or translations.
    #[arg(long)]
    no_augment: bool,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct SolveArgs {
    /// diffpir, dps, cascade or level1.
    #[arg(long)]
    algo: Algo,
    #[arg(long, default_value_t = 4)]
    factor: usize,
    /// Pyramid levels; only cascade (2 or 3) uses more than one.
    #[arg(long)]
    levels: Option<usize>,
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    models: PathBuf,
    /// Overrides the seed from --config.
    #[arg(long)]
    seed: Option<u64>,
    /// key=value sampler settings.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value_t = 0.01)]
    sigma_n: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    models: PathBuf,
    /// key=value experiment settings; the flags below override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    factor: Option<usize>,
    /// Comma-separated algorithms, e.g. diffpir,cascade2,cascade3.
    #[arg(long)]
    algos: Option<String>,
    #[arg(long)]
    sigma_n: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    repeats: Option<usize>,
    #[arg(long)]
    out: PathBuf,
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn level_path(prefix: &Path, level: usize) -> PathBuf {
    let mut s = prefix.as_os_str().to_owned();
    s.push(format!(".l{level}.fld"));
    PathBuf::from(s)
}

fn resolve_algo(algo: Algo, levels: Option<usize>) -> Result<Algo> {
    Ok(match (algo, levels) {
        (Algo::Cascade(_), Some(l)) => Algo::Cascade(l),
        (a, None) => a,
        (Algo::Diffpir | Algo::Dps, Some(1)) => algo,
        (Algo::Level1, Some(2)) => algo,
        (a, Some(l)) => bail!("--levels {l} does not apply to {a}"),
    })
}

fn gen_data(spec: &PhantomSpec, prefix: &str, out: &Path) -> Result<()> {
    let images = generate_phantoms(spec)?;
    save_dataset(&images, out, prefix)?;
    println!("wrote {} phantoms to {}", images.len(), out.display());
    Ok(())
}

fn train(a: &TrainArgs, root: &Path) -> Result<()> {
    let data = load_dataset(&root.join(&a.data))?;
    let images: Vec<_> = data.into_iter().map(|(_, x)| x).collect();
    let spec = LevelTraining {
        level: a.level,
        num_levels: a.levels,
        hidden: a.hidden,
        augment: !a.no_augment,
        shifts: a.shifts,
        train: TrainConfig { steps: a.steps, batch_size: a.batch_size, learning_rate: a.lr, seed: a.seed, ..TrainConfig::default() },
        schedule: NoiseSchedule::default(),
    };
    let (model, trace) = train_level(&images, &spec)?;
    let tail = &trace[trace.len().saturating_sub(100)..];
    let loss = tail.iter().sum::<f64>() / tail.len().max(1) as f64;
    let out = root.join(&a.out);
    if let Some(dir) = out.parent() {
        fs::create_dir_all(dir)?;
    }
    save_checkpoint(&model, &out)?;
    println!("level {} of {}: {} parameters, final loss {loss:.5}, saved {}", a.level, a.levels, model.parameter_count(), out.display());
    Ok(())
}

fn solve_cmd(a: &SolveArgs, root: &Path) -> Result<()> {
    let mut cfg = match &a.config {
        Some(p) => SamplerConfig::from_kv(&read_text(&root.join(p))?)?,
        None => SamplerConfig::default(),
    };
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    let algo = resolve_algo(a.algo, a.levels)?;
    let y = load_field(root.join(&a.input))?;
    let models = ModelSet::load(root.join(&a.models))?;
    let x = solve(algo, &y, a.factor, &models, &cfg, a.sigma_n)?;
    save_field(&x, root.join(&a.out))?;
    Ok(())
}

fn eval(pred: &Path, reference: &Path, out: &Path) -> Result<()> {
    let mut report = MetricReport::default();
    for (name, r) in load_dataset(reference)? {
        let p = load_field(pred.join(&name)).with_context(|| format!("prediction for {name}"))?;
        report.push(ImageMetrics::compute(name, &p, &r)?);
    }
    if report.is_empty() {
        bail!("no .fld references in {}", reference.display());
    }
    fs::write(out, report.to_csv())?;
    let (p, _) = report.psnr_stats();
    let (s, _) = report.ssim_stats();
    println!("{} images: mean PSNR {p:.3} dB, mean SSIM {s:.4}", report.images.len());
    Ok(())
}

fn bench(a: &BenchArgs, root: &Path) -> Result<()> {
    let mut cfg = match &a.config {
        Some(p) => ExperimentConfig::from_kv(&read_text(&root.join(p))?)?,
        None => ExperimentConfig::default(),
    };
    if let Some(f) = a.factor {
        cfg.factor = f;
    }
    if let Some(s) = &a.algos {
        cfg.algos = s.split(',').map(str::trim).filter(|s| !s.is_empty()).map(str::parse).collect::<Result<_, _>>()?;
    }
    if let Some(s) = a.sigma_n {
        cfg.sigma_n = s;
    }
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    if let Some(r) = a.repeats {
        cfg.timing_repeats = r;
    }
    let models = ModelSet::load(root.join(&a.models))?;
    let data = load_dataset(&root.join(&a.data))?;
    let results = run_experiment(&cfg, &models, &data)?;
    let names: Vec<String> = data.iter().map(|(n, _)| n.clone()).collect();
    let out = root.join(&a.out);
    write_experiment(&results, &names, &out)?;
    println!("{:<10} {:>9} {:>8} {:>10} {:>12}", "algo", "psnr_db", "ssim", "seconds", "flops");
    for r in &results {
        let flops = match r.algo {
            Algo::Cascade(l) => {
                let costs = (1..=l).map(|i| Ok(models.get(i, l)?.parameter_count() as f64)).collect::<Result<Vec<_>>>()?;
                flop_estimate(&level_stages(&costs, cfg.sampler.total_steps)?)
            }
            Algo::Diffpir => models.get(1, 1)?.parameter_count() as f64 * cfg.sampler.total_steps as f64,
            Algo::Level1 => models.get(1, 2)?.parameter_count() as f64 * cfg.sampler.total_steps as f64,
            Algo::Dps => f64::NAN,
        };
        println!(
            "{:<10} {:>9.3} {:>8.4} {:>10.4} {:>12.4e}",
            r.algo.to_string(),
            r.report.psnr_stats().0,
            r.report.ssim_stats().0,
            r.median_seconds,
            flops
        );
    }
    Ok(())
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    let root = cli.workdir.as_path();
    match cli.command {
        Command::GenData { kind, size, count, seed, exponent, max_ellipses, prefix, out } => {
            let spec = PhantomSpec { kind, size, count, seed, spectral_exponent: exponent, max_ellipses };
            gen_data(&spec, &prefix, &root.join(out))
        }
        Command::Train(a) => train(&a, root),
        Command::FitPrior { data, out } => {
            let images: Vec<_> = load_dataset(&root.join(data))?.into_iter().map(|(_, x)| x).collect();
            let out = root.join(out);
            fs::create_dir_all(&out)?;
            save_prior(&fit_gaussian_prior(&images)?, &out)?;
            Ok(())
        }
        Command::Degrade { input, factor, sigma_n, seed, out } => {
            let x = load_field(root.join(input))?;
            let m = make_sr_task(&x, factor, sigma_n, &mut Rng::new(seed))?;
            save_field(m.y(), root.join(out))?;
            Ok(())
        }
        Command::Solve(a) => solve_cmd(&a, root),
        Command::Eval { pred, reference, out } => eval(&root.join(pred), &root.join(reference), &root.join(out)),
        Command::Bench(a) => bench(&a, root),
        Command::Decompose { input, levels, out_prefix } => {
            let p = decompose(&load_field(root.join(input))?, levels)?;
            let prefix = root.join(out_prefix);
            for i in 1..=levels {
                save_field(p.level(i), level_path(&prefix, i))?;
            }
            Ok(())
        }
        Command::Reconstruct { prefix, levels, out } => {
            let prefix = root.join(prefix);
            let coarsest_first = (1..=levels).rev().map(|i| load_field(level_path(&prefix, i))).collect::<Result<Vec<_>, _>>()?;
            let x = LaplacianPyramid::from_levels(coarsest_first, PyramidKernel::default())?.reconstruct()?;
            save_field(&x, root.join(out))?;
            Ok(())
        }
    }
}
