use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::diffusion::NoiseSchedule;
use crate::error::{Error, Result};
use crate::operators::CgOptions;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SamplerConfig {
    /// Noise range and spacing; its step count is replaced by the per-run budget.
    pub schedule: NoiseSchedule,
    pub total_steps: usize,
    /// Data-consistency strength `lambda` in `tau_t = lambda * max(sigma_n, 1e-3)^2 / sigma_t^2`.
    pub lambda: f64,
    /// DPS guidance scale.
    pub zeta: f64,
    pub seed: u64,
    pub cg: CgOptions,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            schedule: NoiseSchedule::default(),
            total_steps: 200,
            lambda: 1.0,
            zeta: 0.3,
            seed: 0,
            cg: CgOptions::default(),
        }
    }
}

/// Floor applied to the measurement noise when weighting the data term.
pub const NOISE_FLOOR: f64 = 1e-3;

impl SamplerConfig {
    pub fn validate(&self, num_levels: usize) -> Result<()> {
        self.schedule.validate()?;
        if self.total_steps < 2 * num_levels.max(1) {
            return Err(Error::Config(format!(
                "total_steps {} is below 2 x {num_levels} levels",
                self.total_steps
            )));
        }
        if !(self.lambda > 0.0) || !(self.zeta >= 0.0) {
            return Err(Error::Config("lambda must be positive and zeta non-negative".into()));
        }
        Ok(())
    }

    /// Schedule with `steps` steps over the configured noise range.
    pub fn schedule_with(&self, steps: usize) -> Result<NoiseSchedule> {
        self.schedule.with_steps(steps)
    }

    /// Proximal weight at noise level `sigma`.
    pub fn tau(&self, noise_sigma: f64, sigma: f64) -> f64 {
        let sn = noise_sigma.max(NOISE_FLOOR);
        self.lambda * sn * sn / (sigma * sigma)
    }

    /// Flat `key=value` text; one entry per line.
    pub fn to_kv(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "sigma_min={}", self.schedule.sigma_min);
        let _ = writeln!(s, "sigma_max={}", self.schedule.sigma_max);
        let _ = writeln!(s, "rho={}", self.schedule.rho);
        let _ = writeln!(s, "total_steps={}", self.total_steps);
        let _ = writeln!(s, "lambda={}", self.lambda);
        let _ = writeln!(s, "zeta={}", self.zeta);
        let _ = writeln!(s, "seed={}", self.seed);
        let _ = writeln!(s, "cg_tol={}", self.cg.tol);
        let _ = writeln!(s, "cg_max_iter={}", self.cg.max_iter);
        s
    }

    /// Parses `key=value` text; missing keys keep their defaults, unknown keys are errors.
    pub fn from_kv(text: &str) -> Result<Self> {
        let map = parse_kv(text)?;
        let mut cfg = Self::default();
        for (k, v) in &map {
            let bad = || Error::Config(format!("bad value `{v}` for `{k}`"));
            match k.as_str() {
                "sigma_min" => cfg.schedule.sigma_min = v.parse().map_err(|_| bad())?,
                "sigma_max" => cfg.schedule.sigma_max = v.parse().map_err(|_| bad())?,
                "rho" => cfg.schedule.rho = v.parse().map_err(|_| bad())?,
                "total_steps" => cfg.total_steps = v.parse().map_err(|_| bad())?,
                "lambda" => cfg.lambda = v.parse().map_err(|_| bad())?,
                "zeta" => cfg.zeta = v.parse().map_err(|_| bad())?,
                "seed" => cfg.seed = v.parse().map_err(|_| bad())?,
                "cg_tol" => cfg.cg.tol = v.parse().map_err(|_| bad())?,
                "cg_max_iter" => cfg.cg.max_iter = v.parse().map_err(|_| bad())?,
                _ => return Err(Error::Config(format!("unknown key `{k}`"))),
            }
        }
        cfg.schedule.num_steps = cfg.total_steps;
        cfg.validate(1)?;
        Ok(cfg)
    }
}

/// Parses flat `key=value` lines; `#` starts a comment.
pub fn parse_kv(text: &str) -> Result<BTreeMap<String, String>> {
    let mut map = BTreeMap::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("line {}: expected key=value", n + 1)))?;
        if map.insert(k.trim().to_string(), v.trim().to_string()).is_some() {
            return Err(Error::Config(format!("line {}: duplicate key `{}`", n + 1, k.trim())));
        }
    }
    Ok(map)
}
