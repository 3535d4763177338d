use crate::error::{Error, Result};

/// Karras-spaced noise levels for a variance-exploding process `x_t = x_0 + sigma_t * eps`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseSchedule {
    pub sigma_min: f64,
    pub sigma_max: f64,
    pub rho: f64,
    pub num_steps: usize,
}

impl Default for NoiseSchedule {
    fn default() -> Self {
        Self { sigma_min: 0.01, sigma_max: 10.0, rho: 7.0, num_steps: 200 }
    }
}

impl NoiseSchedule {
    pub fn new(sigma_min: f64, sigma_max: f64, rho: f64, num_steps: usize) -> Result<Self> {
        let s = Self { sigma_min, sigma_max, rho, num_steps };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma_min > 0.0 && self.sigma_min < self.sigma_max && self.sigma_max.is_finite()) {
            return Err(Error::Config(format!(
                "need 0 < sigma_min < sigma_max, got {} and {}",
                self.sigma_min, self.sigma_max
            )));
        }
        if !(self.rho > 0.0 && self.rho.is_finite()) {
            return Err(Error::Config(format!("rho must be positive, got {}", self.rho)));
        }
        if self.num_steps < 2 {
            return Err(Error::Config(format!("need at least 2 steps, got {}", self.num_steps)));
        }
        Ok(())
    }

    /// Same spacing with a different step count.
    pub fn with_steps(&self, num_steps: usize) -> Result<Self> {
        Self::new(self.sigma_min, self.sigma_max, self.rho, num_steps)
    }

    pub fn sigma_at(&self, step: usize) -> Result<f64> {
        if step >= self.num_steps {
            return Err(Error::InvalidArgument(format!("step {step} outside 0..{}", self.num_steps)));
        }
        if step == 0 {
            return Ok(self.sigma_max);
        }
        if step == self.num_steps - 1 {
            return Ok(self.sigma_min);
        }
        let inv = 1.0 / self.rho;
        let (hi, lo) = (self.sigma_max.powf(inv), self.sigma_min.powf(inv));
        let frac = step as f64 / (self.num_steps - 1) as f64;
        Ok((hi + frac * (lo - hi)).powf(self.rho))
    }

    /// All noise levels, largest first.
    pub fn sigmas(&self) -> Vec<f64> {
        (0..self.num_steps).map(|i| self.sigma_at(i).expect("in range")).collect()
    }

    /// Noise level after step `step`; zero after the last step.
    pub fn next_sigma(&self, step: usize) -> f64 {
        if step + 1 >= self.num_steps {
            0.0
        } else {
            self.sigma_at(step + 1).expect("in range")
        }
    }
}
