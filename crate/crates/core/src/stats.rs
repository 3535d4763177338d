//! Running sample moments for the statistical oracles.

/// Two-sided standard-normal critical value at significance `1e-3`.
pub const Z_CRIT_1E3: f64 = 3.2905267314919255;

/// Per-coordinate running mean and variance (Welford).
#[derive(Debug, Clone)]
pub struct MomentAccumulator {
    count: usize,
    mean: Vec<f64>,
    m2: Vec<f64>,
}

/// Distance of a sample mean from a target, in standard errors.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeanTest {
    /// `||mean - target||`.
    pub distance: f64,
    /// `sqrt(sum_i var_i / n)`, the expected distance under the null.
    pub standard_error: f64,
    /// Largest per-coordinate `|mean_i - target_i| / sqrt(var_i / n)`.
    pub max_z: f64,
}

impl MeanTest {
    pub fn ratio(&self) -> f64 {
        self.distance / self.standard_error
    }

    /// `distance <= k * standard_error`.
    pub fn passes(&self, k: f64) -> bool {
        self.distance <= k * self.standard_error
    }
}

impl MomentAccumulator {
    pub fn new(dim: usize) -> Self {
        Self { count: 0, mean: vec![0.0; dim], m2: vec![0.0; dim] }
    }

    pub fn push(&mut self, x: &[f64]) {
        assert_eq!(x.len(), self.mean.len(), "sample dimension");
        self.count += 1;
        let n = self.count as f64;
        for ((m, s), &v) in self.mean.iter_mut().zip(&mut self.m2).zip(x) {
            let d = v - *m;
            *m += d / n;
            *s += d * (v - *m);
        }
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    /// Unbiased per-coordinate variance.
    pub fn variance(&self) -> Vec<f64> {
        let d = (self.count.max(2) - 1) as f64;
        self.m2.iter().map(|s| s / d).collect()
    }

    pub fn mean_test(&self, target: &[f64]) -> MeanTest {
        let n = self.count as f64;
        let var = self.variance();
        let distance = self.mean.iter().zip(target).map(|(m, t)| (m - t).powi(2)).sum::<f64>().sqrt();
        let standard_error = (var.iter().sum::<f64>() / n).sqrt();
        let max_z = self
            .mean
            .iter()
            .zip(target)
            .zip(&var)
            .map(|((m, t), v)| (m - t).abs() / (v / n).sqrt())
            .fold(0.0, f64::max);
        MeanTest { distance, standard_error, max_z }
    }

    /// Per-coordinate z-scores of the mean against a known mean and variance.
    pub fn mean_z(&self, mean: f64, variance: f64) -> Vec<f64> {
        let se = (variance / self.count as f64).sqrt();
        self.mean.iter().map(|m| (m - mean) / se).collect()
    }

    /// Per-coordinate z-scores of the sample variance, using `Var(s^2) = 2 v^2 / (n - 1)` for Gaussian data.
    pub fn variance_z(&self, variance: f64) -> Vec<f64> {
        let se = variance * (2.0 / (self.count as f64 - 1.0)).sqrt();
        self.variance().iter().map(|s| (s - variance) / se).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;

    #[test]
    fn matches_two_pass_formulas() {
        let data = [[1.0, -2.0], [3.0, 0.5], [2.5, 4.0], [-1.0, 1.0]];
        let mut acc = MomentAccumulator::new(2);
        data.iter().for_each(|d| acc.push(d));
        for j in 0..2 {
            let m = data.iter().map(|d| d[j]).sum::<f64>() / 4.0;
            let v = data.iter().map(|d| (d[j] - m).powi(2)).sum::<f64>() / 3.0;
            assert!((acc.mean()[j] - m).abs() < 1e-14);
            assert!((acc.variance()[j] - v).abs() < 1e-14);
        }
    }

    #[test]
    fn null_samples_sit_near_one_standard_error() {
        let mut rng = Rng::new(5);
        let mut acc = MomentAccumulator::new(64);
        for _ in 0..400 {
            let x: Vec<f64> = (0..64).map(|_| 2.0 * rng.normal()).collect();
            acc.push(&x);
        }
        let t = acc.mean_test(&[0.0; 64]);
        assert!(t.ratio() > 0.7 && t.ratio() < 1.3, "{t:?}");
        assert!(acc.variance_z(4.0).iter().all(|z| z.abs() < 5.0));
    }
}
