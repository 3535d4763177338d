use crate::diffusion::Denoiser;
use crate::error::Result;
use crate::posterior::cascade::{steps_per_level, CascadeSpec};

/// Steps taken with one model and that model's per-evaluation cost.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StageCost {
    pub steps: usize,
    pub model_cost: f64,
}

/// Total denoiser cost, `sum steps_i * cost_i`.
pub fn flop_estimate(stages: &[StageCost]) -> f64 {
    stages.iter().map(|s| s.steps as f64 * s.model_cost).sum()
}

/// One stage per level, with `total_steps` split as the cascade splits it.
pub fn cascade_stages(spec: &CascadeSpec<'_>, total_steps: usize) -> Result<Vec<StageCost>> {
    level_stages(&spec.denoisers.iter().map(|d| d.cost()).collect::<Vec<_>>(), total_steps)
}

/// Like [`cascade_stages`] from bare per-level costs; `costs[i - 1]` is level `i`.
pub fn level_stages(costs: &[f64], total_steps: usize) -> Result<Vec<StageCost>> {
    let steps = steps_per_level(total_steps, costs.len())?;
    Ok(steps.into_iter().zip(costs).map(|(steps, &model_cost)| StageCost { steps, model_cost }).collect())
}

pub fn single_scale_stages(denoiser: &dyn Denoiser, total_steps: usize) -> Vec<StageCost> {
    vec![StageCost { steps: total_steps, model_cost: denoiser.cost() }]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn worked_example() {
        let stages = level_stages(&[4e4, 2e4, 1e4], 200).unwrap();
        assert_eq!(stages.iter().map(|s| s.steps).collect::<Vec<_>>(), vec![68, 66, 66]);
        assert_eq!(flop_estimate(&stages), 66e4 + 66.0 * 2e4 + 68.0 * 4e4);
        assert_eq!(flop_estimate(&stages), 4.70e6);
    }

    #[test]
    fn single_scale_is_steps_times_cost() {
        assert_eq!(flop_estimate(&[StageCost { steps: 200, model_cost: 4e4 }]), 8e6);
    }

    #[test]
    fn smaller_coarse_models_cost_less() {
        let cascade = flop_estimate(&level_stages(&[4.0, 2.0, 1.0], 200).unwrap());
        let single = flop_estimate(&[StageCost { steps: 200, model_cost: 4.0 }]);
        assert!(cascade < single);
        let equal = flop_estimate(&level_stages(&[4.0, 4.0, 4.0], 200).unwrap());
        assert_eq!(equal, single);
    }
}
