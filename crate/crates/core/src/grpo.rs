//! Group-relative advantages and the clipped, KL-regularized policy
//! objective, as plain functions over numbers.

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const DEFAULT_STD_FLOOR: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GrpoError {
    #[error("group is empty")]
    EmptyGroup,
    #[error("{ratios} ratios but {advantages} advantages")]
    LengthMismatch { ratios: usize, advantages: usize },
    #[error("invalid parameters: {0}")]
    InvalidParams(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GrpoParams {
    /// Clip radius around a ratio of 1.
    pub epsilon: f64,
    /// KL penalty coefficient.
    pub beta: f64,
    pub std_floor: f64,
}

impl Default for GrpoParams {
    fn default() -> Self {
        GrpoParams {
            epsilon: 0.2,
            beta: 0.01,
            std_floor: DEFAULT_STD_FLOOR,
        }
    }
}

impl GrpoParams {
    pub fn validate(&self) -> Result<(), GrpoError> {
        if !(self.epsilon > 0.0) {
            return Err(GrpoError::InvalidParams("epsilon must be positive"));
        }
        if !(self.beta >= 0.0) {
            return Err(GrpoError::InvalidParams("beta must be non-negative"));
        }
        if !(self.std_floor > 0.0) {
            return Err(GrpoError::InvalidParams("std_floor must be positive"));
        }
        Ok(())
    }
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Population standard deviation (no Bessel correction).
pub fn population_std(xs: &[f64]) -> f64 {
    let m = mean(xs);
    (xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / xs.len() as f64).sqrt()
}

/// `(r_i - mean) / max(std, floor)` with the population std of the group.
/// A zero-variance group maps to all zeros. Empty in, empty out.
pub fn advantages_with_floor(rewards: &[f64], std_floor: f64) -> Vec<f64> {
    if rewards.is_empty() {
        return Vec::new();
    }
    let m = mean(rewards);
    let denom = population_std(rewards).max(std_floor);
    rewards.iter().map(|r| (r - m) / denom).collect()
}

pub fn advantages(rewards: &[f64]) -> Vec<f64> {
    advantages_with_floor(rewards, DEFAULT_STD_FLOOR)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RolloutGroup {
    pub input_id: String,
    pub rewards: Vec<f64>,
    pub advantages: Vec<f64>,
}

impl RolloutGroup {
    pub fn new(input_id: impl Into<String>, rewards: Vec<f64>, std_floor: f64) -> Result<Self, GrpoError> {
        if rewards.is_empty() {
            return Err(GrpoError::EmptyGroup);
        }
        let advantages = advantages_with_floor(&rewards, std_floor);
        Ok(RolloutGroup {
            input_id: input_id.into(),
            rewards,
            advantages,
        })
    }

    pub fn size(&self) -> usize {
        self.rewards.len()
    }
}

/// `min(ratio * A, clip(ratio, 1 - eps, 1 + eps) * A)` for one rollout.
pub fn clipped_term(ratio: f64, advantage: f64, epsilon: f64) -> f64 {
    let clipped = ratio.clamp(1.0 - epsilon, 1.0 + epsilon);
    (ratio * advantage).min(clipped * advantage)
}

/// Mean clipped surrogate over the group minus `beta * kl`.
pub fn grpo_objective(ratios: &[f64], advantages: &[f64], kl: f64, params: &GrpoParams) -> Result<f64, GrpoError> {
    params.validate()?;
    if ratios.len() != advantages.len() {
        return Err(GrpoError::LengthMismatch {
            ratios: ratios.len(),
            advantages: advantages.len(),
        });
    }
    if ratios.is_empty() {
        return Err(GrpoError::EmptyGroup);
    }
    let surrogate = ratios
        .iter()
        .zip(advantages)
        .map(|(&r, &a)| clipped_term(r, a, params.epsilon))
        .sum::<f64>()
        / ratios.len() as f64;
    Ok(surrogate - params.beta * kl)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn balanced_binary_group() {
        assert_eq!(advantages(&[1.0, 0.0, 0.0, 1.0]), vec![1.0, -1.0, -1.0, 1.0]);
    }

    #[test]
    fn constant_group_is_zero() {
        assert_eq!(advantages(&[3.0; 4]), vec![0.0; 4]);
        assert!(advantages(&[]).is_empty());
        assert_eq!(RolloutGroup::new("x", vec![], 1e-8), Err(GrpoError::EmptyGroup));
    }

    #[test]
    fn objective_examples() {
        let p = GrpoParams { beta: 0.0, ..Default::default() };
        let adv = [0.5, -1.0, 2.0];
        let got = grpo_objective(&[1.0; 3], &adv, 5.0, &p).unwrap();
        assert!((got - 0.5).abs() < 1e-15);
        assert!((grpo_objective(&[2.0], &[1.0], 0.0, &p).unwrap() - 1.2).abs() < 1e-15);
        let p = GrpoParams::default();
        assert!((grpo_objective(&[1.3, 0.7], &[0.0, 0.0], 3.0, &p).unwrap() + 0.03).abs() < 1e-15);
    }

    #[test]
    fn objective_rejects_bad_input() {
        let p = GrpoParams::default();
        assert!(matches!(grpo_objective(&[1.0], &[1.0, 2.0], 0.0, &p), Err(GrpoError::LengthMismatch { .. })));
        assert_eq!(grpo_objective(&[], &[], 0.0, &p), Err(GrpoError::EmptyGroup));
        let bad = GrpoParams { epsilon: 0.0, ..p };
        assert!(grpo_objective(&[1.0], &[1.0], 0.0, &bad).is_err());
    }
}
