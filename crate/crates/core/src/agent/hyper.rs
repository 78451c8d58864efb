use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::nn::A2cConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FcrLoss {
    /// Binary cross-entropy `-(v̄ ln v + (1 - v̄) ln(1 - v))`.
    Standard,
    /// `-(v̄ ln v + (v̄ - 1) ln(1 - v))`, as sometimes printed. Unbounded below.
    Literal,
    /// Squared error on the normalized values.
    Mse,
}

#[derive(Debug, Clone, PartialEq, Error)]
#[error("invalid hyperparameter: {0}")]
pub struct HyperError(pub String);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HyperParams {
    /// Low-level steps per high-level action.
    pub c: usize,
    /// High-level steps per episode; `None` runs the scenario's full episode.
    pub t: Option<usize>,
    pub gamma: f64,
    /// Weight of the low-level feedback in the high-level reward.
    pub alpha: f64,
    /// Cross penalty for choosing a controllable cut.
    pub m: f64,
    /// Per-step length penalty.
    pub n: f64,
    /// Reward margin.
    pub omega: f64,
    /// Inside-distance scale.
    pub upsilon: f64,
    /// Sub-goal half-width, in normalized units.
    pub subgoal_epsilon: f64,
    /// Multiplier from normalized units to sub-goal reward units.
    pub subgoal_scale: f64,
    /// Longest chain of nested cuts (views = cuts + 1).
    pub max_cuts: usize,
    pub explore_start: f64,
    pub explore_end: f64,
    /// Control every entry variable directly instead of reconstructing the
    /// companions of the first one.
    pub full_action_head: bool,
    pub init_log_std: f64,
    pub fcr_hidden: usize,
    pub fcr_lr: f64,
    pub fcr_loss: FcrLoss,
    pub low: A2cConfig,
    pub high: A2cConfig,
}

impl Default for HyperParams {
    fn default() -> Self {
        HyperParams {
            c: 10,
            t: None,
            gamma: 0.99,
            alpha: 1.0,
            m: 1.0,
            n: 0.1,
            omega: 24.0,
            upsilon: 0.1,
            subgoal_epsilon: 0.02,
            subgoal_scale: 20.0,
            max_cuts: 1,
            explore_start: 0.3,
            explore_end: 0.05,
            full_action_head: false,
            init_log_std: -0.5,
            fcr_hidden: 32,
            fcr_lr: 0.05,
            fcr_loss: FcrLoss::Standard,
            low: A2cConfig::default(),
            high: A2cConfig { hidden: vec![32], ..A2cConfig::default() },
        }
    }
}

impl HyperParams {
    pub fn validate(&self) -> Result<(), HyperError> {
        let check = |ok: bool, what: &str| if ok { Ok(()) } else { Err(HyperError(what.to_string())) };
        check(self.c >= 1, "C must be at least 1")?;
        check(self.t.is_none_or(|t| t >= 1), "T must be at least 1")?;
        check(self.gamma > 0.0 && self.gamma <= 1.0, "gamma must be in (0, 1]")?;
        check(self.m >= 0.0 && self.n >= 0.0, "m and n must be nonnegative")?;
        check(self.omega > 0.0, "omega must be positive")?;
        check(self.upsilon > 0.0 && self.upsilon < 1.0, "upsilon must be in (0, 1)")?;
        check(self.subgoal_epsilon > 0.0, "sub-goal epsilon must be positive")?;
        check(self.subgoal_scale > 0.0, "sub-goal scale must be positive")?;
        check(self.max_cuts >= 1, "max_cuts must be at least 1")?;
        check((0.0..=1.0).contains(&self.explore_start) && (0.0..=1.0).contains(&self.explore_end), "exploration rates must be probabilities")?;
        check(self.fcr_hidden >= 1 && self.fcr_lr > 0.0, "FCR needs a hidden layer and a positive learning rate")?;
        for cfg in [&self.low, &self.high] {
            check(cfg.gamma > 0.0 && cfg.gamma <= 1.0, "learner gamma must be in (0, 1]")?;
            check(cfg.lr_policy > 0.0 && cfg.lr_value > 0.0, "learning rates must be positive")?;
        }
        Ok(())
    }

    pub fn episode_len(&self, scenario_len: usize) -> usize {
        match self.t {
            Some(t) => scenario_len.min(t * self.c),
            None => scenario_len,
        }
    }

    /// Exploration rate after `progress ∈ [0, 1]` of the budget.
    pub fn explore_rate(&self, progress: f64) -> f64 {
        let p = progress.clamp(0.0, 1.0);
        self.explore_start + (self.explore_end - self.explore_start) * p
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        HyperParams::default().validate().unwrap();
    }

    #[test]
    fn rejects_out_of_range() {
        let bad = [
            HyperParams { c: 0, ..HyperParams::default() },
            HyperParams { gamma: 0.0, ..HyperParams::default() },
            HyperParams { upsilon: 1.0, ..HyperParams::default() },
            HyperParams { omega: 0.0, ..HyperParams::default() },
            HyperParams { m: -1.0, ..HyperParams::default() },
        ];
        for hp in bad {
            assert!(hp.validate().is_err());
        }
    }

    #[test]
    fn exploration_anneals() {
        let hp = HyperParams::default();
        assert_eq!(hp.explore_rate(0.0), 0.3);
        assert!((hp.explore_rate(1.0) - 0.05).abs() < 1e-15);
        assert!((hp.explore_rate(2.0) - 0.05).abs() < 1e-15);
    }
}
