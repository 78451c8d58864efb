use serde::{Deserialize, Serialize};

use super::hyper::HyperParams;

/// Interval goal `q = [g - ε, g + ε]`, one center per controlled variable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GoalBox {
    pub center: Vec<f64>,
    pub epsilon: f64,
}

impl GoalBox {
    pub fn new(center: Vec<f64>, epsilon: f64) -> Self {
        assert!(epsilon > 0.0, "goal half-width must be positive");
        GoalBox { center, epsilon }
    }

    pub fn q_min(&self) -> Vec<f64> {
        self.center.iter().map(|g| g - self.epsilon).collect()
    }

    pub fn q_max(&self) -> Vec<f64> {
        self.center.iter().map(|g| g + self.epsilon).collect()
    }

    pub fn contains(&self, s: &[f64]) -> bool {
        s.iter().zip(&self.center).all(|(x, g)| (x - g).abs() <= self.epsilon)
    }
}

/// `ω - dist_outside(s; q) - υ·dist_inside(s; q)` with
/// `dist_outside = ‖max(s - q_max, 0) + max(q_min - s, 0)‖₁` and
/// `dist_inside = ‖Cen(q) - clamp(s, q_min, q_max)‖₁`.
pub fn box_reward(s: &[f64], q: &GoalBox, omega: f64, upsilon: f64) -> f64 {
    assert_eq!(s.len(), q.center.len(), "state and goal dimensions differ");
    let mut outside = 0.0;
    let mut inside = 0.0;
    for (x, g) in s.iter().zip(&q.center) {
        let (lo, hi) = (g - q.epsilon, g + q.epsilon);
        outside += (x - hi).max(0.0) + (lo - x).max(0.0);
        inside += (g - x.clamp(lo, hi)).abs();
    }
    omega - outside - upsilon * inside
}

/// The outside term read literally as `max(s - q_max, 0) + max(q_min, 0)`.
/// Kept for comparison only; training uses [`box_reward`].
pub fn box_reward_literal(s: &[f64], q: &GoalBox, omega: f64, upsilon: f64) -> f64 {
    assert_eq!(s.len(), q.center.len(), "state and goal dimensions differ");
    let mut outside = 0.0;
    let mut inside = 0.0;
    for (x, g) in s.iter().zip(&q.center) {
        let (lo, hi) = (g - q.epsilon, g + q.epsilon);
        outside += (x - hi).max(0.0) + lo.max(0.0);
        inside += (g - x.clamp(lo, hi)).abs();
    }
    omega - outside - upsilon * inside
}

/// High-level reward: `α·𝓡ᴸ + m - n` for an uncontrollable cut, `α·𝓡ᴸ - m - n`
/// for a controllable one.
pub fn high_reward(low_avg: f64, is_con: u8, hp: &HyperParams) -> f64 {
    let cross = if is_con == 0 { hp.m } else { -hp.m };
    hp.alpha * low_avg + cross - hp.n
}

/// `Σ γⁱ Rᵢ / len` over one realized low-level segment.
pub fn avg_low_reward(rewards: &[f64], gamma: f64) -> f64 {
    if rewards.is_empty() {
        log::warn!("empty low-level segment; average reward taken as 0");
        return 0.0;
    }
    let mut discount = 1.0;
    let mut total = 0.0;
    for r in rewards {
        total += discount * r;
        discount *= gamma;
    }
    total / rewards.len() as f64
}
