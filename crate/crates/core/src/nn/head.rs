//! Stochastic policy heads.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

pub const LOG_STD_MIN: f64 = -5.0;
pub const LOG_STD_MAX: f64 = 2.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Action {
    Discrete(usize),
    Continuous(Vec<f64>),
}

impl Action {
    pub fn as_index(&self) -> Option<usize> {
        match self {
            Action::Discrete(i) => Some(*i),
            Action::Continuous(_) => None,
        }
    }

    pub fn as_slice(&self) -> &[f64] {
        match self {
            Action::Continuous(v) => v,
            Action::Discrete(_) => &[],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ActionDist {
    Categorical { logits: Vec<f64> },
    DiagonalGaussian { mean: Vec<f64>, log_std: Vec<f64> },
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|l| (l - max).exp()).sum::<f64>().ln();
    logits.iter().map(|l| l - lse).collect()
}

/// Index of the largest logit; ties go to the lowest index.
pub fn greedy(logits: &[f64]) -> usize {
    let mut best = 0;
    for (i, l) in logits.iter().enumerate() {
        if *l > logits[best] {
            best = i;
        }
    }
    best
}

impl ActionDist {
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> (Action, f64) {
        let action = match self {
            ActionDist::Categorical { logits } => {
                let probs = softmax(logits);
                let u: f64 = rng.random();
                let mut acc = 0.0;
                let mut pick = probs.len() - 1;
                for (i, p) in probs.iter().enumerate() {
                    acc += p;
                    if u < acc {
                        pick = i;
                        break;
                    }
                }
                Action::Discrete(pick)
            }
            ActionDist::DiagonalGaussian { mean, log_std } => Action::Continuous(
                mean.iter()
                    .zip(log_std)
                    .map(|(m, ls)| {
                        let z: f64 = StandardNormal.sample(rng);
                        m + ls.exp() * z
                    })
                    .collect(),
            ),
        };
        let lp = self.log_prob(&action);
        (action, lp)
    }

    pub fn mode(&self) -> Action {
        match self {
            ActionDist::Categorical { logits } => Action::Discrete(greedy(logits)),
            ActionDist::DiagonalGaussian { mean, .. } => Action::Continuous(mean.clone()),
        }
    }

    pub fn log_prob(&self, action: &Action) -> f64 {
        match (self, action) {
            (ActionDist::Categorical { logits }, Action::Discrete(i)) => log_softmax(logits)[*i],
            (ActionDist::DiagonalGaussian { mean, log_std }, Action::Continuous(a)) => mean
                .iter()
                .zip(log_std)
                .zip(a)
                .map(|((m, ls), x)| {
                    let z = (x - m) / ls.exp();
                    -0.5 * z * z - ls - 0.5 * (2.0 * PI).ln()
                })
                .sum(),
            _ => panic!("action kind does not match the distribution"),
        }
    }

    pub fn entropy(&self) -> f64 {
        match self {
            ActionDist::Categorical { logits } => {
                let lp = log_softmax(logits);
                -lp.iter().map(|l| l.exp() * l).sum::<f64>()
            }
            ActionDist::DiagonalGaussian { log_std, .. } => {
                log_std.iter().map(|ls| ls + 0.5 * (2.0 * PI * std::f64::consts::E).ln()).sum()
            }
        }
    }

    /// Gradient of `-weight·log π(a) - entropy_coef·H` with respect to the
    /// distribution parameters: `(∂/∂net_output, ∂/∂log_std)`.
    pub fn loss_grad(&self, action: &Action, weight: f64, entropy_coef: f64) -> (Vec<f64>, Vec<f64>) {
        match (self, action) {
            (ActionDist::Categorical { logits }, Action::Discrete(a)) => {
                let p = softmax(logits);
                let lp = log_softmax(logits);
                let h: f64 = -p.iter().zip(&lp).map(|(pi, li)| pi * li).sum::<f64>();
                let g = p
                    .iter()
                    .zip(&lp)
                    .enumerate()
                    .map(|(i, (pi, li))| {
                        let onehot = if i == *a { 1.0 } else { 0.0 };
                        // ∂logπ(a)/∂l_i = 1[i=a] - p_i ; ∂H/∂l_i = -p_i (log p_i + H)
                        -weight * (onehot - pi) + entropy_coef * pi * (li + h)
                    })
                    .collect();
                (g, Vec::new())
            }
            (ActionDist::DiagonalGaussian { mean, log_std }, Action::Continuous(x)) => {
                let mut gm = Vec::with_capacity(mean.len());
                let mut gs = Vec::with_capacity(mean.len());
                for ((m, ls), xi) in mean.iter().zip(log_std).zip(x) {
                    let var = (2.0 * ls).exp();
                    let d = xi - m;
                    gm.push(-weight * d / var);
                    gs.push(-weight * (d * d / var - 1.0) - entropy_coef);
                }
                (gm, gs)
            }
            _ => panic!("action kind does not match the distribution"),
        }
    }
}
