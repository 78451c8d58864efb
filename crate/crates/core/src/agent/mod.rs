//! The two-level agent, its flat baseline, rewards, logging and the
//! reconstruction of coupled cut variables.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::env::ScenarioError;
use crate::graph::GraphError;
use crate::modular::{CutError, SurgeryError};
use crate::nn::NnError;

pub mod cascade;
pub mod ccm;
pub mod fcr;
pub mod flat;
pub mod hyper;
pub mod log;
pub mod obs;
pub mod reward;

pub use cascade::{cascade_goals, check_chain, ChainError, GoalProposer};
pub use ccm::{evaluate_ccm, train_ccm, view_key, CcmModel, CcmRun, TrainStats, ViewModel};
pub use fcr::{fcr_loss, truth_entropy, Fcr, FcrStats, RangeTracker};
pub use flat::{evaluate_flat, evaluate_random, train_flat, AgentModel, FlatModel, FlatRun};
pub use hyper::{FcrLoss, HyperError, HyperParams};
pub use log::{EpisodeLog, LogRow, HEADER};
pub use obs::Scaler;
pub use reward::{avg_low_reward, box_reward, box_reward_literal, high_reward, GoalBox};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AgentError {
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Cut(#[from] CutError),
    #[error(transparent)]
    Surgery(#[from] SurgeryError),
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Chain(#[from] ChainError),
    #[error(transparent)]
    Hyper(#[from] HyperError),
    #[error("value {0} outside [0, 1]")]
    Domain(f64),
    #[error("non-finite numbers in {0}")]
    Numerics(String),
    #[error("log: {0}")]
    Log(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("incompatible model: {0}")]
    Incompatible(String),
    #[error("seed {seed}, episode {episode}: {source}")]
    Context { seed: u64, episode: usize, source: Box<AgentError> },
}

impl AgentError {
    /// Attach the run position, once.
    pub fn context(seed: u64, episode: usize, e: AgentError) -> AgentError {
        match e {
            AgentError::Context { .. } => e,
            other => AgentError::Context { seed, episode, source: Box::new(other) },
        }
    }
}

/// Outcome of frozen-policy episodes.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub log: EpisodeLog,
    /// Mean per-step reward of each episode.
    pub episode_rewards: Vec<f64>,
    /// First target's value after every step, per episode.
    pub traces: Vec<Vec<f64>>,
}

impl Evaluation {
    pub fn push_episode(&mut self, rewards: &[f64], trace: Vec<f64>) {
        let mean = if rewards.is_empty() { 0.0 } else { rewards.iter().sum::<f64>() / rewards.len() as f64 };
        self.episode_rewards.push(mean);
        self.traces.push(trace);
    }

    pub fn mean_reward(&self) -> f64 {
        if self.episode_rewards.is_empty() {
            return 0.0;
        }
        self.episode_rewards.iter().sum::<f64>() / self.episode_rewards.len() as f64
    }

    /// Fraction of steps inside `[lo, hi]`, per episode.
    pub fn time_in_range(&self, lo: f64, hi: f64) -> Vec<f64> {
        self.traces.iter().map(|t| crate::env::tir(t, lo, hi)).collect()
    }
}
