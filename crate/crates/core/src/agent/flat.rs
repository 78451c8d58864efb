//! Baselines without modularization: one actor-critic acting on every source
//! from the whole graph's state, and uniformly random actions.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::ccm::{CcmRun, TrainStats};
use super::hyper::HyperParams;
use super::log::{EpisodeLog, LogRow};
use super::obs::Scaler;
use super::reward::{box_reward, GoalBox};
use super::{AgentError, Evaluation};
use crate::env::{Env, Scenario};
use crate::graph::{CausalGraphDynamic, NodeId, Topology};
use crate::nn::{ActorCritic, HeadKind, NnError, Trajectory, Transition};

pub const FLAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlatModel {
    pub version: u32,
    pub scenario: String,
    pub hp: HyperParams,
    pub topology: Topology,
    pub sources: Vec<NodeId>,
    pub targets: Vec<NodeId>,
    pub goal: GoalBox,
    pub scaler: Scaler,
    pub lags: usize,
    pub ac: ActorCritic,
}

impl FlatModel {
    pub fn new<R: Rng + ?Sized>(scenario: &Scenario, hp: &HyperParams, rng: &mut R) -> Result<Self, AgentError> {
        hp.validate()?;
        let graph = scenario.build_graph()?;
        let lags = graph.history_len() - 1;
        let sources = graph.modifiable();
        let targets = graph.targets();
        let obs_dim = graph.len() * (lags + 1) + 2 * targets.len();
        let head = HeadKind::Gaussian { dim: sources.len(), init_log_std: hp.init_log_std };
        Ok(FlatModel {
            version: FLAT_VERSION,
            scenario: scenario.name.clone(),
            hp: hp.clone(),
            topology: graph.topology().clone(),
            ac: ActorCritic::new(obs_dim, head, hp.low.clone(), rng),
            sources,
            targets,
            goal: GoalBox::new(scenario.goal.center.clone(), scenario.goal.half_width),
            scaler: Scaler::new(scenario),
            lags,
        })
    }

    pub fn obs(&self, graph: &CausalGraphDynamic) -> Vec<f64> {
        let mut obs = self.scaler.observe(graph, self.topology.ids(), self.lags);
        let g: Vec<f64> = self.targets.iter().zip(&self.goal.center).map(|(id, c)| self.scaler.z(*id, *c)).collect();
        let s: Vec<f64> = self.targets.iter().zip(graph.values(&self.targets)).map(|(id, x)| self.scaler.z(*id, x)).collect();
        obs.extend(&g);
        obs.extend(s.iter().zip(&g).map(|(a, b)| a - b));
        obs
    }

    fn raw_actions(&self, u: &[f64]) -> Vec<f64> {
        self.sources.iter().zip(u).map(|(id, x)| self.scaler.from_unit(*id, *x)).collect()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("model serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, AgentError> {
        let m: FlatModel = serde_json::from_str(text).map_err(|e| AgentError::Checkpoint(e.to_string()))?;
        if m.version != FLAT_VERSION {
            return Err(AgentError::Checkpoint(format!("unsupported model version {}", m.version)));
        }
        Ok(m)
    }

    fn check_scenario(&self, scenario: &Scenario) -> Result<(), AgentError> {
        let graph = scenario.build_graph()?;
        if graph.topology() != &self.topology || graph.modifiable() != self.sources || graph.targets() != self.targets {
            return Err(AgentError::Incompatible(format!(
                "model trained on {} does not match the structure of {}",
                self.scenario, scenario.name
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct FlatRun {
    pub model: FlatModel,
    pub log: EpisodeLog,
    pub stats: TrainStats,
}

fn low_row(seed: u64, episode: usize, t: usize, goal: &GoalBox, action: Vec<f64>, reward: f64, target: &[f64]) -> LogRow {
    LogRow {
        seed,
        episode,
        t,
        level: "low".into(),
        cut_id: None,
        goal_center: goal.center.clone(),
        action,
        reward,
        loss_policy: None,
        loss_value: None,
        loss_fcr: None,
        target: target.to_vec(),
    }
}

fn run_flat(
    model: &mut FlatModel,
    env: &mut Env,
    rng: &mut ChaCha8Rng,
    seed: u64,
    episode: usize,
    train: Option<(usize, &mut TrainStats)>,
    log: &mut EpisodeLog,
) -> Result<(Vec<f64>, Vec<f64>), AgentError> {
    env.reset(rng);
    let ep_len = model.hp.episode_len(env.scenario().episode_len);
    let (budget, mut stats) = match train {
        Some((b, s)) => (b, Some(s)),
        None => (usize::MAX, None),
    };
    let used = |stats: &Option<&mut TrainStats>| stats.as_ref().map_or(0, |s| s.steps);
    let mut rewards = Vec::new();
    let mut trace = Vec::new();
    let mut traj = Trajectory::default();
    while env.t() < ep_len && used(&stats) < budget {
        let obs = model.obs(env.graph());
        let (action, logp, value) = if stats.is_some() {
            model.ac.act(&obs, rng)?
        } else {
            let dist = model.ac.dist(&obs)?;
            let a = dist.mode();
            let lp = dist.log_prob(&a);
            (a, lp, model.ac.value(&obs)?)
        };
        let raw = model.raw_actions(action.as_slice());
        let actions: BTreeMap<NodeId, f64> = model.sources.iter().copied().zip(raw.iter().copied()).collect();
        env.step(&actions, rng)?;
        let target = env.target_values();
        let reward = box_reward(&target, &model.goal, model.hp.omega, model.hp.upsilon);
        log.push(low_row(seed, episode, env.t() - 1, &model.goal, raw, reward, &target));
        rewards.push(reward);
        trace.push(target[0]);
        let done = env.t() >= ep_len;
        let Some(stats) = stats.as_deref_mut() else { continue };
        stats.steps += 1;
        traj.push(Transition { state: obs, action, reward, value, log_prob: logp, done });
        if traj.len() == model.hp.c || done || stats.steps >= budget {
            if !done {
                traj.bootstrap = model.ac.value(&model.obs(env.graph()))?;
            }
            let mean = traj.transitions.iter().map(|t| t.reward).sum::<f64>() / traj.len() as f64;
            let report = match model.ac.update(&traj) {
                Ok(r) => Some(r),
                Err(NnError::Numerics(msg)) => {
                    log::warn!("skipping flat update: {msg}");
                    stats.skipped_updates += 1;
                    None
                }
                Err(e) => return Err(e.into()),
            };
            log.push(LogRow {
                level: "flat".into(),
                action: Vec::new(),
                loss_policy: report.map(|r| r.policy),
                loss_value: report.map(|r| r.value),
                ..low_row(seed, episode, env.t(), &model.goal, Vec::new(), mean, &[])
            });
            traj.clear();
        }
    }
    Ok((rewards, trace))
}

pub fn train_flat(scenario: &Scenario, hp: &HyperParams, seed: u64, budget: usize) -> Result<FlatRun, AgentError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut model = FlatModel::new(scenario, hp, &mut rng)?;
    let mut env = Env::new(scenario.clone())?;
    let mut log = EpisodeLog::default();
    let mut stats = TrainStats::default();
    let mut episode = 0;
    while stats.steps < budget {
        run_flat(&mut model, &mut env, &mut rng, seed, episode, Some((budget, &mut stats)), &mut log)
            .map_err(|e| AgentError::context(seed, episode, e))?;
        episode += 1;
        stats.episodes = episode;
    }
    Ok(FlatRun { model, log, stats })
}

pub fn evaluate_flat(model: &FlatModel, scenario: &Scenario, episodes: usize, seed: u64) -> Result<Evaluation, AgentError> {
    model.check_scenario(scenario)?;
    let mut frozen = model.clone();
    let mut env = Env::new(scenario.clone())?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut eval = Evaluation::default();
    for episode in 0..episodes {
        let (rewards, trace) = run_flat(&mut frozen, &mut env, &mut rng, seed, episode, None, &mut eval.log)
            .map_err(|e| AgentError::context(seed, episode, e))?;
        eval.push_episode(&rewards, trace);
    }
    Ok(eval)
}

/// Uniformly random source values over their ranges.
pub fn evaluate_random(scenario: &Scenario, hp: &HyperParams, episodes: usize, seed: u64) -> Result<Evaluation, AgentError> {
    let mut env = Env::new(scenario.clone())?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scaler = Scaler::new(scenario);
    let goal = GoalBox::new(scenario.goal.center.clone(), scenario.goal.half_width);
    let ep_len = hp.episode_len(scenario.episode_len);
    let sources = env.sources().to_vec();
    let mut eval = Evaluation::default();
    for episode in 0..episodes {
        env.reset(&mut rng);
        let mut rewards = Vec::with_capacity(ep_len);
        let mut trace = Vec::with_capacity(ep_len);
        while env.t() < ep_len {
            let raw: Vec<f64> = sources.iter().map(|id| scaler.from_unit(*id, rng.random_range(-1.0..=1.0))).collect();
            let actions: BTreeMap<NodeId, f64> = sources.iter().copied().zip(raw.iter().copied()).collect();
            env.step(&actions, &mut rng).map_err(|e| AgentError::context(seed, episode, e.into()))?;
            let target = env.target_values();
            let reward = box_reward(&target, &goal, hp.omega, hp.upsilon);
            eval.log.push(low_row(seed, episode, env.t() - 1, &goal, raw, reward, &target));
            rewards.push(reward);
            trace.push(target[0]);
        }
        eval.push_episode(&rewards, trace);
    }
    Ok(eval)
}

/// Either trained agent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AgentModel {
    Ccm(Box<super::ccm::CcmModel>),
    Flat(Box<FlatModel>),
}

impl AgentModel {
    pub fn evaluate(&self, scenario: &Scenario, episodes: usize, seed: u64) -> Result<Evaluation, AgentError> {
        match self {
            AgentModel::Ccm(m) => super::ccm::evaluate_ccm(m, scenario, episodes, seed),
            AgentModel::Flat(m) => evaluate_flat(m, scenario, episodes, seed),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("model serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, AgentError> {
        let m: AgentModel = serde_json::from_str(text).map_err(|e| AgentError::Checkpoint(e.to_string()))?;
        let version = match &m {
            AgentModel::Ccm(c) => (c.version, super::ccm::MODEL_VERSION),
            AgentModel::Flat(f) => (f.version, FLAT_VERSION),
        };
        if version.0 != version.1 {
            return Err(AgentError::Checkpoint(format!("unsupported model version {}", version.0)));
        }
        Ok(m)
    }
}

impl From<CcmRun> for AgentModel {
    fn from(run: CcmRun) -> Self {
        AgentModel::Ccm(Box::new(run.model))
    }
}

impl From<FlatRun> for AgentModel {
    fn from(run: FlatRun) -> Self {
        AgentModel::Flat(Box::new(run.model))
    }
}
