//! Advantage actor-critic.
//!
//! Returns are n-step discounted sums over a rollout, bootstrapped from the
//! critic when the rollout stops before the episode ends. The advantage is
//! the return minus the critic's estimate. The policy minimizes
//! `-mean(log π(a|s)·Â) - c·mean(H)`, the critic `0.5·mean((G - V)²)`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::head::{Action, ActionDist, LOG_STD_MAX, LOG_STD_MIN};
use super::mlp::Mlp;
use super::optim::{clip_grad_norm, RunningStat, SgdMomentum};
use super::NnError;

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum HeadKind {
    Categorical { actions: usize },
    Gaussian { dim: usize, init_log_std: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct A2cConfig {
    pub gamma: f64,
    pub entropy_coef: f64,
    pub lr_policy: f64,
    pub lr_value: f64,
    pub momentum: f64,
    pub max_grad_norm: f64,
    pub normalize_rewards: bool,
    pub hidden: Vec<usize>,
}

impl Default for A2cConfig {
    fn default() -> Self {
        A2cConfig {
            gamma: 0.99,
            entropy_coef: 0.01,
            lr_policy: 3e-4,
            lr_value: 1e-3,
            momentum: 0.9,
            max_grad_norm: 0.5,
            normalize_rewards: true,
            hidden: vec![64, 64],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub state: Vec<f64>,
    pub action: Action,
    pub reward: f64,
    pub value: f64,
    pub log_prob: f64,
    pub done: bool,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Trajectory {
    pub transitions: Vec<Transition>,
    /// Critic estimate of the state after the last transition; ignored when
    /// that transition ends the episode.
    pub bootstrap: f64,
}

impl Trajectory {
    pub fn push(&mut self, t: Transition) {
        self.transitions.push(t);
    }

    pub fn len(&self) -> usize {
        self.transitions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.transitions.is_empty()
    }

    pub fn clear(&mut self) {
        self.transitions.clear();
        self.bootstrap = 0.0;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LossReport {
    pub policy: f64,
    pub value: f64,
    pub entropy: f64,
}

/// `G_t = r_t + γ·G_{t+1}`, restarting at episode ends and seeded with
/// `bootstrap` after the final transition.
pub fn discounted_returns(rewards: &[f64], dones: &[bool], gamma: f64, bootstrap: f64) -> Vec<f64> {
    let mut out = vec![0.0; rewards.len()];
    let mut next = bootstrap;
    for t in (0..rewards.len()).rev() {
        if dones[t] {
            next = 0.0;
        }
        next = rewards[t] + gamma * next;
        out[t] = next;
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActorCritic {
    pub head: HeadKind,
    pub config: A2cConfig,
    policy: Mlp,
    log_std: Vec<f64>,
    value: Mlp,
    opt_policy: SgdMomentum,
    opt_value: SgdMomentum,
    reward_stat: RunningStat,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: u32,
    pub model: ActorCritic,
}

impl ActorCritic {
    pub fn new<R: Rng + ?Sized>(obs_dim: usize, head: HeadKind, config: A2cConfig, rng: &mut R) -> Self {
        let (out, log_std) = match &head {
            HeadKind::Categorical { actions } => (*actions, Vec::new()),
            HeadKind::Gaussian { dim, init_log_std } => (*dim, vec![*init_log_std; *dim]),
        };
        let mut sizes = vec![obs_dim];
        sizes.extend(&config.hidden);
        sizes.push(out);
        let mut policy = Mlp::new(&sizes, rng);
        policy.scale_output_layer(0.01);
        *sizes.last_mut().unwrap() = 1;
        let value = Mlp::new(&sizes, rng);
        let opt_policy = SgdMomentum::new(config.lr_policy, config.momentum, policy.num_params() + log_std.len());
        let opt_value = SgdMomentum::new(config.lr_value, config.momentum, value.num_params());
        ActorCritic { head, config, policy, log_std, value, opt_policy, opt_value, reward_stat: RunningStat::default() }
    }

    pub fn obs_dim(&self) -> usize {
        self.policy.input_dim()
    }

    pub fn policy_net(&self) -> &Mlp {
        &self.policy
    }

    pub fn policy_net_mut(&mut self) -> &mut Mlp {
        &mut self.policy
    }

    pub fn value_net(&self) -> &Mlp {
        &self.value
    }

    pub fn log_std(&self) -> &[f64] {
        &self.log_std
    }

    fn make_dist(&self, out: Vec<f64>) -> ActionDist {
        match self.head {
            HeadKind::Categorical { .. } => ActionDist::Categorical { logits: out },
            HeadKind::Gaussian { .. } => ActionDist::DiagonalGaussian { mean: out, log_std: self.log_std.clone() },
        }
    }

    pub fn dist(&self, obs: &[f64]) -> Result<ActionDist, NnError> {
        Ok(self.make_dist(self.policy.forward(obs)?))
    }

    pub fn value(&self, obs: &[f64]) -> Result<f64, NnError> {
        Ok(self.value.forward(obs)?[0])
    }

    /// Sample an action; returns it with its log-probability and the critic value.
    pub fn act<R: Rng + ?Sized>(&self, obs: &[f64], rng: &mut R) -> Result<(Action, f64, f64), NnError> {
        let (a, lp) = self.dist(obs)?.sample(rng);
        Ok((a, lp, self.value(obs)?))
    }

    /// Scale applied to raw rewards before they reach the learner.
    pub fn reward_scale(&self) -> f64 {
        if self.config.normalize_rewards {
            1.0 / self.reward_stat.std().max(1e-6)
        } else {
            1.0
        }
    }

    pub fn update(&mut self, trajectory: &Trajectory) -> Result<LossReport, NnError> {
        a2c_update(trajectory, self)
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        Checkpoint { version: CHECKPOINT_VERSION, model: self.clone() }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&self.to_checkpoint()).expect("model serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, NnError> {
        let ck: Checkpoint = serde_json::from_str(text).map_err(|e| NnError::Checkpoint(e.to_string()))?;
        if ck.version != CHECKPOINT_VERSION {
            return Err(NnError::Checkpoint(format!("unsupported version {}", ck.version)));
        }
        Ok(ck.model)
    }
}

/// One actor-critic step on a rollout. On non-finite losses or gradients
/// nothing is changed and `NnError::Numerics` is returned.
pub fn a2c_update(trajectory: &Trajectory, ac: &mut ActorCritic) -> Result<LossReport, NnError> {
    if trajectory.is_empty() {
        return Err(NnError::EmptyTrajectory);
    }
    if ac.config.normalize_rewards {
        for t in &trajectory.transitions {
            ac.reward_stat.push(t.reward);
        }
    }
    let scale = ac.reward_scale();
    let rewards: Vec<f64> = trajectory.transitions.iter().map(|t| t.reward * scale).collect();
    let dones: Vec<bool> = trajectory.transitions.iter().map(|t| t.done).collect();
    let returns = discounted_returns(&rewards, &dones, ac.config.gamma, trajectory.bootstrap);

    let n = trajectory.len() as f64;
    let c = ac.config.entropy_coef;
    let np = ac.policy.num_params();
    let mut gp = vec![0.0; np + ac.log_std.len()];
    let mut gv = vec![0.0; ac.value.num_params()];
    let mut report = LossReport::default();

    for (t, g) in trajectory.transitions.iter().zip(&returns) {
        let vtape = ac.value.forward_tape(&t.state)?;
        let v = vtape.output()[0];
        let adv = g - v;
        report.value += 0.5 * adv * adv / n;
        ac.value.backward_into(&vtape, &[-adv / n], &mut gv)?;

        let ptape = ac.policy.forward_tape(&t.state)?;
        let dist = ac.make_dist(ptape.output().to_vec());
        let lp = dist.log_prob(&t.action);
        let h = dist.entropy();
        report.policy += -(lp * adv) / n - c * h / n;
        report.entropy += h / n;
        let (g_out, g_log_std) = dist.loss_grad(&t.action, adv / n, c / n);
        let (net, extra) = gp.split_at_mut(np);
        ac.policy.backward_into(&ptape, &g_out, net)?;
        for (e, d) in extra.iter_mut().zip(&g_log_std) {
            *e += d;
        }
    }

    if !(report.policy.is_finite() && report.value.is_finite() && report.entropy.is_finite()) {
        return Err(NnError::Numerics(format!("loss (policy {}, value {})", report.policy, report.value)));
    }
    if gp.iter().chain(&gv).any(|g| !g.is_finite()) {
        return Err(NnError::Numerics("gradient".into()));
    }
    clip_grad_norm(&mut gp, ac.config.max_grad_norm);
    clip_grad_norm(&mut gv, ac.config.max_grad_norm);

    let mut params: Vec<f64> = ac.policy.params().to_vec();
    params.extend(&ac.log_std);
    ac.opt_policy.step(&mut params, &gp);
    ac.opt_value.step(ac.value.params_mut(), &gv);
    ac.policy.params_mut().copy_from_slice(&params[..np]);
    for (ls, p) in ac.log_std.iter_mut().zip(&params[np..]) {
        *ls = p.clamp(LOG_STD_MIN, LOG_STD_MAX);
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn transition(state: Vec<f64>, action: Action, reward: f64, done: bool) -> Transition {
        Transition { state, action, reward, value: 0.0, log_prob: 0.0, done }
    }

    #[test]
    fn single_step_advantage_is_reward() {
        assert_eq!(discounted_returns(&[1.0], &[true], 1.0, 0.0), vec![1.0]);
        assert_eq!(discounted_returns(&[1.0, 0.0], &[false, false], 0.5, 4.0), vec![2.0, 2.0]);
        assert_eq!(discounted_returns(&[1.0, 1.0], &[true, false], 1.0, 3.0), vec![1.0, 4.0]);
    }

    #[test]
    fn zero_advantage_leaves_policy_unchanged() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let config = A2cConfig { normalize_rewards: false, entropy_coef: 0.0, ..A2cConfig::default() };
        let mut ac = ActorCritic::new(2, HeadKind::Categorical { actions: 3 }, config, &mut rng);
        // zero the critic so V = 0 everywhere
        ac.value.params_mut().iter_mut().for_each(|p| *p = 0.0);
        let before = ac.policy.params().to_vec();
        let mut traj = Trajectory::default();
        for i in 0..4 {
            traj.push(transition(vec![0.1 * i as f64, 1.0], Action::Discrete(i % 3), 0.0, i == 3));
        }
        let report = ac.update(&traj).unwrap();
        assert_eq!(ac.policy.params(), &before[..]);
        assert_eq!(report.policy, 0.0);
    }

    #[test]
    fn empty_trajectory_is_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut ac = ActorCritic::new(1, HeadKind::Categorical { actions: 2 }, A2cConfig::default(), &mut rng);
        assert_eq!(ac.update(&Trajectory::default()), Err(NnError::EmptyTrajectory));
    }

    #[test]
    fn non_finite_reward_skips_update() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let config = A2cConfig { normalize_rewards: false, ..A2cConfig::default() };
        let mut ac = ActorCritic::new(1, HeadKind::Categorical { actions: 2 }, config, &mut rng);
        let before = ac.clone();
        let mut traj = Trajectory::default();
        traj.push(transition(vec![0.0], Action::Discrete(0), f64::NAN, true));
        assert!(matches!(ac.update(&traj), Err(NnError::Numerics(_))));
        assert_eq!(ac, before);
    }

    #[test]
    fn checkpoint_round_trip_is_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let head = HeadKind::Gaussian { dim: 2, init_log_std: -0.5 };
        let ac = ActorCritic::new(3, head, A2cConfig::default(), &mut rng);
        let back = ActorCritic::from_json(&ac.to_json()).unwrap();
        assert_eq!(ac, back);
        let obs = [0.3, -0.7, 1.1];
        assert_eq!(ac.dist(&obs).unwrap(), back.dist(&obs).unwrap());
    }
}
