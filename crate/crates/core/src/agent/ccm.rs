//! The two-level CCM agent.
//!
//! Every `C` steps the high-level policy picks a minimum cut. The cut either
//! extends the current chain of nested cuts upstream or replaces it, and the
//! chain splits the graph into views ordered from the global targets
//! upstream. The most upstream view acts on the real sources; each other view
//! is trained in a surgered copy of the graph taken at the start of the
//! segment, driving its entry cut directly. Sub-goals flow upstream: a view's
//! goal is the boundary value its downstream neighbour's policy proposes.

use std::collections::{BTreeMap, BTreeSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::cascade::{cascade_goals, GoalProposer};
use super::fcr::{Fcr, RangeTracker};
use super::hyper::HyperParams;
use super::log::{EpisodeLog, LogRow};
use super::obs::Scaler;
use super::reward::{avg_low_reward, box_reward, high_reward, GoalBox};
use super::{AgentError, Evaluation};
use crate::env::{Env, Scenario};
use crate::graph::{inject_noise, CausalGraphDynamic, NodeId, Topology};
use crate::modular::{controllable_region, enumerate_min_cuts, features, CcmView, CutFeatures, CutSet, CutSetCatalog};
use crate::nn::{greedy, Action, ActionDist, ActorCritic, HeadKind, NnError, Trajectory, Transition};

pub const MODEL_VERSION: u32 = 1;

/// Controller of one view.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViewModel {
    pub view: CcmView,
    /// Past frames included in the observation.
    pub lags: usize,
    /// The view exits at the global targets (goal in raw units).
    pub global: bool,
    /// The view is entered at the real modifiable nodes.
    pub entry_is_source: bool,
    pub ac: ActorCritic,
}

pub fn view_key(entry: &[NodeId], exit: &[NodeId]) -> String {
    let list = |ids: &[NodeId]| ids.iter().map(|i| i.0.to_string()).collect::<Vec<_>>().join(",");
    format!("{}>{}", list(entry), list(exit))
}

/// Parameters of every level: the cut selector θ, one controller per view φ
/// and one reconstruction module per multi-node cut ξ.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CcmModel {
    pub version: u32,
    pub scenario: String,
    pub hp: HyperParams,
    pub sources: Vec<NodeId>,
    pub targets: Vec<NodeId>,
    /// Goal box on the global targets, in raw units.
    pub goal: GoalBox,
    pub topology: Topology,
    pub catalog: CutSetCatalog,
    pub scaler: Scaler,
    pub high: ActorCritic,
    pub views: BTreeMap<String, ViewModel>,
    pub fcr: BTreeMap<String, Fcr>,
    pub ranges: RangeTracker,
}

/// True when `up` lies entirely outside the region reachable from `down`.
fn strictly_upstream(topology: &Topology, up: &CutSet, down: &CutSet) -> bool {
    let region = controllable_region(topology, down.nodes());
    up != down && up.nodes().iter().all(|id| !region.contains(id))
}

impl CcmModel {
    pub fn new<R: Rng + ?Sized>(scenario: &Scenario, hp: &HyperParams, rng: &mut R) -> Result<Self, AgentError> {
        hp.validate()?;
        let graph = scenario.build_graph()?;
        let topology = graph.topology().clone();
        let sources = graph.modifiable();
        let targets = graph.targets();
        let catalog = enumerate_min_cuts(&topology, &sources, &targets)?;
        let high = ActorCritic::new(
            catalog.len() * CutFeatures::WIDTH,
            HeadKind::Categorical { actions: catalog.len() },
            hp.high.clone(),
            rng,
        );
        let mut model = CcmModel {
            version: MODEL_VERSION,
            scenario: scenario.name.clone(),
            hp: hp.clone(),
            sources: sources.clone(),
            targets: targets.clone(),
            goal: GoalBox::new(scenario.goal.center.clone(), scenario.goal.half_width),
            topology: topology.clone(),
            catalog: catalog.clone(),
            scaler: Scaler::new(scenario),
            high,
            views: BTreeMap::new(),
            fcr: BTreeMap::new(),
            ranges: RangeTracker::default(),
        };
        for cut in catalog.cuts() {
            model.add_view(&graph, cut.nodes(), &targets, rng)?;
            model.add_view(&graph, &sources, cut.nodes(), rng)?;
        }
        if hp.max_cuts >= 2 {
            for down in catalog.cuts() {
                for up in catalog.cuts() {
                    if strictly_upstream(&topology, up, down) {
                        model.add_view(&graph, up.nodes(), down.nodes(), rng)?;
                    }
                }
            }
        }
        if !hp.full_action_head {
            for cut in catalog.cuts().iter().filter(|c| c.size() >= 2) {
                let fcr = Fcr::new(cut.nodes().to_vec(), hp.fcr_hidden, hp.fcr_lr, hp.fcr_loss, rng);
                model.fcr.insert(cut.label(), fcr);
            }
        }
        model.observe_ranges(&graph);
        Ok(model)
    }

    fn add_view<R: Rng + ?Sized>(
        &mut self,
        graph: &CausalGraphDynamic,
        entry: &[NodeId],
        exit: &[NodeId],
        rng: &mut R,
    ) -> Result<(), AgentError> {
        let key = view_key(entry, exit);
        if self.views.contains_key(&key) {
            return Ok(());
        }
        let view = CcmView::between(graph.topology(), entry, exit)?;
        let lags = view.instantiate(graph)?.history_len() - 1;
        let entry_is_source = entry == self.sources.as_slice();
        let dim = if entry_is_source || self.hp.full_action_head { entry.len() } else { 1 };
        let obs_dim = view.retained.len() * (lags + 1) + 2 * exit.len();
        let head = HeadKind::Gaussian { dim, init_log_std: self.hp.init_log_std };
        let ac = ActorCritic::new(obs_dim, head, self.hp.low.clone(), rng);
        let global = exit == self.targets.as_slice();
        self.views.insert(key, ViewModel { view, lags, global, entry_is_source, ac });
        Ok(())
    }

    fn observe_ranges(&mut self, graph: &CausalGraphDynamic) {
        for (id, x) in graph.topology().ids().iter().zip(graph.state()) {
            self.ranges.observe(*id, *x);
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("model serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, AgentError> {
        let m: CcmModel = serde_json::from_str(text).map_err(|e| AgentError::Checkpoint(e.to_string()))?;
        if m.version != MODEL_VERSION {
            return Err(AgentError::Checkpoint(format!("unsupported model version {}", m.version)));
        }
        Ok(m)
    }

    /// Keys of the views of a chain, from the global targets upstream.
    pub fn chain_keys(&self, chain: &[CutSet]) -> Vec<String> {
        let mut keys = vec![view_key(chain[0].nodes(), &self.targets)];
        for w in chain.windows(2) {
            keys.push(view_key(w[1].nodes(), w[0].nodes()));
        }
        keys.push(view_key(&self.sources, chain[chain.len() - 1].nodes()));
        keys
    }

    /// Exit values of a view in its goal units: raw at the global targets,
    /// unit scale times `subgoal_scale` elsewhere.
    fn exit_in_goal_units(&self, vm: &ViewModel, graph: &CausalGraphDynamic) -> Vec<f64> {
        let exit = &vm.view.local_target;
        let raw = graph.values(exit);
        if vm.global {
            raw
        } else {
            exit.iter().zip(raw).map(|(id, x)| self.scaler.z(*id, x) * self.hp.subgoal_scale).collect()
        }
    }

    fn goal_to_unit(&self, vm: &ViewModel, center: &[f64]) -> Vec<f64> {
        if vm.global {
            vm.view.local_target.iter().zip(center).map(|(id, g)| self.scaler.z(*id, *g)).collect()
        } else {
            center.iter().map(|g| g / self.hp.subgoal_scale).collect()
        }
    }

    pub fn view_obs(&self, vm: &ViewModel, graph: &CausalGraphDynamic, goal: &GoalBox) -> Vec<f64> {
        let mut obs = self.scaler.observe(graph, &vm.view.retained, vm.lags);
        let g = self.goal_to_unit(vm, &goal.center);
        let s = self.goal_to_unit(vm, &self.exit_in_goal_units(vm, graph));
        obs.extend(&g);
        obs.extend(s.iter().zip(&g).map(|(a, b)| a - b));
        obs
    }

    pub fn view_reward(&self, vm: &ViewModel, graph: &CausalGraphDynamic, goal: &GoalBox) -> f64 {
        box_reward(&self.exit_in_goal_units(vm, graph), goal, self.hp.omega, self.hp.upsilon)
    }

    /// Values of every entry node of `vm` for a policy output `u` (unit
    /// scale). Companions of the first node come from the FCR module when
    /// the head controls only the first one; `fcr` carries its hidden state
    /// and the companions' previous normalized values.
    fn entry_values(
        &self,
        vm: &ViewModel,
        u: &[f64],
        fcr: Option<(&[f64], &[f64])>,
    ) -> Result<(Vec<f64>, Option<(Vec<f64>, Vec<f64>)>), AgentError> {
        let entry = &vm.view.local_modifiable;
        if u.len() == entry.len() {
            let raw = entry.iter().zip(u).map(|(id, x)| self.scaler.from_unit(*id, *x)).collect();
            return Ok((raw, None));
        }
        let first = self.scaler.from_unit(entry[0], u[0]);
        let module = &self.fcr[&CutSet::new(entry.iter().copied()).label()];
        let (h, prev) = fcr.expect("multi-node entry has reconstruction state");
        let v0 = self.ranges.normalize(entry[0], first);
        let (h2, y) = module.step(h, v0, prev)?;
        let mut raw = vec![first];
        raw.extend(entry[1..].iter().zip(&y).map(|(id, v)| self.ranges.denormalize(*id, *v)));
        Ok((raw, Some((h2, y))))
    }

    fn mean_action(&self, vm: &ViewModel, obs: &[f64]) -> Result<Vec<f64>, AgentError> {
        match vm.ac.dist(obs)? {
            ActionDist::DiagonalGaussian { mean, .. } => Ok(mean),
            ActionDist::Categorical { .. } => unreachable!("view heads are Gaussian"),
        }
    }

    /// Boundary values view `vm` would like on its entry, in the goal units
    /// of the view upstream of it.
    pub fn propose(
        &self,
        vm: &ViewModel,
        graph: &CausalGraphDynamic,
        goal: &GoalBox,
        fcr: Option<(&[f64], &[f64])>,
    ) -> Result<Vec<f64>, AgentError> {
        let mean = self.mean_action(vm, &self.view_obs(vm, graph, goal))?;
        let (raw, _) = self.entry_values(vm, &mean, fcr)?;
        Ok(vm
            .view
            .local_modifiable
            .iter()
            .zip(raw)
            .map(|(id, x)| self.scaler.z(*id, x) * self.hp.subgoal_scale)
            .collect())
    }

    /// Goal boxes for every view of a chain at the given state.
    pub fn goals(
        &self,
        keys: &[String],
        graph: &CausalGraphDynamic,
        tracks: &BTreeMap<String, FcrTrack>,
    ) -> Result<Vec<GoalBox>, AgentError> {
        let views: Vec<CcmView> = keys.iter().map(|k| self.views[k].view.clone()).collect();
        let mut proposer = ChainProposer { model: self, graph, keys, tracks };
        cascade_goals(&views, &self.goal, self.hp.subgoal_epsilon * self.hp.subgoal_scale, &mut proposer)
    }
}

struct ChainProposer<'a> {
    model: &'a CcmModel,
    graph: &'a CausalGraphDynamic,
    keys: &'a [String],
    tracks: &'a BTreeMap<String, FcrTrack>,
}

impl GoalProposer for ChainProposer<'_> {
    fn propose(&mut self, k: usize, _view: &CcmView, goal: &GoalBox) -> Result<Vec<f64>, AgentError> {
        let vm = &self.model.views[&self.keys[k]];
        let label = CutSet::new(vm.view.local_modifiable.iter().copied()).label();
        let fcr = self.tracks.get(&label).map(|t| (t.h.as_slice(), t.prev.as_slice()));
        self.model.propose(vm, self.graph, goal, fcr)
    }
}

/// Running state of one reconstruction module over a real segment.
#[derive(Debug, Clone)]
pub struct FcrTrack {
    pub h: Vec<f64>,
    pub prev: Vec<f64>,
    pub seq: Vec<Vec<f64>>,
}

impl CcmModel {
    /// Normalized current values of a cut.
    fn normalized(&self, cut: &[NodeId], graph: &CausalGraphDynamic) -> Vec<f64> {
        cut.iter().zip(graph.values(cut)).map(|(id, x)| self.ranges.normalize(*id, x)).collect()
    }

    fn start_tracks(&self, graph: &CausalGraphDynamic) -> BTreeMap<String, FcrTrack> {
        self.fcr
            .iter()
            .map(|(label, f)| {
                let v = self.normalized(&f.cut, graph);
                (label.clone(), FcrTrack { h: f.initial_state(), prev: v[1..].to_vec(), seq: vec![v] })
            })
            .collect()
    }

    fn advance_tracks(&self, tracks: &mut BTreeMap<String, FcrTrack>, graph: &CausalGraphDynamic) -> Result<(), AgentError> {
        for (label, track) in tracks.iter_mut() {
            let f = &self.fcr[label];
            let v = self.normalized(&f.cut, graph);
            let (h, _) = f.step(&track.h, v[0], &track.prev)?;
            track.h = h;
            track.prev = v[1..].to_vec();
            track.seq.push(v);
        }
        Ok(())
    }

    fn high_obs(&self, chain: &[CutSet]) -> (Vec<f64>, Vec<CutFeatures>) {
        let topology = &self.topology;
        let region = match chain.last() {
            Some(c) => controllable_region(topology, c.nodes()),
            None => BTreeSet::new(),
        };
        let feats = features(topology, &self.catalog, &region);
        (feats.iter().flat_map(|f| f.to_vec()).collect(), feats)
    }

    /// The chain after choosing cut `a`: nested upstream when possible,
    /// otherwise a fresh chain of one.
    pub fn next_chain(&self, chain: &[CutSet], a: usize, is_con: u8) -> Vec<CutSet> {
        let cut = self.catalog.cuts()[a].clone();
        if let Some(last) = chain.last() {
            if is_con == 0 && chain.len() < self.hp.max_cuts && self.views.contains_key(&view_key(cut.nodes(), last.nodes())) {
                let mut next = chain.to_vec();
                next.push(cut);
                return next;
            }
        }
        vec![cut]
    }

    fn check_scenario(&self, scenario: &Scenario) -> Result<(), AgentError> {
        let graph = scenario.build_graph()?;
        if graph.modifiable() != self.sources || graph.targets() != self.targets || graph.topology() != &self.topology {
            return Err(AgentError::Incompatible(format!(
                "model trained on {} does not match the structure of {}",
                self.scenario, scenario.name
            )));
        }
        Ok(())
    }
}

/// Counters accumulated while training.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainStats {
    pub steps: usize,
    pub episodes: usize,
    pub skipped_updates: usize,
}

#[derive(Debug, Clone)]
pub struct CcmRun {
    pub model: CcmModel,
    pub log: EpisodeLog,
    pub stats: TrainStats,
}

/// Drop an update that hit non-finite numbers, keep every other error.
fn guard<T>(result: Result<T, NnError>, stats: &mut TrainStats, what: &str) -> Result<Option<T>, AgentError> {
    match result {
        Ok(v) => Ok(Some(v)),
        Err(NnError::Numerics(msg)) => {
            log::warn!("skipping {what} update: {msg}");
            stats.skipped_updates += 1;
            Ok(None)
        }
        Err(e) => Err(e.into()),
    }
}

fn mode_action(ac: &ActorCritic, obs: &[f64]) -> Result<(Action, f64, f64), AgentError> {
    let dist = ac.dist(obs)?;
    let a = dist.mode();
    let logp = dist.log_prob(&a);
    Ok((a, logp, ac.value(obs)?))
}

struct Runner<'a> {
    model: &'a mut CcmModel,
    env: Env,
    rng: ChaCha8Rng,
    seed: u64,
    train: bool,
    budget: usize,
    log: EpisodeLog,
    stats: TrainStats,
}

struct Segment {
    rewards: Vec<f64>,
    trace: Vec<f64>,
}

impl Runner<'_> {
    fn episode_len(&self) -> usize {
        self.model.hp.episode_len(self.env.scenario().episode_len)
    }

    fn remaining_budget(&self) -> usize {
        if self.train {
            self.budget - self.stats.steps
        } else {
            usize::MAX
        }
    }

    /// Run one episode; returns the real rewards and the first target's
    /// trajectory.
    fn episode(&mut self, episode: usize) -> Result<Segment, AgentError> {
        self.env.reset(&mut self.rng);
        if self.train {
            self.model.observe_ranges(self.env.graph());
        }
        let ep_len = self.episode_len();
        let mut chain: Vec<CutSet> = Vec::new();
        let mut high = Trajectory::default();
        let mut out = Segment { rewards: Vec::new(), trace: Vec::new() };
        let mut last_high_row = None;
        while self.env.t() < ep_len && self.remaining_budget() > 0 {
            let len = self.model.hp.c.min(ep_len - self.env.t()).min(self.remaining_budget());
            let (hobs, feats) = self.model.high_obs(&chain);
            let dist = self.model.high.dist(&hobs)?;
            let a = match (&dist, self.train) {
                (ActionDist::Categorical { logits }, false) => greedy(logits),
                (_, _) => {
                    let eps = self.model.hp.explore_rate(self.stats.steps as f64 / self.budget.max(1) as f64);
                    if self.rng.random::<f64>() < eps {
                        self.rng.random_range(0..self.model.catalog.len())
                    } else {
                        dist.sample(&mut self.rng).0.as_index().expect("categorical head")
                    }
                }
            };
            let logp = dist.log_prob(&Action::Discrete(a));
            let value = self.model.high.value(&hobs)?;
            let is_con = feats[a].is_con;
            chain = self.model.next_chain(&chain, a, is_con);
            let seg = self.segment(episode, a, &chain, len)?;
            let r_low = avg_low_reward(&seg.rewards, self.model.hp.gamma);
            let r_high = high_reward(r_low, is_con, &self.model.hp);
            let done = self.env.t() >= ep_len;
            high.push(Transition { state: hobs, action: Action::Discrete(a), reward: r_high, value, log_prob: logp, done });
            self.log.push(LogRow {
                seed: self.seed,
                episode,
                t: self.env.t(),
                level: "high".into(),
                cut_id: Some(a),
                goal_center: self.model.goal.center.clone(),
                action: vec![a as f64],
                reward: r_high,
                loss_policy: None,
                loss_value: None,
                loss_fcr: None,
                target: Vec::new(),
            });
            last_high_row = Some(self.log.len() - 1);
            out.rewards.extend(seg.rewards);
            out.trace.extend(seg.trace);
        }
        if self.train && !high.is_empty() {
            if self.env.t() < ep_len {
                let (hobs, _) = self.model.high_obs(&chain);
                high.bootstrap = self.model.high.value(&hobs)?;
            }
            if let Some(report) = guard(self.model.high.update(&high), &mut self.stats, "high-level")? {
                let row = &mut self.log.rows[last_high_row.expect("a decision was logged")];
                row.loss_policy = Some(report.policy);
                row.loss_value = Some(report.value);
            }
        }
        Ok(out)
    }

    /// `len` real steps under the chain's executing view, then (when
    /// training) updates of every view and reconstruction module.
    fn segment(&mut self, episode: usize, a: usize, chain: &[CutSet], len: usize) -> Result<Segment, AgentError> {
        let model = &*self.model;
        let keys = model.chain_keys(chain);
        let exec = keys.last().expect("chain has an executing view").clone();
        let snapshot = self.env.graph().clone();
        let t0 = self.env.t();
        let ep_len = self.episode_len();
        let mut tracks = model.start_tracks(self.env.graph());
        let start_goals = model.goals(&keys, self.env.graph(), &tracks)?;
        let mut traj = Trajectory::default();
        let mut out = Segment { rewards: Vec::with_capacity(len), trace: Vec::with_capacity(len) };
        let mut goal = start_goals[keys.len() - 1].clone();
        let mut first_action = 0.0;
        for step in 0..len {
            let model = &*self.model;
            if step > 0 {
                goal = model.goals(&keys, self.env.graph(), &tracks)?.pop().expect("non-empty chain");
            }
            let vm = &model.views[&exec];
            let obs = model.view_obs(vm, self.env.graph(), &goal);
            let (action, logp, value) =
                if self.train { vm.ac.act(&obs, &mut self.rng)? } else { mode_action(&vm.ac, &obs)? };
            let raw: Vec<f64> =
                model.sources.iter().zip(action.as_slice()).map(|(id, u)| model.scaler.from_unit(*id, *u)).collect();
            first_action += raw[0] / len as f64;
            let actions: BTreeMap<NodeId, f64> = model.sources.iter().copied().zip(raw.iter().copied()).collect();
            self.env.step(&actions, &mut self.rng)?;
            if self.train {
                self.model.observe_ranges(self.env.graph());
            }
            let model = &*self.model;
            model.advance_tracks(&mut tracks, self.env.graph())?;
            let vm = &model.views[&exec];
            let r_view = model.view_reward(vm, self.env.graph(), &goal);
            let target = self.env.target_values();
            let r_real = box_reward(&target, &model.goal, model.hp.omega, model.hp.upsilon);
            self.log.push(LogRow {
                seed: self.seed,
                episode,
                t: self.env.t() - 1,
                level: "low".into(),
                cut_id: Some(a),
                goal_center: goal.center.clone(),
                action: raw,
                reward: r_real,
                loss_policy: None,
                loss_value: None,
                loss_fcr: None,
                target: target.clone(),
            });
            let done = self.env.t() >= ep_len;
            traj.push(Transition { state: obs, action, reward: r_view, value, log_prob: logp, done });
            out.rewards.push(r_real);
            out.trace.push(target[0]);
            self.stats.steps += 1;
        }
        if !self.train {
            return Ok(out);
        }

        let done = self.env.t() >= ep_len;
        let t_end = self.env.t();
        let model = &*self.model;
        if !done {
            let next_goal = model.goals(&keys, self.env.graph(), &tracks)?.pop().expect("non-empty chain");
            let vm = &model.views[&exec];
            traj.bootstrap = vm.ac.value(&model.view_obs(vm, self.env.graph(), &next_goal))?;
        }
        let mut fcr_loss = BTreeMap::new();
        for (label, track) in &tracks {
            let result = self.model.fcr.get_mut(label).expect("tracked module").train(&track.seq);
            match result {
                Ok(s) => {
                    fcr_loss.insert(label.clone(), s.loss);
                }
                Err(AgentError::Numerics(msg)) => {
                    log::warn!("skipping reconstruction update: {msg}");
                    self.stats.skipped_updates += 1;
                }
                Err(e) => return Err(e),
            }
        }
        let mean_reward = traj.transitions.iter().map(|t| t.reward).sum::<f64>() / len as f64;
        let report = guard(self.model.views.get_mut(&exec).expect("view").ac.update(&traj), &mut self.stats, "view")?;
        let k_exec = keys.len() - 1;
        self.push_view_row(episode, t_end, a, k_exec, &start_goals[k_exec], first_action, mean_reward, report, None);

        let noise = self.env.scenario().noise.clone();
        let meals = self.env.scenario().meals.clone().map(|m| (m, self.env.meal_times().to_vec()));
        for k in 0..k_exec {
            let seg = Shadow { key: &keys[k], goal: &start_goals[k], t0, len, ep_len };
            let (mean_reward, mean_action, report) = self.shadow(&seg, &snapshot, &noise, meals.as_ref())?;
            let entry = CutSet::new(self.model.views[&keys[k]].view.local_modifiable.iter().copied()).label();
            let fl = fcr_loss.get(&entry).copied();
            self.push_view_row(episode, t_end, a, k, &start_goals[k], mean_action, mean_reward, report, fl);
        }
        Ok(out)
    }

    #[allow(clippy::too_many_arguments)]
    fn push_view_row(
        &mut self,
        episode: usize,
        t: usize,
        a: usize,
        k: usize,
        goal: &GoalBox,
        action: f64,
        reward: f64,
        report: Option<crate::nn::LossReport>,
        fcr: Option<f64>,
    ) {
        self.log.push(LogRow {
            seed: self.seed,
            episode,
            t,
            level: format!("ccm{k}"),
            cut_id: Some(a),
            goal_center: goal.center.clone(),
            action: vec![action],
            reward,
            loss_policy: report.map(|r| r.policy),
            loss_value: report.map(|r| r.value),
            loss_fcr: fcr,
            target: Vec::new(),
        });
    }

    /// Train one non-executing view in a surgered copy of the graph taken at
    /// the start of the segment. Returns its mean reward, mean first entry
    /// value and losses.
    fn shadow(
        &mut self,
        seg: &Shadow<'_>,
        snapshot: &CausalGraphDynamic,
        noise: &crate::graph::NoiseRegime,
        meals: Option<&(crate::env::MealSchedule, Vec<usize>)>,
    ) -> Result<(f64, f64, Option<crate::nn::LossReport>), AgentError> {
        let model = &*self.model;
        let vm = &model.views[seg.key];
        let mut sub = vm.view.instantiate(snapshot)?;
        let entry = vm.view.local_modifiable.clone();
        let mut fcr_state = if entry.len() > 1 && !model.hp.full_action_head {
            let v = model.normalized(&entry, snapshot);
            let label = CutSet::new(entry.iter().copied()).label();
            Some((model.fcr[&label].initial_state(), v[1..].to_vec()))
        } else {
            None
        };
        let mut traj = Trajectory::default();
        let mut mean_action = 0.0;
        for i in 0..seg.len {
            let obs = model.view_obs(vm, &sub, seg.goal);
            let (action, logp, value) = vm.ac.act(&obs, &mut self.rng)?;
            let (raw, next) =
                model.entry_values(vm, action.as_slice(), fcr_state.as_ref().map(|(h, p)| (h.as_slice(), p.as_slice())))?;
            if next.is_some() {
                fcr_state = next;
            }
            mean_action += raw[0] / seg.len as f64;
            if let Some((m, times)) = meals {
                if sub.topology().contains(m.node) {
                    for (j, &when) in times.iter().enumerate() {
                        if when == seg.t0 + i {
                            let v = sub.value(m.node).expect("meal node retained");
                            sub.set_value(m.node, v + m.sizes[j])?;
                        }
                    }
                }
            }
            let actions: BTreeMap<NodeId, f64> = entry.iter().copied().zip(raw).collect();
            sub.step(&actions, &mut self.rng)?;
            inject_noise(&mut sub, noise, &mut self.rng);
            let reward = model.view_reward(vm, &sub, seg.goal);
            let done = seg.t0 + i + 1 >= seg.ep_len;
            traj.push(Transition { state: obs, action, reward, value, log_prob: logp, done });
        }
        if seg.t0 + seg.len < seg.ep_len {
            traj.bootstrap = vm.ac.value(&model.view_obs(vm, &sub, seg.goal))?;
        }
        let mean_reward = traj.transitions.iter().map(|t| t.reward).sum::<f64>() / seg.len as f64;
        let report = guard(self.model.views.get_mut(seg.key).expect("view").ac.update(&traj), &mut self.stats, "view")?;
        Ok((mean_reward, mean_action, report))
    }
}

struct Shadow<'a> {
    key: &'a str,
    goal: &'a GoalBox,
    t0: usize,
    len: usize,
    ep_len: usize,
}

/// Train from scratch for `budget` real environment steps.
pub fn train_ccm(scenario: &Scenario, hp: &HyperParams, seed: u64, budget: usize) -> Result<CcmRun, AgentError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut model = CcmModel::new(scenario, hp, &mut rng)?;
    let env = Env::new(scenario.clone())?;
    let mut runner =
        Runner { model: &mut model, env, rng, seed, train: true, budget, log: EpisodeLog::default(), stats: TrainStats::default() };
    let mut episode = 0;
    while runner.stats.steps < budget {
        runner.episode(episode).map_err(|e| AgentError::context(seed, episode, e))?;
        episode += 1;
        runner.stats.episodes = episode;
    }
    let (log, stats) = (runner.log, runner.stats);
    Ok(CcmRun { model, log, stats })
}

/// Run `episodes` greedy episodes with frozen parameters.
pub fn evaluate_ccm(model: &CcmModel, scenario: &Scenario, episodes: usize, seed: u64) -> Result<Evaluation, AgentError> {
    model.check_scenario(scenario)?;
    let mut frozen = model.clone();
    let env = Env::new(scenario.clone())?;
    let rng = ChaCha8Rng::seed_from_u64(seed);
    let mut runner =
        Runner { model: &mut frozen, env, rng, seed, train: false, budget: 0, log: EpisodeLog::default(), stats: TrainStats::default() };
    let mut eval = Evaluation::default();
    for episode in 0..episodes {
        let seg = runner.episode(episode).map_err(|e| AgentError::context(seed, episode, e))?;
        eval.push_episode(&seg.rewards, seg.trace);
    }
    eval.log = runner.log;
    Ok(eval)
}
