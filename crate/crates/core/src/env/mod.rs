//! Control scenarios: a causal graph plus a goal on its targets, a noise
//! regime, an episode length and per-node value ranges.

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{
    inject_noise, CausalGraphDynamic, GraphError, GraphSpec, NodeId, NoiseRegime, StructuralEquation,
};

mod builders;
pub mod fixtures;
pub mod glucose;

pub use builders::{build_env1, build_env2, build_env3, build_fig2, noise_for, standard_noise};
pub use glucose::{build_glucose, make_cohort, tir, GlucoseParams, Group, IndividualParams};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ScenarioError {
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error("unknown scenario {0:?}")]
    Unknown(String),
    #[error("scenario file: {0}")]
    Format(String),
    #[error("fixture {name}: digest {found} does not match recorded {expected}")]
    Digest { name: String, expected: String, found: String },
    #[error("invalid parameter: {0}")]
    Param(String),
    #[error("scenario {0}: {1}")]
    Invalid(String, String),
}

/// Goal box `[g - ε, g + ε]` on the graph's targets (one center per target,
/// in ascending id order).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GoalSpec {
    pub center: Vec<f64>,
    pub half_width: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NodeRange {
    pub node: NodeId,
    pub lo: f64,
    pub hi: f64,
}

/// Scheduled impulses added to one node, with uniform timing jitter drawn
/// at every reset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MealSchedule {
    pub node: NodeId,
    pub times: Vec<usize>,
    pub sizes: Vec<f64>,
    pub jitter: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub name: String,
    #[serde(default)]
    pub description: String,
    pub graph: GraphSpec,
    pub goal: GoalSpec,
    #[serde(default)]
    pub noise: NoiseRegime,
    pub episode_len: usize,
    /// Value ranges used for action scaling and observation normalization.
    pub ranges: Vec<NodeRange>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub meals: Option<MealSchedule>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub individual: Option<IndividualParams>,
}

pub const SCENARIOS: [&str; 5] = ["env1", "env2", "env3", "glucose", "fig2"];

pub fn scenario_by_name(name: &str) -> Result<Scenario, ScenarioError> {
    match name {
        "env1" => Ok(build_env1()),
        "env2" => Ok(build_env2()),
        "env3" => Ok(build_env3()),
        "glucose" => build_glucose(&IndividualParams::base()),
        "fig2" => Ok(build_fig2()),
        other => Err(ScenarioError::Unknown(other.to_string())),
    }
}

impl Scenario {
    pub fn from_json(text: &str) -> Result<Self, ScenarioError> {
        let s: Scenario = serde_json::from_str(text).map_err(|e| ScenarioError::Format(e.to_string()))?;
        s.validate()?;
        Ok(s)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serializes") + "\n"
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        let bad = |why: &str| ScenarioError::Invalid(self.name.clone(), why.to_string());
        let graph = self.graph.build()?;
        self.noise.validate()?;
        if self.goal.center.len() != graph.targets().len() {
            return Err(bad("goal needs one center per target"));
        }
        if !(self.goal.half_width > 0.0) {
            return Err(bad("goal half-width must be positive"));
        }
        if self.episode_len == 0 {
            return Err(bad("episode length must be positive"));
        }
        for id in graph.topology().ids() {
            match self.ranges.iter().find(|r| r.node == *id) {
                Some(r) if r.lo < r.hi => {}
                Some(_) => return Err(bad("empty node range")),
                None => return Err(bad("every node needs a range")),
            }
        }
        if let Some(m) = &self.meals {
            if m.times.len() != m.sizes.len() || !graph.topology().contains(m.node) {
                return Err(bad("malformed meal schedule"));
            }
        }
        Ok(())
    }

    pub fn build_graph(&self) -> Result<CausalGraphDynamic, ScenarioError> {
        Ok(self.graph.build()?)
    }

    pub fn range(&self, id: NodeId) -> (f64, f64) {
        let r = self.ranges.iter().find(|r| r.node == id).expect("scenario covers every node");
        (r.lo, r.hi)
    }

    /// Copy with every delay set to zero.
    pub fn without_delays(&self) -> Scenario {
        let mut s = self.clone();
        for n in &mut s.graph.nodes {
            if let StructuralEquation::HillDelay { terms, .. } = &mut n.equation {
                terms.iter_mut().for_each(|t| t.delay = 0);
            }
        }
        s.name = format!("{}-no-delay", self.name);
        s
    }

    /// The zero-gain limit: every Hill node reduces to its noise term.
    pub fn zero_gain_limit(&self) -> Scenario {
        let mut s = self.clone();
        for n in &mut s.graph.nodes {
            if let StructuralEquation::HillDelay { terms, noise_sd } = &n.equation {
                n.equation = StructuralEquation::LinearGaussian { weights: vec![0.0; terms.len()], noise_sd: *noise_sd };
            }
        }
        s.name = format!("{}-zero-gain", self.name);
        s
    }

    pub fn with_noise(&self, noise: NoiseRegime) -> Scenario {
        Scenario { noise, ..self.clone() }
    }
}

/// A running scenario: the graph plus the clock, meal timing and noise.
#[derive(Debug, Clone)]
pub struct Env {
    scenario: Scenario,
    graph: CausalGraphDynamic,
    sources: Vec<NodeId>,
    targets: Vec<NodeId>,
    meal_times: Vec<usize>,
    t: usize,
}

impl Env {
    pub fn new(scenario: Scenario) -> Result<Self, ScenarioError> {
        scenario.validate()?;
        let graph = scenario.build_graph()?;
        let sources = graph.modifiable();
        let targets = graph.targets();
        Ok(Env { scenario, graph, sources, targets, meal_times: Vec::new(), t: 0 })
    }

    pub fn scenario(&self) -> &Scenario {
        &self.scenario
    }

    pub fn graph(&self) -> &CausalGraphDynamic {
        &self.graph
    }

    pub fn sources(&self) -> &[NodeId] {
        &self.sources
    }

    pub fn targets(&self) -> &[NodeId] {
        &self.targets
    }

    pub fn t(&self) -> usize {
        self.t
    }

    pub fn done(&self) -> bool {
        self.t >= self.scenario.episode_len
    }

    pub fn meal_times(&self) -> &[usize] {
        &self.meal_times
    }

    pub fn reset<R: Rng + ?Sized>(&mut self, rng: &mut R) {
        self.graph.reset();
        self.t = 0;
        self.meal_times = match &self.scenario.meals {
            Some(m) => m
                .times
                .iter()
                .map(|&t| {
                    let j = m.jitter as i64;
                    let d = if j > 0 { rng.random_range(-j..=j) } else { 0 };
                    (t as i64 + d).max(0) as usize
                })
                .collect(),
            None => Vec::new(),
        };
    }

    pub fn target_values(&self) -> Vec<f64> {
        self.graph.values(&self.targets)
    }

    /// Advance one step with the given source interventions. Returns the
    /// nodes hit by the noise regime.
    pub fn step<R: Rng + ?Sized>(
        &mut self,
        actions: &BTreeMap<NodeId, f64>,
        rng: &mut R,
    ) -> Result<Vec<NodeId>, ScenarioError> {
        if let Some(m) = &self.scenario.meals {
            for (k, &when) in self.meal_times.iter().enumerate() {
                if when == self.t {
                    let v = self.graph.value(m.node).expect("meal node exists");
                    self.graph.set_value(m.node, v + m.sizes[k])?;
                }
            }
        }
        self.graph.step(actions, rng)?;
        let hit = inject_noise(&mut self.graph, &self.scenario.noise, rng);
        self.t += 1;
        Ok(hit)
    }
}
