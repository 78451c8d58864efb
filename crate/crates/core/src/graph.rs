//! Causal graph dynamics: a DAG of typed variables, each driven by a
//! structural equation, stepped forward in discrete time.
//!
//! Nodes are evaluated in topological order. A parent read with delay `τ = 0`
//! sees the value computed in the same step; a delay `τ ≥ 1` reads the value
//! from `τ` steps earlier. ODE nodes integrate their own previous value with
//! one explicit Euler step, reading parent values from the current step.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(pub u32);

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "x{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Modifiable,
    Target,
    Observed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HillSign {
    Activation,
    Repression,
}

/// One regulatory input of a Hill-with-delay node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HillTerm {
    pub sign: HillSign,
    pub gain: f64,
    pub threshold: f64,
    pub exponent: f64,
    pub delay: usize,
}

/// Named right-hand sides for ODE nodes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RateFn {
    /// `dx/dt = -k·x + Σ c_j·p_j`, params `[k, c_1, .., c_m]`.
    Linear,
    /// `dG/dt = -(p1 + X)·G + p1·Gb + r·Q`, parents `[X, Q]`, params `[p1, Gb, r]`.
    MinimalGlucose,
}

impl RateFn {
    fn expected_params(self, parents: usize) -> usize {
        match self {
            RateFn::Linear => 1 + parents,
            RateFn::MinimalGlucose => 3,
        }
    }

    fn expected_parents(self) -> Option<usize> {
        match self {
            RateFn::Linear => None,
            RateFn::MinimalGlucose => Some(2),
        }
    }

    pub fn rate(self, own: f64, parents: &[f64], params: &[f64]) -> f64 {
        match self {
            RateFn::Linear => {
                let inflow: f64 = params[1..].iter().zip(parents).map(|(c, p)| c * p).sum();
                -params[0] * own + inflow
            }
            RateFn::MinimalGlucose => {
                let (p1, basal, absorption) = (params[0], params[1], params[2]);
                let (action, gut) = (parents[0], parents[1]);
                -(p1 + action) * own + p1 * basal + absorption * gut
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum StructuralEquation {
    /// `x = Σ w_j·p_j + N(0, δ²)`; weights follow parents in ascending id order.
    LinearGaussian { weights: Vec<f64>, noise_sd: f64 },
    /// `x = Σ hill_j(p_j(t - τ_j)) + N(0, δ²)`; one term per parent, ascending id order.
    HillDelay { terms: Vec<HillTerm>, noise_sd: f64 },
    OdeRate { rate: RateFn, params: Vec<f64>, step: f64 },
}

impl StructuralEquation {
    pub fn max_delay(&self) -> usize {
        match self {
            StructuralEquation::HillDelay { terms, .. } => {
                terms.iter().map(|t| t.delay).max().unwrap_or(0)
            }
            _ => 0,
        }
    }

    fn arity(&self) -> Option<usize> {
        match self {
            StructuralEquation::LinearGaussian { weights, .. } => Some(weights.len()),
            StructuralEquation::HillDelay { terms, .. } => Some(terms.len()),
            StructuralEquation::OdeRate { rate, .. } => rate.expected_parents(),
        }
    }

    fn without_noise(&self) -> Self {
        let mut eq = self.clone();
        match &mut eq {
            StructuralEquation::LinearGaussian { noise_sd, .. }
            | StructuralEquation::HillDelay { noise_sd, .. } => *noise_sd = 0.0,
            StructuralEquation::OdeRate { .. } => {}
        }
        eq
    }

    fn validate(&self, node: NodeId, parents: usize) -> Result<(), GraphError> {
        let bad = |what: &str| GraphError::InvalidParameter { node, what: what.to_string() };
        if let Some(arity) = self.arity() {
            if arity != parents {
                return Err(GraphError::Arity { node, expected: parents, found: arity });
            }
        }
        match self {
            StructuralEquation::LinearGaussian { weights, noise_sd } => {
                if !(*noise_sd >= 0.0) {
                    return Err(bad("noise_sd must be >= 0"));
                }
                if weights.iter().any(|w| !w.is_finite()) {
                    return Err(bad("weights must be finite"));
                }
            }
            StructuralEquation::HillDelay { terms, noise_sd } => {
                if !(*noise_sd >= 0.0) {
                    return Err(bad("noise_sd must be >= 0"));
                }
                for term in terms {
                    if !(term.gain > 0.0) {
                        return Err(bad("hill gain must be > 0"));
                    }
                    if !(term.threshold > 0.0) {
                        return Err(bad("hill threshold must be > 0"));
                    }
                    if !(term.exponent >= 1.0) {
                        return Err(bad("hill exponent must be >= 1"));
                    }
                }
            }
            StructuralEquation::OdeRate { rate, params, step } => {
                if params.len() != rate.expected_params(parents) {
                    return Err(GraphError::Arity {
                        node,
                        expected: rate.expected_params(parents),
                        found: params.len(),
                    });
                }
                if !(*step > 0.0) {
                    return Err(bad("integration step must be > 0"));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeSpec {
    pub id: NodeId,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub role: Role,
    pub equation: StructuralEquation,
    #[serde(default)]
    pub init: f64,
}

/// Serializable graph description (`nodes` + `edges`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphSpec {
    pub nodes: Vec<NodeSpec>,
    pub edges: Vec<(NodeId, NodeId)>,
}

impl GraphSpec {
    pub fn from_json(text: &str) -> Result<Self, GraphError> {
        serde_json::from_str(text).map_err(|e| GraphError::Format(e.to_string()))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("graph spec serializes")
    }

    pub fn build(&self) -> Result<CausalGraphDynamic, GraphError> {
        build_graph(self.nodes.clone(), &self.edges)
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GraphError {
    #[error("edges contain a cycle through {0}")]
    Cycle(NodeId),
    #[error("{node}: equation has {found} parent terms but the graph gives {expected} parents")]
    Arity { node: NodeId, expected: usize, found: usize },
    #[error("{0} is not a modifiable node and cannot be intervened on")]
    Intervention(NodeId),
    #[error("hill input must be nonnegative, got {0}")]
    Domain(f64),
    #[error("duplicate node id {0}")]
    DuplicateId(NodeId),
    #[error("unknown node id {0}")]
    UnknownNode(NodeId),
    #[error("graph needs at least one {0} node")]
    MissingRole(&'static str),
    #[error("{node}: {what}")]
    InvalidParameter { node: NodeId, what: String },
    #[error("noise regime: {0}")]
    Noise(String),
    #[error("graph file: {0}")]
    Format(String),
}

/// Pure adjacency view of a DAG, indexed densely by ascending node id.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "TopologyRepr", into = "TopologyRepr")]
pub struct Topology {
    ids: Vec<NodeId>,
    index: BTreeMap<NodeId, usize>,
    parents: Vec<Vec<usize>>,
    children: Vec<Vec<usize>>,
    order: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
struct TopologyRepr {
    ids: Vec<NodeId>,
    edges: Vec<(NodeId, NodeId)>,
}

impl From<Topology> for TopologyRepr {
    fn from(t: Topology) -> Self {
        TopologyRepr { edges: t.edges(), ids: t.ids }
    }
}

impl TryFrom<TopologyRepr> for Topology {
    type Error = GraphError;

    fn try_from(r: TopologyRepr) -> Result<Self, GraphError> {
        Topology::new(&r.ids, &r.edges)
    }
}

impl Topology {
    pub fn new(ids: &[NodeId], edges: &[(NodeId, NodeId)]) -> Result<Self, GraphError> {
        let mut sorted = ids.to_vec();
        sorted.sort();
        let mut index = BTreeMap::new();
        for (i, id) in sorted.iter().enumerate() {
            if index.insert(*id, i).is_some() {
                return Err(GraphError::DuplicateId(*id));
            }
        }
        let n = sorted.len();
        let mut parents = vec![BTreeSet::new(); n];
        let mut children = vec![BTreeSet::new(); n];
        for &(from, to) in edges {
            let f = *index.get(&from).ok_or(GraphError::UnknownNode(from))?;
            let t = *index.get(&to).ok_or(GraphError::UnknownNode(to))?;
            if f == t {
                return Err(GraphError::Cycle(from));
            }
            parents[t].insert(f);
            children[f].insert(t);
        }
        let parents: Vec<Vec<usize>> = parents.into_iter().map(|s| s.into_iter().collect()).collect();
        let children: Vec<Vec<usize>> = children.into_iter().map(|s| s.into_iter().collect()).collect();

        // Kahn's algorithm, always taking the smallest ready index.
        let mut indeg: Vec<usize> = parents.iter().map(Vec::len).collect();
        let mut ready: BTreeSet<usize> = (0..n).filter(|&i| indeg[i] == 0).collect();
        let mut order = Vec::with_capacity(n);
        while let Some(&i) = ready.iter().next() {
            ready.remove(&i);
            order.push(i);
            for &c in &children[i] {
                indeg[c] -= 1;
                if indeg[c] == 0 {
                    ready.insert(c);
                }
            }
        }
        if order.len() != n {
            let stuck = (0..n).find(|&i| indeg[i] > 0).unwrap();
            return Err(GraphError::Cycle(sorted[stuck]));
        }
        Ok(Topology { ids: sorted, index, parents, children, order })
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn ids(&self) -> &[NodeId] {
        &self.ids
    }

    pub fn index_of(&self, id: NodeId) -> Option<usize> {
        self.index.get(&id).copied()
    }

    pub fn id(&self, index: usize) -> NodeId {
        self.ids[index]
    }

    pub fn contains(&self, id: NodeId) -> bool {
        self.index.contains_key(&id)
    }

    pub fn parents(&self, id: NodeId) -> Vec<NodeId> {
        self.index_of(id)
            .map(|i| self.parents[i].iter().map(|&p| self.ids[p]).collect())
            .unwrap_or_default()
    }

    pub fn children(&self, id: NodeId) -> Vec<NodeId> {
        self.index_of(id)
            .map(|i| self.children[i].iter().map(|&c| self.ids[c]).collect())
            .unwrap_or_default()
    }

    pub fn edges(&self) -> Vec<(NodeId, NodeId)> {
        let mut out = Vec::new();
        for (f, cs) in self.children.iter().enumerate() {
            for &c in cs {
                out.push((self.ids[f], self.ids[c]));
            }
        }
        out
    }

    pub fn topological_order(&self) -> Vec<NodeId> {
        self.order.iter().map(|&i| self.ids[i]).collect()
    }

    pub(crate) fn parent_indices(&self, i: usize) -> &[usize] {
        &self.parents[i]
    }

    pub(crate) fn order_indices(&self) -> &[usize] {
        &self.order
    }

    /// Nodes reachable from `start` along edges (start included), never
    /// entering `blocked` and never leaving a node through a `skip` edge.
    pub fn reach_forward(
        &self,
        start: &[NodeId],
        blocked: &BTreeSet<NodeId>,
        skip: &BTreeSet<(NodeId, NodeId)>,
    ) -> BTreeSet<NodeId> {
        self.reach(start, blocked, skip, true)
    }

    /// Nodes from which some node of `start` is reachable (start included).
    pub fn reach_backward(
        &self,
        start: &[NodeId],
        blocked: &BTreeSet<NodeId>,
        skip: &BTreeSet<(NodeId, NodeId)>,
    ) -> BTreeSet<NodeId> {
        self.reach(start, blocked, skip, false)
    }

    fn reach(
        &self,
        start: &[NodeId],
        blocked: &BTreeSet<NodeId>,
        skip: &BTreeSet<(NodeId, NodeId)>,
        forward: bool,
    ) -> BTreeSet<NodeId> {
        let mut seen = BTreeSet::new();
        let mut stack: Vec<usize> = Vec::new();
        for id in start {
            if blocked.contains(id) {
                continue;
            }
            if let Some(i) = self.index_of(*id) {
                if seen.insert(*id) {
                    stack.push(i);
                }
            }
        }
        while let Some(i) = stack.pop() {
            let next = if forward { &self.children[i] } else { &self.parents[i] };
            for &j in next {
                let edge = if forward { (self.ids[i], self.ids[j]) } else { (self.ids[j], self.ids[i]) };
                if skip.contains(&edge) || blocked.contains(&self.ids[j]) {
                    continue;
                }
                if seen.insert(self.ids[j]) {
                    stack.push(j);
                }
            }
        }
        seen
    }

    /// Unweighted directed distance from any of `from` to any of `to`.
    pub fn shortest_distance(&self, from: &[NodeId], to: &[NodeId]) -> Option<usize> {
        let goal: BTreeSet<usize> = to.iter().filter_map(|id| self.index_of(*id)).collect();
        let mut dist = vec![usize::MAX; self.len()];
        let mut queue = VecDeque::new();
        for id in from {
            if let Some(i) = self.index_of(*id) {
                dist[i] = 0;
                queue.push_back(i);
            }
        }
        while let Some(i) = queue.pop_front() {
            if goal.contains(&i) {
                return Some(dist[i]);
            }
            for &c in &self.children[i] {
                if dist[c] == usize::MAX {
                    dist[c] = dist[i] + 1;
                    queue.push_back(c);
                }
            }
        }
        None
    }
}

/// `β·xⁿ/(Kⁿ+xⁿ)` for activation, `β·Kⁿ/(Kⁿ+xⁿ)` for repression.
pub fn eval_hill(x: f64, sign: HillSign, gain: f64, threshold: f64, exponent: f64) -> Result<f64, GraphError> {
    if !(x >= 0.0) {
        return Err(GraphError::Domain(x));
    }
    let xn = x.powf(exponent);
    let kn = threshold.powf(exponent);
    let denom = kn + xn;
    Ok(match sign {
        HillSign::Activation => gain * xn / denom,
        HillSign::Repression => gain * kn / denom,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseKind {
    None,
    RandomLarge,
}

/// Rare multiplicative spikes on parentless upstream variables.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseRegime {
    pub kind: NoiseKind,
    pub trigger_prob: f64,
    pub magnitude_factor: f64,
}

impl NoiseRegime {
    pub const fn none() -> Self {
        NoiseRegime { kind: NoiseKind::None, trigger_prob: 0.0, magnitude_factor: 0.0 }
    }

    pub fn random_large(trigger_prob: f64, magnitude_factor: f64) -> Result<Self, GraphError> {
        let regime = NoiseRegime { kind: NoiseKind::RandomLarge, trigger_prob, magnitude_factor };
        regime.validate()?;
        Ok(regime)
    }

    pub fn validate(&self) -> Result<(), GraphError> {
        if self.kind == NoiseKind::RandomLarge {
            if !(self.magnitude_factor > 10.0) {
                return Err(GraphError::Noise(format!(
                    "magnitude_factor must exceed 10, got {}",
                    self.magnitude_factor
                )));
            }
            if !(0.0..=1.0).contains(&self.trigger_prob) {
                return Err(GraphError::Noise(format!("trigger_prob {} outside [0, 1]", self.trigger_prob)));
            }
        }
        Ok(())
    }
}

impl Default for NoiseRegime {
    fn default() -> Self {
        NoiseRegime::none()
    }
}

/// A running causal graph dynamic. Single owner; all mutation goes through
/// `&mut self`.
#[derive(Debug, Clone)]
pub struct CausalGraphDynamic {
    nodes: Vec<NodeSpec>,
    topology: Topology,
    /// `frames[0]` is the current state, `frames[k]` the state `k` steps ago.
    frames: VecDeque<Vec<f64>>,
    depth: usize,
    interventions: BTreeMap<usize, f64>,
    pins: BTreeMap<usize, f64>,
    scratch_noise: Vec<f64>,
}

pub fn build_graph(specs: Vec<NodeSpec>, edges: &[(NodeId, NodeId)]) -> Result<CausalGraphDynamic, GraphError> {
    let ids: Vec<NodeId> = specs.iter().map(|s| s.id).collect();
    let topology = Topology::new(&ids, edges)?;
    let mut nodes = specs;
    nodes.sort_by_key(|s| s.id);

    for (i, node) in nodes.iter().enumerate() {
        node.equation.validate(node.id, topology.parent_indices(i).len())?;
    }
    if !nodes.iter().any(|n| n.role == Role::Modifiable) {
        return Err(GraphError::MissingRole("modifiable"));
    }
    if !nodes.iter().any(|n| n.role == Role::Target) {
        return Err(GraphError::MissingRole("target"));
    }

    let depth = nodes.iter().map(|n| n.equation.max_delay()).max().unwrap_or(0).max(1);
    let init: Vec<f64> = nodes.iter().map(|n| n.init).collect();
    let frames = std::iter::repeat(init).take(depth).collect();
    let n = nodes.len();
    Ok(CausalGraphDynamic {
        nodes,
        topology,
        frames,
        depth,
        interventions: BTreeMap::new(),
        pins: BTreeMap::new(),
        scratch_noise: vec![0.0; n],
    })
}

impl CausalGraphDynamic {
    pub fn topology(&self) -> &Topology {
        &self.topology
    }

    pub fn nodes(&self) -> &[NodeSpec] {
        &self.nodes
    }

    pub fn node(&self, id: NodeId) -> Option<&NodeSpec> {
        self.topology.index_of(id).map(|i| &self.nodes[i])
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn ids_with_role(&self, role: Role) -> Vec<NodeId> {
        self.nodes.iter().filter(|n| n.role == role).map(|n| n.id).collect()
    }

    pub fn modifiable(&self) -> Vec<NodeId> {
        self.ids_with_role(Role::Modifiable)
    }

    pub fn targets(&self) -> Vec<NodeId> {
        self.ids_with_role(Role::Target)
    }

    pub fn spec(&self) -> GraphSpec {
        GraphSpec { nodes: self.nodes.clone(), edges: self.topology.edges() }
    }

    /// Current values, indexed like `topology().ids()`.
    pub fn state(&self) -> &[f64] {
        &self.frames[0]
    }

    pub fn value(&self, id: NodeId) -> Option<f64> {
        self.topology.index_of(id).map(|i| self.frames[0][i])
    }

    pub fn values(&self, ids: &[NodeId]) -> Vec<f64> {
        ids.iter().map(|id| self.value(*id).expect("known node")).collect()
    }

    /// Value of `id` as it was `lag` steps ago (`lag = 0` is current).
    pub fn lagged(&self, id: NodeId, lag: usize) -> Option<f64> {
        let i = self.topology.index_of(id)?;
        self.frames.get(lag).map(|f| f[i])
    }

    pub fn history_len(&self) -> usize {
        self.frames.len()
    }

    pub fn max_delay(&self) -> usize {
        self.nodes.iter().map(|n| n.equation.max_delay()).max().unwrap_or(0)
    }

    /// Overwrite the current value of a node. Used for disturbances; does
    /// not create a persistent clamp.
    pub fn set_value(&mut self, id: NodeId, value: f64) -> Result<(), GraphError> {
        let i = self.topology.index_of(id).ok_or(GraphError::UnknownNode(id))?;
        self.frames[0][i] = value;
        Ok(())
    }

    /// Copy of this graph with every noise term set to zero.
    pub fn without_noise(&self) -> Self {
        let mut g = self.clone();
        for n in &mut g.nodes {
            n.equation = n.equation.without_noise();
        }
        g
    }

    /// Restart from the initial values with an empty history.
    pub fn reset(&mut self) {
        let init: Vec<f64> = self.nodes.iter().map(|n| n.init).collect();
        self.frames = std::iter::repeat(init).take(self.depth).collect();
        self.interventions.clear();
        self.pins.clear();
    }

    /// Replace the whole history with `frames` (most recent first). Missing
    /// older frames repeat the oldest one given.
    pub fn load_frames(&mut self, frames: Vec<Vec<f64>>) {
        assert!(!frames.is_empty() && frames.iter().all(|f| f.len() == self.len()));
        let oldest = frames.last().unwrap().clone();
        let mut frames: VecDeque<Vec<f64>> = frames.into_iter().take(self.depth).collect();
        while frames.len() < self.depth {
            frames.push_back(oldest.clone());
        }
        self.frames = frames;
    }

    pub fn frames(&self) -> impl Iterator<Item = &Vec<f64>> {
        self.frames.iter()
    }

    pub fn apply_do(&mut self, id: NodeId, value: f64) -> Result<(), GraphError> {
        let i = self.modifiable_index(id)?;
        self.interventions.insert(i, value);
        Ok(())
    }

    pub fn release_do(&mut self, id: NodeId) -> Result<(), GraphError> {
        let i = self.modifiable_index(id)?;
        self.interventions.remove(&i);
        Ok(())
    }

    pub fn active_interventions(&self) -> BTreeMap<NodeId, f64> {
        self.interventions.iter().map(|(&i, &v)| (self.topology.id(i), v)).collect()
    }

    /// Hold any node (regardless of role) at a fixed boundary value. Used to
    /// isolate a sub-mechanism for analysis; agents act through `apply_do`.
    pub fn pin(&mut self, id: NodeId, value: f64) -> Result<(), GraphError> {
        let i = self.topology.index_of(id).ok_or(GraphError::UnknownNode(id))?;
        self.pins.insert(i, value);
        Ok(())
    }

    pub fn unpin(&mut self, id: NodeId) {
        if let Some(i) = self.topology.index_of(id) {
            self.pins.remove(&i);
        }
    }

    fn modifiable_index(&self, id: NodeId) -> Result<usize, GraphError> {
        let i = self.topology.index_of(id).ok_or(GraphError::UnknownNode(id))?;
        if self.nodes[i].role != Role::Modifiable {
            return Err(GraphError::Intervention(id));
        }
        Ok(i)
    }

    /// Advance one step. `interventions` apply to this step only and take
    /// precedence over persistent `apply_do` clamps.
    ///
    /// One standard normal is drawn per node per step, in id order, whether or
    /// not it is used, so paired runs sharing a seed stay aligned.
    pub fn step<R: Rng + ?Sized>(
        &mut self,
        interventions: &BTreeMap<NodeId, f64>,
        rng: &mut R,
    ) -> Result<&[f64], GraphError> {
        let mut clamps = self.interventions.clone();
        for (&id, &v) in interventions {
            clamps.insert(self.modifiable_index(id)?, v);
        }
        for (&i, &v) in &self.pins {
            clamps.insert(i, v);
        }

        for z in self.scratch_noise.iter_mut() {
            *z = StandardNormal.sample(rng);
        }

        let n = self.len();
        let mut next = vec![0.0; n];
        for &i in self.topology.order_indices() {
            if let Some(&v) = clamps.get(&i) {
                next[i] = v;
                continue;
            }
            let parents = self.topology.parent_indices(i);
            let z = self.scratch_noise[i];
            next[i] = match &self.nodes[i].equation {
                StructuralEquation::LinearGaussian { weights, noise_sd } => {
                    let mean: f64 = weights.iter().zip(parents).map(|(w, &p)| w * next[p]).sum();
                    mean + noise_sd * z
                }
                StructuralEquation::HillDelay { terms, noise_sd } => {
                    let mut mean = 0.0;
                    for (term, &p) in terms.iter().zip(parents) {
                        let x = if term.delay == 0 { next[p] } else { self.frames[term.delay - 1][p] };
                        mean += eval_hill(x.max(0.0), term.sign, term.gain, term.threshold, term.exponent)?;
                    }
                    mean + noise_sd * z
                }
                StructuralEquation::OdeRate { rate, params, step } => {
                    let own = self.frames[0][i];
                    let inputs: Vec<f64> = parents.iter().map(|&p| next[p]).collect();
                    (own + step * rate.rate(own, &inputs, params)).max(0.0)
                }
            };
        }

        if self.frames.len() == self.depth {
            self.frames.pop_back();
        }
        self.frames.push_front(next);
        Ok(&self.frames[0])
    }

    /// Parentless nodes that are targets or ancestors of a target, actuators
    /// included: a perturbed actuator value still reaches delayed children.
    pub fn noise_eligible(&self) -> Vec<NodeId> {
        let targets = self.targets();
        let upstream = self.topology.reach_backward(&targets, &BTreeSet::new(), &BTreeSet::new());
        upstream.into_iter().filter(|id| self.topology.parents(*id).is_empty()).collect()
    }
}

/// Apply one draw of a noise regime to the current state. Each eligible node
/// is hit with probability `trigger_prob` and multiplied by a factor drawn
/// uniformly from `[magnitude_factor, 2·magnitude_factor]`.
pub fn inject_noise<R: Rng + ?Sized>(
    graph: &mut CausalGraphDynamic,
    regime: &NoiseRegime,
    rng: &mut R,
) -> Vec<NodeId> {
    if regime.kind == NoiseKind::None {
        return Vec::new();
    }
    let mut hit = Vec::new();
    for id in graph.noise_eligible() {
        let coin: f64 = rng.random();
        let factor = rng.random_range(regime.magnitude_factor..=2.0 * regime.magnitude_factor);
        if coin < regime.trigger_prob {
            let v = graph.value(id).expect("eligible node exists");
            graph.set_value(id, v * factor).expect("eligible node exists");
            hit.push(id);
        }
    }
    hit
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn lg(id: u32, role: Role, weights: Vec<f64>, sd: f64) -> NodeSpec {
        NodeSpec {
            id: NodeId(id),
            name: None,
            role,
            equation: StructuralEquation::LinearGaussian { weights, noise_sd: sd },
            init: 0.0,
        }
    }

    fn e(a: u32, b: u32) -> (NodeId, NodeId) {
        (NodeId(a), NodeId(b))
    }

    fn chain() -> CausalGraphDynamic {
        build_graph(
            vec![
                lg(0, Role::Modifiable, vec![], 0.0),
                lg(1, Role::Observed, vec![1.0], 0.0),
                lg(2, Role::Target, vec![1.0], 0.0),
            ],
            &[e(0, 1), e(1, 2)],
        )
        .unwrap()
    }

    fn observed_root() -> CausalGraphDynamic {
        build_graph(
            vec![
                lg(0, Role::Modifiable, vec![], 0.0),
                lg(1, Role::Observed, vec![], 0.0),
                lg(2, Role::Target, vec![1.0, 1.0], 0.0),
            ],
            &[e(0, 2), e(1, 2)],
        )
        .unwrap()
    }

    #[test]
    fn minimal_chain_builds() {
        let g = chain();
        assert_eq!(g.len(), 3);
        assert_eq!(g.topology().topological_order(), vec![NodeId(0), NodeId(1), NodeId(2)]);
    }

    #[test]
    fn cycle_is_rejected() {
        let err = build_graph(
            vec![lg(0, Role::Modifiable, vec![1.0], 0.1), lg(1, Role::Target, vec![1.0], 0.1)],
            &[e(0, 1), e(1, 0)],
        )
        .unwrap_err();
        assert!(matches!(err, GraphError::Cycle(_)));
    }

    #[test]
    fn arity_mismatch_is_rejected() {
        let err = build_graph(
            vec![
                lg(0, Role::Modifiable, vec![], 0.1),
                lg(2, Role::Observed, vec![], 0.1),
                lg(1, Role::Target, vec![1.0], 0.1),
            ],
            &[e(0, 1), e(2, 1)],
        )
        .unwrap_err();
        assert_eq!(err, GraphError::Arity { node: NodeId(1), expected: 2, found: 1 });
    }

    #[test]
    fn roles_are_required() {
        let err = build_graph(vec![lg(0, Role::Observed, vec![], 0.1)], &[]).unwrap_err();
        assert_eq!(err, GraphError::MissingRole("modifiable"));
    }

    #[test]
    fn zero_weight_gives_zero() {
        let mut g = chain();
        let mut spec = g.spec();
        spec.nodes[1].equation = StructuralEquation::LinearGaussian { weights: vec![0.0], noise_sd: 0.0 };
        g = spec.build().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let iv = BTreeMap::from([(NodeId(0), 3.0)]);
        g.step(&iv, &mut rng).unwrap();
        assert_eq!(g.value(NodeId(1)), Some(0.0));
    }

    #[test]
    fn weighted_sum_of_parents() {
        // parents x1 = 2, x2 = -1 (clamped), weights (0.5, 1.0) -> 0.0
        let mut g = build_graph(
            vec![
                lg(1, Role::Modifiable, vec![], 0.0),
                lg(2, Role::Modifiable, vec![], 0.0),
                lg(3, Role::Target, vec![0.5, 1.0], 0.0),
            ],
            &[e(1, 3), e(2, 3)],
        )
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let iv = BTreeMap::from([(NodeId(1), 2.0), (NodeId(2), -1.0)]);
        g.step(&iv, &mut rng).unwrap();
        assert_eq!(g.value(NodeId(3)), Some(0.0));
    }

    #[test]
    fn parentless_node_is_standard_gaussian_times_sd() {
        let mut g = build_graph(
            vec![lg(0, Role::Modifiable, vec![], 0.0), lg(1, Role::Target, vec![], 0.1)],
            &[],
        )
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 100_000;
        let mut sum = 0.0;
        let mut sq = 0.0;
        for _ in 0..n {
            g.step(&BTreeMap::new(), &mut rng).unwrap();
            let v = g.value(NodeId(1)).unwrap();
            sum += v;
            sq += v * v;
        }
        let mean = sum / n as f64;
        let sd = (sq / n as f64 - mean * mean).sqrt();
        assert!(mean.abs() < 0.001, "mean {mean}");
        assert!((sd - 0.1).abs() < 0.002, "sd {sd}");
    }

    #[test]
    fn hill_values() {
        let act = HillSign::Activation;
        assert_eq!(eval_hill(1.5, act, 3.0, 1.5, 2.0).unwrap(), 1.5);
        assert_eq!(eval_hill(0.0, act, 3.0, 1.5, 2.0).unwrap(), 0.0);
        assert_eq!(eval_hill(0.0, HillSign::Repression, 3.0, 1.5, 2.0).unwrap(), 3.0);
        assert!((eval_hill(3.0, act, 2.0, 1.0, 2.0).unwrap() - 1.8).abs() < 1e-15);
        assert_eq!(eval_hill(-0.1, act, 1.0, 1.0, 1.0), Err(GraphError::Domain(-0.1)));
    }

    #[test]
    fn do_clamps_until_released() {
        let mut g = chain();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        g.apply_do(NodeId(0), 5.0).unwrap();
        for _ in 0..3 {
            g.step(&BTreeMap::new(), &mut rng).unwrap();
            assert_eq!(g.value(NodeId(0)), Some(5.0));
            assert_eq!(g.value(NodeId(1)), Some(5.0));
        }
        g.release_do(NodeId(0)).unwrap();
        g.step(&BTreeMap::new(), &mut rng).unwrap();
        assert_eq!(g.value(NodeId(0)), Some(0.0));
    }

    #[test]
    fn do_on_observed_node_fails() {
        let mut g = chain();
        assert_eq!(g.apply_do(NodeId(1), 1.0), Err(GraphError::Intervention(NodeId(1))));
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let iv = BTreeMap::from([(NodeId(2), 1.0)]);
        assert_eq!(g.step(&iv, &mut rng).unwrap_err(), GraphError::Intervention(NodeId(2)));
    }

    #[test]
    fn delayed_parent_is_read_from_history() {
        let term = HillTerm { sign: HillSign::Activation, gain: 1.0, threshold: 1.0, exponent: 1.0, delay: 2 };
        let mut g = build_graph(
            vec![
                lg(0, Role::Modifiable, vec![], 0.0),
                NodeSpec {
                    id: NodeId(1),
                    name: None,
                    role: Role::Target,
                    equation: StructuralEquation::HillDelay { terms: vec![term], noise_sd: 0.0 },
                    init: 0.0,
                },
            ],
            &[e(0, 1)],
        )
        .unwrap();
        assert_eq!(g.history_len(), 2);
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let mut seen = Vec::new();
        for v in [1.0, 0.0, 0.0, 0.0] {
            g.step(&BTreeMap::from([(NodeId(0), v)]), &mut rng).unwrap();
            seen.push(g.value(NodeId(1)).unwrap());
        }
        // pulse at step 0 arrives at step 2
        assert_eq!(seen, vec![0.0, 0.0, 0.5, 0.0]);
    }

    #[test]
    fn noise_none_is_noop() {
        let mut g = chain();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let before = g.state().to_vec();
        assert!(inject_noise(&mut g, &NoiseRegime::none(), &mut rng).is_empty());
        assert_eq!(g.state(), &before[..]);
    }

    #[test]
    fn certain_noise_multiplies_into_range() {
        let mut g = observed_root();
        g.set_value(NodeId(0), 1.0).unwrap();
        g.set_value(NodeId(1), 1.0).unwrap();
        let regime = NoiseRegime::random_large(1.0, 12.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let hit = inject_noise(&mut g, &regime, &mut rng);
        assert_eq!(hit, vec![NodeId(0), NodeId(1)]);
        for id in hit {
            let v = g.value(id).unwrap();
            assert!((12.0..=24.0).contains(&v), "{v}");
        }
    }

    #[test]
    fn impossible_noise_never_fires() {
        let mut g = observed_root();
        let regime = NoiseRegime::random_large(0.0, 12.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..10_000 {
            assert!(inject_noise(&mut g, &regime, &mut rng).is_empty());
        }
    }

    #[test]
    fn weak_noise_regime_is_rejected() {
        assert!(NoiseRegime::random_large(0.1, 5.0).is_err());
    }

    #[test]
    fn json_round_trip_is_identical() {
        let spec = chain().spec();
        let text = spec.to_json();
        let back = GraphSpec::from_json(&text).unwrap();
        assert_eq!(back, spec);
        assert_eq!(back.to_json(), text);
    }
}
