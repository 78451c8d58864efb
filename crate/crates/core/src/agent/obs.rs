use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::env::Scenario;
use crate::graph::{CausalGraphDynamic, NodeId};

/// Fixed affine maps between raw node values and the unit box `[-1, 1]`
/// spanned by the scenario's node ranges.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scaler {
    ranges: BTreeMap<NodeId, (f64, f64)>,
}

const Z_LIMIT: f64 = 5.0;

impl Scaler {
    pub fn new(scenario: &Scenario) -> Self {
        Scaler { ranges: scenario.ranges.iter().map(|r| (r.node, (r.lo, r.hi))).collect() }
    }

    pub fn range(&self, id: NodeId) -> (f64, f64) {
        self.ranges[&id]
    }

    /// Raw value to unit scale (clipped at ±5 so disturbances stay bounded).
    pub fn z(&self, id: NodeId, x: f64) -> f64 {
        let (lo, hi) = self.ranges[&id];
        (2.0 * (x - lo) / (hi - lo) - 1.0).clamp(-Z_LIMIT, Z_LIMIT)
    }

    /// Unit-scale action (clipped to ±1) to a raw value inside the range.
    pub fn from_unit(&self, id: NodeId, u: f64) -> f64 {
        let (lo, hi) = self.ranges[&id];
        lo + (hi - lo) * (u.clamp(-1.0, 1.0) + 1.0) / 2.0
    }

    /// Node values at lags `0..=lags`, on the unit scale.
    pub fn observe(&self, graph: &CausalGraphDynamic, nodes: &[NodeId], lags: usize) -> Vec<f64> {
        let mut out = Vec::with_capacity(nodes.len() * (lags + 1));
        for lag in 0..=lags {
            for id in nodes {
                let x = graph.lagged(*id, lag).or_else(|| graph.value(*id)).expect("observed node exists");
                out.push(self.z(*id, x));
            }
        }
        out
    }
}
