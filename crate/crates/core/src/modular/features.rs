use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::graph::{NodeId, Topology};
use crate::modular::cuts::{CutSet, CutSetCatalog};

/// High-level state entry for one catalog cut.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CutFeatures {
    pub is_con: u8,
    pub dis: usize,
    pub num: usize,
    /// In-degree and out-degree sums over the cut, divided by node count.
    pub extras: Vec<f64>,
}

impl CutFeatures {
    pub const WIDTH: usize = 5;

    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = vec![self.is_con as f64, self.dis as f64, self.num as f64];
        v.extend(&self.extras);
        v
    }
}

/// Nodes reachable from the currently modifiable nodes of the active view.
pub fn controllable_region(topology: &Topology, local_modifiable: &[NodeId]) -> BTreeSet<NodeId> {
    topology.reach_forward(local_modifiable, &BTreeSet::new(), &BTreeSet::new())
}

pub fn cut_features(topology: &Topology, cut: &CutSet, targets: &[NodeId], region: &BTreeSet<NodeId>) -> CutFeatures {
    let n = topology.len().max(1) as f64;
    let is_con = cut.nodes().iter().any(|id| region.contains(id)) as u8;
    let dis = topology.shortest_distance(cut.nodes(), targets).unwrap_or(topology.len());
    let indeg: usize = cut.nodes().iter().map(|id| topology.parents(*id).len()).sum();
    let outdeg: usize = cut.nodes().iter().map(|id| topology.children(*id).len()).sum();
    CutFeatures { is_con, dis, num: cut.size(), extras: vec![indeg as f64 / n, outdeg as f64 / n] }
}

pub fn features(topology: &Topology, catalog: &CutSetCatalog, controllable: &BTreeSet<NodeId>) -> Vec<CutFeatures> {
    catalog
        .cuts()
        .iter()
        .map(|cut| cut_features(topology, cut, &catalog.sinks, controllable))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::modular::cuts::enumerate_min_cuts;

    fn fig2() -> Topology {
        let e = [(0, 1), (0, 2), (1, 3), (2, 4), (3, 5), (4, 5)];
        let edges: Vec<(NodeId, NodeId)> = e.iter().map(|&(a, b)| (NodeId(a), NodeId(b))).collect();
        Topology::new(&(0..6).map(NodeId).collect::<Vec<_>>(), &edges).unwrap()
    }

    #[test]
    fn two_hops_from_target() {
        let t = fig2();
        let cut = CutSet::new([NodeId(1), NodeId(2)]);
        let f = cut_features(&t, &cut, &[NodeId(5)], &BTreeSet::new());
        assert_eq!((f.is_con, f.dis, f.num), (0, 2, 2));
    }

    #[test]
    fn cut_holding_target_has_zero_distance() {
        let t = fig2();
        let f = cut_features(&t, &CutSet::new([NodeId(3), NodeId(5)]), &[NodeId(5)], &BTreeSet::new());
        assert_eq!(f.dis, 0);
    }

    #[test]
    fn empty_region_means_nothing_controllable() {
        let t = fig2();
        let cat = enumerate_min_cuts(&t, &[NodeId(0)], &[NodeId(5)]).unwrap();
        assert!(features(&t, &cat, &BTreeSet::new()).iter().all(|f| f.is_con == 0));
        let region = controllable_region(&t, &[NodeId(3), NodeId(4)]);
        let flags: Vec<u8> = features(&t, &cat, &region).iter().map(|f| f.is_con).collect();
        // catalog order: {1,2} {1,4} {2,3} {3,4}
        assert_eq!(flags, vec![0, 1, 1, 1]);
    }
}
