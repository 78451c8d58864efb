//! Graph surgery: isolate the mechanism between an entry boundary (whose
//! links to parents are severed) and an exit boundary (whose links to
//! children are severed).

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{
    build_graph, CausalGraphDynamic, GraphError, NodeId, NodeSpec, Role, StructuralEquation, Topology,
};
use crate::modular::cuts::CutSet;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SurgeryError {
    #[error("boundary sets intersect at {0}")]
    Boundary(NodeId),
    #[error("unknown node {0}")]
    UnknownNode(NodeId),
    #[error(transparent)]
    Graph(#[from] GraphError),
}

/// A surgered sub-mechanism of a causal graph. The view is a description
/// over the base graph's node ids; `instantiate` turns it into a runnable
/// sub-environment.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CcmView {
    pub retained: Vec<NodeId>,
    pub severed: Vec<(NodeId, NodeId)>,
    pub local_modifiable: Vec<NodeId>,
    pub local_target: Vec<NodeId>,
}

impl CcmView {
    /// The mechanism driven by `entry` and observed at `exit`: every node that
    /// still has a path into `exit` once the entry nodes lose their parents.
    pub fn between(topology: &Topology, entry: &[NodeId], exit: &[NodeId]) -> Result<Self, SurgeryError> {
        for id in entry.iter().chain(exit) {
            if !topology.contains(*id) {
                return Err(SurgeryError::UnknownNode(*id));
            }
        }
        let entry_set: BTreeSet<NodeId> = entry.iter().copied().collect();
        let exit_set: BTreeSet<NodeId> = exit.iter().copied().collect();
        if entry_set == exit_set {
            // Degenerate cut sitting on the exit itself.
            return Ok(CcmView {
                retained: entry_set.iter().copied().collect(),
                severed: sever(topology, &entry_set, &exit_set),
                local_modifiable: entry_set.iter().copied().collect(),
                local_target: exit_set.into_iter().collect(),
            });
        }
        if let Some(id) = entry_set.intersection(&exit_set).next() {
            return Err(SurgeryError::Boundary(*id));
        }
        let skip: BTreeSet<(NodeId, NodeId)> = sever(topology, &entry_set, &exit_set).into_iter().collect();
        let mut retained = topology.reach_backward(exit, &BTreeSet::new(), &skip);
        retained.extend(entry_set.iter().copied());
        // Links between exit nodes and other retained nodes are internal.
        let severed = skip
            .into_iter()
            .filter(|(from, to)| entry_set.contains(to) || !(exit_set.contains(from) && retained.contains(to)))
            .collect();
        Ok(CcmView {
            retained: retained.into_iter().collect(),
            severed,
            local_modifiable: entry_set.into_iter().collect(),
            local_target: exit_set.into_iter().collect(),
        })
    }

    pub fn contains(&self, id: NodeId) -> bool {
        self.retained.binary_search(&id).is_ok()
    }

    pub fn is_degenerate(&self) -> bool {
        self.local_modifiable == self.local_target
    }

    /// Build the view as a standalone graph: entry nodes become parentless
    /// modifiable roots, exit nodes become targets, everything else is
    /// observed. The current history of `base` is copied over.
    pub fn instantiate(&self, base: &CausalGraphDynamic) -> Result<CausalGraphDynamic, SurgeryError> {
        let skip: BTreeSet<(NodeId, NodeId)> = self.severed.iter().copied().collect();
        let keep: BTreeSet<NodeId> = self.retained.iter().copied().collect();
        let edges: Vec<(NodeId, NodeId)> = base
            .topology()
            .edges()
            .into_iter()
            .filter(|e| keep.contains(&e.0) && keep.contains(&e.1) && !skip.contains(e))
            .collect();
        let mut specs = Vec::with_capacity(self.retained.len());
        for id in &self.retained {
            let node = base.node(*id).ok_or(SurgeryError::UnknownNode(*id))?;
            let mut spec: NodeSpec = node.clone();
            if self.local_modifiable.contains(id) {
                spec.role = Role::Modifiable;
                spec.equation = StructuralEquation::LinearGaussian { weights: vec![], noise_sd: 0.0 };
            } else if self.local_target.contains(id) {
                spec.role = Role::Target;
            } else {
                spec.role = Role::Observed;
            }
            specs.push(spec);
        }
        let mut sub = build_graph(specs, &edges)?;
        let base_idx: Vec<usize> = self
            .retained
            .iter()
            .map(|id| base.topology().index_of(*id).expect("retained node in base"))
            .collect();
        let frames: Vec<Vec<f64>> = base.frames().map(|f| base_idx.iter().map(|&i| f[i]).collect()).collect();
        sub.load_frames(frames);
        Ok(sub)
    }
}

fn sever(topology: &Topology, entry: &BTreeSet<NodeId>, exit: &BTreeSet<NodeId>) -> Vec<(NodeId, NodeId)> {
    let mut out = BTreeSet::new();
    for id in entry {
        for p in topology.parents(*id) {
            out.insert((p, *id));
        }
    }
    for id in exit {
        for c in topology.children(*id) {
            out.insert((*id, c));
        }
    }
    out.into_iter().collect()
}

/// The two mechanisms produced by cutting at `current_cut`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Surgery {
    /// From `upstream_boundary` to the cut; the cut's child links are severed.
    pub upstream: CcmView,
    /// From the cut to the graph targets; the cut's parent links are severed.
    pub downstream: CcmView,
}

pub fn surgery(
    topology: &Topology,
    current_cut: &CutSet,
    upstream_boundary: &[NodeId],
    targets: &[NodeId],
) -> Result<Surgery, SurgeryError> {
    if let Some(id) = upstream_boundary.iter().find(|id| current_cut.contains(**id)) {
        return Err(SurgeryError::Boundary(*id));
    }
    Ok(Surgery {
        upstream: CcmView::between(topology, upstream_boundary, current_cut.nodes())?,
        downstream: CcmView::between(topology, current_cut.nodes(), targets)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ids(xs: &[u32]) -> Vec<NodeId> {
        xs.iter().map(|&x| NodeId(x)).collect()
    }

    fn topo(n: u32, edges: &[(u32, u32)]) -> Topology {
        let edges: Vec<(NodeId, NodeId)> = edges.iter().map(|&(a, b)| (NodeId(a), NodeId(b))).collect();
        Topology::new(&(0..n).map(NodeId).collect::<Vec<_>>(), &edges).unwrap()
    }

    #[test]
    fn chain_split_at_b() {
        let t = topo(4, &[(0, 1), (1, 2), (2, 3)]);
        let s = surgery(&t, &CutSet::new(ids(&[1])), &ids(&[0]), &ids(&[3])).unwrap();
        assert_eq!(s.upstream.retained, ids(&[0, 1]));
        assert_eq!(s.downstream.retained, ids(&[1, 2, 3]));
        assert_eq!(s.downstream.local_modifiable, ids(&[1]));
        assert_eq!(s.downstream.severed, vec![(NodeId(0), NodeId(1))]);
        assert_eq!(s.upstream.severed, vec![(NodeId(1), NodeId(2))]);
    }

    #[test]
    fn side_inputs_stay_with_the_mechanism_they_feed() {
        // 4 is a noise root feeding the target only.
        let t = topo(5, &[(0, 1), (1, 2), (2, 3), (4, 3)]);
        let s = surgery(&t, &CutSet::new(ids(&[2])), &ids(&[0]), &ids(&[3])).unwrap();
        assert_eq!(s.downstream.retained, ids(&[2, 3, 4]));
        assert_eq!(s.upstream.retained, ids(&[0, 1, 2]));
    }

    #[test]
    fn cut_at_targets_is_degenerate() {
        let t = topo(3, &[(0, 1), (1, 2)]);
        let v = CcmView::between(&t, &ids(&[2]), &ids(&[2])).unwrap();
        assert!(v.is_degenerate());
        assert_eq!(v.retained, ids(&[2]));
    }

    #[test]
    fn overlapping_boundaries_fail() {
        let t = topo(4, &[(0, 1), (0, 2), (1, 3), (2, 3)]);
        let err = surgery(&t, &CutSet::new(ids(&[1, 2])), &ids(&[1]), &ids(&[3])).unwrap_err();
        assert_eq!(err, SurgeryError::Boundary(NodeId(1)));
        assert!(matches!(
            CcmView::between(&t, &ids(&[1, 2]), &ids(&[2, 3])),
            Err(SurgeryError::Boundary(_))
        ));
    }
}
