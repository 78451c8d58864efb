//! Minimum vertex cuts between modifiable and target variables.
//!
//! Each interior node `v` is split into `v_in → v_out` with unit capacity;
//! graph edges and terminal nodes get unbounded capacity. After a max flow of
//! value `k`, every closed set of the residual graph that contains the source
//! side and excludes the sink side is a minimum cut, so all size-`k` vertex
//! cuts are found by enumerating those closed sets.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{NodeId, Topology};

/// Upper bound on catalog size.
pub const MAX_CUTS: usize = 64;
const MAX_CLOSURES: usize = 100_000;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CutError {
    #[error("no target is reachable from the modifiable nodes")]
    NoPath,
    #[error("a modifiable node is also a target: {0}")]
    SourceIsSink(NodeId),
    #[error("no vertex cut exists: a modifiable node feeds a target directly")]
    Unseparable,
    #[error("unknown node {0}")]
    UnknownNode(NodeId),
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct CutSet {
    nodes: Vec<NodeId>,
}

impl CutSet {
    pub fn new(nodes: impl IntoIterator<Item = NodeId>) -> Self {
        let set: BTreeSet<NodeId> = nodes.into_iter().collect();
        CutSet { nodes: set.into_iter().collect() }
    }

    pub fn nodes(&self) -> &[NodeId] {
        &self.nodes
    }

    pub fn size(&self) -> usize {
        self.nodes.len()
    }

    pub fn contains(&self, id: NodeId) -> bool {
        self.nodes.binary_search(&id).is_ok()
    }

    pub fn label(&self) -> String {
        let parts: Vec<String> = self.nodes.iter().map(|n| n.to_string()).collect();
        format!("{{{}}}", parts.join(","))
    }
}

/// All minimum vertex cuts, in lexicographic order of their sorted node ids.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CutSetCatalog {
    pub sources: Vec<NodeId>,
    pub sinks: Vec<NodeId>,
    cuts: Vec<CutSet>,
}

impl CutSetCatalog {
    pub fn cuts(&self) -> &[CutSet] {
        &self.cuts
    }

    pub fn len(&self) -> usize {
        self.cuts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cuts.is_empty()
    }

    pub fn get(&self, i: usize) -> Option<&CutSet> {
        self.cuts.get(i)
    }

    pub fn cut_size(&self) -> usize {
        self.cuts.first().map_or(0, CutSet::size)
    }

    pub fn position(&self, cut: &CutSet) -> Option<usize> {
        self.cuts.iter().position(|c| c == cut)
    }
}

/// True when removing `removed` leaves no directed path from `sources` to `sinks`.
pub fn separates(topology: &Topology, sources: &[NodeId], sinks: &[NodeId], removed: &BTreeSet<NodeId>) -> bool {
    let reach = topology.reach_forward(sources, removed, &BTreeSet::new());
    sinks.iter().all(|t| !reach.contains(t))
}

struct Arc {
    to: usize,
    cap: i64,
    flow: i64,
}

struct FlowNet {
    arcs: Vec<Arc>,
    out: Vec<Vec<usize>>,
}

impl FlowNet {
    fn new(n: usize) -> Self {
        FlowNet { arcs: Vec::new(), out: vec![Vec::new(); n] }
    }

    fn add(&mut self, from: usize, to: usize, cap: i64) {
        self.out[from].push(self.arcs.len());
        self.arcs.push(Arc { to, cap, flow: 0 });
        self.out[to].push(self.arcs.len());
        self.arcs.push(Arc { to: from, cap: 0, flow: 0 });
    }

    fn residual(&self, a: usize) -> i64 {
        self.arcs[a].cap - self.arcs[a].flow
    }

    /// Edmonds–Karp, stopping once flow exceeds `limit`.
    fn max_flow(&mut self, s: usize, t: usize, limit: i64) -> i64 {
        let n = self.out.len();
        let mut total = 0;
        loop {
            let mut via = vec![usize::MAX; n];
            let mut seen = vec![false; n];
            seen[s] = true;
            let mut queue = std::collections::VecDeque::from([s]);
            while let Some(u) = queue.pop_front() {
                if u == t {
                    break;
                }
                for &a in &self.out[u] {
                    let v = self.arcs[a].to;
                    if !seen[v] && self.residual(a) > 0 {
                        seen[v] = true;
                        via[v] = a;
                        queue.push_back(v);
                    }
                }
            }
            if !seen[t] {
                return total;
            }
            let mut push = i64::MAX;
            let mut v = t;
            while v != s {
                let a = via[v];
                push = push.min(self.residual(a));
                v = self.arcs[a ^ 1].to;
            }
            let mut v = t;
            while v != s {
                let a = via[v];
                self.arcs[a].flow += push;
                self.arcs[a ^ 1].flow -= push;
                v = self.arcs[a ^ 1].to;
            }
            total += push;
            if total > limit {
                return total;
            }
        }
    }
}

/// Enumerate every vertex cut of minimum cardinality separating `sources`
/// from `sinks`. Sources and sinks are never cut members.
pub fn enumerate_min_cuts(
    topology: &Topology,
    sources: &[NodeId],
    sinks: &[NodeId],
) -> Result<CutSetCatalog, CutError> {
    for id in sources.iter().chain(sinks) {
        if !topology.contains(*id) {
            return Err(CutError::UnknownNode(*id));
        }
    }
    if let Some(s) = sources.iter().find(|s| sinks.contains(s)) {
        return Err(CutError::SourceIsSink(*s));
    }
    let none = BTreeSet::new();
    let forward = topology.reach_forward(sources, &none, &BTreeSet::new());
    if !sinks.iter().any(|t| forward.contains(t)) {
        return Err(CutError::NoPath);
    }
    let backward = topology.reach_backward(sinks, &none, &BTreeSet::new());
    let relevant: Vec<NodeId> = forward.intersection(&backward).copied().collect();
    let local = |id: NodeId| relevant.binary_search(&id).ok();

    let terminals: BTreeSet<NodeId> = sources.iter().chain(sinks).copied().collect();
    let m = relevant.len();
    let inf = m as i64 + 1;
    let (s, t) = (2 * m, 2 * m + 1);
    let mut net = FlowNet::new(2 * m + 2);
    let mut unit_arc = vec![None; m];
    for (i, id) in relevant.iter().enumerate() {
        if terminals.contains(id) {
            net.add(2 * i, 2 * i + 1, inf);
        } else {
            unit_arc[i] = Some(net.arcs.len());
            net.add(2 * i, 2 * i + 1, 1);
        }
        for child in topology.children(*id) {
            if let Some(j) = local(child) {
                net.add(2 * i + 1, 2 * j, inf);
            }
        }
    }
    for src in sources {
        if let Some(i) = local(*src) {
            net.add(s, 2 * i, inf);
        }
    }
    for sink in sinks {
        if let Some(i) = local(*sink) {
            net.add(2 * i + 1, t, inf);
        }
    }

    let k = net.max_flow(s, t, m as i64);
    if k > m as i64 {
        return Err(CutError::Unseparable);
    }

    let found = enumerate_closures(&net, s, t, |in_side| {
        let cut: Vec<NodeId> = (0..m)
            .filter(|&i| unit_arc[i].is_some() && in_side[2 * i] && !in_side[2 * i + 1])
            .map(|i| relevant[i])
            .collect();
        debug_assert_eq!(cut.len() as i64, k);
        CutSet::new(cut)
    });

    Ok(CutSetCatalog { sources: sources.to_vec(), sinks: sinks.to_vec(), cuts: found.into_iter().collect() })
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Side {
    Free,
    In,
    Out,
}

/// Walk all closed sets of the residual graph (source side fixed in, sink
/// side fixed out) and map each to a cut, collecting distinct results.
fn enumerate_closures<F>(net: &FlowNet, s: usize, t: usize, to_cut: F) -> BTreeSet<CutSet>
where
    F: Fn(&[bool]) -> CutSet,
{
    let n = net.out.len();
    let mut succ = vec![Vec::new(); n];
    let mut pred = vec![Vec::new(); n];
    for (u, arcs) in net.out.iter().enumerate() {
        for &a in arcs {
            if net.residual(a) > 0 {
                let v = net.arcs[a].to;
                succ[u].push(v);
                pred[v].push(u);
            }
        }
    }
    let mut side = vec![Side::Free; n];
    propagate(&mut side, &succ, s, Side::In);
    propagate(&mut side, &pred, t, Side::Out);

    let mut found = BTreeSet::new();
    let mut budget = MAX_CLOSURES;
    recurse(&mut side, &succ, &pred, &to_cut, &mut found, &mut budget);
    if found.len() >= MAX_CUTS {
        log::warn!("minimum cut enumeration capped at {MAX_CUTS} cuts");
    }
    found
}

/// Mark `start` and everything reachable through `edges` with `mark`.
/// Returns false on a conflict with an opposite mark.
fn propagate(side: &mut [Side], edges: &[Vec<usize>], start: usize, mark: Side) -> bool {
    let mut stack = vec![start];
    while let Some(u) = stack.pop() {
        match side[u] {
            Side::Free => side[u] = mark,
            s if s == mark => continue,
            _ => return false,
        }
        stack.extend(edges[u].iter().copied());
    }
    true
}

fn recurse<F>(
    side: &mut Vec<Side>,
    succ: &[Vec<usize>],
    pred: &[Vec<usize>],
    to_cut: &F,
    found: &mut BTreeSet<CutSet>,
    budget: &mut usize,
) where
    F: Fn(&[bool]) -> CutSet,
{
    if found.len() >= MAX_CUTS || *budget == 0 {
        return;
    }
    match side.iter().position(|&x| x == Side::Free) {
        None => {
            *budget -= 1;
            let in_side: Vec<bool> = side.iter().map(|&x| x == Side::In).collect();
            found.insert(to_cut(&in_side));
        }
        Some(u) => {
            for (mark, edges) in [(Side::In, succ), (Side::Out, pred)] {
                let mut branch = side.clone();
                if propagate(&mut branch, edges, u, mark) {
                    recurse(&mut branch, succ, pred, to_cut, found, budget);
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn topo(n: u32, edges: &[(u32, u32)]) -> Topology {
        let ids: Vec<NodeId> = (0..n).map(NodeId).collect();
        let edges: Vec<(NodeId, NodeId)> = edges.iter().map(|&(a, b)| (NodeId(a), NodeId(b))).collect();
        Topology::new(&ids, &edges).unwrap()
    }

    fn cuts_of(t: &Topology, src: &[u32], dst: &[u32]) -> Result<Vec<Vec<u32>>, CutError> {
        let s: Vec<NodeId> = src.iter().map(|&x| NodeId(x)).collect();
        let d: Vec<NodeId> = dst.iter().map(|&x| NodeId(x)).collect();
        enumerate_min_cuts(t, &s, &d)
            .map(|c| c.cuts().iter().map(|c| c.nodes().iter().map(|n| n.0).collect()).collect())
    }

    #[test]
    fn chain_cuts_are_interior_singletons() {
        let t = topo(4, &[(0, 1), (1, 2), (2, 3)]);
        assert_eq!(cuts_of(&t, &[0], &[3]).unwrap(), vec![vec![1], vec![2]]);
    }

    #[test]
    fn diamond_needs_both_branches() {
        // A=0 -> B=1, C=2 -> D=3, E=4 -> F=5
        let t = topo(6, &[(0, 1), (0, 2), (1, 3), (2, 4), (3, 5), (4, 5)]);
        assert_eq!(
            cuts_of(&t, &[0], &[5]).unwrap(),
            vec![vec![1, 2], vec![1, 4], vec![2, 3], vec![3, 4]]
        );
    }

    #[test]
    fn off_path_nodes_never_appear() {
        let t = topo(5, &[(0, 1), (1, 2), (3, 1), (1, 4)]);
        assert_eq!(cuts_of(&t, &[0], &[2]).unwrap(), vec![vec![1]]);
    }

    #[test]
    fn errors() {
        let t = topo(3, &[(0, 1)]);
        assert_eq!(cuts_of(&t, &[0], &[2]), Err(CutError::NoPath));
        assert_eq!(cuts_of(&t, &[0], &[0]), Err(CutError::SourceIsSink(NodeId(0))));
        let direct = topo(3, &[(0, 2), (0, 1), (1, 2)]);
        assert_eq!(cuts_of(&direct, &[0], &[2]), Err(CutError::Unseparable));
    }

    #[test]
    fn catalog_is_capped() {
        // 7 parallel two-node routes: 2^7 = 128 minimum cuts of size 7.
        let mut edges = Vec::new();
        for r in 0..7u32 {
            let a = 1 + 2 * r;
            edges.extend([(0, a), (a, a + 1), (a + 1, 15)]);
        }
        let t = topo(16, &edges);
        let cuts = cuts_of(&t, &[0], &[15]).unwrap();
        assert_eq!(cuts.len(), MAX_CUTS);
        assert!(cuts.iter().all(|c| c.len() == 7));
    }
}
