//! Shared generators and independent oracles for the integration tests.
#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use ccm_core::graph::{CausalGraphDynamic, GraphSpec, HillSign, HillTerm, NodeId, NodeSpec, Role, StructuralEquation};
use rand::Rng;

/// A random DAG with modifiable roots, targets and at most `max_interior`
/// interior nodes. Every target is reachable from some source. Equations are
/// noise-free Hill terms with random delays.
#[derive(Debug, Clone)]
pub struct RandomDag {
    pub spec: GraphSpec,
    pub sources: Vec<NodeId>,
    pub interior: Vec<NodeId>,
    pub targets: Vec<NodeId>,
}

impl RandomDag {
    pub fn build(&self) -> CausalGraphDynamic {
        self.spec.build().expect("generated graph is valid")
    }

    pub fn children(&self) -> BTreeMap<NodeId, Vec<NodeId>> {
        let mut out: BTreeMap<NodeId, Vec<NodeId>> = BTreeMap::new();
        for (a, b) in &self.spec.edges {
            out.entry(*a).or_default().push(*b);
        }
        out
    }
}

pub fn random_dag<R: Rng + ?Sized>(rng: &mut R, max_interior: usize) -> RandomDag {
    let n_src = rng.random_range(1..=2);
    let n_int = rng.random_range(0..=max_interior);
    let n_tgt = rng.random_range(1..=2);
    let n = n_src + n_int + n_tgt;
    let id = |i: usize| NodeId(i as u32);
    let sources: Vec<NodeId> = (0..n_src).map(id).collect();
    let interior: Vec<NodeId> = (n_src..n_src + n_int).map(id).collect();
    let targets: Vec<NodeId> = (n_src + n_int..n).map(id).collect();
    let kind = |i: usize| if i < n_src { 0 } else if i < n_src + n_int { 1 } else { 2 };

    let mut edges = BTreeSet::new();
    let density = rng.random_range(0.2..0.6);
    for i in 0..n {
        for j in i + 1..n {
            let p = match (kind(i), kind(j)) {
                (0, 0) | (2, _) => 0.0,
                (0, 2) => 0.04,
                _ => density,
            };
            if rng.random_bool(p) {
                edges.insert((id(i), id(j)));
            }
        }
    }
    // Guarantee every target a path from some source.
    for &t in &targets {
        let mut path = vec![sources[rng.random_range(0..n_src)]];
        if n_int > 0 {
            let mut mids: Vec<NodeId> = (0..rng.random_range(1..=n_int.min(3))).map(|_| interior[rng.random_range(0..n_int)]).collect();
            mids.sort();
            mids.dedup();
            path.extend(mids);
        }
        path.push(t);
        edges.extend(path.windows(2).map(|w| (w[0], w[1])));
    }

    let edges: Vec<(NodeId, NodeId)> = edges.into_iter().collect();
    let nodes = (0..n)
        .map(|i| {
            let parents = edges.iter().filter(|e| e.1 == id(i)).count();
            let role = [Role::Modifiable, Role::Observed, Role::Target][kind(i)];
            let equation = if kind(i) == 0 {
                StructuralEquation::LinearGaussian { weights: vec![], noise_sd: 0.0 }
            } else {
                let terms = (0..parents)
                    .map(|_| HillTerm {
                        sign: if rng.random_bool(0.5) { HillSign::Activation } else { HillSign::Repression },
                        gain: rng.random_range(0.5..2.0),
                        threshold: rng.random_range(0.5..2.0),
                        exponent: rng.random_range(1..=3) as f64,
                        delay: rng.random_range(0..=2),
                    })
                    .collect();
                StructuralEquation::HillDelay { terms, noise_sd: 0.0 }
            };
            NodeSpec { id: id(i), name: None, role, equation, init: rng.random_range(0.0..2.0) }
        })
        .collect();
    RandomDag { spec: GraphSpec { nodes, edges }, sources, interior, targets }
}

fn reaches(children: &BTreeMap<NodeId, Vec<NodeId>>, from: &[NodeId], to: &[NodeId], removed: &BTreeSet<NodeId>) -> bool {
    let mut seen: BTreeSet<NodeId> = from.iter().copied().collect();
    let mut queue: VecDeque<NodeId> = from.iter().copied().collect();
    while let Some(u) = queue.pop_front() {
        if to.contains(&u) {
            return true;
        }
        for v in children.get(&u).into_iter().flatten() {
            if !removed.contains(v) && seen.insert(*v) {
                queue.push_back(*v);
            }
        }
    }
    false
}

/// Every smallest set of interior nodes whose removal separates sources from
/// targets, by brute force over subsets. `None` when no such set exists.
pub fn exhaustive_min_cuts(dag: &RandomDag) -> Option<BTreeSet<Vec<NodeId>>> {
    let children = dag.children();
    let k = dag.interior.len();
    let mut best: Option<(usize, BTreeSet<Vec<NodeId>>)> = None;
    for mask in 0u32..(1 << k) {
        let size = mask.count_ones() as usize;
        if best.as_ref().is_some_and(|(b, _)| size > *b) {
            continue;
        }
        let removed: BTreeSet<NodeId> = (0..k).filter(|i| mask & (1 << i) != 0).map(|i| dag.interior[i]).collect();
        if reaches(&children, &dag.sources, &dag.targets, &removed) {
            continue;
        }
        let cut: Vec<NodeId> = removed.into_iter().collect();
        match &mut best {
            Some((b, set)) if *b == size => {
                set.insert(cut);
            }
            _ => best = Some((size, BTreeSet::from([cut]))),
        }
    }
    best.map(|(_, set)| set)
}

/// Norm-wise relative error `‖a - b‖ / max(‖a‖ + ‖b‖, tiny)`.
pub fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let diff: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let scale: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt() + b.iter().map(|x| x * x).sum::<f64>().sqrt();
    diff / scale.max(1e-12)
}

/// Central differences of `f` around `x`.
pub fn numeric_grad(x: &[f64], h: f64, mut f: impl FnMut(&[f64]) -> f64) -> Vec<f64> {
    let mut p = x.to_vec();
    (0..x.len())
        .map(|i| {
            let orig = p[i];
            p[i] = orig + h;
            let up = f(&p);
            p[i] = orig - h;
            let down = f(&p);
            p[i] = orig;
            (up - down) / (2.0 * h)
        })
        .collect()
}
