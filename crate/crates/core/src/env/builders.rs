use crate::graph::{GraphSpec, HillSign, HillTerm, NodeId, NodeSpec, NoiseRegime, Role, StructuralEquation};

use super::{GoalSpec, NodeRange, Scenario};

const DELTA: f64 = 0.1;

fn node(id: u32, name: &str, role: Role, equation: StructuralEquation) -> NodeSpec {
    NodeSpec { id: NodeId(id), name: Some(name.to_string()), role, equation, init: 0.0 }
}

fn linear(weights: &[f64]) -> StructuralEquation {
    StructuralEquation::LinearGaussian { weights: weights.to_vec(), noise_sd: DELTA }
}

fn hill(terms: &[(f64, f64, usize)]) -> StructuralEquation {
    StructuralEquation::HillDelay {
        terms: terms
            .iter()
            .map(|&(gain, threshold, delay)| HillTerm {
                sign: HillSign::Activation,
                gain,
                threshold,
                exponent: 2.0,
                delay,
            })
            .collect(),
        noise_sd: DELTA,
    }
}

fn edges(list: &[(u32, u32)]) -> Vec<(NodeId, NodeId)> {
    list.iter().map(|&(a, b)| (NodeId(a), NodeId(b))).collect()
}

fn ranges(list: &[(u32, f64, f64)]) -> Vec<NodeRange> {
    list.iter().map(|&(id, lo, hi)| NodeRange { node: NodeId(id), lo, hi }).collect()
}

const SIMPLE_EDGES: [(u32, u32); 4] = [(0, 1), (3, 1), (1, 2), (2, 4)];

/// Five linear-Gaussian variables: source x0, a collider at x1 (fed by x0
/// and the observed root x3), the cut vertex x2 and the target x4.
pub fn build_env1() -> Scenario {
    let nodes = vec![
        node(0, "x0", Role::Modifiable, linear(&[])),
        node(1, "x1", Role::Observed, linear(&[1.25, 1.0])),
        node(2, "x2", Role::Observed, linear(&[0.8])),
        node(3, "x3", Role::Observed, linear(&[])),
        node(4, "x4", Role::Target, linear(&[1.0])),
    ];
    Scenario {
        name: "env1".into(),
        description: "five-variable linear-Gaussian chain with a collider".into(),
        graph: GraphSpec { nodes, edges: edges(&SIMPLE_EDGES) },
        goal: GoalSpec { center: vec![10.0], half_width: 2.0 },
        noise: NoiseRegime::none(),
        episode_len: 100,
        ranges: ranges(&[(0, -40.0, 40.0), (1, -50.0, 50.0), (2, -40.0, 40.0), (3, -1.0, 1.0), (4, -40.0, 40.0)]),
        meals: None,
        individual: None,
    }
}

/// The env1 topology with delayed Hill activations on every edge.
pub fn build_env2() -> Scenario {
    let nodes = vec![
        node(0, "x0", Role::Modifiable, linear(&[])),
        node(1, "x1", Role::Observed, hill(&[(10.0, 5.0, 1), (1.0, 0.5, 2)])),
        node(2, "x2", Role::Observed, hill(&[(10.0, 5.0, 2)])),
        node(3, "x3", Role::Observed, linear(&[])),
        node(4, "x4", Role::Target, hill(&[(10.0, 5.0, 3)])),
    ];
    Scenario {
        name: "env2".into(),
        description: "env1 topology with delayed Hill regulation".into(),
        graph: GraphSpec { nodes, edges: edges(&SIMPLE_EDGES) },
        goal: GoalSpec { center: vec![5.0], half_width: 0.5 },
        noise: NoiseRegime::none(),
        episode_len: 100,
        ranges: ranges(&[(0, 0.0, 20.0), (1, 0.0, 10.0), (2, 0.0, 10.0), (3, -1.0, 1.0), (4, 0.0, 10.0)]),
        meals: None,
        individual: None,
    }
}

/// Nine Hill-delay variables. The source x0 drives two mirrored routes
/// (x1→x3 and x2→x4) that meet at the target x8, so every minimum cut has two
/// nodes. x5 and x6 are disturbance roots feeding x3 and x8; x7 is a dead
/// end hanging off x4.
pub fn build_env3() -> Scenario {
    let nodes = vec![
        node(0, "x0", Role::Modifiable, linear(&[])),
        node(1, "x1", Role::Observed, hill(&[(10.0, 5.0, 1)])),
        node(2, "x2", Role::Observed, hill(&[(10.0, 5.0, 1)])),
        node(3, "x3", Role::Observed, hill(&[(10.0, 5.0, 2), (2.0, 0.5, 1)])),
        node(4, "x4", Role::Observed, hill(&[(10.0, 5.0, 2)])),
        node(5, "x5", Role::Observed, linear(&[])),
        node(6, "x6", Role::Observed, linear(&[])),
        node(7, "x7", Role::Observed, hill(&[(10.0, 5.0, 1)])),
        node(8, "x8", Role::Target, hill(&[(5.0, 5.0, 1), (5.0, 5.0, 1), (2.0, 0.5, 1)])),
    ];
    Scenario {
        name: "env3".into(),
        description: "double-path Hill-delay graph with disturbance roots".into(),
        graph: GraphSpec {
            nodes,
            edges: edges(&[(0, 1), (0, 2), (1, 3), (5, 3), (2, 4), (4, 7), (3, 8), (4, 8), (6, 8)]),
        },
        goal: GoalSpec { center: vec![5.0], half_width: 0.5 },
        noise: NoiseRegime::none(),
        episode_len: 100,
        ranges: ranges(&[
            (0, 0.0, 20.0),
            (1, 0.0, 10.0),
            (2, 0.0, 10.0),
            (3, 0.0, 12.0),
            (4, 0.0, 10.0),
            (5, -1.0, 1.0),
            (6, -1.0, 1.0),
            (7, 0.0, 10.0),
            (8, 0.0, 10.0),
        ]),
        meals: None,
        individual: None,
    }
}

/// The six-node diamond used to illustrate surgery: A→B, A→C, B→D, C→E,
/// D→F, E→F.
pub fn build_fig2() -> Scenario {
    let names = ["A", "B", "C", "D", "E", "F"];
    let roles = [Role::Modifiable, Role::Observed, Role::Observed, Role::Observed, Role::Observed, Role::Target];
    let weights: [&[f64]; 6] = [&[], &[1.0], &[0.5], &[1.0], &[1.0], &[1.0, 1.0]];
    let nodes = (0..6).map(|i| node(i as u32, names[i], roles[i], linear(weights[i]))).collect();
    Scenario {
        name: "fig2".into(),
        description: "six-node diamond A→{B,C}→{D,E}→F".into(),
        graph: GraphSpec { nodes, edges: edges(&[(0, 1), (0, 2), (1, 3), (2, 4), (3, 5), (4, 5)]) },
        goal: GoalSpec { center: vec![6.0], half_width: 1.0 },
        noise: NoiseRegime::none(),
        episode_len: 100,
        ranges: ranges(&[(0, -10.0, 10.0), (1, -10.0, 10.0), (2, -5.0, 5.0), (3, -10.0, 10.0), (4, -5.0, 5.0), (5, -15.0, 15.0)]),
        meals: None,
        individual: None,
    }
}

/// Disturbance regime used for robustness evaluations.
pub fn standard_noise() -> NoiseRegime {
    NoiseRegime::random_large(0.05, 12.0).expect("valid regime")
}

/// The robustness regime suited to a scenario. Glucose states integrate, so
/// disturbances compound; there it fires about three times per day.
pub fn noise_for(scenario: &str) -> NoiseRegime {
    match scenario {
        "glucose" => NoiseRegime::random_large(3.0 / super::glucose::DAY as f64, 12.0).expect("valid regime"),
        _ => standard_noise(),
    }
}
