use std::collections::BTreeMap;

use ccm_core::agent::{box_reward, GoalBox};
use ccm_core::env::glucose::{TIR_HI, TIR_LO};
use ccm_core::env::{build_glucose, noise_for, scenario_by_name, tir, Env, Group, IndividualParams};
use ccm_core::graph::{NodeId, Role};
use ccm_core::modular::{enumerate_min_cuts, features};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

pub fn reward_curve(
    center: f64,
    epsilon: f64,
    omega: f64,
    upsilon: f64,
    lo: f64,
    hi: f64,
    points: usize,
) -> Result<Vec<f64>, String> {
    if !(epsilon > 0.0) {
        return Err("the half-width must be positive".into());
    }
    if !(lo < hi) || points < 2 {
        return Err("need lo < hi and at least two points".into());
    }
    let goal = GoalBox::new(vec![center], epsilon);
    let step = (hi - lo) / (points - 1) as f64;
    Ok((0..points).map(|i| box_reward(&[lo + step * i as f64], &goal, omega, upsilon)).collect())
}

#[derive(Debug, Clone, Serialize)]
pub struct GlucoseDay {
    pub individual: String,
    pub glucose: Vec<f64>,
    pub infusion: Vec<f64>,
    pub meals: Vec<usize>,
    pub time_in_range: f64,
    pub range: (f64, f64),
}

fn group_named(name: &str) -> Result<Group, String> {
    Group::ALL.into_iter().find(|g| g.name() == name).ok_or_else(|| format!("unknown group {name:?}"))
}

/// A day for one individual drawn from `group`, or for the training
/// individual when `group` is `"base"`. Infusion is
/// `basal + gain·(G - 125)`, clipped to the pump's range.
pub fn glucose_day(group: &str, seed: u64, basal: f64, gain: f64, noise: bool) -> Result<GlucoseDay, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let individual = if group == "base" {
        IndividualParams::base()
    } else {
        let g = group_named(group)?;
        let block = Group::ALL.iter().position(|x| *x == g).expect("known group");
        let cohort = ccm_core::env::make_cohort(&IndividualParams::base(), 3, &mut rng);
        cohort[block].clone()
    };
    let mut scenario = build_glucose(&individual).map_err(|e| e.to_string())?;
    if noise {
        scenario = scenario.with_noise(noise_for("glucose"));
    }
    let (pump_lo, pump_hi) = scenario.range(scenario.build_graph().map_err(|e| e.to_string())?.modifiable()[0]);
    let mut env = Env::new(scenario).map_err(|e| e.to_string())?;
    env.reset(&mut rng);
    let pump = env.sources()[0];
    let setpoint = (TIR_LO + TIR_HI) / 2.0;
    let mut glucose = Vec::new();
    let mut infusion = Vec::new();
    while !env.done() {
        let g = env.target_values()[0];
        let u = (basal + gain * (g - setpoint)).clamp(pump_lo, pump_hi);
        env.step(&BTreeMap::from([(pump, u)]), &mut rng).map_err(|e| e.to_string())?;
        infusion.push(u);
        glucose.push(env.target_values()[0]);
    }
    Ok(GlucoseDay {
        individual: individual.id,
        time_in_range: tir(&glucose, TIR_LO, TIR_HI),
        meals: env.meal_times().to_vec(),
        glucose,
        infusion,
        range: (TIR_LO, TIR_HI),
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct CutRow {
    pub nodes: Vec<u32>,
    pub is_con: u8,
    pub dis: usize,
    pub num: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct Catalog {
    pub scenario: String,
    pub nodes: Vec<(u32, &'static str)>,
    pub edges: Vec<(u32, u32)>,
    pub cuts: Vec<CutRow>,
}

pub fn cut_catalog(name: &str) -> Result<Catalog, String> {
    let scenario = scenario_by_name(name).map_err(|e| e.to_string())?;
    let graph = scenario.build_graph().map_err(|e| e.to_string())?;
    let topology = graph.topology();
    let catalog = enumerate_min_cuts(topology, &graph.modifiable(), &graph.targets()).map_err(|e| e.to_string())?;
    let feats = features(topology, &catalog, &Default::default());
    let role = |id: NodeId| match graph.node(id).map(|n| n.role) {
        Some(Role::Modifiable) => "modifiable",
        Some(Role::Target) => "target",
        _ => "observed",
    };
    Ok(Catalog {
        scenario: scenario.name.clone(),
        nodes: topology.ids().iter().map(|id| (id.0, role(*id))).collect(),
        edges: topology.edges().iter().map(|(a, b)| (a.0, b.0)).collect(),
        cuts: catalog
            .cuts()
            .iter()
            .zip(feats)
            .map(|(c, f)| CutRow { nodes: c.nodes().iter().map(|n| n.0).collect(), is_con: f.is_con, dis: f.dis, num: f.num })
            .collect(),
    })
}
