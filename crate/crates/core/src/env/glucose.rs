//! A reduced glucose–insulin model (minimal-model style, one step = one
//! minute):
//!
//! ```text
//! dI/dt = -n·I + c·u          plasma insulin from infusion u
//! dX/dt = -p2·X + p3·I        remote insulin action
//! dQ/dt = -k_abs·Q            gut glucose, meals arrive as impulses
//! dG/dt = -(p1 + X)·G + p1·Gb + r·Q
//! ```

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::graph::{GraphSpec, NodeId, NodeSpec, NoiseRegime, RateFn, Role, StructuralEquation};

use super::{GoalSpec, MealSchedule, NodeRange, Scenario, ScenarioError};

pub const INFUSION: NodeId = NodeId(0);
pub const INSULIN: NodeId = NodeId(1);
pub const ACTION: NodeId = NodeId(2);
pub const GUT: NodeId = NodeId(3);
pub const GLUCOSE: NodeId = NodeId(4);

pub const TIR_LO: f64 = 70.0;
pub const TIR_HI: f64 = 180.0;
pub const DAY: usize = 1440;
pub const BASAL_INFUSION: f64 = 1.0;
pub const MAX_INFUSION: f64 = 5.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GlucoseParams {
    /// Insulin-independent glucose clearance (1/min).
    pub p1: f64,
    /// Decay of remote insulin action (1/min).
    pub p2: f64,
    /// Gain from plasma insulin to remote action.
    pub p3: f64,
    /// Plasma insulin clearance (1/min).
    pub clearance: f64,
    /// Plasma insulin per unit of infusion rate.
    pub appearance: f64,
    /// Glucose level approached without insulin action (mg/dL).
    pub basal_glucose: f64,
    /// Gut absorption rate (1/min).
    pub k_abs: f64,
    /// Fraction of the gut compartment entering plasma per minute.
    pub absorption: f64,
}

impl GlucoseParams {
    pub const BASE: GlucoseParams = GlucoseParams {
        p1: 0.028,
        p2: 0.025,
        p3: 7.0e-5,
        clearance: 0.1,
        appearance: 1.0,
        basal_glucose: 250.0,
        k_abs: 0.025,
        absorption: 0.025,
    };

    pub fn to_vec(&self) -> Vec<f64> {
        vec![self.p1, self.p2, self.p3, self.clearance, self.appearance, self.basal_glucose, self.k_abs, self.absorption]
    }

    pub fn from_vec(v: &[f64]) -> Self {
        GlucoseParams {
            p1: v[0],
            p2: v[1],
            p3: v[2],
            clearance: v[3],
            appearance: v[4],
            basal_glucose: v[5],
            k_abs: v[6],
            absorption: v[7],
        }
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        if self.to_vec().iter().all(|p| *p > 0.0 && p.is_finite()) {
            Ok(())
        } else {
            Err(ScenarioError::Param("all glucose model rates must be positive".into()))
        }
    }

    /// Steady state `(I, X, G)` under a constant infusion and an empty gut.
    pub fn steady_state(&self, infusion: f64) -> (f64, f64, f64) {
        let i = self.appearance / self.clearance * infusion;
        let x = self.p3 / self.p2 * i;
        let g = self.p1 * self.basal_glucose / (self.p1 + x);
        (i, x, g)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Group {
    Adolescent,
    Adult,
    Child,
}

impl Group {
    pub const ALL: [Group; 3] = [Group::Adolescent, Group::Adult, Group::Child];

    pub fn name(self) -> &'static str {
        match self {
            Group::Adolescent => "adolescent",
            Group::Adult => "adult",
            Group::Child => "child",
        }
    }

    /// Half-width of the multiplicative perturbation range.
    pub fn spread(self) -> f64 {
        match self {
            Group::Adult => 0.10,
            Group::Adolescent => 0.25,
            Group::Child => 0.50,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndividualParams {
    pub id: String,
    pub group: Group,
    pub params: GlucoseParams,
}

impl IndividualParams {
    /// The training individual.
    pub fn base() -> Self {
        IndividualParams { id: "adult#000".into(), group: Group::Adult, params: GlucoseParams::BASE }
    }

    /// Mean absolute log-ratio to another individual's parameters.
    pub fn distance(&self, other: &IndividualParams) -> f64 {
        let a = self.params.to_vec();
        let b = other.params.to_vec();
        a.iter().zip(&b).map(|(x, y)| (x / y).ln().abs()).sum::<f64>() / a.len() as f64
    }
}

fn ode(rate: RateFn, params: Vec<f64>) -> StructuralEquation {
    StructuralEquation::OdeRate { rate, params, step: 1.0 }
}

pub fn build_glucose(individual: &IndividualParams) -> Result<Scenario, ScenarioError> {
    let p = individual.params;
    p.validate()?;
    let (i0, x0, g0) = p.steady_state(BASAL_INFUSION);
    let spec = |id: NodeId, name: &str, role, equation, init| NodeSpec {
        id,
        name: Some(name.to_string()),
        role,
        equation,
        init,
    };
    let nodes = vec![
        spec(
            INFUSION,
            "insulin_infusion",
            Role::Modifiable,
            StructuralEquation::LinearGaussian { weights: vec![], noise_sd: 0.0 },
            BASAL_INFUSION,
        ),
        spec(INSULIN, "plasma_insulin", Role::Observed, ode(RateFn::Linear, vec![p.clearance, p.appearance]), i0),
        spec(ACTION, "insulin_action", Role::Observed, ode(RateFn::Linear, vec![p.p2, p.p3]), x0),
        spec(GUT, "gut_glucose", Role::Observed, ode(RateFn::Linear, vec![p.k_abs]), 0.0),
        spec(
            GLUCOSE,
            "plasma_glucose",
            Role::Target,
            ode(RateFn::MinimalGlucose, vec![p.p1, p.basal_glucose, p.absorption]),
            g0,
        ),
    ];
    let edges = vec![(INFUSION, INSULIN), (INSULIN, ACTION), (ACTION, GLUCOSE), (GUT, GLUCOSE)];
    let range = |node, lo, hi| NodeRange { node, lo, hi };
    Ok(Scenario {
        name: "glucose".into(),
        description: format!("reduced glucose-insulin model, individual {}", individual.id),
        graph: GraphSpec { nodes, edges },
        goal: GoalSpec { center: vec![(TIR_LO + TIR_HI) / 2.0], half_width: (TIR_HI - TIR_LO) / 2.0 },
        noise: NoiseRegime::none(),
        episode_len: DAY,
        ranges: vec![
            range(INFUSION, 0.0, MAX_INFUSION),
            range(INSULIN, 0.0, 50.0),
            range(ACTION, 0.0, 0.15),
            range(GUT, 0.0, 400.0),
            range(GLUCOSE, 0.0, 400.0),
        ],
        meals: Some(MealSchedule { node: GUT, times: vec![420, 720, 1140], sizes: vec![300.0, 400.0, 350.0], jitter: 30 }),
        individual: Some(individual.clone()),
    })
}

/// `count` individuals split into adolescent, adult and child blocks, each
/// parameter scaled by a log-uniform factor within the group's spread.
pub fn make_cohort<R: Rng + ?Sized>(base: &IndividualParams, count: usize, rng: &mut R) -> Vec<IndividualParams> {
    make_cohort_with(base, count, |g| g.spread(), rng)
}

pub fn make_cohort_with<R: Rng + ?Sized>(
    base: &IndividualParams,
    count: usize,
    spread: impl Fn(Group) -> f64,
    rng: &mut R,
) -> Vec<IndividualParams> {
    let per_group = count.div_ceil(3).max(1);
    (0..count)
        .map(|i| {
            let group = Group::ALL[(i / per_group).min(2)];
            let a = spread(group);
            let params: Vec<f64> = base
                .params
                .to_vec()
                .into_iter()
                .map(|v| {
                    let f = if a > 0.0 { rng.random_range((1.0 - a).ln()..=(1.0 + a).ln()).exp() } else { 1.0 };
                    v * f
                })
                .collect();
            IndividualParams {
                id: format!("{}#{:03}", group.name(), i % per_group + 1),
                group,
                params: GlucoseParams::from_vec(&params),
            }
        })
        .collect()
}

/// Fraction of samples with `lo ≤ g ≤ hi`.
pub fn tir(trace: &[f64], lo: f64, hi: f64) -> f64 {
    if trace.is_empty() {
        return 0.0;
    }
    trace.iter().filter(|g| (lo..=hi).contains(*g)).count() as f64 / trace.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::Env;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::collections::BTreeMap;

    #[test]
    fn tir_examples() {
        assert_eq!(tir(&[100.0; 10], TIR_LO, TIR_HI), 1.0);
        assert_eq!(tir(&[200.0; 10], TIR_LO, TIR_HI), 0.0);
        assert_eq!(tir(&[60.0, 100.0, 190.0, 100.0], TIR_LO, TIR_HI), 0.5);
    }

    #[test]
    fn goal_box_is_the_target_range() {
        let s = build_glucose(&IndividualParams::base()).unwrap();
        assert_eq!(s.goal.center[0] - s.goal.half_width, 70.0);
        assert_eq!(s.goal.center[0] + s.goal.half_width, 180.0);
        assert_eq!(s.episode_len, 1440);
    }

    #[test]
    fn nonpositive_rate_is_rejected() {
        let mut ind = IndividualParams::base();
        ind.params.p2 = 0.0;
        assert!(matches!(build_glucose(&ind), Err(ScenarioError::Param(_))));
    }

    #[test]
    fn basal_infusion_holds_steady_state() {
        let mut env = Env::new(build_glucose(&IndividualParams::base()).unwrap()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        env.reset(&mut rng);
        let g0 = env.graph().value(GLUCOSE).unwrap();
        let a: BTreeMap<NodeId, f64> = [(INFUSION, BASAL_INFUSION)].into();
        for _ in 0..300 {
            env.step(&a, &mut rng).unwrap();
        }
        assert!((env.graph().value(GLUCOSE).unwrap() - g0).abs() < 1e-9);
    }

    #[test]
    fn cohort_blocks_and_ids() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let cohort = make_cohort(&IndividualParams::base(), 30, &mut rng);
        assert_eq!(cohort.len(), 30);
        for g in Group::ALL {
            assert_eq!(cohort.iter().filter(|i| i.group == g).count(), 10);
        }
        assert_eq!(cohort[0].id, "adolescent#001");
        assert_eq!(cohort[29].id, "child#010");
    }
}
