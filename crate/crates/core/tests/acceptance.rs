//! End-to-end acceptance suite. Prints one PASS/FAIL line per criterion.
//!
//! Structural criteria (1, 2, 3, 4, 7, 9) fail the target when red. The
//! learning criteria (5, 6, 8) are full training runs whose outcome is
//! reported as measured; a red result is printed but does not abort.

mod common;

use std::collections::{BTreeMap, BTreeSet};
use std::time::Instant;

use ccm_core::agent::fcr::random_rollouts;
use ccm_core::agent::{
    box_reward, evaluate_random, high_reward, train_ccm, train_flat, AgentModel, Fcr, GoalBox, HyperParams,
};
use ccm_core::env::{build_glucose, make_cohort, noise_for, scenario_by_name, IndividualParams, Scenario};
use ccm_core::graph::NodeId;
use ccm_core::harness::{run_eval, run_metrics, run_train, EvalNoise, EvalRequest, ExperimentConfig, FINAL_WINDOW};
use ccm_core::modular::{enumerate_min_cuts, CcmView, CutError, MAX_CUTS};
use ccm_core::nn::{Action, ActionDist, Mlp, RecurrentCell};
use common::{exhaustive_min_cuts, numeric_grad, random_dag, rel_err};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const SEEDS: [u64; 5] = [0, 1, 2, 3, 4];
const TIR_LO: f64 = 70.0;
const TIR_HI: f64 = 180.0;

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: String) -> Verdict {
    Verdict { pass, detail }
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len().max(1) as f64
}

/// Env 1 and Env 3 runs use faster low-level learning rates than the library defaults.
fn tuned_hyper() -> HyperParams {
    let mut hp = HyperParams::default();
    hp.low.lr_policy = 1e-3;
    hp.low.lr_value = 3e-3;
    hp
}

fn cut_enumeration() -> Verdict {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let (mut mismatches, mut cuts_seen, mut unseparable) = (0, 0, 0);
    for _ in 0..200 {
        let dag = random_dag(&mut rng, 8);
        let graph = dag.build();
        let oracle = exhaustive_min_cuts(&dag);
        let found = enumerate_min_cuts(graph.topology(), &dag.sources, &dag.targets);
        let ok = match (found, &oracle) {
            (Err(CutError::Unseparable), None) => {
                unseparable += 1;
                true
            }
            (Ok(catalog), Some(expected)) => {
                let got: BTreeSet<Vec<NodeId>> = catalog.cuts().iter().map(|c| c.nodes().to_vec()).collect();
                cuts_seen += got.len();
                if expected.len() > MAX_CUTS {
                    got.len() == MAX_CUTS && got.is_subset(expected)
                } else {
                    &got == expected
                }
            }
            _ => false,
        };
        mismatches += usize::from(!ok);
    }
    let secs = start.elapsed().as_secs_f64();
    verdict(
        mismatches == 0 && secs < 60.0,
        format!("200 graphs, {cuts_seen} cuts, {unseparable} unseparable, {mismatches} mismatches, {secs:.1} s"),
    )
}

fn surgery_soundness() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let (mut checked, mut max_div) = (0, 0.0f64);
    for _ in 0..200 {
        let dag = random_dag(&mut rng, 8);
        let base = dag.build();
        let Ok(catalog) = enumerate_min_cuts(base.topology(), &dag.sources, &dag.targets) else { continue };
        for cut in catalog.cuts() {
            let view = CcmView::between(base.topology(), cut.nodes(), &dag.targets).expect("cut view");
            let inner: Vec<NodeId> = view.retained.iter().copied().filter(|id| !cut.contains(*id)).collect();
            let mut a = base.clone();
            let mut b = base.clone();
            let mut sub = view.instantiate(&base).expect("view instantiates");
            let mut noise = ChaCha8Rng::seed_from_u64(7);
            for _ in 0..100 {
                let boundary: Vec<f64> = cut.nodes().iter().map(|_| rng.random_range(0.0..3.0)).collect();
                for (id, v) in cut.nodes().iter().zip(&boundary) {
                    a.pin(*id, *v).unwrap();
                    b.pin(*id, *v).unwrap();
                }
                let ua: BTreeMap<NodeId, f64> = dag.sources.iter().map(|s| (*s, rng.random_range(0.0..3.0))).collect();
                let ub: BTreeMap<NodeId, f64> = dag.sources.iter().map(|s| (*s, rng.random_range(0.0..3.0))).collect();
                let entry: BTreeMap<NodeId, f64> = cut.nodes().iter().copied().zip(boundary.iter().copied()).collect();
                a.step(&ua, &mut noise.clone()).unwrap();
                b.step(&ub, &mut noise.clone()).unwrap();
                sub.step(&entry, &mut noise).unwrap();
                for id in &inner {
                    let va = a.value(*id).unwrap();
                    max_div = max_div.max((va - b.value(*id).unwrap()).abs()).max((va - sub.value(*id).unwrap()).abs());
                }
            }
            checked += 1;
        }
    }
    verdict(max_div == 0.0 && checked > 0, format!("{checked} cut views, 100-step paired rollouts, max divergence {max_div:e}"))
}

fn gradient_check() -> Verdict {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let mut worst = 0.0f64;
    for net in 0..50 {
        let err = if net % 2 == 0 {
            let depth = rng.random_range(1..=3);
            let mut sizes = vec![rng.random_range(1..=6)];
            sizes.extend((0..depth).map(|_| rng.random_range(1..=8)));
            let mut mlp = Mlp::new(&sizes, &mut rng);
            let x: Vec<f64> = (0..sizes[0]).map(|_| rng.random_range(-2.0..2.0)).collect();
            let c: Vec<f64> = (0..mlp.output_dim()).map(|_| rng.random_range(-1.0..1.0)).collect();
            let tape = mlp.forward_tape(&x).unwrap();
            let analytic = mlp.backward(&tape, &c).unwrap();
            let params = mlp.params().to_vec();
            let numeric = numeric_grad(&params, 1e-6, |p| {
                mlp.params_mut().copy_from_slice(p);
                mlp.forward(&x).unwrap().iter().zip(&c).map(|(y, w)| y * w).sum()
            });
            rel_err(&analytic, &numeric)
        } else {
            let (input, hidden, output) = (rng.random_range(1..=4), rng.random_range(1..=6), rng.random_range(1..=3));
            let mut cell = RecurrentCell::new(input, hidden, output, &mut rng);
            for p in cell.params_mut().iter_mut() {
                *p = rng.random_range(-0.8..0.8);
            }
            let steps = rng.random_range(1..=5);
            let xs: Vec<Vec<f64>> = (0..steps).map(|_| (0..input).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
            let c: Vec<Vec<f64>> = (0..steps).map(|_| (0..output).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
            let tape = cell.run(&xs).unwrap();
            let dz: Vec<Vec<f64>> = tape
                .outputs
                .iter()
                .zip(&c)
                .map(|(y, w)| y.iter().zip(w).map(|(v, wk)| wk * v * (1.0 - v)).collect())
                .collect();
            let analytic = cell.backward(&tape, &dz).unwrap();
            let params = cell.params().to_vec();
            let numeric = numeric_grad(&params, 1e-6, |p| {
                cell.params_mut().copy_from_slice(p);
                let out = cell.run(&xs).unwrap().outputs;
                out.iter().zip(&c).flat_map(|(y, w)| y.iter().zip(w).map(|(v, wk)| v * wk)).sum()
            });
            rel_err(&analytic, &numeric)
        };
        worst = worst.max(err);
    }
    // Policy heads: the loss gradient with respect to the distribution parameters.
    for _ in 0..20 {
        let k = rng.random_range(2..=5);
        let logits: Vec<f64> = (0..k).map(|_| rng.random_range(-2.0..2.0)).collect();
        let a = Action::Discrete(rng.random_range(0..k));
        let (w, ent) = (rng.random_range(-2.0..2.0), rng.random_range(0.0..0.1));
        let loss = |l: &[f64]| {
            let d = ActionDist::Categorical { logits: l.to_vec() };
            -w * d.log_prob(&a) - ent * d.entropy()
        };
        let (analytic, _) = ActionDist::Categorical { logits: logits.clone() }.loss_grad(&a, w, ent);
        worst = worst.max(rel_err(&analytic, &numeric_grad(&logits, 1e-6, loss)));

        let mean_v: Vec<f64> = (0..k).map(|_| rng.random_range(-1.0..1.0)).collect();
        let log_std: Vec<f64> = (0..k).map(|_| rng.random_range(-1.0..0.5)).collect();
        let x = Action::Continuous((0..k).map(|_| rng.random_range(-2.0..2.0)).collect());
        let joint: Vec<f64> = mean_v.iter().chain(&log_std).copied().collect();
        let loss = |p: &[f64]| {
            let d = ActionDist::DiagonalGaussian { mean: p[..k].to_vec(), log_std: p[k..].to_vec() };
            -w * d.log_prob(&x) - ent * d.entropy()
        };
        let (gm, gs) = ActionDist::DiagonalGaussian { mean: mean_v, log_std }.loss_grad(&x, w, ent);
        let analytic: Vec<f64> = gm.into_iter().chain(gs).collect();
        worst = worst.max(rel_err(&analytic, &numeric_grad(&joint, 1e-6, loss)));
    }
    let secs = start.elapsed().as_secs_f64();
    verdict(worst < 1e-4 && secs < 30.0, format!("50 nets plus 40 policy heads, worst relative error {worst:.2e}, {secs:.1} s"))
}

fn reward_identities() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst = 0.0f64;
    let mut track = |got: f64, want: f64| worst = worst.max((got - want).abs());
    let example = GoalBox::new(vec![10.0], 2.0);
    track(box_reward(&[13.0], &example, 24.0, 0.1), 22.8);
    let mut hp = HyperParams::default();
    for _ in 0..10_000 {
        let dim = rng.random_range(1..=3);
        let center: Vec<f64> = (0..dim).map(|_| rng.random_range(-50.0..50.0)).collect();
        let eps = rng.random_range(0.1..5.0);
        let omega = rng.random_range(1.0..30.0);
        let upsilon = rng.random_range(0.01..0.99);
        let goal = GoalBox::new(center.clone(), eps);
        track(box_reward(&center, &goal, omega, upsilon), omega);
        // One coordinate on a face of the box, the rest at the center.
        let mut s = center.clone();
        let axis = rng.random_range(0..dim);
        let side = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
        s[axis] = center[axis] + side * eps;
        track(box_reward(&s, &goal, omega, upsilon), omega - upsilon * eps);

        hp.alpha = rng.random_range(0.1..3.0);
        hp.m = rng.random_range(0.0..3.0);
        hp.n = rng.random_range(0.0..1.0);
        let (r1, r2) = (rng.random_range(-30.0..30.0), rng.random_range(-30.0..30.0));
        let is_con = rng.random_range(0..=1u8);
        track(high_reward(r1, is_con, &hp) - high_reward(r2, is_con, &hp), hp.alpha * (r1 - r2));
        track(high_reward(r1, 1, &hp) - high_reward(r1, 0, &hp), -2.0 * hp.m);
    }
    verdict(worst <= 1e-12, format!("worked example 22.8 and 10^4 random cases, worst deviation {worst:.1e}"))
}

struct Trained {
    ccm: Vec<AgentModel>,
    flat: Vec<AgentModel>,
    ccm_final: Vec<f64>,
    flat_final: Vec<f64>,
    secs: f64,
}

fn train_pair(scenario: &Scenario, hp: &HyperParams, budget: usize) -> Trained {
    let start = Instant::now();
    let goal = GoalBox::new(scenario.goal.center.clone(), scenario.goal.half_width);
    let mut out = Trained { ccm: vec![], flat: vec![], ccm_final: vec![], flat_final: vec![], secs: 0.0 };
    for seed in SEEDS {
        let c = train_ccm(scenario, hp, seed, budget).expect("ccm trains");
        out.ccm_final.push(run_metrics("", "", &c.log, &goal).final_reward);
        out.ccm.push(c.into());
        let f = train_flat(scenario, hp, seed, budget).expect("flat trains");
        out.flat_final.push(run_metrics("", "", &f.log, &goal).final_reward);
        out.flat.push(f.into());
    }
    out.secs = start.elapsed().as_secs_f64();
    out
}

fn env1_learning() -> Verdict {
    let env1 = scenario_by_name("env1").unwrap();
    let hp = tuned_hyper();
    let t = train_pair(&env1, &hp, 200_000);
    let random = mean(&SEEDS.map(|s| evaluate_random(&env1, &hp, FINAL_WINDOW, s).unwrap().mean_reward()));
    let ccm = mean(&t.ccm_final);
    let wins = t.ccm_final.iter().zip(&t.flat_final).filter(|(c, f)| c >= f).count();
    let pass = ccm >= 20.0 && ccm >= 3.0 * random && wins >= 4 && t.secs <= 600.0;
    let fmt = |xs: &[f64]| xs.iter().map(|x| format!("{x:.3}")).collect::<Vec<_>>().join(" ");
    verdict(
        pass,
        format!(
            "ccm final-100 mean {ccm:.3} [{}], random {random:.3}, flat [{}], ccm >= flat in {wins}/5 seeds, {:.0} s",
            fmt(&t.ccm_final),
            fmt(&t.flat_final),
            t.secs
        ),
    )
}

fn noise_robustness() -> Verdict {
    let env3 = scenario_by_name("env3").unwrap();
    let noisy = env3.with_noise(noise_for("env3"));
    let t = train_pair(&env3, &tuned_hyper(), 200_000);
    let degradation = |m: &AgentModel| {
        let clean = m.evaluate(&env3, 30, 99).unwrap().mean_reward();
        let hit = m.evaluate(&noisy, 30, 99).unwrap().mean_reward();
        (clean - hit) / clean
    };
    let ccm: Vec<f64> = t.ccm.iter().map(degradation).collect();
    let flat: Vec<f64> = t.flat.iter().map(degradation).collect();
    let wins = ccm.iter().zip(&flat).filter(|(c, f)| c < f).count();
    let fmt = |xs: &[f64]| xs.iter().map(|x| format!("{x:.4}")).collect::<Vec<_>>().join(" ");
    verdict(wins >= 4, format!("relative degradation ccm [{}] vs flat [{}], ccm smaller in {wins}/5 seeds", fmt(&ccm), fmt(&flat)))
}

fn fcr_efficacy() -> Verdict {
    let env3 = scenario_by_name("env3").unwrap();
    let hp = HyperParams::default();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let cut = vec![NodeId(1), NodeId(2)];
    let data = random_rollouts(&env3, &cut, 250, 10, &mut rng).unwrap();
    let (train, test) = data.split_at(data.len() * 4 / 5);
    let mut fcr = Fcr::new(cut, hp.fcr_hidden, hp.fcr_lr, hp.fcr_loss, &mut rng);
    let first = fcr.train_epoch(train).unwrap();
    let mut last = first;
    for _ in 1..20 {
        last = fcr.train_epoch(train).unwrap();
    }
    let held_out = fcr.evaluate_all(test).unwrap();
    let reduction = 1.0 - last.excess / first.excess;
    verdict(
        reduction >= 0.5 && held_out.mae < 0.05,
        format!(
            "excess cross-entropy {:.4} -> {:.4} ({:.0}% lower), held-out MAE {:.4}",
            first.excess,
            last.excess,
            100.0 * reduction,
            held_out.mae
        ),
    )
}

fn glucose_control() -> Verdict {
    let start = Instant::now();
    let glucose = scenario_by_name("glucose").unwrap();
    let model = AgentModel::from(train_ccm(&glucose, &HyperParams::default(), 0, 500_000).expect("glucose trains"));
    let base = mean(&model.evaluate(&glucose, 3, 7).unwrap().time_in_range(TIR_LO, TIR_HI));
    let mut rng = ChaCha8Rng::seed_from_u64(1234);
    let mut groups: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for ind in make_cohort(&IndividualParams::base(), 30, &mut rng) {
        let scenario = build_glucose(&ind).unwrap();
        let tir = mean(&model.evaluate(&scenario, 1, 7).unwrap().time_in_range(TIR_LO, TIR_HI));
        groups.entry(ind.group.name().to_string()).or_default().push(tir);
    }
    let all: Vec<f64> = groups.values().flatten().copied().collect();
    let cohort = mean(&all);
    let (adult, child) = (mean(&groups["adult"]), mean(&groups["child"]));
    let secs = start.elapsed().as_secs_f64();
    verdict(
        base >= 0.7 && cohort >= 0.5 && adult >= child && secs <= 1800.0,
        format!(
            "training individual TIR {base:.3}, cohort mean {cohort:.3} (adolescent {:.3}, adult {adult:.3}, child {child:.3}), {secs:.0} s",
            mean(&groups["adolescent"])
        ),
    )
}

fn determinism() -> Verdict {
    let dirs: Vec<tempfile::TempDir> = (0..2).map(|_| tempfile::tempdir().unwrap()).collect();
    let mut files = Vec::new();
    for dir in &dirs {
        let config = ExperimentConfig::from_toml(&format!(
            "scenario = \"env3\"\nagent = \"ccm\"\nseeds = [0, 1]\nbudget = 3000\neval_episodes = 2\noutput = {:?}\n",
            dir.path().join("train").to_str().unwrap()
        ))
        .unwrap();
        run_train(&config).unwrap();
        run_eval(&EvalRequest {
            checkpoint: dir.path().join("train/seed-1/model.json"),
            scenario: "env3".into(),
            episodes: 3,
            noise: EvalNoise::RandomLarge,
            cohort: None,
            seed: 5,
            output: dir.path().join("eval"),
        })
        .unwrap();
        files.push(
            ["train/seed-0/log.csv", "train/seed-1/log.csv", "train/seed-0/eval.csv", "eval/logs/env3.csv"]
                .map(|f| std::fs::read(dir.path().join(f)).unwrap()),
        );
    }
    let same = files[0] == files[1];
    let bytes: usize = files[0].iter().map(Vec::len).sum();
    verdict(same, format!("train and eval repeated: 4 CSVs, {bytes} bytes, identical = {same}"))
}

fn main() {
    let criteria: [(u8, &str, bool, fn() -> Verdict); 9] = [
        (1, "minimum cut enumeration matches brute force", true, cut_enumeration),
        (2, "surgery isolates downstream mechanisms", true, surgery_soundness),
        (3, "analytic gradients match finite differences", true, gradient_check),
        (4, "reward identities", true, reward_identities),
        (5, "Env 1 learning against random and flat", false, env1_learning),
        (6, "Env 3 noise robustness against flat", false, noise_robustness),
        (7, "companion reconstruction training", true, fcr_efficacy),
        (8, "glucose time in range, training individual and cohort", false, glucose_control),
        (9, "byte-identical logs for repeated runs", true, determinism),
    ];
    let only: Option<BTreeSet<u8>> =
        std::env::var("ACCEPTANCE_ONLY").ok().map(|s| s.split(',').filter_map(|x| x.trim().parse().ok()).collect());
    let mut broken = Vec::new();
    for (id, name, required, run) in criteria {
        if only.as_ref().is_some_and(|o| !o.contains(&id)) {
            continue;
        }
        let v = run();
        println!("criterion {id} {}: {name}: {}", if v.pass { "PASS" } else { "FAIL" }, v.detail);
        if required && !v.pass {
            broken.push(id);
        }
    }
    if !broken.is_empty() {
        eprintln!("required criteria failed: {broken:?}");
        std::process::exit(1);
    }
}
