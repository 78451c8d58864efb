use std::fs;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::{resolve_scenario, AgentKind, ExperimentConfig};
use super::metrics::{aggregate, run_metrics, MetricsReport, ReportKind, RunMetrics};
use super::{io_err, HarnessError};
use crate::agent::{train_ccm, train_flat, AgentError, AgentModel, EpisodeLog, GoalBox};
use crate::env::fixtures::{recorded_digests, sha256_hex};
use crate::env::{build_glucose, make_cohort, noise_for, IndividualParams, Scenario};
use crate::graph::NoiseRegime;

/// Offset between a training seed and the seed of its post-training
/// evaluation, so evaluation episodes never replay training episodes.
pub const EVAL_SEED_OFFSET: u64 = 10_000;

#[cfg(feature = "parallel")]
fn par_map<T: Sync, U: Send>(items: &[T], f: impl Fn(&T) -> U + Sync + Send) -> Vec<U> {
    use rayon::prelude::*;
    items.par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
fn par_map<T: Sync, U: Send>(items: &[T], f: impl Fn(&T) -> U + Sync + Send) -> Vec<U> {
    items.iter().map(f).collect()
}

fn write_file(path: &Path, text: &str) -> Result<(), HarnessError> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    }
    fs::write(path, text).map_err(|e| io_err(path, e))
}

fn goal_of(scenario: &Scenario) -> GoalBox {
    GoalBox::new(scenario.goal.center.clone(), scenario.goal.half_width)
}

#[derive(Debug)]
pub struct TrainOutcome {
    pub dir: PathBuf,
    pub report: MetricsReport,
}

struct SeedResult {
    run: RunMetrics,
    eval: Option<RunMetrics>,
}

fn train_seed(config: &ExperimentConfig, scenario: &Scenario, dir: &Path, seed: u64) -> Result<SeedResult, HarnessError> {
    let wrap = |source: AgentError| HarnessError::Seed { config: config.label(), seed, source };
    let (model, log): (AgentModel, EpisodeLog) = match config.agent {
        AgentKind::Ccm => {
            let run = train_ccm(scenario, &config.hyper, seed, config.budget).map_err(wrap)?;
            let log = run.log.clone();
            (run.into(), log)
        }
        AgentKind::Flat => {
            let run = train_flat(scenario, &config.hyper, seed, config.budget).map_err(wrap)?;
            let log = run.log.clone();
            (run.into(), log)
        }
    };
    let seed_dir = format!("seed-{seed}");
    let log_file = format!("{seed_dir}/log.csv");
    write_file(&dir.join(&log_file), &log.to_csv_string())?;
    write_file(&dir.join(&seed_dir).join("model.json"), &model.to_json())?;
    let label = format!("seed-{seed}");
    let goal = goal_of(scenario);
    let run = run_metrics(&label, &log_file, &log, &goal);
    let eval = if config.eval_episodes > 0 {
        let evaluation = model.evaluate(scenario, config.eval_episodes, seed + EVAL_SEED_OFFSET).map_err(wrap)?;
        let eval_file = format!("{seed_dir}/eval.csv");
        write_file(&dir.join(&eval_file), &evaluation.log.to_csv_string())?;
        Some(run_metrics(&label, &eval_file, &evaluation.log, &goal))
    } else {
        None
    };
    Ok(SeedResult { run, eval })
}

/// Train one model per seed and write logs, checkpoints and the report
/// under `config.output`. Seeds that finish are kept even when another seed
/// fails; the first failure is then returned.
pub fn run_train(config: &ExperimentConfig) -> Result<TrainOutcome, HarnessError> {
    config.validate()?;
    let scenario = resolve_scenario(&config.scenario)?;
    let dir = config.output.clone();
    write_file(&dir.join("config.toml"), &config.to_toml())?;
    let results = par_map(&config.seeds, |seed| train_seed(config, &scenario, &dir, *seed));
    let mut runs = Vec::new();
    let mut eval_runs = Vec::new();
    let mut first_error = None;
    for r in results {
        match r {
            Ok(SeedResult { run, eval }) => {
                runs.push(run);
                eval_runs.extend(eval);
            }
            Err(e) => {
                log::error!("{e}");
                first_error.get_or_insert(e);
            }
        }
    }
    let (aggregate, groups) = aggregate(&runs, &eval_runs);
    let report = MetricsReport {
        kind: ReportKind::Train,
        scenario: scenario.name.clone(),
        agent: config.agent,
        config_hash: config.hash(),
        fixture_digests: recorded_digests(),
        goal: goal_of(&scenario),
        noise: scenario.noise,
        runs,
        eval_runs,
        aggregate,
        groups,
    };
    report.write(&dir)?;
    match first_error {
        Some(e) => Err(e),
        None => Ok(TrainOutcome { dir, report }),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvalNoise {
    #[default]
    None,
    /// The scenario's rare large perturbations.
    RandomLarge,
}

impl std::str::FromStr for EvalNoise {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "none" => Ok(EvalNoise::None),
            "random_large" => Ok(EvalNoise::RandomLarge),
            other => Err(HarnessError::Config(format!("unknown noise {other:?}, expected none or random_large"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalRequest {
    pub checkpoint: PathBuf,
    pub scenario: String,
    pub episodes: usize,
    pub noise: EvalNoise,
    /// Evaluate on this many generated glucose individuals instead of the
    /// scenario itself.
    pub cohort: Option<usize>,
    pub seed: u64,
    pub output: PathBuf,
}

fn incompatible(e: AgentError) -> HarnessError {
    match e {
        AgentError::Incompatible(msg) => HarnessError::IncompatibleCheckpoint(msg),
        AgentError::Context { source, .. } if matches!(*source, AgentError::Incompatible(_)) => incompatible(*source),
        other => HarnessError::Agent(other),
    }
}

/// Frozen-policy episodes of a checkpoint, with logs and report written
/// under `req.output`.
pub fn run_eval(req: &EvalRequest) -> Result<MetricsReport, HarnessError> {
    let text = fs::read_to_string(&req.checkpoint).map_err(|e| io_err(&req.checkpoint, e))?;
    let model = AgentModel::from_json(&text).map_err(|e| HarnessError::Config(format!("{}: {e}", req.checkpoint.display())))?;
    let base = resolve_scenario(&req.scenario)?;
    let noise = match req.noise {
        EvalNoise::None => NoiseRegime::none(),
        EvalNoise::RandomLarge => noise_for(&base.name),
    };
    let targets: Vec<(String, Scenario)> = match req.cohort {
        None => vec![(base.name.clone(), base.with_noise(noise))],
        Some(n) => {
            if base.individual.is_none() {
                return Err(HarnessError::Config(format!("cohorts need the glucose scenario, not {}", base.name)));
            }
            let mut rng = ChaCha8Rng::seed_from_u64(req.seed);
            make_cohort(&IndividualParams::base(), n, &mut rng)
                .iter()
                .map(|ind| Ok((ind.id.clone(), build_glucose(ind)?.with_noise(noise))))
                .collect::<Result<_, HarnessError>>()?
        }
    };
    let results = par_map(&targets, |(label, scenario)| -> Result<RunMetrics, HarnessError> {
        let evaluation = model.evaluate(scenario, req.episodes, req.seed).map_err(incompatible)?;
        let log_file = format!("logs/{}.csv", label.replace('#', "-"));
        write_file(&req.output.join(&log_file), &evaluation.log.to_csv_string())?;
        Ok(run_metrics(label, &log_file, &evaluation.log, &goal_of(scenario)))
    });
    let runs = results.into_iter().collect::<Result<Vec<_>, _>>()?;
    let (aggregate, groups) = aggregate(&runs, &[]);
    let report = MetricsReport {
        kind: ReportKind::Eval,
        scenario: base.name.clone(),
        agent: match model {
            AgentModel::Ccm(_) => AgentKind::Ccm,
            AgentModel::Flat(_) => AgentKind::Flat,
        },
        config_hash: sha256_hex(text.as_bytes()),
        fixture_digests: recorded_digests(),
        goal: goal_of(&base),
        noise,
        runs,
        eval_runs: Vec::new(),
        aggregate,
        groups,
    };
    report.write(&req.output)?;
    Ok(report)
}
