use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::AgentKind;
use super::{io_err, HarnessError};
use crate::agent::{EpisodeLog, GoalBox};
use crate::graph::NoiseRegime;

/// Episodes averaged for the end-of-training reward.
pub const FINAL_WINDOW: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    /// Sample standard deviation; 0 for fewer than two values.
    pub sd: f64,
    pub n: usize,
}

pub fn summarize(xs: &[f64]) -> Summary {
    let n = xs.len();
    if n == 0 {
        return Summary { mean: 0.0, sd: 0.0, n };
    }
    let mean = xs.iter().sum::<f64>() / n as f64;
    let sd = if n < 2 { 0.0 } else { (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt() };
    Summary { mean, sd, n }
}

/// Metrics of one log (one seed, or one individual of a cohort).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub label: String,
    /// Log path relative to the report directory.
    pub log_file: String,
    pub episodes: usize,
    pub steps: usize,
    /// Mean single-step reward over the last `FINAL_WINDOW` episodes.
    pub final_reward: f64,
    /// Mean single-step reward over every episode.
    pub mean_reward: f64,
    /// Fraction of steps with every target inside the goal box, averaged
    /// over episodes.
    pub time_in_goal: f64,
    /// Per-episode mean single-step reward.
    pub low_curve: Vec<f64>,
    /// Per-episode mean high-level reward (empty for agents without one).
    pub high_curve: Vec<f64>,
    /// Per-episode mean reconstruction loss, for episodes that logged one.
    pub fcr_curve: Vec<f64>,
    pub cut_histogram: BTreeMap<usize, usize>,
}

fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        0.0
    } else {
        xs.iter().sum::<f64>() / xs.len() as f64
    }
}

#[derive(Default)]
struct EpisodeAcc {
    low: Vec<f64>,
    inside: usize,
    high: Vec<f64>,
    fcr: Vec<f64>,
}

pub fn run_metrics(label: &str, log_file: &str, log: &EpisodeLog, goal: &GoalBox) -> RunMetrics {
    let mut episodes: Vec<(u64, usize, EpisodeAcc)> = Vec::new();
    let mut cut_histogram = BTreeMap::new();
    for row in &log.rows {
        let key = (row.seed, row.episode);
        if episodes.last().is_none_or(|e| (e.0, e.1) != key) {
            episodes.push((key.0, key.1, EpisodeAcc::default()));
        }
        let acc = &mut episodes.last_mut().expect("just pushed").2;
        match row.level.as_str() {
            "low" => {
                acc.low.push(row.reward);
                if !row.target.is_empty() && goal.contains(&row.target) {
                    acc.inside += 1;
                }
            }
            "high" => {
                acc.high.push(row.reward);
                if let Some(c) = row.cut_id {
                    *cut_histogram.entry(c).or_insert(0) += 1;
                }
            }
            _ => {}
        }
        if let Some(l) = row.loss_fcr {
            acc.fcr.push(l);
        }
    }
    let with_steps: Vec<&EpisodeAcc> = episodes.iter().map(|e| &e.2).filter(|a| !a.low.is_empty()).collect();
    let low_curve: Vec<f64> = with_steps.iter().map(|a| mean(&a.low)).collect();
    let tig: Vec<f64> = with_steps.iter().map(|a| a.inside as f64 / a.low.len() as f64).collect();
    let tail = &low_curve[low_curve.len().saturating_sub(FINAL_WINDOW)..];
    RunMetrics {
        label: label.to_string(),
        log_file: log_file.to_string(),
        episodes: low_curve.len(),
        steps: with_steps.iter().map(|a| a.low.len()).sum(),
        final_reward: mean(tail),
        mean_reward: mean(&low_curve),
        time_in_goal: mean(&tig),
        high_curve: episodes.iter().filter(|e| !e.2.high.is_empty()).map(|e| mean(&e.2.high)).collect(),
        fcr_curve: episodes.iter().filter(|e| !e.2.fcr.is_empty()).map(|e| mean(&e.2.fcr)).collect(),
        low_curve,
        cut_histogram,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReportKind {
    Train,
    Eval,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub kind: ReportKind,
    pub scenario: String,
    pub agent: AgentKind,
    pub config_hash: String,
    pub fixture_digests: BTreeMap<String, String>,
    pub goal: GoalBox,
    pub noise: NoiseRegime,
    /// Training logs (train reports) or evaluation logs (eval reports).
    pub runs: Vec<RunMetrics>,
    /// Greedy evaluation after training, one per seed.
    #[serde(default)]
    pub eval_runs: Vec<RunMetrics>,
    pub aggregate: BTreeMap<String, Summary>,
    /// Time in goal per label group (`adult` for `adult#003`).
    #[serde(default)]
    pub groups: BTreeMap<String, Summary>,
}

pub const REPORT_FILE: &str = "report.json";

fn group_of(label: &str) -> Option<&str> {
    label.split_once('#').map(|(g, _)| g)
}

/// Aggregates over runs: mean ± sample sd of every scalar metric, plus time
/// in goal per label group.
pub fn aggregate(runs: &[RunMetrics], eval_runs: &[RunMetrics]) -> (BTreeMap<String, Summary>, BTreeMap<String, Summary>) {
    let pick = |rs: &[RunMetrics], f: fn(&RunMetrics) -> f64| rs.iter().map(f).collect::<Vec<_>>();
    let mut agg = BTreeMap::new();
    agg.insert("final_reward".to_string(), summarize(&pick(runs, |r| r.final_reward)));
    agg.insert("mean_reward".to_string(), summarize(&pick(runs, |r| r.mean_reward)));
    agg.insert("time_in_goal".to_string(), summarize(&pick(runs, |r| r.time_in_goal)));
    if !eval_runs.is_empty() {
        agg.insert("eval_mean_reward".to_string(), summarize(&pick(eval_runs, |r| r.mean_reward)));
        agg.insert("eval_time_in_goal".to_string(), summarize(&pick(eval_runs, |r| r.time_in_goal)));
    }
    let mut by_group: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for r in runs {
        if let Some(g) = group_of(&r.label) {
            by_group.entry(g.to_string()).or_default().push(r.time_in_goal);
        }
    }
    (agg, by_group.into_iter().map(|(g, v)| (g, summarize(&v))).collect())
}

impl MetricsReport {
    pub fn recompute_aggregates(&mut self) {
        let (agg, groups) = aggregate(&self.runs, &self.eval_runs);
        self.aggregate = agg;
        self.groups = groups;
    }

    pub fn load(dir: &Path) -> Result<Self, HarnessError> {
        let path = dir.join(REPORT_FILE);
        let text = std::fs::read_to_string(&path).map_err(|e| io_err(&path, e))?;
        serde_json::from_str(&text).map_err(|e| io_err(&path, e))
    }

    /// `report.json` plus CSV tables: per-run scalars with aggregate rows,
    /// reward curves and the cut histogram.
    pub fn write(&self, dir: &Path) -> Result<(), HarnessError> {
        std::fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
        let json = serde_json::to_string_pretty(self).expect("report serializes") + "\n";
        let path = dir.join(REPORT_FILE);
        std::fs::write(&path, json).map_err(|e| io_err(&path, e))?;
        let path = dir.join("report.csv");
        std::fs::write(&path, self.summary_csv()).map_err(|e| io_err(&path, e))?;
        let path = dir.join("curves.csv");
        std::fs::write(&path, self.curves_csv()).map_err(|e| io_err(&path, e))?;
        let path = dir.join("cuts.csv");
        std::fs::write(&path, self.cuts_csv()).map_err(|e| io_err(&path, e))
    }

    fn csv_text(rows: Vec<Vec<String>>) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        for r in rows {
            w.write_record(r).expect("writing to memory");
        }
        String::from_utf8(w.into_inner().expect("flush to memory")).expect("csv is utf-8")
    }

    pub fn summary_csv(&self) -> String {
        let mut rows = vec![["set", "label", "episodes", "steps", "final_reward", "mean_reward", "time_in_goal"]
            .map(String::from)
            .to_vec()];
        for (set, runs) in [("run", &self.runs), ("eval", &self.eval_runs)] {
            for r in runs {
                rows.push(vec![
                    set.into(),
                    r.label.clone(),
                    r.episodes.to_string(),
                    r.steps.to_string(),
                    r.final_reward.to_string(),
                    r.mean_reward.to_string(),
                    r.time_in_goal.to_string(),
                ]);
            }
        }
        for (name, s) in &self.aggregate {
            rows.push(vec!["aggregate".into(), name.clone(), s.n.to_string(), String::new(), s.mean.to_string(), s.sd.to_string(), String::new()]);
        }
        for (name, s) in &self.groups {
            rows.push(vec!["group".into(), name.clone(), s.n.to_string(), String::new(), String::new(), s.sd.to_string(), s.mean.to_string()]);
        }
        Self::csv_text(rows)
    }

    pub fn curves_csv(&self) -> String {
        let mut rows = vec![["label", "curve", "index", "value"].map(String::from).to_vec()];
        for r in &self.runs {
            for (name, curve) in [("low", &r.low_curve), ("high", &r.high_curve), ("fcr", &r.fcr_curve)] {
                for (i, v) in curve.iter().enumerate() {
                    rows.push(vec![r.label.clone(), name.into(), i.to_string(), v.to_string()]);
                }
            }
        }
        Self::csv_text(rows)
    }

    pub fn cuts_csv(&self) -> String {
        let mut rows = vec![["label", "cut_id", "count"].map(String::from).to_vec()];
        for r in &self.runs {
            for (c, n) in &r.cut_histogram {
                rows.push(vec![r.label.clone(), c.to_string(), n.to_string()]);
            }
        }
        Self::csv_text(rows)
    }
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-9 * (1.0 + a.abs().max(b.abs()))
}

fn diff_runs(kind: &str, stored: &RunMetrics, fresh: &RunMetrics, out: &mut Vec<String>) {
    let id = format!("{kind} {}", stored.label);
    let scalars = [
        ("final_reward", stored.final_reward, fresh.final_reward),
        ("mean_reward", stored.mean_reward, fresh.mean_reward),
        ("time_in_goal", stored.time_in_goal, fresh.time_in_goal),
    ];
    for (name, a, b) in scalars {
        if !close(a, b) {
            out.push(format!("{id}: {name} is {a} in the report but {b} from the log"));
        }
    }
    if stored.episodes != fresh.episodes || stored.steps != fresh.steps {
        out.push(format!("{id}: episode or step count differs"));
    }
    for (name, a, b) in [
        ("low_curve", &stored.low_curve, &fresh.low_curve),
        ("high_curve", &stored.high_curve, &fresh.high_curve),
        ("fcr_curve", &stored.fcr_curve, &fresh.fcr_curve),
    ] {
        if a.len() != b.len() || a.iter().zip(b).any(|(x, y)| !close(*x, *y)) {
            out.push(format!("{id}: {name} differs"));
        }
    }
    if stored.cut_histogram != fresh.cut_histogram {
        out.push(format!("{id}: cut histogram differs"));
    }
}

/// Re-derive every number of the report in `dir` from its logs.
pub fn verify_report(dir: &Path) -> Result<(), HarnessError> {
    let report = MetricsReport::load(dir)?;
    let mut problems = Vec::new();
    let mut fresh_sets = Vec::new();
    for (kind, runs) in [("run", &report.runs), ("eval", &report.eval_runs)] {
        let mut fresh_runs = Vec::new();
        for stored in runs {
            let path = dir.join(&stored.log_file);
            let file = std::fs::File::open(&path).map_err(|e| io_err(&path, e))?;
            let log = EpisodeLog::read_csv(std::io::BufReader::new(file)).map_err(|e| io_err(&path, e))?;
            let fresh = run_metrics(&stored.label, &stored.log_file, &log, &report.goal);
            diff_runs(kind, stored, &fresh, &mut problems);
            fresh_runs.push(fresh);
        }
        fresh_sets.push(fresh_runs);
    }
    let (agg, groups) = aggregate(&fresh_sets[0], &fresh_sets[1]);
    for (name, table, fresh) in [("aggregate", &report.aggregate, &agg), ("group", &report.groups, &groups)] {
        if table.keys().ne(fresh.keys()) {
            problems.push(format!("{name} entries differ"));
            continue;
        }
        for (key, s) in table {
            let f = &fresh[key];
            if s.n != f.n || !close(s.mean, f.mean) || !close(s.sd, f.sd) {
                problems.push(format!("{name} {key}: {} ± {} in the report but {} ± {} from the logs", s.mean, s.sd, f.mean, f.sd));
            }
        }
    }
    if problems.is_empty() {
        Ok(())
    } else {
        Err(HarnessError::Verify(problems))
    }
}
