use serde::{Deserialize, Serialize};

use super::metrics::{MetricsReport, RunMetrics};
use super::HarnessError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub metric: String,
    pub mean_a: f64,
    pub mean_b: f64,
    /// `mean_b - mean_a`.
    pub delta: f64,
    /// Paired runs where `b` is higher.
    pub wins: usize,
    pub losses: usize,
    pub ties: usize,
    /// One-sided sign test for `b > a`, ties dropped.
    pub p_value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub scenario: String,
    pub rows: Vec<ComparisonRow>,
}

/// `P(X ≥ wins)` for `X ~ Binomial(wins + losses, 1/2)`; 1 with no informative pairs.
pub fn sign_test_p(wins: usize, losses: usize) -> f64 {
    let n = wins + losses;
    let mut coef = 1.0f64;
    let mut tail = 0.0;
    for k in 0..=n {
        if k >= wins {
            tail += coef;
        }
        coef = coef * (n - k) as f64 / (k + 1) as f64;
    }
    (tail / 2f64.powi(n as i32)).min(1.0)
}

fn row(metric: &str, a: &[RunMetrics], b: &[RunMetrics], f: fn(&RunMetrics) -> f64) -> ComparisonRow {
    let (mut wins, mut losses, mut ties) = (0, 0, 0);
    for (x, y) in a.iter().zip(b) {
        match f(y).partial_cmp(&f(x)) {
            Some(std::cmp::Ordering::Greater) => wins += 1,
            Some(std::cmp::Ordering::Less) => losses += 1,
            _ => ties += 1,
        }
    }
    let mean = |rs: &[RunMetrics]| if rs.is_empty() { 0.0 } else { rs.iter().map(f).sum::<f64>() / rs.len() as f64 };
    let (mean_a, mean_b) = (mean(a), mean(b));
    ComparisonRow { metric: metric.into(), mean_a, mean_b, delta: mean_b - mean_a, wins, losses, ties, p_value: sign_test_p(wins, losses) }
}

fn labels(runs: &[RunMetrics]) -> Vec<&str> {
    runs.iter().map(|r| r.label.as_str()).collect()
}

/// Paired comparison of two reports over the same scenario and run labels.
pub fn compare(a: &MetricsReport, b: &MetricsReport) -> Result<Comparison, HarnessError> {
    if a.scenario != b.scenario {
        return Err(HarnessError::Mismatch(format!("scenarios {} and {}", a.scenario, b.scenario)));
    }
    if labels(&a.runs) != labels(&b.runs) {
        return Err(HarnessError::Mismatch("the reports cover different runs".into()));
    }
    let mut rows = vec![
        row("final_reward", &a.runs, &b.runs, |r| r.final_reward),
        row("mean_reward", &a.runs, &b.runs, |r| r.mean_reward),
        row("time_in_goal", &a.runs, &b.runs, |r| r.time_in_goal),
    ];
    if !a.eval_runs.is_empty() && labels(&a.eval_runs) == labels(&b.eval_runs) {
        rows.push(row("eval_mean_reward", &a.eval_runs, &b.eval_runs, |r| r.mean_reward));
        rows.push(row("eval_time_in_goal", &a.eval_runs, &b.eval_runs, |r| r.time_in_goal));
    }
    Ok(Comparison { scenario: a.scenario.clone(), rows })
}

impl Comparison {
    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["metric", "mean_a", "mean_b", "delta", "wins", "losses", "ties", "p_value"]).expect("in memory");
        for r in &self.rows {
            w.write_record([
                r.metric.clone(),
                r.mean_a.to_string(),
                r.mean_b.to_string(),
                r.delta.to_string(),
                r.wins.to_string(),
                r.losses.to_string(),
                r.ties.to_string(),
                r.p_value.to_string(),
            ])
            .expect("in memory");
        }
        String::from_utf8(w.into_inner().expect("in memory")).expect("csv is utf-8")
    }
}
