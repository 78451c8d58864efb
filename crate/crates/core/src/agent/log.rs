use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::AgentError;

pub const HEADER: [&str; 12] = [
    "seed",
    "episode",
    "t",
    "level",
    "cut_id",
    "goal_center",
    "action",
    "reward",
    "loss_policy",
    "loss_value",
    "loss_fcr",
    "target",
];

/// One record. `level` is `low` for every environment step, `high` for a
/// high-level decision, `ccm<k>` for the update of the `k`-th view in the
/// chain and `flat` for a baseline update. `target` holds the target values
/// after the step on `low` rows and is empty elsewhere.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogRow {
    pub seed: u64,
    pub episode: usize,
    pub t: usize,
    pub level: String,
    pub cut_id: Option<usize>,
    pub goal_center: Vec<f64>,
    pub action: Vec<f64>,
    pub reward: f64,
    pub loss_policy: Option<f64>,
    pub loss_value: Option<f64>,
    pub loss_fcr: Option<f64>,
    #[serde(default)]
    pub target: Vec<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EpisodeLog {
    pub rows: Vec<LogRow>,
}

fn join(v: &[f64]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(";")
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn parse_list(s: &str) -> Result<Vec<f64>, AgentError> {
    if s.is_empty() {
        return Ok(Vec::new());
    }
    s.split(';').map(|x| x.parse().map_err(|_| AgentError::Log(format!("bad number {x:?}")))).collect()
}

fn parse_opt<T: std::str::FromStr>(s: &str) -> Result<Option<T>, AgentError> {
    if s.is_empty() {
        Ok(None)
    } else {
        s.parse().map(Some).map_err(|_| AgentError::Log(format!("bad value {s:?}")))
    }
}

impl EpisodeLog {
    pub fn push(&mut self, row: LogRow) {
        self.rows.push(row);
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn extend(&mut self, other: EpisodeLog) {
        self.rows.extend(other.rows);
    }

    pub fn level<'a>(&'a self, level: &'a str) -> impl Iterator<Item = &'a LogRow> + 'a {
        self.rows.iter().filter(move |r| r.level == level)
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), AgentError> {
        let mut w = csv::Writer::from_writer(out);
        let err = |e: csv::Error| AgentError::Log(e.to_string());
        w.write_record(HEADER).map_err(err)?;
        for r in &self.rows {
            w.write_record([
                r.seed.to_string(),
                r.episode.to_string(),
                r.t.to_string(),
                r.level.clone(),
                r.cut_id.map(|c| c.to_string()).unwrap_or_default(),
                join(&r.goal_center),
                join(&r.action),
                r.reward.to_string(),
                opt(r.loss_policy),
                opt(r.loss_value),
                opt(r.loss_fcr),
                join(&r.target),
            ])
            .map_err(err)?;
        }
        w.flush().map_err(|e| AgentError::Log(e.to_string()))
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("csv is utf-8")
    }

    pub fn read_csv<R: Read>(input: R) -> Result<Self, AgentError> {
        let mut rd = csv::Reader::from_reader(input);
        let err = |e: csv::Error| AgentError::Log(e.to_string());
        let header = rd.headers().map_err(err)?.clone();
        if header.iter().ne(HEADER.iter().copied()) {
            return Err(AgentError::Log("unexpected header".into()));
        }
        let mut log = EpisodeLog::default();
        for rec in rd.records() {
            let rec = rec.map_err(err)?;
            let f = |i: usize| rec.get(i).unwrap_or("");
            let num = |i: usize| f(i).parse::<f64>().map_err(|_| AgentError::Log(format!("bad number {:?}", f(i))));
            log.push(LogRow {
                seed: f(0).parse().map_err(|_| AgentError::Log("bad seed".into()))?,
                episode: f(1).parse().map_err(|_| AgentError::Log("bad episode".into()))?,
                t: f(2).parse().map_err(|_| AgentError::Log("bad step".into()))?,
                level: f(3).to_string(),
                cut_id: parse_opt(f(4))?,
                goal_center: parse_list(f(5))?,
                action: parse_list(f(6))?,
                reward: num(7)?,
                loss_policy: parse_opt(f(8))?,
                loss_value: parse_opt(f(9))?,
                loss_fcr: parse_opt(f(10))?,
                target: parse_list(f(11))?,
            });
        }
        Ok(log)
    }
}
