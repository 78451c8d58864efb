use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::agent::HyperParams;
use crate::env::{fixtures::sha256_hex, scenario_by_name, Scenario, ScenarioError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AgentKind {
    Ccm,
    Flat,
}

impl AgentKind {
    pub fn name(self) -> &'static str {
        match self {
            AgentKind::Ccm => "ccm",
            AgentKind::Flat => "flat",
        }
    }
}

fn default_output() -> PathBuf {
    PathBuf::from("runs")
}

/// One training experiment: a scenario, an agent and its hyperparameters,
/// run once per seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Registered scenario name or path to a scenario JSON file.
    pub scenario: String,
    pub agent: AgentKind,
    #[serde(default)]
    pub hyper: HyperParams,
    pub seeds: Vec<u64>,
    /// Environment steps per seed.
    pub budget: usize,
    /// Greedy episodes run on the trained model of every seed.
    #[serde(default)]
    pub eval_episodes: usize,
    #[serde(default = "default_output")]
    pub output: PathBuf,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, HarnessError> {
        let config: ExperimentConfig = toml::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        if self.seeds.is_empty() {
            return Err(HarnessError::Config("at least one seed is required".into()));
        }
        let mut seen = self.seeds.clone();
        seen.sort_unstable();
        seen.dedup();
        if seen.len() != self.seeds.len() {
            return Err(HarnessError::Config("seeds must be distinct".into()));
        }
        self.hyper.validate().map_err(|e| HarnessError::Config(e.to_string()))?;
        resolve_scenario(&self.scenario)?;
        Ok(())
    }

    /// Digest of everything that affects the results (the output directory
    /// does not).
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.output = PathBuf::new();
        sha256_hex(serde_json::to_string(&c).expect("config serializes").as_bytes())
    }

    pub fn label(&self) -> String {
        format!("{} {} on {}", self.agent.name(), self.hash().get(..12).unwrap_or(""), self.scenario)
    }
}

/// A registered name, or a path to a scenario JSON file.
pub fn resolve_scenario(name: &str) -> Result<Scenario, HarnessError> {
    if name.ends_with(".json") {
        let text = std::fs::read_to_string(name).map_err(|e| HarnessError::Config(format!("{name}: {e}")))?;
        return Scenario::from_json(&text).map_err(|e| HarnessError::Config(e.to_string()));
    }
    scenario_by_name(name).map_err(|e| match e {
        ScenarioError::Unknown(n) => HarnessError::Config(format!("unknown scenario {n:?}")),
        other => HarnessError::Scenario(other),
    })
}
