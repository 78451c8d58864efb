//! Frozen scenario files. Each one is checked against its recorded SHA-256
//! digest when loaded.

use std::collections::BTreeMap;

use sha2::{Digest, Sha256};

use super::{Scenario, ScenarioError};

const FILES: [(&str, &str); 5] = [
    ("env1", include_str!("../../fixtures/env1.json")),
    ("env2", include_str!("../../fixtures/env2.json")),
    ("env3", include_str!("../../fixtures/env3.json")),
    ("fig2", include_str!("../../fixtures/fig2.json")),
    ("glucose", include_str!("../../fixtures/glucose.json")),
];

const DIGESTS: &str = include_str!("../../fixtures/DIGESTS");

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Recorded digests, keyed by fixture name (`<hex>  <name>.json` lines).
pub fn recorded_digests() -> BTreeMap<String, String> {
    DIGESTS
        .lines()
        .filter_map(|line| {
            let (digest, file) = line.split_once("  ")?;
            Some((file.trim().trim_end_matches(".json").to_string(), digest.to_string()))
        })
        .collect()
}

pub fn fixture_text(name: &str) -> Result<&'static str, ScenarioError> {
    FILES
        .iter()
        .find(|(n, _)| *n == name)
        .map(|(_, text)| *text)
        .ok_or_else(|| ScenarioError::Unknown(name.to_string()))
}

pub fn names() -> impl Iterator<Item = &'static str> {
    FILES.iter().map(|(n, _)| *n)
}

/// Parse a frozen scenario after checking its digest.
pub fn load_fixture(name: &str) -> Result<Scenario, ScenarioError> {
    let text = fixture_text(name)?;
    let found = sha256_hex(text.as_bytes());
    let expected = recorded_digests().remove(name).unwrap_or_default();
    if found != expected {
        return Err(ScenarioError::Digest { name: name.to_string(), expected, found });
    }
    Scenario::from_json(text)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::scenario_by_name;

    #[test]
    fn fixtures_match_builders_and_digests() {
        if std::env::var_os("CCM_REGENERATE_FIXTURES").is_some() {
            let dir = concat!(env!("CARGO_MANIFEST_DIR"), "/fixtures");
            let mut digests = String::new();
            for name in names() {
                let text = scenario_by_name(name).unwrap().to_json();
                std::fs::write(format!("{dir}/{name}.json"), &text).unwrap();
                digests += &format!("{}  {name}.json\n", sha256_hex(text.as_bytes()));
            }
            std::fs::write(format!("{dir}/DIGESTS"), digests).unwrap();
            return;
        }
        for name in names() {
            let frozen = load_fixture(name).unwrap();
            assert_eq!(frozen, scenario_by_name(name).unwrap(), "{name} drifted from its fixture");
        }
    }

    #[test]
    fn tampered_text_fails_digest() {
        let text = fixture_text("env1").unwrap().replace("1.25", "1.26");
        assert_ne!(sha256_hex(text.as_bytes()), recorded_digests()["env1"]);
    }
}
