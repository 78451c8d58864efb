//! WebAssembly bindings for the demo page. Every export takes and returns
//! plain numbers or JSON text; the logic lives in [`ops`] so it can be tested
//! natively.

pub mod ops;

use wasm_bindgen::prelude::*;

/// Box reward sampled at `points` evenly spaced states in `[lo, hi]`.
#[wasm_bindgen]
pub fn reward_curve(center: f64, epsilon: f64, omega: f64, upsilon: f64, lo: f64, hi: f64, points: usize) -> Result<Vec<f64>, JsError> {
    ops::reward_curve(center, epsilon, omega, upsilon, lo, hi, points).map_err(|e| JsError::new(&e))
}

/// One simulated day under a proportional insulin controller, as JSON.
#[wasm_bindgen]
pub fn glucose_day(group: &str, seed: u64, basal: f64, gain: f64, noise: bool) -> Result<String, JsError> {
    let day = ops::glucose_day(group, seed, basal, gain, noise).map_err(|e| JsError::new(&e))?;
    Ok(serde_json::to_string(&day).expect("day serializes"))
}

/// Nodes, edges and minimum cut catalog of a built-in scenario, as JSON.
#[wasm_bindgen]
pub fn cut_catalog(scenario: &str) -> Result<String, JsError> {
    let cat = ops::cut_catalog(scenario).map_err(|e| JsError::new(&e))?;
    Ok(serde_json::to_string(&cat).expect("catalog serializes"))
}
