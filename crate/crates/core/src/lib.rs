//! Causal coupled mechanisms: simulate causal graph dynamics, split them at
//! minimum vertex cuts, and control target variables with a two-level
//! actor-critic agent.

pub mod graph;
pub mod modular;
pub mod env;
pub mod nn;
pub mod agent;
pub mod harness;
