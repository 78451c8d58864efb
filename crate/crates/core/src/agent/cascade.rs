//! Cascade control: every view upstream of the global targets is given a
//! goal on its exit boundary, taken from what the controller of the next
//! view downstream would like that boundary to be.

use thiserror::Error;

use super::reward::GoalBox;
use super::AgentError;
use crate::graph::NodeId;
use crate::modular::CcmView;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ChainError {
    #[error("empty view chain")]
    Empty,
    #[error("view {index} exits at {found:?} but view {} is entered at {expected:?}", index - 1)]
    Mismatch { index: usize, expected: Vec<NodeId>, found: Vec<NodeId> },
}

/// Source of desired boundary values.
pub trait GoalProposer {
    /// Values, in the goal units of view `k + 1`, that the controller of
    /// `view` (the `k`-th in the chain) wants on its entry nodes.
    fn propose(&mut self, k: usize, view: &CcmView, goal: &GoalBox) -> Result<Vec<f64>, AgentError>;
}

/// Views must be ordered from the global targets upstream, each one exiting
/// where the previous one is entered.
pub fn check_chain(views: &[CcmView]) -> Result<(), ChainError> {
    if views.is_empty() {
        return Err(ChainError::Empty);
    }
    for (index, w) in views.windows(2).enumerate() {
        if w[1].local_target != w[0].local_modifiable {
            return Err(ChainError::Mismatch {
                index: index + 1,
                expected: w[0].local_modifiable.clone(),
                found: w[1].local_target.clone(),
            });
        }
    }
    Ok(())
}

/// Goal boxes for every view: the global goal for the first, then each
/// downstream proposal with half-width `subgoal_epsilon`.
pub fn cascade_goals(
    views: &[CcmView],
    global: &GoalBox,
    subgoal_epsilon: f64,
    proposer: &mut dyn GoalProposer,
) -> Result<Vec<GoalBox>, AgentError> {
    check_chain(views)?;
    let mut goals = vec![global.clone()];
    for (k, view) in views.iter().enumerate().take(views.len() - 1) {
        let center = proposer.propose(k, view, &goals[k])?;
        goals.push(GoalBox::new(center, subgoal_epsilon));
    }
    Ok(goals)
}
