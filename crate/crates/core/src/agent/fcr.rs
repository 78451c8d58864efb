//! Forward coupled reasoning: a recurrent predictor that reconstructs the
//! values of the other cut variables from the first one,
//! `v⁽ʲ⁾_t = RNN(v⁽⁰⁾_{1:t}, v⁽ʲ⁾_{1:t-1})`. Values are min-max normalized to
//! (0, 1) with running bounds, so the output can be trained with a
//! cross-entropy loss.

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::hyper::FcrLoss;
use super::AgentError;
use super::obs::Scaler;
use crate::env::{Env, Scenario};
use crate::graph::NodeId;
use crate::nn::{clip_grad_norm, RecurrentCell, SgdMomentum};

/// Clamp margin keeping normalized values strictly inside (0, 1).
pub const MARGIN: f64 = 1e-6;
const MAX_GRAD_NORM: f64 = 1.0;

/// Running min/max per node.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RangeTracker {
    bounds: BTreeMap<NodeId, (f64, f64)>,
}

impl RangeTracker {
    pub fn observe(&mut self, id: NodeId, x: f64) {
        if !x.is_finite() {
            return;
        }
        let b = self.bounds.entry(id).or_insert((x, x));
        b.0 = b.0.min(x);
        b.1 = b.1.max(x);
    }

    pub fn bounds(&self, id: NodeId) -> Option<(f64, f64)> {
        self.bounds.get(&id).copied()
    }

    /// Map into `[MARGIN, 1 - MARGIN]`; 0.5 while the range is still a point.
    pub fn normalize(&self, id: NodeId, x: f64) -> f64 {
        match self.bounds.get(&id) {
            Some(&(lo, hi)) if hi > lo => ((x - lo) / (hi - lo)).clamp(MARGIN, 1.0 - MARGIN),
            _ => 0.5,
        }
    }

    pub fn denormalize(&self, id: NodeId, v: f64) -> f64 {
        match self.bounds.get(&id) {
            Some(&(lo, hi)) => lo + v * (hi - lo),
            None => 0.0,
        }
    }
}

fn check_unit(values: &[f64]) -> Result<(), AgentError> {
    match values.iter().find(|v| !(0.0..=1.0).contains(*v)) {
        Some(v) => Err(AgentError::Domain(*v)),
        None => Ok(()),
    }
}

fn clamp_unit(v: f64) -> f64 {
    v.clamp(MARGIN, 1.0 - MARGIN)
}

/// Mean per-element loss between predictions `v` and truths `v̄`, both in
/// `[0, 1]` (values are pulled `MARGIN` inside before taking logs).
pub fn fcr_loss(pred: &[f64], truth: &[f64], kind: FcrLoss) -> Result<f64, AgentError> {
    check_unit(pred)?;
    check_unit(truth)?;
    if pred.is_empty() {
        return Ok(0.0);
    }
    let total: f64 = pred
        .iter()
        .zip(truth)
        .map(|(&v, &t)| {
            let v = clamp_unit(v);
            match kind {
                FcrLoss::Standard => -(t * v.ln() + (1.0 - t) * (1.0 - v).ln()),
                FcrLoss::Literal => -(t * v.ln() + (t - 1.0) * (1.0 - v).ln()),
                FcrLoss::Mse => (v - t).powi(2),
            }
        })
        .sum();
    Ok(total / pred.len() as f64)
}

/// Mean binary entropy of the truths: the floor of the standard loss.
pub fn truth_entropy(truth: &[f64]) -> f64 {
    if truth.is_empty() {
        return 0.0;
    }
    let h: f64 = truth
        .iter()
        .map(|&t| {
            let t = clamp_unit(t);
            -(t * t.ln() + (1.0 - t) * (1.0 - t).ln())
        })
        .sum();
    h / truth.len() as f64
}

/// `∂loss/∂z` for one element, where `v = σ(z)`.
fn logit_grad(v: f64, t: f64, kind: FcrLoss) -> f64 {
    match kind {
        FcrLoss::Standard => v - t,
        FcrLoss::Literal => -t - v + 2.0 * t * v,
        FcrLoss::Mse => 2.0 * (v - t) * v * (1.0 - v),
    }
}

/// Run `cell` over a history and return the prediction for the last step.
/// `prev[s]` holds the companion values one step before `v0[s]`.
pub fn fcr_predict(cell: &RecurrentCell, v0: &[f64], prev: &[Vec<f64>]) -> Result<Vec<f64>, AgentError> {
    assert_eq!(v0.len(), prev.len(), "histories must be aligned");
    let mut h = cell.initial_state();
    let mut y = vec![0.5; cell.output_dim()];
    for (x0, p) in v0.iter().zip(prev) {
        let mut x = vec![*x0];
        x.extend(p);
        let (h2, out) = cell.step(&h, &x)?;
        h = h2;
        y = out;
    }
    Ok(y)
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct FcrStats {
    /// Loss of the configured kind.
    pub loss: f64,
    /// Standard cross-entropy minus its entropy floor.
    pub excess: f64,
    /// Mean absolute error of the normalized predictions.
    pub mae: f64,
}

/// FCR module for one cut of size ≥ 2.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Fcr {
    pub cut: Vec<NodeId>,
    pub kind: FcrLoss,
    cell: RecurrentCell,
    opt: SgdMomentum,
}

impl Fcr {
    pub fn new<R: Rng + ?Sized>(cut: Vec<NodeId>, hidden: usize, lr: f64, kind: FcrLoss, rng: &mut R) -> Self {
        assert!(cut.len() >= 2, "reconstruction needs at least two cut variables");
        let k = cut.len();
        let cell = RecurrentCell::new(k, hidden, k - 1, rng);
        let opt = SgdMomentum::new(lr, 0.9, cell.params().len());
        Fcr { cut, kind, cell, opt }
    }

    pub fn cell(&self) -> &RecurrentCell {
        &self.cell
    }

    pub fn initial_state(&self) -> Vec<f64> {
        self.cell.initial_state()
    }

    /// One recurrent step: first-variable value now, companions one step ago.
    pub fn step(&self, h: &[f64], v0: f64, prev: &[f64]) -> Result<(Vec<f64>, Vec<f64>), AgentError> {
        let mut x = vec![v0];
        x.extend(prev);
        Ok(self.cell.step(h, &x)?)
    }

    /// Split a sequence of normalized cut values (`seq[0]` is the step before
    /// the segment) into teacher-forced inputs and targets.
    fn teacher_forcing(seq: &[Vec<f64>]) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
        let mut inputs = Vec::with_capacity(seq.len().saturating_sub(1));
        let mut targets = Vec::with_capacity(inputs.capacity());
        for w in seq.windows(2) {
            let mut x = vec![w[1][0]];
            x.extend(&w[0][1..]);
            inputs.push(x);
            targets.push(w[1][1..].to_vec());
        }
        (inputs, targets)
    }

    fn stats(&self, outputs: &[Vec<f64>], targets: &[Vec<f64>]) -> Result<FcrStats, AgentError> {
        let pred: Vec<f64> = outputs.iter().flatten().copied().collect();
        let truth: Vec<f64> = targets.iter().flatten().copied().collect();
        let bce = fcr_loss(&pred, &truth, FcrLoss::Standard)?;
        let loss = if self.kind == FcrLoss::Standard { bce } else { fcr_loss(&pred, &truth, self.kind)? };
        let mae = pred.iter().zip(&truth).map(|(a, b)| (a - b).abs()).sum::<f64>() / pred.len().max(1) as f64;
        Ok(FcrStats { loss, excess: bce - truth_entropy(&truth), mae })
    }

    pub fn evaluate(&self, seq: &[Vec<f64>]) -> Result<FcrStats, AgentError> {
        let (inputs, targets) = Self::teacher_forcing(seq);
        if inputs.is_empty() {
            return Ok(FcrStats::default());
        }
        let tape = self.cell.run(&inputs)?;
        self.stats(&tape.outputs, &targets)
    }

    /// One gradient step on a teacher-forced segment; statistics are those
    /// before the step. Only the recurrent cell's parameters change.
    pub fn train(&mut self, seq: &[Vec<f64>]) -> Result<FcrStats, AgentError> {
        let (inputs, targets) = Self::teacher_forcing(seq);
        if inputs.is_empty() {
            return Ok(FcrStats::default());
        }
        let tape = self.cell.run(&inputs)?;
        let stats = self.stats(&tape.outputs, &targets)?;
        let n = (targets.len() * targets[0].len()) as f64;
        let grads: Vec<Vec<f64>> = tape
            .outputs
            .iter()
            .zip(&targets)
            .map(|(y, t)| y.iter().zip(t).map(|(&v, &tv)| logit_grad(v, tv, self.kind) / n).collect())
            .collect();
        let mut g = self.cell.backward(&tape, &grads)?;
        if g.iter().any(|x| !x.is_finite()) {
            return Err(AgentError::Numerics("FCR gradient".into()));
        }
        clip_grad_norm(&mut g, MAX_GRAD_NORM);
        self.opt.step(self.cell.params_mut(), &g);
        Ok(stats)
    }
}

/// Cut trajectories recorded under uniformly random source values, split
/// into segments of `segment + 1` steps (the first step is the one before
/// the segment). Values are normalized with bounds from the whole record.
pub fn random_rollouts<R: Rng + ?Sized>(
    scenario: &Scenario,
    cut: &[NodeId],
    episodes: usize,
    segment: usize,
    rng: &mut R,
) -> Result<Vec<Vec<Vec<f64>>>, AgentError> {
    let mut env = Env::new(scenario.clone())?;
    let scaler = Scaler::new(scenario);
    let sources = env.sources().to_vec();
    let mut tracker = RangeTracker::default();
    let mut raw_episodes = Vec::with_capacity(episodes);
    for _ in 0..episodes {
        env.reset(rng);
        let mut raw = vec![env.graph().values(cut)];
        while !env.done() {
            let actions: BTreeMap<NodeId, f64> =
                sources.iter().map(|id| (*id, scaler.from_unit(*id, rng.random_range(-1.0..=1.0)))).collect();
            env.step(&actions, rng)?;
            raw.push(env.graph().values(cut));
        }
        for v in &raw {
            cut.iter().zip(v).for_each(|(id, x)| tracker.observe(*id, *x));
        }
        raw_episodes.push(raw);
    }
    let mut out = Vec::new();
    for raw in raw_episodes {
        let norm: Vec<Vec<f64>> =
            raw.iter().map(|v| cut.iter().zip(v).map(|(id, x)| tracker.normalize(*id, *x)).collect()).collect();
        let mut start = 0;
        while start + 1 < norm.len() {
            let end = (start + segment + 1).min(norm.len());
            out.push(norm[start..end].to_vec());
            start = end - 1;
        }
    }
    Ok(out)
}

/// Average of per-segment statistics.
pub fn mean_stats(stats: &[FcrStats]) -> FcrStats {
    let n = stats.len().max(1) as f64;
    FcrStats {
        loss: stats.iter().map(|s| s.loss).sum::<f64>() / n,
        excess: stats.iter().map(|s| s.excess).sum::<f64>() / n,
        mae: stats.iter().map(|s| s.mae).sum::<f64>() / n,
    }
}

impl Fcr {
    /// One pass over `segments`; statistics are averaged over the pass.
    pub fn train_epoch(&mut self, segments: &[Vec<Vec<f64>>]) -> Result<FcrStats, AgentError> {
        let stats = segments.iter().map(|s| self.train(s)).collect::<Result<Vec<_>, _>>()?;
        Ok(mean_stats(&stats))
    }

    pub fn evaluate_all(&self, segments: &[Vec<Vec<f64>>]) -> Result<FcrStats, AgentError> {
        let stats = segments.iter().map(|s| self.evaluate(s)).collect::<Result<Vec<_>, _>>()?;
        Ok(mean_stats(&stats))
    }
}
