//! Two-layer softmax policy and its REINFORCE update.
//!
//! The network is `softmax(W2 · tanh(W1 · x + b1) + b2)`. Gradients are
//! written out by hand for this fixed architecture.

use rand::Rng;

use crate::error::{Error, Result};
use crate::spectrum_env::ActionCode;

/// Tolerance on `Σ probs = 1` accepted by [`sample_action`].
const DISTRIBUTION_TOLERANCE: f64 = 1e-9;

/// Layer sizes: observation dimension, hidden width, action count.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct PolicyDims {
    pub input: usize,
    pub hidden: usize,
    pub actions: usize,
}

impl PolicyDims {
    pub fn new(input: usize, hidden: usize, actions: usize) -> Result<Self> {
        if input == 0 || hidden == 0 || actions == 0 {
            return Err(Error::config(
                "hidden_width",
                format!("policy dimensions must be positive, got ({input}, {hidden}, {actions})"),
            ));
        }
        Ok(Self {
            input,
            hidden,
            actions,
        })
    }

    pub fn n_params(&self) -> usize {
        self.hidden * self.input + self.hidden + self.actions * self.hidden + self.actions
    }
}

/// Policy network weights. Matrices are row-major: `w1` is `hidden × input`,
/// `w2` is `actions × hidden`.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyParams {
    dims: PolicyDims,
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    pub w2: Vec<f64>,
    pub b2: Vec<f64>,
}

/// Gradient of the surrogate loss, shaped like the parameters it differentiates.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientVector(pub PolicyParams);

impl PolicyParams {
    pub fn zeros(dims: PolicyDims) -> Self {
        Self {
            dims,
            w1: vec![0.0; dims.hidden * dims.input],
            b1: vec![0.0; dims.hidden],
            w2: vec![0.0; dims.actions * dims.hidden],
            b2: vec![0.0; dims.actions],
        }
    }

    pub fn dims(&self) -> PolicyDims {
        self.dims
    }

    /// `[w1, b1, w2, b2]` concatenated.
    pub fn flatten(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.dims.n_params());
        v.extend_from_slice(&self.w1);
        v.extend_from_slice(&self.b1);
        v.extend_from_slice(&self.w2);
        v.extend_from_slice(&self.b2);
        v
    }

    pub fn unflatten(dims: PolicyDims, flat: &[f64]) -> Result<Self> {
        if flat.len() != dims.n_params() {
            return Err(Error::input(format!(
                "expected {} parameters, got {}",
                dims.n_params(),
                flat.len()
            )));
        }
        let (w1, rest) = flat.split_at(dims.hidden * dims.input);
        let (b1, rest) = rest.split_at(dims.hidden);
        let (w2, b2) = rest.split_at(dims.actions * dims.hidden);
        Ok(Self {
            dims,
            w1: w1.to_vec(),
            b1: b1.to_vec(),
            w2: w2.to_vec(),
            b2: b2.to_vec(),
        })
    }

    pub fn is_finite(&self) -> bool {
        self.slices()
            .iter()
            .all(|s| s.iter().all(|v| v.is_finite()))
    }

    pub(crate) fn slices(&self) -> [&[f64]; 4] {
        [&self.w1, &self.b1, &self.w2, &self.b2]
    }

    pub(crate) fn slices_mut(&mut self) -> [&mut Vec<f64>; 4] {
        [&mut self.w1, &mut self.b1, &mut self.w2, &mut self.b2]
    }

    fn hidden_activations(&self, obs: &[f64]) -> Vec<f64> {
        let d = self.dims.input;
        self.w1
            .chunks_exact(d)
            .zip(&self.b1)
            .map(|(row, b)| (dot(row, obs) + b).tanh())
            .collect()
    }

    fn logits(&self, hidden: &[f64]) -> Vec<f64> {
        self.w2
            .chunks_exact(self.dims.hidden)
            .zip(&self.b2)
            .map(|(row, b)| dot(row, hidden) + b)
            .collect()
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

/// Uniform(±1/√fan_in) weights, zero biases.
pub fn init_params<R: Rng + ?Sized>(dims: PolicyDims, rng: &mut R) -> Result<PolicyParams> {
    let dims = PolicyDims::new(dims.input, dims.hidden, dims.actions)?;
    let mut params = PolicyParams::zeros(dims);
    let bound1 = 1.0 / (dims.input as f64).sqrt();
    for w in params.w1.iter_mut() {
        *w = rng.random_range(-bound1..bound1);
    }
    let bound2 = 1.0 / (dims.hidden as f64).sqrt();
    for w in params.w2.iter_mut() {
        *w = rng.random_range(-bound2..bound2);
    }
    Ok(params)
}

/// Action probabilities for one observation.
pub fn forward(params: &PolicyParams, obs: &[f64]) -> Result<Vec<f64>> {
    Ok(forward_with_hidden(params, obs)?.1)
}

fn forward_with_hidden(params: &PolicyParams, obs: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    if obs.len() != params.dims.input {
        return Err(Error::input(format!(
            "observation has dimension {}, policy expects {}",
            obs.len(),
            params.dims.input
        )));
    }
    let hidden = params.hidden_activations(obs);
    let probs = softmax(&params.logits(&hidden));
    debug_assert!(
        probs.iter().all(|p| p.is_finite() && *p >= 0.0),
        "policy produced an invalid distribution: {probs:?}"
    );
    Ok((hidden, probs))
}

/// Draws an action index from a categorical distribution.
pub fn sample_action<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> Result<ActionCode> {
    if probs.is_empty() || probs.iter().any(|p| !p.is_finite() || *p < 0.0) {
        return Err(Error::input(format!(
            "invalid action distribution {probs:?}"
        )));
    }
    let total: f64 = probs.iter().sum();
    if (total - 1.0).abs() > DISTRIBUTION_TOLERANCE {
        return Err(Error::input(format!("action probabilities sum to {total}")));
    }
    let u = rng.random::<f64>() * total;
    let mut acc = 0.0;
    let mut chosen = None;
    for (i, &p) in probs.iter().enumerate() {
        if p > 0.0 {
            chosen = Some(i);
            acc += p;
            if u < acc {
                break;
            }
        }
    }
    // rounding can leave u just above the last partial sum; fall back to the
    // last action with positive mass
    let index = chosen.expect("a valid distribution has positive mass");
    ActionCode::new(index, probs.len() - 1)
}

/// `G_t = r_t + gamma * G_{t+1}`.
pub fn discounted_returns(rewards: &[f64], gamma: f64) -> Result<Vec<f64>> {
    if !(0.0..=1.0).contains(&gamma) {
        return Err(Error::input(format!(
            "gamma must lie in [0, 1], got {gamma}"
        )));
    }
    let mut returns = vec![0.0; rewards.len()];
    let mut running = 0.0;
    for (g, r) in returns.iter_mut().zip(rewards).rev() {
        running = r + gamma * running;
        *g = running;
    }
    Ok(returns)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryStep {
    pub observation: Vec<f64>,
    pub action: ActionCode,
    pub reward: f64,
}

/// One agent's episode.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Trajectory {
    pub steps: Vec<TrajectoryStep>,
}

impl Trajectory {
    pub fn with_capacity(n: usize) -> Self {
        Self {
            steps: Vec::with_capacity(n),
        }
    }

    pub fn push(&mut self, observation: Vec<f64>, action: ActionCode, reward: f64) {
        self.steps.push(TrajectoryStep {
            observation,
            action,
            reward,
        });
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn rewards(&self) -> Vec<f64> {
        self.steps.iter().map(|s| s.reward).collect()
    }

    pub fn total_reward(&self) -> f64 {
        self.steps.iter().map(|s| s.reward).sum()
    }

    pub fn clear(&mut self) {
        self.steps.clear();
    }
}

/// Per-step weights `G_t - b` applied to the log-probabilities.
pub fn advantages(traj: &Trajectory, gamma: f64, baseline: bool) -> Result<Vec<f64>> {
    let mut returns = discounted_returns(&traj.rewards(), gamma)?;
    if baseline && !returns.is_empty() {
        let mean = returns.iter().sum::<f64>() / returns.len() as f64;
        returns.iter_mut().for_each(|g| *g -= mean);
    }
    Ok(returns)
}

/// Surrogate loss `-Σ_t (G_t - b) log π(a_t | s_t)`. Its gradient is what
/// [`policy_gradient`] returns.
pub fn surrogate_loss(
    params: &PolicyParams,
    traj: &Trajectory,
    gamma: f64,
    baseline: bool,
) -> Result<f64> {
    if traj.is_empty() {
        return Err(Error::input("empty trajectory"));
    }
    let weights = advantages(traj, gamma, baseline)?;
    let mut loss = 0.0;
    for (step, w) in traj.steps.iter().zip(weights) {
        let probs = forward(params, &step.observation)?;
        loss -= w * probs[step.action.value()].ln();
    }
    Ok(loss)
}

/// REINFORCE gradient of [`surrogate_loss`], optionally with the trajectory
/// mean return as baseline.
pub fn policy_gradient(
    params: &PolicyParams,
    traj: &Trajectory,
    gamma: f64,
    baseline: bool,
) -> Result<GradientVector> {
    if traj.is_empty() {
        return Err(Error::input("empty trajectory"));
    }
    let dims = params.dims;
    let weights = advantages(traj, gamma, baseline)?;
    let mut grad = PolicyParams::zeros(dims);
    let mut d_hidden = vec![0.0; dims.hidden];
    for (step, w) in traj.steps.iter().zip(weights) {
        let a = step.action.value();
        if a >= dims.actions {
            return Err(Error::input(format!("action {a} outside policy output")));
        }
        if w == 0.0 {
            continue;
        }
        let x = &step.observation;
        let (hidden, probs) = forward_with_hidden(params, x)?;
        // dL/dz_k = w (p_k - 1[k = a])
        d_hidden.iter_mut().for_each(|v| *v = 0.0);
        for (k, p) in probs.iter().enumerate() {
            let dz = w * (p - if k == a { 1.0 } else { 0.0 });
            grad.b2[k] += dz;
            let row = k * dims.hidden;
            for (j, h) in hidden.iter().enumerate() {
                grad.w2[row + j] += dz * h;
                d_hidden[j] += dz * params.w2[row + j];
            }
        }
        for (j, h) in hidden.iter().enumerate() {
            let d_pre = d_hidden[j] * (1.0 - h * h);
            grad.b1[j] += d_pre;
            let row = j * dims.input;
            for (i, xi) in x.iter().enumerate() {
                grad.w1[row + i] += d_pre * xi;
            }
        }
    }
    Ok(GradientVector(grad))
}

/// Plain gradient descent step `params - lr * grad`.
pub fn sgd_update(params: &PolicyParams, grad: &GradientVector, lr: f64) -> Result<PolicyParams> {
    if grad.0.dims != params.dims {
        return Err(Error::input("gradient shape differs from parameters"));
    }
    if !(lr > 0.0) {
        return Err(Error::input(format!(
            "learning rate must be positive, got {lr}"
        )));
    }
    let mut next = params.clone();
    for (dst, g) in next.slices_mut().into_iter().zip(grad.0.slices()) {
        for (p, gi) in dst.iter_mut().zip(g) {
            *p -= lr * gi;
        }
    }
    Ok(next)
}
