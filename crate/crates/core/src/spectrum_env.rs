//! Multi-agent spectrum access environment.
//!
//! `N` SU transmitter/receiver pairs share `M` channels with primary users
//! whose occupancy follows an independent two-state Markov chain per channel.
//! An SU that picks a PU-occupied channel is blocked; SUs on the same free
//! channel interfere with each other at their receivers. Rewards are
//! normalized Shannon throughput.

use std::f64::consts::PI;

use rand::Rng;

use crate::channel::{
    dbm_to_mw, noise_power_mw, sample_rician_power_gain, sinr, throughput_bps, NodePosition,
    PathLossModel,
};
use crate::error::{Error, Result};
use crate::harness::config::ScenarioConfig;

/// Links shorter than this use the path loss at this distance; the
/// log-distance model is not meaningful inside one meter.
pub const MIN_LINK_DISTANCE_M: f64 = 1.0;

/// Fixed placement of the SU pairs; `tx[i]` serves `rx[i]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioTopology {
    pub su_tx_positions: Vec<NodePosition>,
    pub su_rx_positions: Vec<NodePosition>,
}

impl ScenarioTopology {
    pub fn n_pairs(&self) -> usize {
        self.su_tx_positions.len()
    }

    pub fn validate(&self, area_side: f64) -> Result<()> {
        if self.su_tx_positions.len() != self.su_rx_positions.len() {
            return Err(Error::input("tx and rx position lists differ in length"));
        }
        for (i, (tx, rx)) in self
            .su_tx_positions
            .iter()
            .zip(&self.su_rx_positions)
            .enumerate()
        {
            if !tx.inside_square(area_side) || !rx.inside_square(area_side) {
                return Err(Error::input(format!("pair {i} lies outside the area")));
            }
            if tx.distance(rx) <= 0.0 {
                return Err(Error::input(format!("pair {i} has coincident tx and rx")));
            }
        }
        Ok(())
    }
}

/// Places transmitters uniformly over the square and each receiver uniformly
/// in a disk of `pairing_radius_m` around its transmitter, redrawing any
/// receiver that falls outside the area.
pub fn generate_topology<R: Rng + ?Sized>(
    config: &ScenarioConfig,
    rng: &mut R,
) -> Result<ScenarioTopology> {
    if config.n_agents == 0 {
        return Err(Error::config("n_agents", "must be at least 1"));
    }
    if !(config.area_side > 0.0) {
        return Err(Error::config("area_side", "must be positive"));
    }
    let radius = config.pairing_radius_m;
    if !(radius > 0.0) {
        return Err(Error::config("pairing_radius_m", "must be positive"));
    }
    if radius >= config.area_diagonal() {
        return Err(Error::config(
            "pairing_radius_m",
            "must be smaller than the area diagonal",
        ));
    }
    let side = config.area_side;
    let mut tx_positions = Vec::with_capacity(config.n_agents);
    let mut rx_positions = Vec::with_capacity(config.n_agents);
    for _ in 0..config.n_agents {
        let tx = NodePosition::new(rng.random::<f64>() * side, rng.random::<f64>() * side);
        let rx = loop {
            let r = radius * rng.random::<f64>().sqrt();
            let theta = rng.random::<f64>() * 2.0 * PI;
            let candidate = NodePosition::new(tx.x + r * theta.cos(), tx.y + r * theta.sin());
            if candidate.inside_square(side) && candidate.distance(&tx) > 0.0 {
                break candidate;
            }
        };
        tx_positions.push(tx);
        rx_positions.push(rx);
    }
    Ok(ScenarioTopology {
        su_tx_positions: tx_positions,
        su_rx_positions: rx_positions,
    })
}

/// What an agent does in one time step: `0` is idle, `c` in `1..=M` transmits
/// on channel `c`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ActionCode(u8);

impl ActionCode {
    pub const IDLE: ActionCode = ActionCode(0);

    pub fn new(value: usize, n_channels: usize) -> Result<Self> {
        if value > n_channels || value > u8::MAX as usize {
            return Err(Error::input(format!(
                "action {value} out of range for {n_channels} channels"
            )));
        }
        Ok(ActionCode(value as u8))
    }

    pub fn value(self) -> usize {
        self.0 as usize
    }

    pub fn is_idle(self) -> bool {
        self.0 == 0
    }

    /// Zero-based channel index, or `None` when idle.
    pub fn channel(self) -> Option<usize> {
        (self.0 as usize).checked_sub(1)
    }
}

/// Per-channel PU occupancy with shared transition probabilities.
#[derive(Debug, Clone, PartialEq)]
pub struct PuState {
    pub occupied: Vec<bool>,
    pub p_on_to_off: f64,
    pub p_off_to_on: f64,
}

impl PuState {
    pub fn new(occupied: Vec<bool>, p_on_to_off: f64, p_off_to_on: f64) -> Result<Self> {
        for (name, p) in [("p_on_to_off", p_on_to_off), ("p_off_to_on", p_off_to_on)] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::input(format!("{name} must lie in [0, 1], got {p}")));
            }
        }
        Ok(Self {
            occupied,
            p_on_to_off,
            p_off_to_on,
        })
    }

    /// Draws each channel's initial state from the stationary distribution.
    pub fn stationary<R: Rng + ?Sized>(
        n_channels: usize,
        p_on_to_off: f64,
        p_off_to_on: f64,
        rng: &mut R,
    ) -> Result<Self> {
        let mut state = Self::new(vec![false; n_channels], p_on_to_off, p_off_to_on)?;
        let pi_on = state.stationary_occupancy().unwrap_or(0.0);
        for slot in state.occupied.iter_mut() {
            *slot = rng.random::<f64>() < pi_on;
        }
        Ok(state)
    }

    /// Long-run fraction of time a channel is occupied; `None` when both
    /// transition probabilities are zero.
    pub fn stationary_occupancy(&self) -> Option<f64> {
        let flux = self.p_off_to_on + self.p_on_to_off;
        (flux > 0.0).then(|| self.p_off_to_on / flux)
    }

    pub fn n_channels(&self) -> usize {
        self.occupied.len()
    }
}

/// Advances every channel one step. Exactly one uniform draw is consumed per
/// channel, so the PU trajectory does not depend on SU behaviour.
pub fn pu_transition<R: Rng + ?Sized>(state: &PuState, rng: &mut R) -> PuState {
    let occupied = state
        .occupied
        .iter()
        .map(|&busy| {
            let u = rng.random::<f64>();
            if busy {
                u >= state.p_on_to_off
            } else {
                u < state.p_off_to_on
            }
        })
        .collect();
    PuState {
        occupied,
        p_on_to_off: state.p_on_to_off,
        p_off_to_on: state.p_off_to_on,
    }
}

/// What an agent sees before acting: per-channel mean and most recent
/// normalized throughput.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub avg_hist_throughput: Vec<f64>,
    pub prev_throughput: Vec<f64>,
}

impl Observation {
    pub fn zeros(n_channels: usize) -> Self {
        Self {
            avg_hist_throughput: vec![0.0; n_channels],
            prev_throughput: vec![0.0; n_channels],
        }
    }

    /// `[avg_hist_throughput.., prev_throughput..]`, length `2M`.
    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(2 * self.avg_hist_throughput.len());
        v.extend_from_slice(&self.avg_hist_throughput);
        v.extend_from_slice(&self.prev_throughput);
        v
    }

    pub fn dim(&self) -> usize {
        self.avg_hist_throughput.len() + self.prev_throughput.len()
    }
}

/// Running per-channel throughput statistics of one agent within an episode.
///
/// The mean on channel `c` is over the steps in which the agent selected `c`,
/// blocked attempts included as zero.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentHistory {
    sum: Vec<f64>,
    attempts: Vec<u32>,
    last: Vec<f64>,
}

impl AgentHistory {
    pub fn new(n_channels: usize) -> Self {
        Self {
            sum: vec![0.0; n_channels],
            attempts: vec![0; n_channels],
            last: vec![0.0; n_channels],
        }
    }

    pub fn reset(&mut self) {
        self.sum.iter_mut().for_each(|s| *s = 0.0);
        self.attempts.iter_mut().for_each(|c| *c = 0);
        self.last.iter_mut().for_each(|l| *l = 0.0);
    }

    /// Records the outcome of one step.
    pub fn record(&mut self, action: ActionCode, normalized_throughput: f64) {
        self.last.iter_mut().for_each(|l| *l = 0.0);
        if let Some(c) = action.channel() {
            self.sum[c] += normalized_throughput;
            self.attempts[c] += 1;
            self.last[c] = normalized_throughput;
        }
    }

    pub fn last_step_throughput(&self) -> &[f64] {
        &self.last
    }
}

/// Builds an agent's observation from its running history.
pub fn build_observation(history: &AgentHistory) -> Observation {
    let avg = history
        .sum
        .iter()
        .zip(&history.attempts)
        .map(|(&s, &n)| if n == 0 { 0.0 } else { s / n as f64 })
        .collect();
    Observation {
        avg_hist_throughput: avg,
        prev_throughput: history.last.clone(),
    }
}

/// Maps raw throughput to `[0, 1]` using `bandwidth × spectral_efficiency_cap`.
pub fn normalize_throughput(raw_bps: f64, config: &ScenarioConfig) -> f64 {
    normalize_with_divisor(
        raw_bps,
        config.bandwidth_hz * config.spectral_efficiency_cap,
    )
}

fn normalize_with_divisor(raw_bps: f64, divisor: f64) -> f64 {
    (raw_bps / divisor).clamp(0.0, 1.0)
}

/// Power gains `|h|^2` for every (tx, rx) pair in one time step.
#[derive(Debug, Clone, PartialEq)]
pub struct FadingDraw {
    n: usize,
    gains: Vec<f64>,
}

impl FadingDraw {
    /// All-ones gains.
    pub fn unit(n: usize) -> Self {
        Self {
            n,
            gains: vec![1.0; n * n],
        }
    }

    pub fn sample<R: Rng + ?Sized>(n: usize, k_factor: f64, rng: &mut R) -> Result<Self> {
        let gains = (0..n * n)
            .map(|_| sample_rician_power_gain(k_factor, rng))
            .collect::<Result<_>>()?;
        Ok(Self { n, gains })
    }

    pub fn gain(&self, tx: usize, rx: usize) -> f64 {
        self.gains[tx * self.n + rx]
    }

    pub fn set_gain(&mut self, tx: usize, rx: usize, gain: f64) {
        self.gains[tx * self.n + rx] = gain;
    }
}

/// Result of one environment step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    /// Normalized throughput per agent.
    pub rewards: Vec<f64>,
    pub raw_throughput_bps: Vec<f64>,
    /// Observations for the next step.
    pub observations: Vec<Observation>,
    pub pu_state_next: PuState,
    /// `true` where the agent picked a PU-occupied channel.
    pub blocked: Vec<bool>,
}

/// The environment state machine for one run.
#[derive(Debug, Clone)]
pub struct SpectrumEnv {
    topology: ScenarioTopology,
    /// Mean received power in mW from tx `j` at rx `i`, row-major `[j * n + i]`.
    mean_rx_mw: Vec<f64>,
    noise_mw: f64,
    bandwidth_hz: f64,
    normalizer: f64,
    rician_k: f64,
    n_channels: usize,
    pu: PuState,
    histories: Vec<AgentHistory>,
}

impl SpectrumEnv {
    pub fn new(config: &ScenarioConfig, topology: ScenarioTopology, pu: PuState) -> Result<Self> {
        topology.validate(config.area_side)?;
        if topology.n_pairs() != config.n_agents {
            return Err(Error::input(format!(
                "topology has {} pairs, config expects {}",
                topology.n_pairs(),
                config.n_agents
            )));
        }
        if pu.n_channels() != config.n_channels {
            return Err(Error::input("PU state channel count differs from config"));
        }
        let model = PathLossModel {
            intercept_db: config.pathloss_a,
            slope_db: config.pathloss_b,
        };
        let n = topology.n_pairs();
        let mut mean_rx_mw = Vec::with_capacity(n * n);
        for tx in &topology.su_tx_positions {
            for rx in &topology.su_rx_positions {
                let d = tx.distance(rx).max(MIN_LINK_DISTANCE_M);
                mean_rx_mw.push(dbm_to_mw(config.tx_power_dbm - model.loss_db(d)?));
            }
        }
        Ok(Self {
            topology,
            mean_rx_mw,
            noise_mw: noise_power_mw(config.noise_density_dbm_hz, config.bandwidth_hz)?,
            bandwidth_hz: config.bandwidth_hz,
            normalizer: config.bandwidth_hz * config.spectral_efficiency_cap,
            rician_k: config.rician_k,
            n_channels: config.n_channels,
            pu,
            histories: vec![AgentHistory::new(config.n_channels); n],
        })
    }

    pub fn n_agents(&self) -> usize {
        self.topology.n_pairs()
    }

    pub fn n_channels(&self) -> usize {
        self.n_channels
    }

    pub fn topology(&self) -> &ScenarioTopology {
        &self.topology
    }

    pub fn pu_state(&self) -> &PuState {
        &self.pu
    }

    pub fn histories(&self) -> &[AgentHistory] {
        &self.histories
    }

    /// Mean (unfaded) received power from tx `tx` at rx `rx`.
    pub fn mean_rx_mw(&self, tx: usize, rx: usize) -> f64 {
        self.mean_rx_mw[tx * self.n_agents() + rx]
    }

    pub fn noise_mw(&self) -> f64 {
        self.noise_mw
    }

    /// Clears per-episode history; the PU chain keeps running.
    pub fn reset_episode(&mut self) {
        self.histories.iter_mut().for_each(AgentHistory::reset);
    }

    pub fn observations(&self) -> Vec<Observation> {
        self.histories.iter().map(build_observation).collect()
    }

    fn check_actions(&self, actions: &[ActionCode]) -> Result<()> {
        if actions.len() != self.n_agents() {
            return Err(Error::input(format!(
                "expected {} actions, got {}",
                self.n_agents(),
                actions.len()
            )));
        }
        if let Some(a) = actions.iter().find(|a| a.value() > self.n_channels) {
            return Err(Error::input(format!(
                "action {} out of range for {} channels",
                a.value(),
                self.n_channels
            )));
        }
        Ok(())
    }

    /// Raw throughput (bps) per agent for a joint action under the given PU
    /// occupancy and fading. Pure; does not touch the environment state.
    pub fn throughput_for(
        &self,
        pu: &PuState,
        actions: &[ActionCode],
        fading: &FadingDraw,
    ) -> Result<(Vec<f64>, Vec<bool>)> {
        self.check_actions(actions)?;
        let n = self.n_agents();
        let blocked: Vec<bool> = actions
            .iter()
            .map(|a| a.channel().is_some_and(|c| pu.occupied[c]))
            .collect();
        let mut throughput = vec![0.0; n];
        let mut interference = Vec::with_capacity(n);
        for i in 0..n {
            let Some(c) = actions[i].channel() else {
                continue;
            };
            if blocked[i] {
                continue;
            }
            interference.clear();
            interference.extend(
                (0..n)
                    .filter(|&j| j != i && !blocked[j] && actions[j].channel() == Some(c))
                    .map(|j| self.mean_rx_mw(j, i) * fading.gain(j, i)),
            );
            let signal = self.mean_rx_mw(i, i) * fading.gain(i, i);
            let s = sinr(signal, &interference, self.noise_mw)?;
            throughput[i] = throughput_bps(s, self.bandwidth_hz)?;
        }
        Ok((throughput, blocked))
    }

    /// Applies a joint action with an explicit fading draw and PU stream.
    pub fn step_with_fading<R: Rng + ?Sized>(
        &mut self,
        actions: &[ActionCode],
        fading: &FadingDraw,
        pu_rng: &mut R,
    ) -> Result<StepOutcome> {
        let (raw, blocked) = self.throughput_for(&self.pu, actions, fading)?;
        let rewards: Vec<f64> = raw
            .iter()
            .map(|&bps| normalize_with_divisor(bps, self.normalizer))
            .collect();
        for ((history, &action), &reward) in self.histories.iter_mut().zip(actions).zip(&rewards) {
            history.record(action, reward);
        }
        self.pu = pu_transition(&self.pu, pu_rng);
        Ok(StepOutcome {
            rewards,
            raw_throughput_bps: raw,
            observations: self.observations(),
            pu_state_next: self.pu.clone(),
            blocked,
        })
    }

    /// One time step: fresh Rician fading on every link, rewards under the
    /// current PU occupancy, then the PU chain advances.
    pub fn step<F: Rng + ?Sized, P: Rng + ?Sized>(
        &mut self,
        actions: &[ActionCode],
        fading_rng: &mut F,
        pu_rng: &mut P,
    ) -> Result<StepOutcome> {
        self.check_actions(actions)?;
        let fading = FadingDraw::sample(self.n_agents(), self.rician_k, fading_rng)?;
        self.step_with_fading(actions, &fading, pu_rng)
    }
}
