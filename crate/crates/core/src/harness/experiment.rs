//! The episode loop for federated and independent training.

use crate::error::Result;
use crate::federation::{dl_baseline_init, fl_round, select_participants, GlobalModel, RoundPlan};
use crate::harness::config::{Mode, ScenarioConfig};
use crate::harness::metrics::MetricsRecord;
use crate::harness::rng::{labels, rng_fork, SimRng};
use crate::policy_agent::{
    forward, init_params, policy_gradient, sample_action, sgd_update, PolicyDims, PolicyParams,
    Trajectory,
};
use crate::spectrum_env::{generate_topology, ActionCode, PuState, SpectrumEnv};

/// Hooks into a running simulation. Callbacks observe state only; they cannot
/// perturb any random stream.
pub trait RunObserver {
    /// Called after local updates (and aggregation, if any) of `episode`.
    fn on_episode_end(&mut self, _episode: usize, _agents: &[PolicyParams]) {}

    /// Called after the server redistributes a global model.
    fn on_aggregation(&mut self, _plan: &RoundPlan, _global: &GlobalModel) {}
}

/// Observer that ignores everything.
#[derive(Debug, Default, Clone, Copy)]
pub struct NoopObserver;

impl RunObserver for NoopObserver {}

struct Streams {
    pu: SimRng,
    fading: SimRng,
    selection: SimRng,
    actions: Vec<SimRng>,
}

/// A single seeded run, advanced one episode at a time.
pub struct Simulation {
    config: ScenarioConfig,
    env: SpectrumEnv,
    agents: Vec<PolicyParams>,
    trajectories: Vec<Trajectory>,
    streams: Streams,
    episode: usize,
    rounds: usize,
    global: Option<GlobalModel>,
}

impl Simulation {
    pub fn new(config: ScenarioConfig) -> Result<Self> {
        config.validate()?;
        let seed = config.seed;
        let topology = generate_topology(&config, &mut rng_fork(seed, labels::TOPOLOGY))?;
        let mut pu_rng = rng_fork(seed, labels::PU);
        let pu = PuState::stationary(
            config.n_channels,
            config.pu_p_on_to_off,
            config.pu_p_off_to_on,
            &mut pu_rng,
        )?;
        let env = SpectrumEnv::new(&config, topology, pu)?;
        let dims = PolicyDims::new(
            config.observation_dim(),
            config.hidden_width,
            config.n_actions(),
        )?;
        let initial = init_params(dims, &mut rng_fork(seed, labels::INIT))?;
        let agents = dl_baseline_init(&initial, config.n_agents);
        let streams = Streams {
            pu: pu_rng,
            fading: rng_fork(seed, labels::FADING),
            selection: rng_fork(seed, labels::SELECTION),
            actions: (0..config.n_agents)
                .map(|i| rng_fork(seed, &labels::action(i)))
                .collect(),
        };
        Ok(Self {
            trajectories: vec![
                Trajectory::with_capacity(config.steps_per_episode);
                config.n_agents
            ],
            config,
            env,
            agents,
            streams,
            episode: 0,
            rounds: 0,
            global: None,
        })
    }

    pub fn config(&self) -> &ScenarioConfig {
        &self.config
    }

    pub fn env(&self) -> &SpectrumEnv {
        &self.env
    }

    pub fn agents(&self) -> &[PolicyParams] {
        &self.agents
    }

    /// The last aggregate, if any round has happened.
    pub fn global_model(&self) -> Option<&GlobalModel> {
        self.global.as_ref()
    }

    pub fn episodes_done(&self) -> usize {
        self.episode
    }

    pub fn is_finished(&self) -> bool {
        self.episode >= self.config.episodes
    }

    /// Trajectories collected in the most recent episode.
    pub fn last_trajectories(&self) -> &[Trajectory] {
        &self.trajectories
    }

    /// Rolls one episode, updates every agent, aggregates when due and
    /// returns one record per agent.
    pub fn run_episode(&mut self, observer: &mut dyn RunObserver) -> Result<Vec<MetricsRecord>> {
        let n = self.config.n_agents;
        self.env.reset_episode();
        self.trajectories.iter_mut().for_each(Trajectory::clear);

        let mut observations: Vec<Vec<f64>> =
            self.env.observations().iter().map(|o| o.to_vec()).collect();
        let mut actions = vec![ActionCode::IDLE; n];
        for _ in 0..self.config.steps_per_episode {
            for (i, action) in actions.iter_mut().enumerate() {
                let probs = forward(&self.agents[i], &observations[i])?;
                *action = sample_action(&probs, &mut self.streams.actions[i])?;
            }
            let outcome =
                self.env
                    .step(&actions, &mut self.streams.fading, &mut self.streams.pu)?;
            let next: Vec<Vec<f64>> = outcome.observations.iter().map(|o| o.to_vec()).collect();
            for (i, obs) in observations.into_iter().enumerate() {
                self.trajectories[i].push(obs, actions[i], outcome.rewards[i]);
            }
            observations = next;
        }

        for (agent, traj) in self.agents.iter_mut().zip(&self.trajectories) {
            let grad =
                policy_gradient(agent, traj, self.config.gamma, self.config.baseline_enabled)?;
            *agent = sgd_update(agent, &grad, self.config.learning_rate)?;
        }

        let episode = self.episode;
        if self.config.mode == Mode::Fl
            && (episode + 1).is_multiple_of(self.config.aggregation_period_episodes)
        {
            let plan = select_participants(
                n,
                self.config.participants(),
                self.rounds,
                &mut self.streams.selection,
            )?;
            let global = fl_round(&mut self.agents, &plan)?;
            observer.on_aggregation(&plan, &global);
            self.global = Some(global);
            self.rounds += 1;
        }
        observer.on_episode_end(episode, &self.agents);
        self.episode += 1;

        let rewards: Vec<f64> = self
            .trajectories
            .iter()
            .map(Trajectory::total_reward)
            .collect();
        let joint: f64 = rewards.iter().sum();
        let avg = joint / n as f64;
        Ok(rewards
            .into_iter()
            .enumerate()
            .map(|(agent_id, episode_reward)| MetricsRecord {
                mode: self.config.mode,
                seed: self.config.seed,
                episode,
                agent_id,
                episode_reward,
                avg_user_reward: avg,
                joint_reward: joint,
            })
            .collect())
    }
}

/// Runs `config.episodes` episodes, handing each record to `sink` as it is
/// produced.
pub fn run_experiment_with<F>(
    config: &ScenarioConfig,
    observer: &mut dyn RunObserver,
    mut sink: F,
) -> Result<()>
where
    F: FnMut(MetricsRecord) -> Result<()>,
{
    let mut sim = Simulation::new(config.clone())?;
    while !sim.is_finished() {
        for record in sim.run_episode(observer)? {
            sink(record)?;
        }
    }
    Ok(())
}

/// Runs a whole experiment and collects its records.
pub fn run_experiment(config: &ScenarioConfig) -> Result<Vec<MetricsRecord>> {
    let mut records = Vec::with_capacity(config.episodes * config.n_agents);
    run_experiment_with(config, &mut NoopObserver, |r| {
        records.push(r);
        Ok(())
    })?;
    Ok(records)
}

/// Mean `avg_user_reward` over the last `window` episodes of a record stream.
pub fn trailing_mean_reward(records: &[MetricsRecord], window: usize) -> Option<f64> {
    let last = records.iter().map(|r| r.episode).max()?;
    let start = (last + 1).saturating_sub(window);
    let mut per_episode: Vec<(usize, f64)> = records
        .iter()
        .filter(|r| r.episode >= start && r.agent_id == 0)
        .map(|r| (r.episode, r.avg_user_reward))
        .collect();
    per_episode.dedup_by_key(|(e, _)| *e);
    if per_episode.is_empty() {
        return None;
    }
    Some(per_episode.iter().map(|(_, v)| v).sum::<f64>() / per_episode.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(mode: Mode, episodes: usize) -> ScenarioConfig {
        ScenarioConfig {
            episodes,
            mode,
            seed: 17,
            ..Default::default()
        }
    }

    #[derive(Default)]
    struct Counter {
        aggregations: Vec<RoundPlan>,
        episodes: usize,
    }

    impl RunObserver for Counter {
        fn on_episode_end(&mut self, _episode: usize, _agents: &[PolicyParams]) {
            self.episodes += 1;
        }
        fn on_aggregation(&mut self, plan: &RoundPlan, _global: &GlobalModel) {
            self.aggregations.push(plan.clone());
        }
    }

    #[test]
    fn zero_episodes_is_empty() {
        assert!(run_experiment(&small(Mode::Fl, 0)).unwrap().is_empty());
    }

    #[test]
    fn record_shape_and_bookkeeping() {
        let records = run_experiment(&small(Mode::Fl, 6)).unwrap();
        assert_eq!(records.len(), 6 * 8);
        for chunk in records.chunks(8) {
            let mean = chunk.iter().map(|r| r.episode_reward).sum::<f64>() / 8.0;
            for r in chunk {
                assert!(r.episode_reward >= 0.0 && r.episode_reward <= 50.0);
                assert!((r.avg_user_reward - mean).abs() < 1e-9);
                assert!((r.joint_reward - 8.0 * r.avg_user_reward).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn fl_aggregates_on_schedule() {
        let mut counter = Counter::default();
        let config = ScenarioConfig {
            participants_u: Some(3),
            ..small(Mode::Fl, 10)
        };
        run_experiment_with(&config, &mut counter, |_| Ok(())).unwrap();
        assert_eq!(counter.episodes, 10);
        assert_eq!(counter.aggregations.len(), 2);
        assert!(counter
            .aggregations
            .iter()
            .all(|p| p.participants.len() == 3));
        assert_eq!(counter.aggregations[1].round_index, 1);
    }

    #[test]
    fn dl_never_aggregates_and_agents_diverge() {
        let mut counter = Counter::default();
        let config = small(Mode::Dl, 10);
        let mut sim = Simulation::new(config).unwrap();
        let first = sim.agents()[0].clone();
        assert!(sim.agents().iter().all(|a| *a == first));
        for _ in 0..10 {
            sim.run_episode(&mut counter).unwrap();
        }
        assert!(counter.aggregations.is_empty());
        assert!(sim.global_model().is_none());
        let agents = sim.agents();
        assert!(agents
            .iter()
            .skip(1)
            .any(|a| a.flatten() != agents[0].flatten()));
    }

    #[test]
    fn full_participation_syncs_agents() {
        let mut sim = Simulation::new(small(Mode::Fl, 4)).unwrap();
        for _ in 0..4 {
            sim.run_episode(&mut NoopObserver).unwrap();
        }
        let agents = sim.agents();
        assert!(agents.iter().all(|a| a == &agents[0]));
        assert_eq!(sim.global_model().unwrap().params, agents[0]);
    }

    #[test]
    fn runs_are_reproducible() {
        let c = small(Mode::Fl, 5);
        assert_eq!(run_experiment(&c).unwrap(), run_experiment(&c).unwrap());
        let other = ScenarioConfig {
            seed: 18,
            ..c.clone()
        };
        assert_ne!(run_experiment(&c).unwrap(), run_experiment(&other).unwrap());
    }

    #[test]
    fn trajectories_have_episode_length() {
        let mut sim = Simulation::new(small(Mode::Fl, 1)).unwrap();
        sim.run_episode(&mut NoopObserver).unwrap();
        for t in sim.last_trajectories() {
            assert_eq!(t.len(), 50);
            assert!(t.steps.iter().all(|s| (0.0..=1.0).contains(&s.reward)));
            assert!(t.steps[0].observation.iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn invalid_config_fails_before_work() {
        let c = ScenarioConfig {
            participants_u: Some(0),
            ..small(Mode::Fl, 3)
        };
        assert!(run_experiment(&c).unwrap_err().is_config_error());
    }

    #[test]
    fn trailing_mean() {
        let records = run_experiment(&small(Mode::Dl, 4)).unwrap();
        let per_ep: Vec<f64> = records.chunks(8).map(|c| c[0].avg_user_reward).collect();
        let expected = (per_ep[2] + per_ep[3]) / 2.0;
        assert!((trailing_mean_reward(&records, 2).unwrap() - expected).abs() < 1e-12);
        assert!(trailing_mean_reward(&[], 2).is_none());
    }
}
