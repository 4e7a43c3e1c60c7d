//! Risk-sensitive sequential trust-region policy optimization.
//!
//! Each iteration collects a batch under the joint policy, scores steps with
//! TD advantages from a centralized critic, keeps the worst α-fraction of
//! episodes and updates the agents one at a time in a random order. Later
//! agents see the policy change of earlier ones through the importance
//! factor Λ̂.

mod agent;
mod batch;
mod config;
mod cvar;
mod trust_region;

pub use agent::{Agent, AgentState, Critic, CriticState};
pub use batch::{
    collect_batch, derive_seed, discounted_sum, returns_to_go, run_episode, standardize, td_advantages, Episode,
    Stream,
};
pub use config::{Algorithm, CriticTarget, CvarBaseline, TrainConfig, TrustRegionConfig};
pub use cvar::{
    cvar, cvar_count, cvar_policy_gradient, cvar_select, log_probs, quantile, surrogate, AgentSamples, RATIO_LIMIT,
};
pub use trust_region::{conjugate_gradient, trust_region_step, StepOutcome, TrustRegionProblem};

use crate::env::{EnvError, Scenario, TransitionRecord};
use crate::nn::{GaussianPolicy, NnError};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::path::Path;
use std::sync::Arc;
use std::time::Instant;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum TrpoError {
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error("empty batch")]
    EmptyBatch,
    #[error("importance factor {max:e} exceeds the limit; batch is stale")]
    RatioOverflow { max: f64 },
    #[error("bad configuration: {0}")]
    BadConfig(String),
    #[error("bad checkpoint: {0}")]
    BadCheckpoint(String),
    #[error("checkpoint i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("checkpoint format: {0}")]
    Format(#[from] serde_json::Error),
}

/// A collected batch with advantages and the CVaR selection.
#[derive(Debug, Clone)]
pub struct TrajectoryBatch {
    pub episodes: Vec<Episode>,
    /// Raw TD errors `[episode][t]`.
    pub td: Vec<Vec<f64>>,
    /// Batch-standardized TD errors.
    pub advantages: Vec<Vec<f64>>,
    /// Selected episode indices in ascending episode order.
    pub selected: Vec<usize>,
    /// Empirical α-VaR of the undiscounted returns (RMB).
    pub var_estimate: f64,
    /// Baseline `c` subtracted from selected advantages.
    pub baseline: f64,
}

impl TrajectoryBatch {
    pub fn new(
        episodes: Vec<Episode>,
        critic: &Critic,
        gamma: f64,
        alpha: f64,
        baseline: CvarBaseline,
        reward_scale: f64,
    ) -> Result<Self, TrpoError> {
        if episodes.is_empty() {
            return Err(TrpoError::EmptyBatch);
        }
        let (td, advantages) = td_advantages(&episodes, critic, gamma)?;
        let returns: Vec<f64> = episodes.iter().map(Episode::raw_return).collect();
        let (mut selected, var_estimate) = cvar_select(&returns, alpha)?;
        selected.sort_unstable();
        let baseline = match baseline {
            CvarBaseline::QuantileAdvantage => {
                let all: Vec<f64> = advantages.iter().flatten().copied().collect();
                quantile(&all, alpha)
            }
            CvarBaseline::RawVar => var_estimate / reward_scale,
            CvarBaseline::None => 0.0,
        };
        Ok(Self { episodes, td, advantages, selected, var_estimate, baseline })
    }

    pub fn returns(&self) -> Vec<f64> {
        self.episodes.iter().map(Episode::raw_return).collect()
    }

    /// Samples of `agent` over the selected steps with Λ̂ = 1.
    pub fn agent_samples(&self, agent: usize) -> AgentSamples {
        let mut s = AgentSamples::default();
        for &e in &self.selected {
            let ep = &self.episodes[e];
            for t in 0..ep.len() {
                s.obs.push(ep.obs[t][agent].clone());
                s.actions.push(ep.actions[t][agent].clone());
                s.old_log_probs.push(ep.log_probs[t][agent]);
                s.weights.push(self.advantages[e][t] - self.baseline);
                s.lambda.push(1.0);
            }
        }
        s
    }
}

/// A trust-region subproblem for one agent at its current parameters.
pub struct AgentProblem<'a> {
    pub policy: &'a GaussianPolicy,
    pub theta_old: &'a [f64],
    pub samples: &'a AgentSamples,
}

impl TrustRegionProblem for AgentProblem<'_> {
    fn fvp(&self, v: &[f64], damping: f64) -> Result<Vec<f64>, TrpoError> {
        Ok(self.policy.fisher_vector_product(self.theta_old, &self.samples.obs, v, damping)?)
    }
    fn kl(&self, theta: &[f64]) -> Result<f64, TrpoError> {
        Ok(self.policy.mean_kl(self.theta_old, theta, &self.samples.obs)?)
    }
    fn surrogate(&self, theta: &[f64]) -> Result<f64, TrpoError> {
        surrogate(self.policy, theta, self.samples)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AgentUpdate {
    pub agent: usize,
    pub accepted: bool,
    pub kl: f64,
    pub surrogate: f64,
    pub backtracks: usize,
}

/// Updates agents in `order`, folding each accepted policy change into Λ̂
/// for the agents after it. Results are indexed by agent.
pub fn sequential_agent_update(
    batch: &TrajectoryBatch,
    agents: &mut [Agent],
    order: &[usize],
    cfg: &TrustRegionConfig,
) -> Result<Vec<AgentUpdate>, TrpoError> {
    let mut lambda: Option<Vec<f64>> = None;
    let mut updates: Vec<Option<AgentUpdate>> = vec![None; agents.len()];
    for &m in order {
        let mut samples = batch.agent_samples(m);
        if let Some(l) = &lambda {
            samples.lambda = l.clone();
        }
        let agent = &mut agents[m];
        let grad = cvar_policy_gradient(&agent.policy, &agent.theta, &samples)?;
        let problem = AgentProblem { policy: &agent.policy, theta_old: &agent.theta, samples: &samples };
        let outcome = trust_region_step(&agent.theta, &grad, cfg, &problem)?;
        if outcome.accepted {
            let new_lps = log_probs(&agent.policy, &outcome.theta, &samples)?;
            let l = lambda.get_or_insert_with(|| vec![1.0; samples.len()]);
            for i in 0..l.len() {
                l[i] *= (new_lps[i] - samples.old_log_probs[i]).exp();
            }
            agent.theta = outcome.theta;
        }
        updates[m] = Some(AgentUpdate {
            agent: m,
            accepted: outcome.accepted,
            kl: outcome.kl,
            surrogate: outcome.surrogate,
            backtracks: outcome.backtracks,
        });
    }
    updates
        .into_iter()
        .enumerate()
        .map(|(k, u)| u.ok_or_else(|| TrpoError::BadConfig(format!("agent {k} missing from the update order"))))
        .collect()
}

/// Summary of deterministic-policy evaluation episodes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalSummary {
    pub episodes: usize,
    pub mean_return: f64,
    pub cvar_return: f64,
    pub min_return: f64,
    pub renewable_share: f64,
    pub voltage_max_dev: f64,
    #[serde(skip)]
    pub returns: Vec<f64>,
    #[serde(skip)]
    pub records: Vec<TransitionRecord>,
}

/// Risk level at which evaluation CVaR is reported.
pub const EVAL_CVAR_ALPHA: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IterationMetrics {
    pub iter: usize,
    pub mean_return: f64,
    pub cvar_return: f64,
    pub min_return: f64,
    pub agent_kl: Vec<f64>,
    pub surrogate: Vec<f64>,
    pub accepted: Vec<bool>,
    pub critic_loss: f64,
    pub voltage_max_dev: f64,
    pub renewable_share: f64,
    pub wall_ms: u64,
    pub eval_return: f64,
    pub algorithm: Algorithm,
}

pub const CHECKPOINT_VERSION: u32 = 1;

/// Complete trainer state; RNG streams are derived from `(seed, iteration)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint {
    pub version: u32,
    pub algorithm: Algorithm,
    pub seed: u64,
    pub iteration: usize,
    pub agents: Vec<AgentState>,
    pub critic: CriticState,
}

impl Checkpoint {
    pub fn to_json(&self) -> Result<String, TrpoError> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self, TrpoError> {
        let c: Checkpoint = serde_json::from_str(text)?;
        if c.version != CHECKPOINT_VERSION {
            return Err(TrpoError::BadCheckpoint(format!("unsupported version {}", c.version)));
        }
        Ok(c)
    }

    pub fn save(&self, path: &Path) -> Result<(), TrpoError> {
        Ok(std::fs::write(path, self.to_json()?)?)
    }

    pub fn load(path: &Path) -> Result<Self, TrpoError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

pub struct Trainer {
    scenario: Arc<Scenario>,
    cfg: TrainConfig,
    seed: u64,
    pub agents: Vec<Agent>,
    pub critic: Critic,
    iteration: usize,
}

impl Trainer {
    pub fn new(scenario: Arc<Scenario>, cfg: TrainConfig, seed: u64) -> Result<Self, TrpoError> {
        cfg.validate().map_err(TrpoError::BadConfig)?;
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, Stream::Init, &[]));
        let agents = scenario
            .observation_dims()
            .into_iter()
            .zip(scenario.action_dims())
            .map(|(o, a)| Agent::new(o, a, &cfg.hidden, &mut rng))
            .collect::<Result<Vec<_>, _>>()?;
        let critic = Critic::new(scenario.global_state_dim(), &cfg.hidden, cfg.critic_lr, &mut rng)?;
        Ok(Self { scenario, cfg, seed, agents, critic, iteration: 0 })
    }

    pub fn from_checkpoint(scenario: Arc<Scenario>, cfg: TrainConfig, ckpt: Checkpoint) -> Result<Self, TrpoError> {
        cfg.validate().map_err(TrpoError::BadConfig)?;
        if ckpt.agents.len() != scenario.n_mg() {
            return Err(TrpoError::BadCheckpoint(format!(
                "{} actors for {} microgrids",
                ckpt.agents.len(),
                scenario.n_mg()
            )));
        }
        let agents = ckpt.agents.into_iter().map(Agent::try_from).collect::<Result<Vec<_>, _>>()?;
        for (k, a) in agents.iter().enumerate() {
            if a.policy.obs_dim() != scenario.observation_dims()[k] || a.policy.act_dim() != scenario.action_dims()[k] {
                return Err(TrpoError::BadCheckpoint(format!("actor {k} does not fit the scenario")));
            }
        }
        let critic = Critic::try_from(ckpt.critic)?;
        Ok(Self { scenario, cfg, seed: ckpt.seed, agents, critic, iteration: ckpt.iteration })
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint {
            version: CHECKPOINT_VERSION,
            algorithm: self.cfg.algorithm,
            seed: self.seed,
            iteration: self.iteration,
            agents: self.agents.iter().map(AgentState::from).collect(),
            critic: CriticState::from(&self.critic),
        }
    }

    pub fn iteration(&self) -> usize {
        self.iteration
    }

    pub fn config(&self) -> &TrainConfig {
        &self.cfg
    }

    pub fn scenario(&self) -> &Arc<Scenario> {
        &self.scenario
    }

    /// Deterministic-policy evaluation on the first `n` evaluation seeds.
    pub fn evaluate(&self, n: usize) -> Result<EvalSummary, TrpoError> {
        evaluate_agents(&self.scenario, &self.agents, self.seed, n)
    }

    /// The per-agent update order for the current iteration.
    pub fn permutation(&self) -> Vec<usize> {
        let mut order: Vec<usize> = (0..self.agents.len()).collect();
        let mut rng =
            ChaCha8Rng::seed_from_u64(derive_seed(self.seed, Stream::Permutation, &[self.iteration as u64]));
        order.shuffle(&mut rng);
        order
    }

    /// One collect / advantage / update / critic pass.
    pub fn iterate(&mut self) -> Result<IterationMetrics, TrpoError> {
        let started = Instant::now();
        let it = self.iteration as u64;
        let (alpha, baseline) = self.cfg.risk_settings();
        let episodes = collect_batch(&self.scenario, &self.agents, self.seed, it, self.cfg.batch_size)?;
        let batch = TrajectoryBatch::new(
            episodes,
            &self.critic,
            self.cfg.gamma,
            alpha,
            baseline,
            self.scenario.reward_scale(),
        )?;

        let updates = match self.cfg.algorithm {
            Algorithm::Vpg => crate::baselines::vpg_step(&batch, &mut self.agents, self.cfg.vpg_learning_rate)?,
            Algorithm::RsTrpo | Algorithm::Matrpo => {
                let order = self.permutation();
                sequential_agent_update(&batch, &mut self.agents, &order, &self.cfg.trust_region())?
            }
        };

        let mut states = Vec::new();
        let mut targets = Vec::new();
        for ep in &batch.episodes {
            states.extend(ep.states[..ep.len()].iter().cloned());
            match self.cfg.critic_target {
                CriticTarget::ReturnToGo => targets.extend(returns_to_go(&ep.rewards, self.cfg.gamma)),
                CriticTarget::OneStepReward => targets.extend(ep.rewards.iter().copied()),
            }
        }
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(self.seed, Stream::Critic, &[it]));
        let critic_loss =
            self.critic.update(&states, &targets, self.cfg.critic_epochs, self.cfg.critic_minibatch, &mut rng)?;

        for ep in &batch.episodes {
            for step in &ep.raw_obs {
                for (agent, o) in self.agents.iter_mut().zip(step) {
                    agent.normalizer.update(o);
                }
            }
        }
        for s in &states {
            self.critic.normalizer.update(s);
        }

        let returns = batch.returns();
        let renewable: f64 = batch.episodes.iter().map(|e| e.renewable_mwh).sum();
        let supply: f64 = batch.episodes.iter().map(|e| e.supply_mwh).sum();
        let eval_return = if self.cfg.eval_episodes_per_iter > 0 {
            self.evaluate(self.cfg.eval_episodes_per_iter)?.mean_return
        } else {
            f64::NAN
        };
        let metrics = IterationMetrics {
            iter: self.iteration,
            mean_return: returns.iter().sum::<f64>() / returns.len() as f64,
            cvar_return: cvar(&returns, alpha)?,
            min_return: returns.iter().copied().fold(f64::INFINITY, f64::min),
            agent_kl: updates.iter().map(|u| u.kl).collect(),
            surrogate: updates.iter().map(|u| u.surrogate).collect(),
            accepted: updates.iter().map(|u| u.accepted).collect(),
            critic_loss,
            voltage_max_dev: batch.episodes.iter().map(|e| e.voltage_max_dev).fold(0.0, f64::max),
            renewable_share: if supply > 0.0 { renewable / supply } else { 0.0 },
            wall_ms: started.elapsed().as_millis() as u64,
            eval_return,
            algorithm: self.cfg.algorithm,
        };
        self.iteration += 1;
        log::debug!(
            "iter {} mean {:.2} cvar {:.2} eval {:.2}",
            metrics.iter,
            metrics.mean_return,
            metrics.cvar_return,
            metrics.eval_return
        );
        Ok(metrics)
    }
}

/// Plays the policy means on the evaluation seeds of `seed`.
pub fn evaluate_agents(
    scenario: &Arc<Scenario>,
    agents: &[Agent],
    seed: u64,
    n: usize,
) -> Result<EvalSummary, TrpoError> {
    if n == 0 {
        return Err(TrpoError::EmptyBatch);
    }
    let mut returns = Vec::with_capacity(n);
    let mut records = Vec::new();
    let (mut renewable, mut supply, mut vmax) = (0.0, 0.0, 0.0f64);
    for e in 0..n {
        let env_seed = derive_seed(seed, Stream::Evaluation, &[e as u64]);
        let ep = run_episode(scenario, agents, e, env_seed, None)?;
        returns.push(ep.raw_return());
        renewable += ep.renewable_mwh;
        supply += ep.supply_mwh;
        vmax = vmax.max(ep.voltage_max_dev);
        records.extend(ep.records);
    }
    Ok(EvalSummary {
        episodes: n,
        mean_return: returns.iter().sum::<f64>() / n as f64,
        cvar_return: cvar(&returns, EVAL_CVAR_ALPHA)?,
        min_return: returns.iter().copied().fold(f64::INFINITY, f64::min),
        renewable_share: if supply > 0.0 { renewable / supply } else { 0.0 },
        voltage_max_dev: vmax,
        returns,
        records,
    })
}

/// Result of a complete training run.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub metrics: Vec<IterationMetrics>,
    pub initial_eval: EvalSummary,
    pub final_eval: EvalSummary,
    pub checkpoint: Checkpoint,
}

/// Runs `cfg.iterations` iterations; `on_iteration` sees every metrics row
/// and the trainer after it (for streaming output and checkpoints).
pub fn train<F>(scenario: Arc<Scenario>, cfg: &TrainConfig, seed: u64, mut on_iteration: F) -> Result<TrainOutcome, TrpoError>
where
    F: FnMut(&IterationMetrics, &Trainer) -> Result<(), TrpoError>,
{
    let mut trainer = Trainer::new(scenario, cfg.clone(), seed)?;
    let initial_eval = trainer.evaluate(cfg.eval_episodes)?;
    let mut metrics = Vec::with_capacity(cfg.iterations);
    for _ in 0..cfg.iterations {
        let m = trainer.iterate()?;
        on_iteration(&m, &trainer)?;
        metrics.push(m);
    }
    let final_eval = trainer.evaluate(cfg.eval_episodes)?;
    Ok(TrainOutcome { metrics, initial_eval, final_eval, checkpoint: trainer.checkpoint() })
}
