//! Comparison learners on the same environment and network stack.

use crate::env::Scenario;
use crate::nn::GaussianPolicy;
use crate::trpo::{
    cvar_policy_gradient, surrogate, train, Agent, AgentSamples, AgentUpdate, Algorithm, CvarBaseline, IterationMetrics,
    TrainConfig, TrainOutcome, Trainer, TrajectoryBatch, TrpoError,
};
use std::sync::Arc;

/// `θ' = θ + δ·g` with the advantage-weighted score-function gradient.
pub fn vpg_update(
    policy: &GaussianPolicy,
    theta: &[f64],
    samples: &AgentSamples,
    learning_rate: f64,
) -> Result<Vec<f64>, TrpoError> {
    let g = cvar_policy_gradient(policy, theta, samples)?;
    Ok(theta.iter().zip(&g).map(|(t, gi)| t + learning_rate * gi).collect())
}

/// Independent VPG steps for every agent on the whole batch.
pub fn vpg_step(batch: &TrajectoryBatch, agents: &mut [Agent], learning_rate: f64) -> Result<Vec<AgentUpdate>, TrpoError> {
    let mut out = Vec::with_capacity(agents.len());
    for (m, agent) in agents.iter_mut().enumerate() {
        let samples = batch.agent_samples(m);
        let theta = vpg_update(&agent.policy, &agent.theta, &samples, learning_rate)?;
        let kl = agent.policy.mean_kl(&agent.theta, &theta, &samples.obs)?;
        let u = surrogate(&agent.policy, &theta, &samples)?;
        agent.theta = theta;
        out.push(AgentUpdate { agent: m, accepted: true, kl, surrogate: u, backtracks: 0 });
    }
    Ok(out)
}

/// Risk-neutral sequential TRPO: RS-TRPO with α = 1 and no baseline.
pub fn matrpo_config(cfg: &TrainConfig) -> TrainConfig {
    TrainConfig { algorithm: Algorithm::Matrpo, alpha: 1.0, cvar_baseline: CvarBaseline::None, ..cfg.clone() }
}

pub fn matrpo_train<F>(scenario: Arc<Scenario>, cfg: &TrainConfig, seed: u64, on_iteration: F) -> Result<TrainOutcome, TrpoError>
where
    F: FnMut(&IterationMetrics, &Trainer) -> Result<(), TrpoError>,
{
    train(scenario, &matrpo_config(cfg), seed, on_iteration)
}
