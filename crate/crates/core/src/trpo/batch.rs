use super::{Agent, Critic, TrpoError};
use crate::env::{JointAction, MgcEnv, Scenario, TransitionRecord, HOURS};
use crate::nn::ensure_finite;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use std::sync::Arc;

/// Independent RNG streams derived from the run seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    Init = 1,
    Environment = 2,
    Action = 3,
    Permutation = 4,
    Critic = 5,
    Evaluation = 6,
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed for `(run seed, stream, indices…)`; independent of worker scheduling.
pub fn derive_seed(seed: u64, stream: Stream, indices: &[u64]) -> u64 {
    let mut h = splitmix(seed ^ splitmix(stream as u64));
    for &i in indices {
        h = splitmix(h ^ splitmix(i.wrapping_add(0x51)));
    }
    h
}

/// One 24-hour episode as seen by the learners.
#[derive(Debug, Clone, PartialEq)]
pub struct Episode {
    pub env_seed: u64,
    /// `[t][agent]` raw observation slices.
    pub raw_obs: Vec<Vec<Vec<f64>>>,
    /// `[t][agent]` observations after the agent's normalizer.
    pub obs: Vec<Vec<Vec<f64>>>,
    /// `[t][agent]` actions as emitted by the policy (before clipping).
    pub actions: Vec<Vec<Vec<f64>>>,
    /// `[t][agent]` behaviour log-probabilities.
    pub log_probs: Vec<Vec<f64>>,
    /// Raw global states `s_0 … s_T`.
    pub states: Vec<Vec<f64>>,
    /// Rewards divided by the scenario reward scale.
    pub rewards: Vec<f64>,
    pub records: Vec<TransitionRecord>,
    pub voltage_max_dev: f64,
    pub renewable_mwh: f64,
    pub supply_mwh: f64,
}

impl Episode {
    /// Undiscounted return in RMB.
    pub fn raw_return(&self) -> f64 {
        self.records.iter().map(|r| r.reward).sum()
    }

    /// `Σ_t γ^t r_t` on the scaled rewards.
    pub fn discounted_return(&self, gamma: f64) -> f64 {
        discounted_sum(&self.rewards, gamma)
    }

    pub fn len(&self) -> usize {
        self.rewards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rewards.is_empty()
    }
}

pub fn discounted_sum(rewards: &[f64], gamma: f64) -> f64 {
    rewards.iter().rev().fold(0.0, |acc, r| r + gamma * acc)
}

/// Discounted return-to-go at every step.
pub fn returns_to_go(rewards: &[f64], gamma: f64) -> Vec<f64> {
    let mut out = vec![0.0; rewards.len()];
    let mut acc = 0.0;
    for t in (0..rewards.len()).rev() {
        acc = rewards[t] + gamma * acc;
        out[t] = acc;
    }
    out
}

/// Runs one episode; `action_seed = None` plays the policy means.
pub fn run_episode(
    scenario: &Arc<Scenario>,
    agents: &[Agent],
    episode: usize,
    env_seed: u64,
    action_seed: Option<u64>,
) -> Result<Episode, TrpoError> {
    let mut env = MgcEnv::reset(Arc::clone(scenario), env_seed)?;
    let mut rng = action_seed.map(ChaCha8Rng::seed_from_u64);
    let scale = scenario.reward_scale();
    let mut ep = Episode {
        env_seed,
        raw_obs: Vec::with_capacity(HOURS),
        obs: Vec::with_capacity(HOURS),
        actions: Vec::with_capacity(HOURS),
        log_probs: Vec::with_capacity(HOURS),
        states: Vec::with_capacity(HOURS + 1),
        rewards: Vec::with_capacity(HOURS),
        records: Vec::with_capacity(HOURS),
        voltage_max_dev: 0.0,
        renewable_mwh: 0.0,
        supply_mwh: 0.0,
    };
    ep.states.push(env.state().global_features());
    for _ in 0..HOURS {
        let state = env.state();
        let mut raw_obs = Vec::with_capacity(agents.len());
        let mut obs = Vec::with_capacity(agents.len());
        let mut actions = Vec::with_capacity(agents.len());
        let mut lps = Vec::with_capacity(agents.len());
        for (k, agent) in agents.iter().enumerate() {
            let o = state.observation(k);
            let (n, a, lp) = agent.act(&o, rng.as_mut())?;
            raw_obs.push(o);
            obs.push(n);
            actions.push(a);
            lps.push(lp);
        }
        let mut tr = env.step(&JointAction { raw: actions.clone() })?;
        tr.log_probs = lps.clone();
        ensure_finite(&[tr.reward], "reward")?;
        ep.records.push(TransitionRecord::new(episode, &tr));
        ep.rewards.push(tr.reward / scale);
        ep.voltage_max_dev = ep.voltage_max_dev.max(tr.log.voltage_max_dev);
        ep.renewable_mwh += tr.log.renewable_total();
        ep.supply_mwh += tr.log.supply_total();
        ep.states.push(tr.next_state.global_features());
        ep.raw_obs.push(raw_obs);
        ep.obs.push(obs);
        ep.actions.push(actions);
        ep.log_probs.push(lps);
    }
    Ok(ep)
}

/// `count` episodes with seeds from the given streams, in episode order.
pub fn collect_batch(
    scenario: &Arc<Scenario>,
    agents: &[Agent],
    seed: u64,
    iteration: u64,
    count: usize,
) -> Result<Vec<Episode>, TrpoError> {
    for (k, (agent, dim)) in agents.iter().zip(scenario.observation_dims()).enumerate() {
        if agent.policy.obs_dim() != dim || agent.policy.act_dim() != scenario.action_dims()[k] {
            return Err(TrpoError::BadConfig(format!("agent {k} does not match the scenario's dimensions")));
        }
    }
    (0..count as u64)
        .into_par_iter()
        .map(|e| {
            let env_seed = derive_seed(seed, Stream::Environment, &[iteration, e]);
            let action_seed = derive_seed(seed, Stream::Action, &[iteration, e]);
            run_episode(scenario, agents, e as usize, env_seed, Some(action_seed))
        })
        .collect()
}

/// TD errors `Ψ_t = r_t + γ V(s_{t+1}) − V(s_t)` (zero value after the last
/// step) and their batch-standardized copy.
pub fn td_advantages(
    episodes: &[Episode],
    critic: &Critic,
    gamma: f64,
) -> Result<(Vec<Vec<f64>>, Vec<Vec<f64>>), TrpoError> {
    let mut raw = Vec::with_capacity(episodes.len());
    for ep in episodes {
        let values: Vec<f64> = ep.states.iter().map(|s| critic.value(s)).collect::<Result<_, _>>()?;
        let t_max = ep.len();
        let td: Vec<f64> = (0..t_max)
            .map(|t| {
                let next = if t + 1 == t_max { 0.0 } else { values[t + 1] };
                ep.rewards[t] + gamma * next - values[t]
            })
            .collect();
        ensure_finite(&td, "advantages")?;
        raw.push(td);
    }
    let standardized = standardize(&raw);
    Ok((raw, standardized))
}

/// Zero-mean, unit-variance copy over all entries (mean removal only when
/// the entries are constant).
pub fn standardize(values: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = values.iter().map(Vec::len).sum::<usize>().max(1) as f64;
    let mean = values.iter().flatten().sum::<f64>() / n;
    let var = values.iter().flatten().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let std = if var.sqrt() > 1e-12 { var.sqrt() } else { 1.0 };
    values.iter().map(|row| row.iter().map(|v| (v - mean) / std).collect()).collect()
}
