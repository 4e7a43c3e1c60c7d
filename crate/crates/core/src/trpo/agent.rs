use super::TrpoError;
use crate::nn::{ensure_finite, Adam, GaussianPolicy, Head, Mlp, MlpSpec, RunningNormalizer};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// One MG's actor: policy parameters plus its observation normalizer.
#[derive(Debug, Clone, PartialEq)]
pub struct Agent {
    pub policy: GaussianPolicy,
    pub theta: Vec<f64>,
    pub normalizer: RunningNormalizer,
}

impl Agent {
    pub fn new<R: Rng>(obs_dim: usize, act_dim: usize, hidden: &[usize], rng: &mut R) -> Result<Self, TrpoError> {
        let policy = GaussianPolicy::new(MlpSpec::new(obs_dim, hidden, act_dim, Head::GaussianMean)?)?;
        let theta = policy.init(rng);
        Ok(Self { policy, theta, normalizer: RunningNormalizer::new(obs_dim) })
    }

    /// Normalized observation, sampled (or mean) action and its log-prob.
    pub fn act(&self, raw_obs: &[f64], rng: Option<&mut ChaCha8Rng>) -> Result<(Vec<f64>, Vec<f64>, f64), TrpoError> {
        let obs = self.normalizer.normalize(raw_obs);
        let (action, lp) = match rng {
            Some(rng) => self.policy.sample(&self.theta, &obs, rng)?,
            None => {
                let mean = self.policy.output(&self.theta, &obs)?.mean;
                let lp = self.policy.log_prob(&self.theta, &obs, &mean)?;
                (mean, lp)
            }
        };
        Ok((obs, action, lp))
    }
}

/// Centralized state-value critic.
#[derive(Debug, Clone, PartialEq)]
pub struct Critic {
    pub net: Mlp,
    pub phi: Vec<f64>,
    pub normalizer: RunningNormalizer,
    pub adam: Adam,
}

impl Critic {
    pub fn new<R: Rng>(state_dim: usize, hidden: &[usize], lr: f64, rng: &mut R) -> Result<Self, TrpoError> {
        let net = Mlp::new(MlpSpec::new(state_dim, hidden, 1, Head::ScalarValue)?);
        let phi = net.init(rng, 1.0);
        let adam = Adam::new(net.n_params(), lr);
        Ok(Self { net, phi, normalizer: RunningNormalizer::new(state_dim), adam })
    }

    pub fn value(&self, state: &[f64]) -> Result<f64, TrpoError> {
        Ok(self.net.predict(&self.phi, &self.normalizer.normalize(state))?[0])
    }

    /// Mean squared error against `targets`.
    pub fn loss(&self, states: &[Vec<f64>], targets: &[f64]) -> Result<f64, TrpoError> {
        let mut total = 0.0;
        for (s, y) in states.iter().zip(targets) {
            let e = self.value(s)? - y;
            total += e * e;
        }
        Ok(total / states.len().max(1) as f64)
    }

    /// Gradient of the mean squared error over the given samples.
    pub fn loss_grad(&self, states: &[&[f64]], targets: &[f64]) -> Result<Vec<f64>, TrpoError> {
        let mut grad = vec![0.0; self.net.n_params()];
        let scale = 2.0 / states.len().max(1) as f64;
        for (s, y) in states.iter().zip(targets) {
            let tape = self.net.forward(&self.phi, &self.normalizer.normalize(s))?;
            let e = tape.output()[0] - y;
            self.net.backward(&self.phi, &tape, &[scale * e], &mut grad);
        }
        ensure_finite(&grad, "critic gradient")?;
        Ok(grad)
    }

    /// Minibatch Adam regression onto `targets`; returns the final full-batch loss.
    pub fn update(
        &mut self,
        states: &[Vec<f64>],
        targets: &[f64],
        epochs: usize,
        minibatch: usize,
        rng: &mut ChaCha8Rng,
    ) -> Result<f64, TrpoError> {
        let mut order: Vec<usize> = (0..states.len()).collect();
        for _ in 0..epochs {
            order.shuffle(rng);
            for chunk in order.chunks(minibatch.max(1)) {
                let xs: Vec<&[f64]> = chunk.iter().map(|&i| states[i].as_slice()).collect();
                let ys: Vec<f64> = chunk.iter().map(|&i| targets[i]).collect();
                let grad = self.loss_grad(&xs, &ys)?;
                self.adam.step(&mut self.phi, &grad);
            }
        }
        ensure_finite(&self.phi, "critic parameters")?;
        self.loss(states, targets)
    }
}

/// Serializable snapshot of one actor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentState {
    pub spec: MlpSpec,
    pub theta: Vec<f64>,
    pub normalizer: RunningNormalizer,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CriticState {
    pub spec: MlpSpec,
    pub phi: Vec<f64>,
    pub normalizer: RunningNormalizer,
    pub adam: Adam,
}

impl From<&Agent> for AgentState {
    fn from(a: &Agent) -> Self {
        Self { spec: a.policy.spec().clone(), theta: a.theta.clone(), normalizer: a.normalizer.clone() }
    }
}

impl TryFrom<AgentState> for Agent {
    type Error = TrpoError;
    fn try_from(s: AgentState) -> Result<Self, TrpoError> {
        let policy = GaussianPolicy::new(s.spec)?;
        if s.theta.len() != policy.n_params() || s.normalizer.dim() != policy.obs_dim() {
            return Err(TrpoError::BadCheckpoint("actor parameters do not match the network shape".into()));
        }
        Ok(Self { policy, theta: s.theta, normalizer: s.normalizer })
    }
}

impl From<&Critic> for CriticState {
    fn from(c: &Critic) -> Self {
        Self { spec: c.net.spec().clone(), phi: c.phi.clone(), normalizer: c.normalizer.clone(), adam: c.adam.clone() }
    }
}

impl TryFrom<CriticState> for Critic {
    type Error = TrpoError;
    fn try_from(s: CriticState) -> Result<Self, TrpoError> {
        let net = Mlp::new(s.spec);
        if s.phi.len() != net.n_params() || s.adam.m.len() != net.n_params() {
            return Err(TrpoError::BadCheckpoint("critic parameters do not match the network shape".into()));
        }
        Ok(Self { net, phi: s.phi, normalizer: s.normalizer, adam: s.adam })
    }
}
