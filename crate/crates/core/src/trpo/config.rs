use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Algorithm {
    RsTrpo,
    Matrpo,
    Vpg,
}

impl Algorithm {
    pub fn id(self) -> &'static str {
        match self {
            Algorithm::RsTrpo => "rs-trpo",
            Algorithm::Matrpo => "matrpo",
            Algorithm::Vpg => "vpg",
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

impl FromStr for Algorithm {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "rs-trpo" => Ok(Algorithm::RsTrpo),
            "matrpo" => Ok(Algorithm::Matrpo),
            "vpg" => Ok(Algorithm::Vpg),
            other => Err(format!("unknown algorithm `{other}` (expected rs-trpo, matrpo or vpg)")),
        }
    }
}

/// Baseline subtracted from the advantages of CVaR-selected steps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CvarBaseline {
    /// α-quantile of the standardized per-step advantages.
    QuantileAdvantage,
    /// The return-scale VaR estimate itself, in reward-scale units.
    RawVar,
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CriticTarget {
    ReturnToGo,
    OneStepReward,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrustRegionConfig {
    pub epsilon: f64,
    pub rho: f64,
    pub max_backtracks: usize,
    pub cg_iterations: usize,
    pub cg_damping: f64,
}

impl Default for TrustRegionConfig {
    fn default() -> Self {
        Self { epsilon: 0.01, rho: 0.8, max_backtracks: 10, cg_iterations: 10, cg_damping: 0.1 }
    }
}

macro_rules! defaults {
    ($($name:ident: $ty:ty = $val:expr;)*) => {
        $(fn $name() -> $ty { $val })*
    };
}

defaults! {
    default_alpha: f64 = 0.9;
    default_epsilon: f64 = 0.01;
    default_rho: f64 = 0.8;
    default_backtracks: usize = 10;
    default_cg_iterations: usize = 10;
    default_cg_damping: f64 = 0.1;
    default_gamma: f64 = 0.9;
    default_batch: usize = 64;
    default_iterations: usize = 500;
    default_seeds: Vec<u64> = vec![0];
    default_hidden: Vec<usize> = vec![64, 32];
    default_lr: f64 = 1e-4;
    default_critic_epochs: usize = 10;
    default_critic_minibatch: usize = 64;
    default_replay: f64 = 1e8;
    default_eval_episodes: usize = 20;
    default_eval_per_iter: usize = 4;
}

/// Training settings shared by all algorithms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    #[serde(default = "rs_trpo")]
    pub algorithm: Algorithm,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    #[serde(default = "default_rho")]
    pub rho: f64,
    #[serde(default = "default_backtracks")]
    pub max_backtracks: usize,
    #[serde(default = "default_cg_iterations")]
    pub cg_iterations: usize,
    #[serde(default = "default_cg_damping")]
    pub cg_damping: f64,
    #[serde(default = "default_gamma")]
    pub gamma: f64,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    #[serde(default = "default_iterations")]
    pub iterations: usize,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default = "default_hidden")]
    pub hidden: Vec<usize>,
    #[serde(default = "default_lr")]
    pub critic_lr: f64,
    #[serde(default = "default_critic_epochs")]
    pub critic_epochs: usize,
    #[serde(default = "default_critic_minibatch")]
    pub critic_minibatch: usize,
    #[serde(default = "return_to_go")]
    pub critic_target: CriticTarget,
    #[serde(default = "quantile_advantage")]
    pub cvar_baseline: CvarBaseline,
    /// Step size δ of the vanilla policy-gradient baseline.
    #[serde(default = "default_lr")]
    pub vpg_learning_rate: f64,
    /// Accepted for compatibility; only the current iteration's batch is kept.
    #[serde(default = "default_replay")]
    pub replay_capacity: f64,
    /// Episodes in the final evaluation.
    #[serde(default = "default_eval_episodes")]
    pub eval_episodes: usize,
    /// Episodes in the per-iteration evaluation logged as `eval_return`.
    #[serde(default = "default_eval_per_iter")]
    pub eval_episodes_per_iter: usize,
    /// Write a checkpoint every this many iterations; 0 keeps only the final one.
    #[serde(default = "zero")]
    pub checkpoint_every: usize,
}

fn rs_trpo() -> Algorithm {
    Algorithm::RsTrpo
}
fn return_to_go() -> CriticTarget {
    CriticTarget::ReturnToGo
}
fn quantile_advantage() -> CvarBaseline {
    CvarBaseline::QuantileAdvantage
}
fn zero() -> usize {
    0
}

impl Default for TrainConfig {
    fn default() -> Self {
        toml::from_str("").expect("all fields have defaults")
    }
}

impl TrainConfig {
    pub fn trust_region(&self) -> TrustRegionConfig {
        TrustRegionConfig {
            epsilon: self.epsilon,
            rho: self.rho,
            max_backtracks: self.max_backtracks,
            cg_iterations: self.cg_iterations,
            cg_damping: self.cg_damping,
        }
    }

    /// Risk level and baseline actually used by the algorithm.
    pub fn risk_settings(&self) -> (f64, CvarBaseline) {
        match self.algorithm {
            Algorithm::RsTrpo => (self.alpha, self.cvar_baseline),
            Algorithm::Matrpo | Algorithm::Vpg => (1.0, CvarBaseline::None),
        }
    }

    /// Checks invariants; errors name the offending field.
    pub fn validate(&self) -> Result<(), String> {
        let check = |ok: bool, field: &str, rule: &str| if ok { Ok(()) } else { Err(format!("run.{field}: {rule}")) };
        check(self.alpha > 0.0 && self.alpha <= 1.0, "alpha", "must be in (0, 1]")?;
        check(self.epsilon > 0.0 && self.epsilon.is_finite(), "epsilon", "must be positive")?;
        check(self.rho > 0.0 && self.rho < 1.0, "rho", "must be in (0, 1)")?;
        check(self.cg_iterations > 0, "cg_iterations", "must be positive")?;
        check(self.cg_damping >= 0.0, "cg_damping", "must be non-negative")?;
        check(self.gamma > 0.0 && self.gamma <= 1.0, "gamma", "must be in (0, 1]")?;
        check(self.batch_size >= 1, "batch_size", "must be at least 1")?;
        check(!self.seeds.is_empty(), "seeds", "needs at least one seed")?;
        check(!self.hidden.is_empty() && !self.hidden.contains(&0), "hidden", "layer sizes must be positive")?;
        check(self.critic_lr > 0.0, "critic_lr", "must be positive")?;
        check(self.critic_minibatch >= 1, "critic_minibatch", "must be at least 1")?;
        check(self.vpg_learning_rate >= 0.0, "vpg_learning_rate", "must be non-negative")?;
        check(self.replay_capacity >= 0.0, "replay_capacity", "must be non-negative")?;
        check(self.eval_episodes >= 1, "eval_episodes", "must be at least 1")?;
        Ok(())
    }
}
