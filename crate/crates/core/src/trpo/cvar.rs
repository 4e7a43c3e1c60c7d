use super::TrpoError;
use crate::nn::{ensure_finite, GaussianPolicy};

/// Largest tolerated importance factor Λ̂ before a batch is declared stale.
pub const RATIO_LIMIT: f64 = 1e3;

/// Number of episodes in the worst α-fraction of a batch of `d`: ⌈αD⌉.
pub fn cvar_count(alpha: f64, d: usize) -> usize {
    ((alpha * d as f64 - 1e-9).ceil() as usize).clamp(1, d)
}

/// Indices of the ⌈αD⌉ lowest returns (ascending, ties by index) and the
/// empirical α-VaR, the highest return inside that set.
pub fn cvar_select(returns: &[f64], alpha: f64) -> Result<(Vec<usize>, f64), TrpoError> {
    if returns.is_empty() {
        return Err(TrpoError::EmptyBatch);
    }
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(TrpoError::BadConfig(format!("alpha {alpha} outside (0, 1]")));
    }
    let mut order: Vec<usize> = (0..returns.len()).collect();
    order.sort_by(|&a, &b| returns[a].total_cmp(&returns[b]).then(a.cmp(&b)));
    order.truncate(cvar_count(alpha, returns.len()));
    let var = returns[*order.last().expect("at least one selected")];
    Ok((order, var))
}

/// Mean of the worst ⌈αD⌉ values.
pub fn cvar(returns: &[f64], alpha: f64) -> Result<f64, TrpoError> {
    let (sel, _) = cvar_select(returns, alpha)?;
    Ok(sel.iter().map(|&i| returns[i]).sum::<f64>() / sel.len() as f64)
}

/// Empirical α-quantile, the ⌈αN⌉-th smallest value.
pub fn quantile(values: &[f64], alpha: f64) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    v[cvar_count(alpha, v.len()) - 1]
}

/// Per-step data of one agent on the selected steps.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct AgentSamples {
    pub obs: Vec<Vec<f64>>,
    pub actions: Vec<Vec<f64>>,
    pub old_log_probs: Vec<f64>,
    /// Advantage minus baseline, `Ψ_t − c`.
    pub weights: Vec<f64>,
    /// Importance factor Λ̂ of the agents updated earlier.
    pub lambda: Vec<f64>,
}

impl AgentSamples {
    pub fn len(&self) -> usize {
        self.obs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.obs.is_empty()
    }

    fn check_lambda(&self) -> Result<(), TrpoError> {
        let max = self.lambda.iter().copied().fold(0.0, f64::max);
        if !max.is_finite() || max > RATIO_LIMIT {
            return Err(TrpoError::RatioOverflow { max });
        }
        Ok(())
    }
}

/// `g = (1/N) Σ Λ̂ ∇θ log μθ(a|o) (Ψ − c)` at `theta`.
pub fn cvar_policy_gradient(
    policy: &GaussianPolicy,
    theta: &[f64],
    samples: &AgentSamples,
) -> Result<Vec<f64>, TrpoError> {
    samples.check_lambda()?;
    let mut grad = vec![0.0; policy.n_params()];
    if samples.is_empty() {
        return Ok(grad);
    }
    let n = samples.len() as f64;
    for i in 0..samples.len() {
        let w = samples.lambda[i] * samples.weights[i] / n;
        if w != 0.0 {
            policy.add_log_prob_grad(theta, &samples.obs[i], &samples.actions[i], w, &mut grad)?;
        }
    }
    ensure_finite(&grad, "policy gradient")?;
    Ok(grad)
}

/// Per-sample log-probabilities under `theta`.
pub fn log_probs(policy: &GaussianPolicy, theta: &[f64], samples: &AgentSamples) -> Result<Vec<f64>, TrpoError> {
    (0..samples.len())
        .map(|i| Ok(policy.log_prob(theta, &samples.obs[i], &samples.actions[i])?))
        .collect()
}

/// Sampled surrogate `U(θ) = (1/N) Σ Λ̂ (μθ/μold − 1)(Ψ − c)`; zero at the
/// behaviour policy.
pub fn surrogate(policy: &GaussianPolicy, theta: &[f64], samples: &AgentSamples) -> Result<f64, TrpoError> {
    if samples.is_empty() {
        return Ok(0.0);
    }
    let lps = log_probs(policy, theta, samples)?;
    let mut u = 0.0;
    for i in 0..samples.len() {
        u += samples.lambda[i] * ((lps[i] - samples.old_log_probs[i]).exp() - 1.0) * samples.weights[i];
    }
    let u = u / samples.len() as f64;
    ensure_finite(&[u], "surrogate")?;
    Ok(u)
}
