use super::{Dual, Head, Mlp, MlpSpec, NnError, Real, Tape};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::Serialize;
use std::f64::consts::PI;

pub const LOG_STD_MIN: f64 = -5.0;
pub const LOG_STD_MAX: f64 = 2.0;
const LOG_STD_INIT: f64 = -1.203_972_804_325_936; // ln 0.3
const FINAL_GAIN: f64 = 0.01;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GaussianPolicyOutput {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

/// Diagonal Gaussian policy: tanh-MLP mean with state-independent log-std
/// parameters appended after the network weights.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianPolicy {
    net: Mlp,
}

struct Dist<T> {
    tape: Tape<T>,
    log_std: Vec<T>,
    /// Whether each log-std parameter lies inside the clamp interval.
    active: Vec<bool>,
}

impl<T: Real> Dist<T> {
    fn mean(&self) -> &[T] {
        self.tape.output()
    }
}

impl GaussianPolicy {
    pub fn new(spec: MlpSpec) -> Result<Self, NnError> {
        if spec.head != Head::GaussianMean {
            return Err(NnError::DimMismatch("policy needs a gaussian-mean head".into()));
        }
        Ok(Self { net: Mlp::new(spec) })
    }

    pub fn spec(&self) -> &MlpSpec {
        self.net.spec()
    }

    pub fn net(&self) -> &Mlp {
        &self.net
    }

    pub fn obs_dim(&self) -> usize {
        self.spec().input
    }

    pub fn act_dim(&self) -> usize {
        self.spec().output
    }

    pub fn n_params(&self) -> usize {
        self.net.n_params() + self.act_dim()
    }

    pub fn init<R: Rng>(&self, rng: &mut R) -> Vec<f64> {
        let mut theta = self.net.init(rng, FINAL_GAIN);
        theta.extend(std::iter::repeat_n(LOG_STD_INIT, self.act_dim()));
        theta
    }

    fn check(&self, theta_len: usize) -> Result<(), NnError> {
        if theta_len != self.n_params() {
            return Err(NnError::DimMismatch(format!("{theta_len} params for a {}-param policy", self.n_params())));
        }
        Ok(())
    }

    fn dist<T: Real>(&self, theta: &[T], obs: &[f64]) -> Result<Dist<T>, NnError> {
        self.check(theta.len())?;
        let x: Vec<T> = obs.iter().map(|&v| T::from_f64(v)).collect();
        let tape = self.net.forward(theta, &x)?;
        let raw = &theta[self.net.n_params()..];
        let active = raw.iter().map(|s| (LOG_STD_MIN..=LOG_STD_MAX).contains(&s.value())).collect();
        let log_std = raw.iter().map(|s| s.clamp_value(LOG_STD_MIN, LOG_STD_MAX)).collect();
        Ok(Dist { tape, log_std, active })
    }

    fn check_action(&self, action: &[f64]) -> Result<(), NnError> {
        if action.len() != self.act_dim() {
            return Err(NnError::DimMismatch(format!("action of {} for a {}-dim policy", action.len(), self.act_dim())));
        }
        Ok(())
    }

    pub fn output(&self, theta: &[f64], obs: &[f64]) -> Result<GaussianPolicyOutput, NnError> {
        let d = self.dist(theta, obs)?;
        Ok(GaussianPolicyOutput { mean: d.mean().to_vec(), std: d.log_std.iter().map(|s| s.exp()).collect() })
    }

    pub fn log_prob(&self, theta: &[f64], obs: &[f64], action: &[f64]) -> Result<f64, NnError> {
        self.check_action(action)?;
        let d = self.dist(theta, obs)?;
        Ok(gaussian_log_density(d.mean(), &d.log_std, action))
    }

    /// Adds `weight · ∇θ log μ(action | obs)` to `grad`; returns the log-prob.
    pub fn add_log_prob_grad(
        &self,
        theta: &[f64],
        obs: &[f64],
        action: &[f64],
        weight: f64,
        grad: &mut [f64],
    ) -> Result<f64, NnError> {
        self.check_action(action)?;
        let d = self.dist(theta, obs)?;
        let mean = d.mean();
        let n_net = self.net.n_params();
        let mut d_mean = Vec::with_capacity(mean.len());
        for k in 0..mean.len() {
            let inv_var = (-2.0 * d.log_std[k]).exp();
            let diff = action[k] - mean[k];
            d_mean.push(weight * diff * inv_var);
            if d.active[k] {
                grad[n_net + k] += weight * (diff * diff * inv_var - 1.0);
            }
        }
        self.net.backward(theta, &d.tape, &d_mean, grad);
        Ok(gaussian_log_density(mean, &d.log_std, action))
    }

    pub fn sample<R: Rng>(&self, theta: &[f64], obs: &[f64], rng: &mut R) -> Result<(Vec<f64>, f64), NnError> {
        let d = self.dist(theta, obs)?;
        let action: Vec<f64> = d
            .mean()
            .iter()
            .zip(&d.log_std)
            .map(|(m, s)| m + s.exp() * rng.sample::<f64, _>(StandardNormal))
            .collect();
        let lp = gaussian_log_density(d.mean(), &d.log_std, &action);
        Ok((action, lp))
    }

    /// Batch mean of KL(old ‖ new).
    pub fn mean_kl(&self, old: &[f64], new: &[f64], observations: &[Vec<f64>]) -> Result<f64, NnError> {
        if observations.is_empty() {
            return Ok(0.0);
        }
        let mut total = 0.0;
        for obs in observations {
            let a = self.dist(old, obs)?;
            let b = self.dist(new, obs)?;
            total += gaussian_kl(a.mean(), &a.log_std, b.mean(), &b.log_std);
        }
        Ok(total / observations.len() as f64)
    }

    /// Gradient of `mean_kl(old, new, ·)` with respect to `new`.
    pub fn kl_grad<T: Real>(&self, old: &[f64], new: &[T], observations: &[Vec<f64>]) -> Result<Vec<T>, NnError> {
        let n_net = self.net.n_params();
        let mut grad = vec![T::zero(); self.n_params()];
        if observations.is_empty() {
            return Ok(grad);
        }
        let scale = T::from_f64(1.0 / observations.len() as f64);
        let one = T::from_f64(1.0);
        for obs in observations {
            let a = self.dist(old, obs)?;
            let b = self.dist(new, obs)?;
            let mean = b.mean();
            let mut d_mean = Vec::with_capacity(mean.len());
            for k in 0..mean.len() {
                let inv_var = (-(b.log_std[k] + b.log_std[k])).exp();
                let diff = mean[k] - T::from_f64(a.mean()[k]);
                d_mean.push(scale * diff * inv_var);
                if b.active[k] {
                    let var_old = T::from_f64((2.0 * a.log_std[k]).exp());
                    grad[n_net + k] += scale * (one - (var_old + diff * diff) * inv_var);
                }
            }
            self.net.backward(new, &b.tape, &d_mean, &mut grad);
        }
        Ok(grad)
    }

    /// `(H + damping·I) v` with `H` the Hessian of the mean KL at `theta`,
    /// by differentiating the KL gradient along `v`.
    pub fn fvp_double_backward(
        &self,
        theta: &[f64],
        observations: &[Vec<f64>],
        v: &[f64],
        damping: f64,
    ) -> Result<Vec<f64>, NnError> {
        self.check(v.len())?;
        let seeded = Dual::seed(theta, v);
        let g = self.kl_grad(theta, &seeded, observations)?;
        Ok(g.iter().zip(v).map(|(gi, vi)| gi.du + damping * vi).collect())
    }

    /// `(F + damping·I) v` with the Gaussian Fisher `F = Jᵀ diag(σ⁻²) J` on
    /// the mean and `2·I` on the log-std parameters.
    pub fn fisher_vector_product(
        &self,
        theta: &[f64],
        observations: &[Vec<f64>],
        v: &[f64],
        damping: f64,
    ) -> Result<Vec<f64>, NnError> {
        self.check(theta.len())?;
        self.check(v.len())?;
        let n_net = self.net.n_params();
        let mut out = vec![0.0; self.n_params()];
        if !observations.is_empty() {
            let scale = 1.0 / observations.len() as f64;
            let seeded = Dual::seed(theta, v);
            for obs in observations {
                let d = self.dist(&seeded, obs)?;
                let tape = Tape { acts: d.tape.acts.iter().map(|a| a.iter().map(|x| x.re).collect()).collect() };
                let d_mean: Vec<f64> = d
                    .mean()
                    .iter()
                    .zip(&d.log_std)
                    .map(|(m, s)| scale * m.du * (-2.0 * s.re).exp())
                    .collect();
                self.net.backward(theta, &tape, &d_mean, &mut out);
            }
            let active = self.dist(theta, &observations[0])?.active;
            for k in 0..self.act_dim() {
                if active[k] {
                    out[n_net + k] += 2.0 * v[n_net + k];
                }
            }
        }
        for (o, vi) in out.iter_mut().zip(v) {
            *o += damping * vi;
        }
        Ok(out)
    }
}

pub fn gaussian_log_density(mean: &[f64], log_std: &[f64], action: &[f64]) -> f64 {
    let mut s = 0.0;
    for k in 0..mean.len() {
        let z = (action[k] - mean[k]) * (-log_std[k]).exp();
        s += z * z + 2.0 * log_std[k] + (2.0 * PI).ln();
    }
    -0.5 * s
}

/// KL(a ‖ b) between diagonal Gaussians.
pub fn gaussian_kl(mean_a: &[f64], log_std_a: &[f64], mean_b: &[f64], log_std_b: &[f64]) -> f64 {
    let mut kl = 0.0;
    for k in 0..mean_a.len() {
        let var_a = (2.0 * log_std_a[k]).exp();
        let var_b = (2.0 * log_std_b[k]).exp();
        let diff = mean_a[k] - mean_b[k];
        kl += log_std_b[k] - log_std_a[k] + (var_a + diff * diff) / (2.0 * var_b) - 0.5;
    }
    kl
}
