use super::{TrpoError, TrustRegionConfig};
use crate::nn::dot;
use serde::Serialize;

/// Quantities a trust-region step needs from the learning problem.
pub trait TrustRegionProblem {
    /// `(H + damping·I) v` at the expansion point.
    fn fvp(&self, v: &[f64], damping: f64) -> Result<Vec<f64>, TrpoError>;
    /// Divergence of the candidate from the expansion point.
    fn kl(&self, theta: &[f64]) -> Result<f64, TrpoError>;
    /// Sampled surrogate improvement of the candidate (zero at the expansion point).
    fn surrogate(&self, theta: &[f64]) -> Result<f64, TrpoError>;
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StepOutcome {
    pub theta: Vec<f64>,
    pub accepted: bool,
    /// Backtracking exponent `j` of the accepted candidate.
    pub backtracks: usize,
    pub kl: f64,
    pub surrogate: f64,
    /// `xᵀg ≤ 0`: the solve produced no ascent direction.
    pub cg_breakdown: bool,
}

impl StepOutcome {
    fn rejected(theta: &[f64], cg_breakdown: bool) -> Self {
        Self { theta: theta.to_vec(), accepted: false, backtracks: 0, kl: 0.0, surrogate: 0.0, cg_breakdown }
    }
}

/// Solves `A x = b` by at most `iterations` conjugate-gradient steps from 0.
pub fn conjugate_gradient<F>(mut apply: F, b: &[f64], iterations: usize, tolerance: f64) -> Result<Vec<f64>, TrpoError>
where
    F: FnMut(&[f64]) -> Result<Vec<f64>, TrpoError>,
{
    let mut x = vec![0.0; b.len()];
    let mut r = b.to_vec();
    let mut p = b.to_vec();
    let mut rr = dot(&r, &r);
    for _ in 0..iterations {
        if rr <= tolerance * tolerance {
            break;
        }
        let ap = apply(&p)?;
        let pap = dot(&p, &ap);
        if !(pap > 0.0) {
            break;
        }
        let step = rr / pap;
        for i in 0..x.len() {
            x[i] += step * p[i];
            r[i] -= step * ap[i];
        }
        let rr_new = dot(&r, &r);
        let beta = rr_new / rr;
        for i in 0..p.len() {
            p[i] = r[i] + beta * p[i];
        }
        rr = rr_new;
    }
    Ok(x)
}

/// Natural-gradient step of KL radius ε with backtracking line search.
pub fn trust_region_step<P: TrustRegionProblem>(
    theta_old: &[f64],
    grad: &[f64],
    cfg: &TrustRegionConfig,
    problem: &P,
) -> Result<StepOutcome, TrpoError> {
    if grad.iter().all(|g| *g == 0.0) {
        return Ok(StepOutcome::rejected(theta_old, false));
    }
    let x = conjugate_gradient(|v| problem.fvp(v, cfg.cg_damping), grad, cfg.cg_iterations, 1e-10)?;
    let xg = dot(&x, grad);
    if !(xg > 0.0) || !xg.is_finite() {
        log::warn!("conjugate gradient breakdown: xᵀg = {xg:e}; keeping parameters");
        return Ok(StepOutcome::rejected(theta_old, true));
    }
    let scale = (2.0 * cfg.epsilon / xg).sqrt();
    let mut frac = 1.0;
    for j in 0..=cfg.max_backtracks {
        let candidate: Vec<f64> = theta_old.iter().zip(&x).map(|(t, xi)| t + frac * scale * xi).collect();
        let kl = problem.kl(&candidate)?;
        let u = problem.surrogate(&candidate)?;
        if kl <= cfg.epsilon && u >= 0.0 {
            return Ok(StepOutcome { theta: candidate, accepted: true, backtracks: j, kl, surrogate: u, cg_breakdown: false });
        }
        frac *= cfg.rho;
    }
    Ok(StepOutcome::rejected(theta_old, false))
}
