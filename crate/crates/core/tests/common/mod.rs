#![allow(dead_code)]

use mgc_core::env::{Resource, ResourceKind, Scenario};
use mgc_core::harness::{load_scenario_ref, ScenarioConfig};
use mgc_core::network::{NetworkTopology, NodalInjection, PowerFlowSolution};
use mgc_core::nn::{GaussianPolicy, Head, Mlp, MlpSpec, RunningNormalizer};
use mgc_core::trpo::{Agent, Critic, TrainConfig, TrajectoryBatch};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::sync::Arc;

pub fn scenario(id: &str, tweak: impl FnOnce(&mut ScenarioConfig)) -> (Arc<Scenario>, TrainConfig) {
    let (mut cfg, run, data) = load_scenario_ref(id).unwrap();
    tweak(&mut cfg);
    (Arc::new(data.build(&cfg).unwrap()), run)
}

pub fn bisect(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    let flo = f(lo);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if (f(mid) > 0.0) == (flo > 0.0) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Receiving-end voltage, sending-end P and loss of one line feeding (p, q)
/// p.u. from a 1.0 p.u. source, via the scalar equation for the squared
/// current `ℓ = (p + rℓ)² + (q + xℓ)²`.
pub fn two_bus_oracle(r: f64, x: f64, p: f64, q: f64) -> (f64, f64, f64) {
    let f = |l: f64| (p + r * l).powi(2) + (q + x * l).powi(2) - l;
    let vertex = (1.0 - 2.0 * (r * p + x * q)) / (2.0 * (r * r + x * x));
    assert!(f(vertex) < 0.0, "oracle case must be solvable");
    let l = bisect(f, 0.0, vertex);
    let (p1, q1) = (p + r * l, q + x * l);
    let v2 = 1.0 - 2.0 * (r * p1 + x * q1) + (r * r + x * x) * l;
    (v2.sqrt(), p1, r * l)
}

/// Largest DistFlow mismatch over all lines, recomputed from a solution (p.u.).
pub fn distflow_residual(t: &NetworkTopology, inj: &NodalInjection, sol: &PowerFlowSolution, shunt_sign: f64) -> f64 {
    let base = t.base_mva();
    let mut worst: f64 = 0.0;
    for l in 0..t.n_lines() {
        let (up, down) = t.line_ends(l);
        let ln = t.line(l);
        let (p, q) = (sol.p_flow_mw[l] / base, sol.q_flow_mvar[l] / base);
        let (vu, vd) = (sol.voltage_pu[up].powi(2), sol.voltage_pu[down].powi(2));
        let mut p_children = 0.0;
        let mut q_children = 0.0;
        for k in 0..t.n_lines() {
            if t.line_ends(k).0 == down {
                p_children += sol.p_flow_mw[k] / base;
                q_children += sol.q_flow_mvar[k] / base;
            }
        }
        let ell = (p * p + q * q) / vu;
        let rp = p - ln.r_pu * ell - (p_children - inj.p_mw[down] / base);
        let rq = q - ln.x_pu * ell - (q_children - inj.q_mvar[down] / base) - shunt_sign * ln.b_pu * vd;
        let rv = vd - vu + 2.0 * (ln.r_pu * p + ln.x_pu * q) - (ln.r_pu.powi(2) + ln.x_pu.powi(2)) * ell;
        worst = worst.max(rp.abs()).max(rq.abs()).max(rv.abs());
    }
    worst
}

/// Cheapest dispatch on the 0.1 MW grid by exhaustive search.
pub fn brute_force_dispatch(resources: &[Resource], demand_tenths: i64) -> Option<f64> {
    fn go(res: &[Resource], i: usize, remaining: i64, cost: f64, best: &mut Option<f64>) {
        if i == res.len() {
            if remaining == 0 && best.is_none_or(|b| cost < b) {
                *best = Some(cost);
            }
            return;
        }
        let lo = (res[i].lower * 10.0).round() as i64;
        let hi = (res[i].upper * 10.0).round() as i64;
        for x in lo..=hi {
            go(res, i + 1, remaining - x, cost + res[i].cost * x as f64 / 10.0, best);
        }
    }
    let mut best = None;
    go(resources, 0, demand_tenths, 0.0, &mut best);
    best
}

/// Random feasible instance with bounds on the 0.1 MW grid.
pub fn random_dispatch_instance<R: Rng>(rng: &mut R) -> (Vec<Resource>, i64) {
    let n = rng.random_range(1..=4);
    let mut floor = 0;
    let mut cap = 0;
    let resources = (0..n)
        .map(|i| {
            let lo: i64 = if rng.random_bool(0.3) { rng.random_range(-5..0) } else { rng.random_range(0..5) };
            let width: i64 = rng.random_range(0..12);
            floor += lo;
            cap += lo + width;
            Resource {
                kind: ResourceKind::Generator(i),
                lower: lo as f64 / 10.0,
                upper: (lo + width) as f64 / 10.0,
                cost: rng.random_range(0..60) as f64 * 10.0,
            }
        })
        .collect();
    (resources, rng.random_range(floor..=cap))
}

/// Lowest mean over all subsets of size `k`, by enumeration.
pub fn worst_subset_mean(values: &[f64], k: usize) -> f64 {
    let n = values.len();
    let mut best = f64::INFINITY;
    for mask in 0u32..(1 << n) {
        if mask.count_ones() as usize != k {
            continue;
        }
        let s: f64 = (0..n).filter(|i| mask & (1 << i) != 0).map(|i| values[i]).sum();
        best = best.min(s / k as f64);
    }
    best
}

pub fn central_diff(f: impl Fn(&[f64]) -> f64, x: &[f64], h: f64) -> Vec<f64> {
    let mut xp = x.to_vec();
    (0..x.len())
        .map(|i| {
            xp[i] = x[i] + h;
            let up = f(&xp);
            xp[i] = x[i] - h;
            let down = f(&xp);
            xp[i] = x[i];
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// Max component error relative to the larger of the two vectors' max magnitude.
pub fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let scale = a.iter().chain(b).fold(0.0f64, |m, v| m.max(v.abs())).max(1e-12);
    a.iter().zip(b).fold(0.0f64, |m, (x, y)| m.max((x - y).abs())) / scale
}

const FD_STEP: f64 = 1e-5;

#[derive(Debug, Default, Clone, Copy)]
pub struct GradientErrors {
    pub actor_params: f64,
    pub actor_input: f64,
    pub critic: f64,
    pub critic_loss: f64,
    pub log_prob: f64,
    pub kl: f64,
    pub fvp_exact: f64,
    pub fvp_gauss_newton: f64,
    pub max_params: usize,
}

impl GradientErrors {
    pub fn worst(&self) -> f64 {
        [
            self.actor_params,
            self.actor_input,
            self.critic,
            self.critic_loss,
            self.log_prob,
            self.kl,
            self.fvp_exact,
            self.fvp_gauss_newton,
        ]
        .into_iter()
        .fold(0.0, f64::max)
    }
}

fn gauss<R: Rng>(rng: &mut R, n: usize, scale: f64) -> Vec<f64> {
    (0..n).map(|_| scale * rng.sample::<f64, _>(rand_distr::StandardNormal)).collect()
}

/// Analytic derivatives against central differences and an explicit
/// finite-difference Hessian of the mean KL, over `draws` random draws.
pub fn gradient_suite(draws: usize, seed: u64) -> GradientErrors {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = GradientErrors::default();
    let policy = GaussianPolicy::new(MlpSpec::new(3, &[4, 3], 2, Head::GaussianMean).unwrap()).unwrap();
    let critic_net = Mlp::new(MlpSpec::new(4, &[5, 3], 1, Head::ScalarValue).unwrap());
    out.max_params = policy.n_params().max(critic_net.n_params());
    assert!(out.max_params <= 60);
    let np = policy.n_params();
    let nn = policy.net().n_params();

    for _ in 0..draws {
        let mut theta = policy.init(&mut rng);
        theta.iter_mut().zip(gauss(&mut rng, np, 0.4)).for_each(|(t, n)| *t += n);
        for k in 0..2 {
            theta[nn + k] = rng.random_range(-1.5..0.5);
        }
        let obs: Vec<Vec<f64>> = (0..4).map(|_| gauss(&mut rng, 3, 1.0)).collect();
        let w = gauss(&mut rng, 2, 1.0);

        // Actor mean: parameters and input.
        let tape = policy.net().forward(&theta[..nn], &obs[0]).unwrap();
        let mut g = vec![0.0; nn];
        let g_in = policy.net().backward(&theta[..nn], &tape, &w, &mut g);
        let f = |p: &[f64]| {
            let m = policy.net().predict(p, &obs[0]).unwrap();
            m[0] * w[0] + m[1] * w[1]
        };
        out.actor_params = out.actor_params.max(rel_err(&g, &central_diff(f, &theta[..nn], FD_STEP)));
        let fx = |x: &[f64]| {
            let m = policy.net().predict(&theta[..nn], x).unwrap();
            m[0] * w[0] + m[1] * w[1]
        };
        out.actor_input = out.actor_input.max(rel_err(&g_in, &central_diff(fx, &obs[0], FD_STEP)));

        // Critic value and loss.
        let phi: Vec<f64> = gauss(&mut rng, critic_net.n_params(), 0.6);
        let state = gauss(&mut rng, 4, 1.0);
        let tape = critic_net.forward(&phi, &state).unwrap();
        let mut gc = vec![0.0; phi.len()];
        critic_net.backward(&phi, &tape, &[1.0], &mut gc);
        let fv = |p: &[f64]| critic_net.predict(p, &state).unwrap()[0];
        out.critic = out.critic.max(rel_err(&gc, &central_diff(fv, &phi, FD_STEP)));

        let mut critic = Critic::new(4, &[5, 3], 1e-3, &mut rng).unwrap();
        critic.phi = phi.clone();
        critic.normalizer = RunningNormalizer::new(4);
        for _ in 0..6 {
            critic.normalizer.update(&gauss(&mut rng, 4, 2.0));
        }
        let states: Vec<Vec<f64>> = (0..5).map(|_| gauss(&mut rng, 4, 1.0)).collect();
        let targets = gauss(&mut rng, 5, 1.0);
        let refs: Vec<&[f64]> = states.iter().map(Vec::as_slice).collect();
        let gl = critic.loss_grad(&refs, &targets).unwrap();
        let fl = |p: &[f64]| {
            let mut c = critic.clone();
            c.phi = p.to_vec();
            c.loss(&states, &targets).unwrap()
        };
        out.critic_loss = out.critic_loss.max(rel_err(&gl, &central_diff(fl, &phi, FD_STEP)));

        // Log-probability.
        let action = gauss(&mut rng, 2, 0.5);
        let mut glp = vec![0.0; np];
        policy.add_log_prob_grad(&theta, &obs[1], &action, 1.0, &mut glp).unwrap();
        let flp = |t: &[f64]| policy.log_prob(t, &obs[1], &action).unwrap();
        out.log_prob = out.log_prob.max(rel_err(&glp, &central_diff(flp, &theta, FD_STEP)));

        // KL gradient away from the expansion point.
        let mut new = theta.clone();
        new.iter_mut().zip(gauss(&mut rng, np, 0.1)).for_each(|(t, n)| *t += n);
        let gk: Vec<f64> = policy.kl_grad(&theta, &new, &obs).unwrap();
        let fk = |t: &[f64]| policy.mean_kl(&theta, t, &obs).unwrap();
        out.kl = out.kl.max(rel_err(&gk, &central_diff(fk, &new, FD_STEP)));

        // Hessian of the mean KL at new = old, column by column.
        let mut hessian = vec![vec![0.0; np]; np];
        let mut tp = theta.clone();
        for j in 0..np {
            tp[j] = theta[j] + FD_STEP;
            let up: Vec<f64> = policy.kl_grad(&theta, &tp, &obs).unwrap();
            tp[j] = theta[j] - FD_STEP;
            let down: Vec<f64> = policy.kl_grad(&theta, &tp, &obs).unwrap();
            tp[j] = theta[j];
            for i in 0..np {
                hessian[i][j] = (up[i] - down[i]) / (2.0 * FD_STEP);
            }
        }
        let v = gauss(&mut rng, np, 1.0);
        let damping = 0.1;
        let hv: Vec<f64> =
            (0..np).map(|i| (0..np).map(|j| hessian[i][j] * v[j]).sum::<f64>() + damping * v[i]).collect();
        let exact = policy.fvp_double_backward(&theta, &obs, &v, damping).unwrap();
        let gn = policy.fisher_vector_product(&theta, &obs, &v, damping).unwrap();
        out.fvp_exact = out.fvp_exact.max(rel_err(&exact, &hv));
        out.fvp_gauss_newton = out.fvp_gauss_newton.max(rel_err(&gn, &hv));
    }
    out
}

/// Plain score-function gradient `mean_t ∇log μ(a_t|o_t) Ψ_t` over every step
/// of the batch, with no selection, baseline or importance factors.
pub fn standard_gradient(agent: &Agent, batch: &TrajectoryBatch, m: usize) -> Vec<f64> {
    let mut total = vec![0.0; agent.policy.n_params()];
    let mut n = 0usize;
    for (e, ep) in batch.episodes.iter().enumerate() {
        for t in 0..ep.len() {
            let mut g = vec![0.0; total.len()];
            agent.policy.add_log_prob_grad(&agent.theta, &ep.obs[t][m], &ep.actions[t][m], 1.0, &mut g).unwrap();
            total.iter_mut().zip(&g).for_each(|(s, x)| *s += x * batch.advantages[e][t]);
            n += 1;
        }
    }
    total.iter_mut().for_each(|s| *s /= n as f64);
    total
}
