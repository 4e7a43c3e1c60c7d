use mgc_core::baselines::{matrpo_config, vpg_update};
use mgc_core::nn::{GaussianPolicy, Head, MlpSpec};
use mgc_core::trpo::{
    collect_batch, conjugate_gradient, cvar, cvar_count, cvar_policy_gradient, cvar_select, derive_seed,
    discounted_sum, quantile, returns_to_go, standardize, surrogate, td_advantages, train, trust_region_step,
    Agent, AgentSamples, Algorithm, Checkpoint, Critic, CvarBaseline, Episode, Stream, TrainConfig, Trainer,
    TrajectoryBatch, TrpoError, TrustRegionConfig, TrustRegionProblem,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::sync::Arc;

mod common;

fn quick_config(algorithm: Algorithm) -> TrainConfig {
    TrainConfig {
        algorithm,
        alpha: 0.5,
        batch_size: 8,
        iterations: 3,
        hidden: vec![16, 8],
        eval_episodes: 2,
        eval_episodes_per_iter: 1,
        critic_epochs: 2,
        critic_minibatch: 32,
        ..TrainConfig::default()
    }
}

#[test]
fn cvar_count_edges() {
    assert_eq!(cvar_count(1.0, 16), 16);
    assert_eq!(cvar_count(0.5, 16), 8);
    assert_eq!(cvar_count(0.5, 15), 8);
    assert_eq!(cvar_count(0.3, 10), 3);
    assert_eq!(cvar_count(1e-6, 16), 1);
    assert!(matches!(cvar_select(&[], 0.5), Err(TrpoError::EmptyBatch)));
    assert!(matches!(cvar_select(&[1.0], 0.0), Err(TrpoError::BadConfig(_))));
    assert!(matches!(cvar_select(&[1.0], 1.5), Err(TrpoError::BadConfig(_))));
}

#[test]
fn cvar_select_keeps_ties_in_index_order() {
    let (sel, var) = cvar_select(&[3.0, 1.0, 1.0, 2.0], 0.5).unwrap();
    assert_eq!(sel, vec![1, 2]);
    assert_eq!(var, 1.0);
    assert_eq!(quantile(&[5.0, 1.0, 3.0, 2.0], 0.5), 2.0);
    assert_eq!(cvar(&[5.0, 1.0, 3.0, 2.0], 0.5).unwrap(), 1.5);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(500))]

    #[test]
    fn cvar_select_matches_enumeration(values in proptest::collection::vec(-100i32..100, 1..=8), alpha in 0.01f64..=1.0) {
        let returns: Vec<f64> = values.iter().map(|&v| v as f64 / 4.0).collect();
        let (sel, var) = cvar_select(&returns, alpha).unwrap();
        let k = cvar_count(alpha, returns.len());
        prop_assert_eq!(sel.len(), k);
        let mean = sel.iter().map(|&i| returns[i]).sum::<f64>() / k as f64;
        prop_assert!((mean - common::worst_subset_mean(&returns, k)).abs() <= 1e-12);
        prop_assert_eq!(var, sel.iter().map(|&i| returns[i]).fold(f64::NEG_INFINITY, f64::max));
        for (i, r) in returns.iter().enumerate() {
            if !sel.contains(&i) {
                prop_assert!(*r >= var);
            }
        }
    }

    #[test]
    fn standardized_values_have_unit_moments(rows in proptest::collection::vec(proptest::collection::vec(-5.0f64..5.0, 1..6), 1..5)) {
        let s = standardize(&rows);
        let flat: Vec<f64> = s.iter().flatten().copied().collect();
        let n = flat.len() as f64;
        let mean = flat.iter().sum::<f64>() / n;
        prop_assert!(mean.abs() < 1e-9);
        let var = flat.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        prop_assert!(var < 1e-9 || (var - 1.0).abs() < 1e-9);
    }
}

#[test]
fn discounting_by_hand() {
    let r = [1.0, 2.0, 3.0];
    assert!((discounted_sum(&r, 0.5) - (1.0 + 1.0 + 0.75)).abs() < 1e-15);
    assert_eq!(returns_to_go(&r, 0.5), vec![2.75, 3.5, 3.0]);
    assert_eq!(returns_to_go(&r, 1.0), vec![6.0, 5.0, 3.0]);
}

#[test]
fn derived_seeds_are_distinct_and_stable() {
    let a = derive_seed(1, Stream::Environment, &[0, 1]);
    assert_eq!(a, derive_seed(1, Stream::Environment, &[0, 1]));
    assert_ne!(a, derive_seed(1, Stream::Action, &[0, 1]));
    assert_ne!(a, derive_seed(1, Stream::Environment, &[1, 0]));
    assert_ne!(a, derive_seed(2, Stream::Environment, &[0, 1]));
}

#[test]
fn full_alpha_gradient_is_the_standard_gradient() {
    let (sc, _) = common::scenario("toy", |_| {});
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let agents: Vec<Agent> = sc
        .observation_dims()
        .iter()
        .zip(sc.action_dims())
        .map(|(&o, a)| Agent::new(o, a, &[8], &mut rng).unwrap())
        .collect();
    let critic = Critic::new(sc.global_state_dim(), &[8], 1e-3, &mut rng).unwrap();
    let episodes = collect_batch(&sc, &agents, 4, 0, 6).unwrap();
    let batch = TrajectoryBatch::new(episodes, &critic, 0.9, 1.0, CvarBaseline::None, sc.reward_scale()).unwrap();
    assert_eq!(batch.selected, (0..6).collect::<Vec<_>>());
    for (m, agent) in agents.iter().enumerate() {
        let g = cvar_policy_gradient(&agent.policy, &agent.theta, &batch.agent_samples(m)).unwrap();
        let standard = common::standard_gradient(agent, &batch, m);
        let diff = g.iter().zip(&standard).fold(0.0f64, |a, (x, y)| a.max((x - y).abs()));
        assert!(diff <= 1e-12, "{diff}");
    }
}

#[test]
fn stale_importance_factor_is_rejected() {
    let p = GaussianPolicy::new(MlpSpec::new(1, &[2], 1, Head::GaussianMean).unwrap()).unwrap();
    let theta = vec![0.0; p.n_params()];
    let s = AgentSamples {
        obs: vec![vec![0.0]],
        actions: vec![vec![0.0]],
        old_log_probs: vec![0.0],
        weights: vec![1.0],
        lambda: vec![1e4],
    };
    assert!(matches!(cvar_policy_gradient(&p, &theta, &s), Err(TrpoError::RatioOverflow { .. })));
}

#[test]
fn vpg_update_is_a_plain_gradient_step() {
    let p = GaussianPolicy::new(MlpSpec::new(2, &[3], 1, Head::GaussianMean).unwrap()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let theta = p.init(&mut rng);
    let s = AgentSamples {
        obs: vec![vec![0.1, 0.2], vec![-0.3, 0.4]],
        actions: vec![vec![0.5], vec![-0.2]],
        old_log_probs: vec![0.0, 0.0],
        weights: vec![1.5, -0.5],
        lambda: vec![1.0, 1.0],
    };
    let g = cvar_policy_gradient(&p, &theta, &s).unwrap();
    let next = vpg_update(&p, &theta, &s, 0.1).unwrap();
    for i in 0..theta.len() {
        assert!((next[i] - theta[i] - 0.1 * g[i]).abs() < 1e-15);
    }
    let lp: Vec<f64> = s.obs.iter().zip(&s.actions).map(|(o, a)| p.log_prob(&theta, o, a).unwrap()).collect();
    let at_old = AgentSamples { old_log_probs: lp, ..s };
    assert!(surrogate(&p, &theta, &at_old).unwrap().abs() < 1e-15);
}

/// Quadratic KL `½ΔᵀAΔ` with a linear surrogate `gᵀΔ − shift`.
struct Quadratic {
    a: Vec<Vec<f64>>,
    g: Vec<f64>,
    center: Vec<f64>,
    shift: f64,
    curvature_boost: f64,
}

impl Quadratic {
    fn delta(&self, theta: &[f64]) -> Vec<f64> {
        theta.iter().zip(&self.center).map(|(t, c)| t - c).collect()
    }
}

impl TrustRegionProblem for Quadratic {
    fn fvp(&self, v: &[f64], damping: f64) -> Result<Vec<f64>, TrpoError> {
        Ok(self.a.iter().zip(v).map(|(row, vi)| row.iter().zip(v).map(|(x, y)| x * y).sum::<f64>() + damping * vi).collect())
    }
    fn kl(&self, theta: &[f64]) -> Result<f64, TrpoError> {
        let d = self.delta(theta);
        let ad = self.fvp(&d, 0.0)?;
        let q = 0.5 * d.iter().zip(&ad).map(|(x, y)| x * y).sum::<f64>();
        Ok(q * (1.0 + self.curvature_boost * q))
    }
    fn surrogate(&self, theta: &[f64]) -> Result<f64, TrpoError> {
        Ok(self.delta(theta).iter().zip(&self.g).map(|(d, g)| d * g).sum::<f64>() - self.shift)
    }
}

fn random_spd<R: Rng>(rng: &mut R, n: usize) -> Vec<Vec<f64>> {
    let m: Vec<Vec<f64>> = (0..n).map(|_| (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
    (0..n)
        .map(|i| (0..n).map(|j| (0..n).map(|k| m[k][i] * m[k][j]).sum::<f64>() + if i == j { 0.5 } else { 0.0 }).collect())
        .collect()
}

#[test]
fn conjugate_gradient_solves_spd_systems() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for _ in 0..20 {
        let a = random_spd(&mut rng, 5);
        let b: Vec<f64> = (0..5).map(|_| rng.random_range(-1.0..1.0)).collect();
        let q = Quadratic { a: a.clone(), g: vec![], center: vec![], shift: 0.0, curvature_boost: 0.0 };
        let x = conjugate_gradient(|v| q.fvp(v, 0.0), &b, 5, 1e-14).unwrap();
        let ax = q.fvp(&x, 0.0).unwrap();
        assert!(ax.iter().zip(&b).all(|(l, r)| (l - r).abs() < 1e-8));
    }
}

#[test]
fn trust_region_step_lands_on_the_boundary() {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let cfg = TrustRegionConfig { cg_damping: 0.0, cg_iterations: 4, ..TrustRegionConfig::default() };
    for _ in 0..20 {
        let a = random_spd(&mut rng, 4);
        let g: Vec<f64> = (0..4).map(|_| rng.random_range(-1.0..1.0)).collect();
        let center: Vec<f64> = (0..4).map(|_| rng.random_range(-1.0..1.0)).collect();
        let q = Quadratic { a, g: g.clone(), center: center.clone(), shift: 0.0, curvature_boost: 0.0 };
        let out = trust_region_step(&center, &g, &cfg, &q).unwrap();
        assert!(out.accepted && out.kl <= cfg.epsilon);
        let x = conjugate_gradient(|v| q.fvp(v, 0.0), &g, 4, 1e-14).unwrap();
        let xg: f64 = x.iter().zip(&g).map(|(a, b)| a * b).sum();
        let full: Vec<f64> = center.iter().zip(&x).map(|(c, xi)| c + (2.0 * cfg.epsilon / xg).sqrt() * xi).collect();
        assert!((q.kl(&full).unwrap() - cfg.epsilon).abs() < 1e-12);
        let frac = cfg.rho.powi(out.backtracks as i32);
        assert!(out.backtracks <= 1);
        for i in 0..4 {
            assert!((out.theta[i] - center[i] - frac * (full[i] - center[i])).abs() < 1e-8);
        }
    }
}

#[test]
fn trust_region_backtracks_and_rejects() {
    let a = vec![vec![1.0, 0.0], vec![0.0, 2.0]];
    let g = vec![1.0, 1.0];
    let center = vec![0.0, 0.0];
    let cfg = TrustRegionConfig::default();
    let curved = Quadratic { a: a.clone(), g: g.clone(), center: center.clone(), shift: 0.0, curvature_boost: 1e3 };
    let out = trust_region_step(&center, &g, &cfg, &curved).unwrap();
    assert!(out.accepted && out.backtracks > 0 && out.kl <= cfg.epsilon);

    let losing = Quadratic { a: a.clone(), g: g.clone(), center: center.clone(), shift: 1.0, curvature_boost: 0.0 };
    let out = trust_region_step(&center, &g, &cfg, &losing).unwrap();
    assert!(!out.accepted);
    assert_eq!(out.theta, center);

    let flat = trust_region_step(&center, &[0.0, 0.0], &cfg, &losing).unwrap();
    assert!(!flat.accepted && !flat.cg_breakdown);
}

fn toy_episode(rewards: Vec<f64>) -> Episode {
    let states = (0..=rewards.len()).map(|t| vec![t as f64 / 4.0]).collect();
    Episode {
        env_seed: 0,
        raw_obs: vec![],
        obs: vec![],
        actions: vec![],
        log_probs: vec![],
        states,
        rewards,
        records: vec![],
        voltage_max_dev: 0.0,
        renewable_mwh: 0.0,
        supply_mwh: 0.0,
    }
}

#[test]
fn td_errors_follow_the_definition() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let critic = Critic::new(1, &[4], 1e-3, &mut rng).unwrap();
    let ep = toy_episode(vec![0.1, 0.2, 0.3]);
    let (raw, std) = td_advantages(std::slice::from_ref(&ep), &critic, 0.9).unwrap();
    let v: Vec<f64> = ep.states.iter().map(|s| critic.value(s).unwrap()).collect();
    let expected = [0.1 + 0.9 * v[1] - v[0], 0.2 + 0.9 * v[2] - v[1], 0.3 - v[2]];
    for t in 0..3 {
        assert!((raw[0][t] - expected[t]).abs() < 1e-15);
    }
    assert_eq!(std, standardize(&raw));
}

#[test]
fn fitted_critic_zeroes_td_errors_on_a_deterministic_chain() {
    let gamma = 0.9;
    let rewards = vec![0.05, 0.1, 0.0, 0.15, 0.1, 0.05, 0.2, 0.1];
    let ep = toy_episode(rewards.clone());
    let targets = returns_to_go(&rewards, gamma);
    let states: Vec<Vec<f64>> = ep.states[..rewards.len()].to_vec();
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let mut critic = Critic::new(1, &[8], 1e-2, &mut rng).unwrap();
    let loss = critic.update(&states, &targets, 2000, 4, &mut rng).unwrap();
    assert!(loss <= 1e-3, "{loss}");
    let (raw, _) = td_advantages(&[ep], &critic, gamma).unwrap();
    assert!(raw[0].iter().all(|d| d.abs() < 0.08), "{:?}", raw[0]);
}

#[test]
fn matrpo_equals_full_alpha_rs_trpo_without_baseline() {
    let (sc, _) = common::scenario("toy", |_| {});
    let base = quick_config(Algorithm::Matrpo);
    let rs = TrainConfig { algorithm: Algorithm::RsTrpo, alpha: 1.0, cvar_baseline: CvarBaseline::None, ..base.clone() };
    let a = train(Arc::clone(&sc), &matrpo_config(&base), 3, |_, _| Ok(())).unwrap();
    let b = train(Arc::clone(&sc), &rs, 3, |_, _| Ok(())).unwrap();
    for (x, y) in a.metrics.iter().zip(&b.metrics) {
        assert_eq!(x.mean_return, y.mean_return);
        assert_eq!(x.agent_kl, y.agent_kl);
        assert_eq!(x.surrogate, y.surrogate);
        assert_eq!(x.eval_return, y.eval_return);
    }
    assert_eq!(a.checkpoint.agents, b.checkpoint.agents);
}

#[test]
fn training_is_deterministic_and_resumable() {
    let (sc, _) = common::scenario("toy", |_| {});
    let cfg = quick_config(Algorithm::RsTrpo);
    let a = train(Arc::clone(&sc), &cfg, 5, |_, _| Ok(())).unwrap();
    let b = train(Arc::clone(&sc), &cfg, 5, |_, _| Ok(())).unwrap();
    assert_eq!(a.checkpoint, b.checkpoint);
    assert_eq!(a.final_eval, b.final_eval);

    let mut first = Trainer::new(Arc::clone(&sc), cfg.clone(), 5).unwrap();
    first.iterate().unwrap();
    let json = first.checkpoint().to_json().unwrap();
    let restored = Checkpoint::from_json(&json).unwrap();
    assert_eq!(restored, first.checkpoint());
    let mut resumed = Trainer::from_checkpoint(Arc::clone(&sc), cfg.clone(), restored).unwrap();
    let m1 = resumed.iterate().unwrap();
    let m2 = resumed.iterate().unwrap();
    assert_eq!(m1.mean_return, a.metrics[1].mean_return);
    assert_eq!(m2.eval_return, a.metrics[2].eval_return);
    assert_eq!(resumed.checkpoint(), a.checkpoint);
}

#[test]
fn checkpoint_files_round_trip_bit_exactly() {
    let (sc, _) = common::scenario("toy", |_| {});
    let mut t = Trainer::new(Arc::clone(&sc), quick_config(Algorithm::RsTrpo), 8).unwrap();
    t.iterate().unwrap();
    let ckpt = t.checkpoint();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("c.json");
    ckpt.save(&path).unwrap();
    let loaded = Checkpoint::load(&path).unwrap();
    let bits = |c: &Checkpoint| c.agents.iter().flat_map(|a| a.theta.iter().map(|v| v.to_bits())).collect::<Vec<_>>();
    assert_eq!(bits(&loaded), bits(&ckpt));
    assert_eq!(loaded, ckpt);

    let mut wrong = ckpt.clone();
    wrong.version = 99;
    assert!(matches!(Checkpoint::from_json(&wrong.to_json().unwrap()), Err(TrpoError::BadCheckpoint(_))));
    let mut short = ckpt.clone();
    short.agents.pop();
    assert!(Trainer::from_checkpoint(sc, quick_config(Algorithm::RsTrpo), short).is_err());
}

#[test]
fn accepted_steps_respect_the_trust_region() {
    let (sc, _) = common::scenario("toy", |_| {});
    let cfg = TrainConfig { iterations: 4, ..quick_config(Algorithm::RsTrpo) };
    let out = train(sc, &cfg, 1, |_, _| Ok(())).unwrap();
    for m in &out.metrics {
        for k in 0..m.accepted.len() {
            if m.accepted[k] {
                assert!(m.agent_kl[k] <= cfg.epsilon && m.surrogate[k] >= 0.0);
            }
        }
    }
}

#[test]
fn config_defaults_and_validation() {
    let cfg = TrainConfig::default();
    assert_eq!(cfg.algorithm, Algorithm::RsTrpo);
    assert_eq!(cfg.epsilon, 0.01);
    assert_eq!(cfg.batch_size, 64);
    assert!(cfg.validate().is_ok());
    for bad in [
        TrainConfig { alpha: 0.0, ..TrainConfig::default() },
        TrainConfig { epsilon: -1.0, ..TrainConfig::default() },
        TrainConfig { batch_size: 0, ..TrainConfig::default() },
        TrainConfig { gamma: 1.5, ..TrainConfig::default() },
        TrainConfig { seeds: vec![], ..TrainConfig::default() },
    ] {
        let err = bad.validate().unwrap_err();
        assert!(err.starts_with("run."), "{err}");
    }
    assert_eq!(TrainConfig { algorithm: Algorithm::Vpg, ..cfg.clone() }.risk_settings(), (1.0, CvarBaseline::None));
    assert_eq!("matrpo".parse::<Algorithm>().unwrap(), Algorithm::Matrpo);
    assert!("ppo".parse::<Algorithm>().is_err());
}
