//! Markov-game environment for a microgrid cluster on a radial feeder.
//!
//! Each hour the MG agents set their controllable generators, the DSO covers
//! the cluster's imbalance by merit order, and all agents receive a common
//! reward. An episode is one day of 24 hourly steps.

pub mod dispatch;
pub mod fleet;
pub mod uncertainty;

pub use dispatch::{
    dso_merit_order_dispatch, merit_order, DispatchRequest, DsoSettlement, MeritOrderError, MeritOrderSchedule,
    Resource, ResourceKind,
};
pub use fleet::{
    AssetFleet, BasePrices, ControllableGenerator, Microgrid, PenaltyRegime, PriceBook, RenewableUnit, StorageUnit,
    HOURS,
};
pub use uncertainty::{sample_net_load, ErrorModel, UncertainKind};

use crate::network::{NetworkError, NetworkTopology, NodalInjection, PowerFlowOptions};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use std::io::Write;
use std::sync::Arc;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum EnvError {
    #[error("bad scenario: {0}")]
    BadScenario(String),
    #[error("bad correlation matrix: {0}")]
    BadCorrelationMatrix(String),
    #[error("empty feasible set: {0}")]
    EmptyFeasibleSet(String),
    #[error("episode finished; call reset")]
    EpisodeFinished,
    #[error("dimension mismatch: {0}")]
    DimMismatch(String),
    #[error(transparent)]
    Network(#[from] NetworkError),
}

/// Power factor used to derive reactive output of controllable generators.
pub const GENERATOR_POWER_FACTOR: f64 = 0.95;

/// Scenario-level knobs applied on top of a network and fleet.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScenarioSettings {
    pub name: String,
    pub load_scale: f64,
    pub uncertainty_scale: f64,
    pub regime: PenaltyRegime,
    pub alpha_v: f64,
    pub beta_v: f64,
    /// Initial storage SOC as a fraction of each unit's SOC band.
    pub initial_soc: f64,
    /// Divisor applied to rewards before learning; `None` uses the peak
    /// hourly MG retail revenue.
    pub reward_scale: Option<f64>,
    pub power_flow: PowerFlowOptions,
}

impl Default for ScenarioSettings {
    fn default() -> Self {
        Self {
            name: "default".into(),
            load_scale: 1.0,
            uncertainty_scale: 1.0,
            regime: PenaltyRegime::A,
            alpha_v: 1.0,
            beta_v: 1.0,
            initial_soc: 0.5,
            reward_scale: None,
            power_flow: PowerFlowOptions::default(),
        }
    }
}

/// A validated, fully resolved scenario.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub settings: ScenarioSettings,
    pub topology: NetworkTopology,
    pub fleet: AssetFleet,
    pub prices: PriceBook,
    error_model: ErrorModel,
    mg_bus: Vec<usize>,
    reward_scale: f64,
}

impl Scenario {
    pub fn new(topology: NetworkTopology, fleet: AssetFleet, settings: ScenarioSettings) -> Result<Self, EnvError> {
        fleet.validate().map_err(EnvError::BadScenario)?;
        if !(settings.load_scale > 0.0) || !(settings.uncertainty_scale >= 0.0) {
            return Err(EnvError::BadScenario("load and uncertainty scales must be positive".into()));
        }
        if !(0.0..=1.0).contains(&settings.initial_soc) {
            return Err(EnvError::BadScenario("initial_soc must be a fraction in [0, 1]".into()));
        }
        let prices = PriceBook::resolve(&fleet.prices, settings.regime, settings.alpha_v, settings.beta_v);
        prices.validate().map_err(EnvError::BadScenario)?;

        let bus_of = |id: u32, what: &str| {
            topology
                .bus_index(id)
                .map_err(|_| EnvError::BadScenario(format!("{what} refers to bus {id}, not in the network")))
        };
        let mut mg_bus = Vec::with_capacity(fleet.mg.len());
        for m in &fleet.mg {
            let b = bus_of(m.bus, &m.name)?;
            if b == topology.slack_index() {
                return Err(EnvError::BadScenario(format!("{} cannot attach at the slack bus", m.name)));
            }
            mg_bus.push(b);
        }
        for g in &fleet.dso.cdg {
            bus_of(g.bus.unwrap_or(0), &g.name)?;
        }
        for r in &fleet.dso.renewable {
            bus_of(r.bus.unwrap_or(0), &r.name)?;
        }
        for s in &fleet.dso.storage {
            bus_of(s.bus, &s.name)?;
        }
        for m in &fleet.mg {
            for g in &m.cdg {
                let mid = g.midpoint();
                g.band(mid)?;
            }
        }

        let error_model = build_error_model(&fleet, settings.uncertainty_scale)?;
        let peak_load: f64 = fleet
            .mg
            .iter()
            .map(|m| (0..HOURS).map(|h| m.load_forecast_mw(h, settings.load_scale)).fold(0.0, f64::max))
            .sum();
        let reward_scale = match settings.reward_scale {
            Some(s) if s > 0.0 => s,
            Some(_) => return Err(EnvError::BadScenario("reward_scale must be positive".into())),
            None => (prices.mg_retail * peak_load).max(1.0),
        };
        Ok(Self { settings, topology, fleet, prices, error_model, mg_bus, reward_scale })
    }

    pub fn n_mg(&self) -> usize {
        self.fleet.mg.len()
    }

    /// Action dimension (controllable generators) of each MG.
    pub fn action_dims(&self) -> Vec<usize> {
        self.fleet.mg.iter().map(|m| m.cdg.len()).collect()
    }

    pub fn observation_dims(&self) -> Vec<usize> {
        self.fleet.mg.iter().map(|m| 5 + 2 * m.cdg.len()).collect()
    }

    pub fn global_state_dim(&self) -> usize {
        3 + 2 * self.n_mg()
            + self.fleet.mg.iter().map(|m| 2 * m.cdg.len()).sum::<usize>()
            + self.fleet.dso.storage.len()
    }

    pub fn reward_scale(&self) -> f64 {
        self.reward_scale
    }

    pub fn error_model(&self) -> &ErrorModel {
        &self.error_model
    }

    fn adn_load_forecast(&self, hour: usize) -> f64 {
        self.topology.total_base_load_mw() * self.settings.load_scale * self.fleet.dso.load_profile[hour]
    }

    /// Forecast rows for the uncertain units, in [`AssetFleet::uncertain_unit_names`] order.
    fn forecast_rows(&self) -> (Vec<Vec<f64>>, Vec<UncertainKind>) {
        let mut rows = vec![self.fleet.dso.load_profile.clone()];
        let mut kinds = vec![UncertainKind::Load];
        for m in &self.fleet.mg {
            rows.push((0..HOURS).map(|h| m.load_forecast_mw(h, self.settings.load_scale)).collect());
            kinds.push(UncertainKind::Load);
        }
        let renewables = self.fleet.mg.iter().flat_map(|m| m.renewable.iter()).chain(&self.fleet.dso.renewable);
        for r in renewables {
            rows.push((0..HOURS).map(|h| r.forecast_mw(h)).collect());
            kinds.push(UncertainKind::Renewable { capacity_mw: r.capacity_mw });
        }
        (rows, kinds)
    }
}

fn build_error_model(fleet: &AssetFleet, scale: f64) -> Result<ErrorModel, EnvError> {
    let names = fleet.uncertain_unit_names();
    let mut std = vec![fleet.dso.load_std];
    std.extend(fleet.mg.iter().map(|m| m.load_std));
    for m in &fleet.mg {
        std.extend(m.renewable.iter().map(|r| r.std));
    }
    std.extend(fleet.dso.renewable.iter().map(|r| r.std));
    let std = std.into_iter().map(|s| s * scale).collect();

    let mut groups = Vec::new();
    for g in &fleet.uncertainty.groups {
        let members: Vec<usize> = g
            .members
            .iter()
            .map(|m| names.iter().position(|n| n == m).expect("validated member"))
            .collect();
        let matrix = match (&g.matrix, g.rho) {
            (Some(m), None) => m.clone(),
            (None, Some(rho)) => uncertainty::equicorrelation(members.len(), rho),
            _ => {
                return Err(EnvError::BadCorrelationMatrix(format!(
                    "group {} needs exactly one of `matrix` or `rho`",
                    g.id
                )))
            }
        };
        groups.push((members, matrix));
    }
    ErrorModel::new(std, &groups, fleet.uncertainty.persistence)
}

/// Realized profiles for one episode.
#[derive(Debug, Clone, PartialEq)]
pub struct Realization {
    /// Multiplier on the rated ADN bus loads.
    pub adn_load_factor: Vec<f64>,
    pub mg_load_mw: Vec<Vec<f64>>,
    /// `[mg][unit][hour]`
    pub mg_renewable_mw: Vec<Vec<Vec<f64>>>,
    pub dso_renewable_mw: Vec<Vec<f64>>,
}

impl Realization {
    fn sample(scenario: &Scenario, seed: u64) -> Result<Self, EnvError> {
        let (rows, kinds) = scenario.forecast_rows();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut realized = scenario.error_model.realize(&rows, &kinds, &mut rng)?.into_iter();
        let adn_load_factor = realized.next().expect("adn row");
        let mg_load_mw = (0..scenario.n_mg()).map(|_| realized.next().expect("mg load row")).collect();
        let mg_renewable_mw = scenario
            .fleet
            .mg
            .iter()
            .map(|m| m.renewable.iter().map(|_| realized.next().expect("renewable row")).collect())
            .collect();
        let dso_renewable_mw = realized.collect();
        Ok(Self { adn_load_factor, mg_load_mw, mg_renewable_mw, dso_renewable_mw })
    }
}

/// What the agents and critic observe at the start of an hour.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnvState {
    /// Hour of day; 24 marks the post-terminal state.
    pub hour: usize,
    pub adn_load_forecast_mw: f64,
    pub mg_load_forecast_mw: Vec<f64>,
    pub mg_renewable_forecast_mw: Vec<f64>,
    /// Feasible output band `(lo, hi)` this hour per MG generator; `hi` is
    /// the available capacity given ramping from last hour's output.
    pub cdg_band_mw: Vec<Vec<(f64, f64)>>,
    pub cdg_previous_mw: Vec<Vec<f64>>,
    pub storage_soc_mwh: Vec<f64>,
    /// Balancing payment of the previous hour (RMB).
    pub previous_balancing_cost: f64,
}

impl EnvState {
    /// Observation slice of MG `k`.
    pub fn observation(&self, k: usize) -> Vec<f64> {
        let mut obs = vec![
            self.hour as f64,
            self.adn_load_forecast_mw,
            self.mg_load_forecast_mw[k],
            self.mg_renewable_forecast_mw[k],
        ];
        for &(lo, hi) in &self.cdg_band_mw[k] {
            obs.push(lo);
            obs.push(hi);
        }
        obs.push(self.previous_balancing_cost);
        obs
    }

    /// Full state vector for the centralized critic.
    pub fn global_features(&self) -> Vec<f64> {
        let mut x = vec![self.hour as f64, self.adn_load_forecast_mw];
        x.extend(&self.mg_load_forecast_mw);
        x.extend(&self.mg_renewable_forecast_mw);
        for bands in &self.cdg_band_mw {
            for &(lo, hi) in bands {
                x.push(lo);
                x.push(hi);
            }
        }
        x.extend(&self.storage_soc_mwh);
        x.push(self.previous_balancing_cost);
        x
    }
}

/// Per-MG generator commands in normalized units, one value in `[-1, 1]`
/// per controllable generator.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct JointAction {
    pub raw: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProjectedAction {
    pub p_mw: Vec<Vec<f64>>,
    pub q_mvar: Vec<Vec<f64>>,
}

/// Maps normalized commands onto each generator's capacity range and clips
/// them to this hour's ramp-feasible band.
pub fn project_action(
    raw: &JointAction,
    fleet: &AssetFleet,
    previous: &[Vec<f64>],
) -> Result<ProjectedAction, EnvError> {
    if raw.raw.len() != fleet.mg.len() || previous.len() != fleet.mg.len() {
        return Err(EnvError::DimMismatch(format!("joint action covers {} of {} MGs", raw.raw.len(), fleet.mg.len())));
    }
    let mut p_mw = Vec::with_capacity(fleet.mg.len());
    let mut q_mvar = Vec::with_capacity(fleet.mg.len());
    for (k, m) in fleet.mg.iter().enumerate() {
        if raw.raw[k].len() != m.cdg.len() || previous[k].len() != m.cdg.len() {
            return Err(EnvError::DimMismatch(format!("{}: expected {} commands", m.name, m.cdg.len())));
        }
        let mut ps = Vec::with_capacity(m.cdg.len());
        let mut qs = Vec::with_capacity(m.cdg.len());
        for (q, g) in m.cdg.iter().enumerate() {
            let r = raw.raw[k][q];
            if r.is_nan() {
                return Err(EnvError::DimMismatch(format!("{}: NaN command", g.name)));
            }
            let r = r.clamp(-1.0, 1.0);
            let target = g.p_min + 0.5 * (r + 1.0) * (g.p_max - g.p_min);
            let (lo, hi) = g.band(previous[k][q])?;
            let p = target.clamp(lo, hi);
            ps.push(p);
            qs.push(g.reactive(p, GENERATOR_POWER_FACTOR));
        }
        p_mw.push(ps);
        q_mvar.push(qs);
    }
    Ok(ProjectedAction { p_mw, q_mvar })
}

/// Total supply of each MG: its generators plus its realized renewables.
pub fn mg_supply(projected: &ProjectedAction, renewable_mw: &[f64]) -> Vec<f64> {
    projected
        .p_mw
        .iter()
        .zip(renewable_mw)
        .map(|(ps, r)| ps.iter().sum::<f64>() + r)
        .collect()
}

/// Terms of the common reward (RMB); `total` subtracts the costs from the
/// revenue in field order.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct RewardBreakdown {
    pub revenue: f64,
    pub balancing_cost: f64,
    pub gen_cost: f64,
    pub curtail_cost: f64,
    pub voltage_cost: f64,
}

impl RewardBreakdown {
    pub fn total(&self) -> f64 {
        self.revenue - self.balancing_cost - self.gen_cost - self.curtail_cost - self.voltage_cost
    }
}

/// Physical quantities logged for each step.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StepLog {
    pub mg_load_mw: Vec<f64>,
    pub mg_supply_mw: Vec<f64>,
    pub mg_renewable_mw: Vec<f64>,
    /// Energy delivered by the DSO to each MG.
    pub mg_imbalance_mw: Vec<f64>,
    pub curtailment_mw: f64,
    pub balancing_price: f64,
    pub hv_import_mw: f64,
    pub loss_mw: f64,
    pub voltage_max_dev: f64,
    pub voltage_penalty: f64,
    pub min_voltage_pu: f64,
    pub dso_objective: f64,
    pub balance_residual_mw: f64,
    pub dso_generator_mw: Vec<f64>,
    pub storage_mw: Vec<f64>,
}

impl StepLog {
    pub fn renewable_total(&self) -> f64 {
        self.mg_renewable_mw.iter().sum()
    }

    pub fn supply_total(&self) -> f64 {
        self.mg_supply_mw.iter().sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Transition {
    pub state: EnvState,
    pub observations: Vec<Vec<f64>>,
    pub action: JointAction,
    pub projected: ProjectedAction,
    /// Common reward in RMB.
    pub reward: f64,
    pub components: RewardBreakdown,
    pub log: StepLog,
    pub next_state: EnvState,
    /// Per-MG log-probability of `action` under the behaviour policy;
    /// filled in by the trainer.
    pub log_probs: Vec<f64>,
    pub terminal: bool,
}

/// One environment instance; single-writer, one episode at a time.
#[derive(Debug, Clone)]
pub struct MgcEnv {
    scenario: Arc<Scenario>,
    realization: Realization,
    state: EnvState,
    dso_previous: Vec<f64>,
}

impl MgcEnv {
    /// Starts an episode: generators at their midpoints, storage at the
    /// scenario's initial SOC, all 24 hours of uncertainty pre-sampled.
    pub fn reset(scenario: Arc<Scenario>, seed: u64) -> Result<Self, EnvError> {
        let realization = Realization::sample(&scenario, seed)?;
        let cdg_previous: Vec<Vec<f64>> =
            scenario.fleet.mg.iter().map(|m| m.cdg.iter().map(|g| g.midpoint()).collect()).collect();
        let dso_previous = scenario.fleet.dso.cdg.iter().map(|g| g.midpoint()).collect();
        let soc = scenario
            .fleet
            .dso
            .storage
            .iter()
            .map(|s| s.soc_min + scenario.settings.initial_soc * (s.soc_max - s.soc_min))
            .collect();
        let state = observe(&scenario, 0, cdg_previous, soc, 0.0)?;
        Ok(Self { scenario, realization, state, dso_previous })
    }

    pub fn state(&self) -> &EnvState {
        &self.state
    }

    pub fn scenario(&self) -> &Arc<Scenario> {
        &self.scenario
    }

    pub fn realization(&self) -> &Realization {
        &self.realization
    }

    pub fn step(&mut self, action: &JointAction) -> Result<Transition, EnvError> {
        let sc = Arc::clone(&self.scenario);
        let hour = self.state.hour;
        if hour >= HOURS {
            return Err(EnvError::EpisodeFinished);
        }
        let topo = &sc.topology;
        let prices = &sc.prices;

        let projected = project_action(action, &sc.fleet, &self.state.cdg_previous_mw)?;
        let renewable: Vec<f64> =
            self.realization.mg_renewable_mw.iter().map(|units| units.iter().map(|u| u[hour]).sum()).collect();
        let supply = mg_supply(&projected, &renewable);
        let load: Vec<f64> = self.realization.mg_load_mw.iter().map(|l| l[hour]).collect();
        let shortfall: Vec<f64> = supply.iter().zip(&load).map(|(s, l)| (l - s).max(0.0)).collect();

        // Everything the DSO does not dispatch.
        let mut base = NodalInjection::from_base_loads(topo, sc.settings.load_scale * self.realization.adn_load_factor[hour]);
        let mut curtailable: Vec<f64> = base.p_mw.iter().map(|p| -p).collect();
        for (k, m) in sc.fleet.mg.iter().enumerate() {
            let bus = sc.mg_bus[k];
            let q_gen: f64 = projected.q_mvar[k].iter().sum();
            let q_load = load[k] * fleet::tan_phi(m.load_power_factor);
            base.add(bus, supply[k] - load[k], q_gen - q_load);
            curtailable[bus] += shortfall[k];
        }
        for (r, realized) in sc.fleet.dso.renewable.iter().zip(&self.realization.dso_renewable_mw) {
            let bus = topo.bus_index(r.bus.expect("validated"))?;
            base.add(bus, realized[hour], 0.0);
        }

        let request = DispatchRequest {
            base,
            curtailable_mw: curtailable,
            previous_output: &self.dso_previous,
            soc: &self.state.storage_soc_mwh,
            power_factor: GENERATOR_POWER_FACTOR,
        };
        let settlement = dso_merit_order_dispatch(topo, &sc.fleet.dso, prices, &request, &sc.settings.power_flow)?;

        let delivered: Vec<f64> = shortfall.iter().map(|s| s * (1.0 - settlement.shed_fraction)).collect();
        let total_load: f64 = load.iter().sum();
        let total_supply: f64 = supply.iter().sum();
        let total_delivered: f64 = delivered.iter().sum();
        let curtailment_mw = if settlement.shed_fraction > 0.0 {
            (total_load - total_supply.min(total_load) - total_delivered).max(0.0)
        } else {
            0.0
        };

        let served_own: f64 = supply.iter().zip(&load).map(|(s, l)| s.min(*l)).sum();
        let gen_cost: f64 = sc
            .fleet
            .mg
            .iter()
            .zip(&projected.p_mw)
            .map(|(m, ps)| m.cdg.iter().zip(ps).map(|(g, p)| g.cost * p).sum::<f64>())
            .sum();
        let components = RewardBreakdown {
            revenue: prices.mg_retail * served_own,
            balancing_cost: settlement.balancing_price * total_delivered,
            gen_cost,
            curtail_cost: prices.curtailment * curtailment_mw,
            voltage_cost: if prices.reflect_voltage_cost {
                prices.voltage_weight * settlement.voltage_penalty
            } else {
                0.0
            },
        };
        let reward = components.total();

        let log = StepLog {
            mg_load_mw: load,
            mg_supply_mw: supply,
            mg_renewable_mw: renewable,
            mg_imbalance_mw: delivered,
            curtailment_mw,
            balancing_price: settlement.balancing_price,
            hv_import_mw: settlement.hv_import_mw,
            loss_mw: settlement.solution.loss_mw,
            voltage_max_dev: settlement.voltage_max_dev,
            voltage_penalty: settlement.voltage_penalty,
            min_voltage_pu: settlement.solution.min_voltage(),
            dso_objective: settlement.objective,
            balance_residual_mw: settlement.balance_residual_mw,
            dso_generator_mw: settlement.generator_mw.clone(),
            storage_mw: settlement.storage_mw.clone(),
        };

        let next_state = observe(
            &sc,
            hour + 1,
            projected.p_mw.clone(),
            settlement.next_soc.clone(),
            components.balancing_cost,
        )?;
        let state = std::mem::replace(&mut self.state, next_state.clone());
        self.dso_previous = settlement.generator_mw;
        let observations = (0..sc.n_mg()).map(|k| state.observation(k)).collect();
        Ok(Transition {
            state,
            observations,
            action: action.clone(),
            projected,
            reward,
            components,
            log,
            next_state,
            log_probs: Vec::new(),
            terminal: hour + 1 == HOURS,
        })
    }
}

fn observe(
    sc: &Scenario,
    hour: usize,
    cdg_previous: Vec<Vec<f64>>,
    soc: Vec<f64>,
    previous_balancing_cost: f64,
) -> Result<EnvState, EnvError> {
    let n = sc.n_mg();
    let (adn, mg_load, mg_ren) = if hour < HOURS {
        (
            sc.adn_load_forecast(hour),
            sc.fleet.mg.iter().map(|m| m.load_forecast_mw(hour, sc.settings.load_scale)).collect(),
            sc.fleet.mg.iter().map(|m| m.renewable_forecast_mw(hour)).collect(),
        )
    } else {
        (0.0, vec![0.0; n], vec![0.0; n])
    };
    let mut bands = Vec::with_capacity(n);
    for (m, prev) in sc.fleet.mg.iter().zip(&cdg_previous) {
        bands.push(m.cdg.iter().zip(prev).map(|(g, &p)| g.band(p)).collect::<Result<Vec<_>, _>>()?);
    }
    Ok(EnvState {
        hour,
        adn_load_forecast_mw: adn,
        mg_load_forecast_mw: mg_load,
        mg_renewable_forecast_mw: mg_ren,
        cdg_band_mw: bands,
        cdg_previous_mw: cdg_previous,
        storage_soc_mwh: soc,
        previous_balancing_cost,
    })
}

pub const TRANSITION_COLUMNS: [&str; 12] = [
    "episode",
    "t",
    "reward",
    "revenue",
    "balancing_cost",
    "gen_cost",
    "curtail_cost",
    "voltage_max_dev",
    "hv_import",
    "voltage_cost",
    "renewable_mw",
    "mg_supply_mw",
];

/// One row of the transition log.
#[derive(Debug, Clone, PartialEq, Serialize, serde::Deserialize)]
pub struct TransitionRecord {
    pub episode: usize,
    pub t: usize,
    pub reward: f64,
    pub revenue: f64,
    pub balancing_cost: f64,
    pub gen_cost: f64,
    pub curtail_cost: f64,
    pub voltage_max_dev: f64,
    pub hv_import: f64,
    pub voltage_cost: f64,
    pub renewable_mw: f64,
    pub mg_supply_mw: f64,
}

impl TransitionRecord {
    pub fn new(episode: usize, tr: &Transition) -> Self {
        Self {
            episode,
            t: tr.state.hour,
            reward: tr.reward,
            revenue: tr.components.revenue,
            balancing_cost: tr.components.balancing_cost,
            gen_cost: tr.components.gen_cost,
            curtail_cost: tr.components.curtail_cost,
            voltage_max_dev: tr.log.voltage_max_dev,
            hv_import: tr.log.hv_import_mw,
            voltage_cost: tr.components.voltage_cost,
            renewable_mw: tr.log.renewable_total(),
            mg_supply_mw: tr.log.supply_total(),
        }
    }
}

pub fn write_transition_log<W: Write>(out: W, records: &[TransitionRecord]) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    if records.is_empty() {
        w.write_record(TRANSITION_COLUMNS)?;
    }
    for r in records {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_transition_log<R: std::io::Read>(input: R) -> csv::Result<Vec<TransitionRecord>> {
    csv::Reader::from_reader(input).deserialize().collect()
}
