//! Asset fleet and price data, as read from a fleet file.

use super::EnvError;
use serde::{Deserialize, Serialize};
use std::path::Path;

pub const HOURS: usize = 24;

/// Reactive/active ratio for a 0.95 lagging power factor.
pub fn tan_phi(power_factor: f64) -> f64 {
    (1.0 - power_factor * power_factor).sqrt() / power_factor
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControllableGenerator {
    pub name: String,
    /// Only used for DSO units; MG units sit at their microgrid's bus.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bus: Option<u32>,
    pub p_min: f64,
    pub p_max: f64,
    pub q_min: f64,
    pub q_max: f64,
    /// Largest allowed decrease per hour (MW, <= 0).
    pub ramp_down: f64,
    /// Largest allowed increase per hour (MW, >= 0).
    pub ramp_up: f64,
    /// Marginal cost (RMB/MWh).
    pub cost: f64,
}

impl ControllableGenerator {
    pub fn midpoint(&self) -> f64 {
        0.5 * (self.p_min + self.p_max)
    }

    /// Feasible output band for this hour given last hour's output.
    pub fn band(&self, previous: f64) -> Result<(f64, f64), EnvError> {
        let lo = self.p_min.max(previous + self.ramp_down);
        let hi = self.p_max.min(previous + self.ramp_up);
        if lo > hi {
            return Err(EnvError::EmptyFeasibleSet(format!(
                "{}: ramp band [{}, {}] misses capacity band [{}, {}]",
                self.name,
                previous + self.ramp_down,
                previous + self.ramp_up,
                self.p_min,
                self.p_max
            )));
        }
        Ok((lo, hi))
    }

    /// Reactive output at constant power factor, clipped to the Q limits.
    pub fn reactive(&self, p: f64, power_factor: f64) -> f64 {
        (p * tan_phi(power_factor)).clamp(self.q_min, self.q_max)
    }

    fn validate(&self) -> Result<(), String> {
        let finite = [self.p_min, self.p_max, self.q_min, self.q_max, self.ramp_down, self.ramp_up, self.cost]
            .iter()
            .all(|v| v.is_finite());
        if !finite {
            return Err(format!("{}: non-finite generator data", self.name));
        }
        if self.p_min > self.p_max || self.q_min > self.q_max {
            return Err(format!("{}: min limit above max limit", self.name));
        }
        if self.ramp_down > 0.0 || self.ramp_up < 0.0 {
            return Err(format!("{}: ramp band must contain 0", self.name));
        }
        if self.cost < 0.0 {
            return Err(format!("{}: negative cost", self.name));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RenewableUnit {
    pub name: String,
    #[serde(default)]
    pub kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bus: Option<u32>,
    pub capacity_mw: f64,
    /// Hourly forecast as a fraction of capacity.
    pub profile: Vec<f64>,
    /// Forecast-error standard deviation as a fraction of the forecast.
    pub std: f64,
}

impl RenewableUnit {
    pub fn forecast_mw(&self, hour: usize) -> f64 {
        self.profile[hour] * self.capacity_mw
    }

    fn validate(&self) -> Result<(), String> {
        if self.profile.len() != HOURS {
            return Err(format!("{}: profile needs {HOURS} values", self.name));
        }
        if !(self.capacity_mw >= 0.0) || self.profile.iter().any(|v| !(*v >= 0.0 && *v <= 1.0)) {
            return Err(format!("{}: forecast must lie in [0, capacity]", self.name));
        }
        if !(self.std >= 0.0) {
            return Err(format!("{}: negative error std", self.name));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StorageUnit {
    pub name: String,
    pub bus: u32,
    /// Charging limit (MW, <= 0).
    pub p_min: f64,
    /// Discharging limit (MW, >= 0).
    pub p_max: f64,
    pub soc_min: f64,
    pub soc_max: f64,
    /// Round-trip efficiency in (0, 1].
    pub efficiency: f64,
    pub cost: f64,
}

impl StorageUnit {
    fn leg_efficiency(&self) -> f64 {
        self.efficiency.sqrt()
    }

    /// Largest discharge this hour (MW) at state of charge `soc`.
    pub fn max_discharge(&self, soc: f64) -> f64 {
        self.p_max.min(((soc - self.soc_min) * self.leg_efficiency()).max(0.0))
    }

    /// Largest charge this hour (MW, positive number).
    pub fn max_charge(&self, soc: f64) -> f64 {
        (-self.p_min).min(((self.soc_max - soc) / self.leg_efficiency()).max(0.0))
    }

    /// State of charge after one hour at output `p` (discharge positive).
    pub fn next_soc(&self, soc: f64, p: f64) -> f64 {
        let eta = self.leg_efficiency();
        let next = if p >= 0.0 { soc - p / eta } else { soc - p * eta };
        next.clamp(self.soc_min, self.soc_max)
    }

    fn validate(&self) -> Result<(), String> {
        if self.p_min > 0.0 || self.p_max < 0.0 {
            return Err(format!("{}: power band must contain 0", self.name));
        }
        if !(self.soc_min >= 0.0 && self.soc_min <= self.soc_max) {
            return Err(format!("{}: bad SOC band", self.name));
        }
        if !(self.efficiency > 0.0 && self.efficiency <= 1.0) {
            return Err(format!("{}: efficiency must be in (0, 1]", self.name));
        }
        if self.cost < 0.0 {
            return Err(format!("{}: negative cost", self.name));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Microgrid {
    pub name: String,
    /// Point of attachment to the distribution network.
    pub bus: u32,
    pub load_rated_mw: f64,
    /// Hourly load as a fraction of the rated load.
    pub load_profile: Vec<f64>,
    pub load_std: f64,
    #[serde(default = "default_power_factor")]
    pub load_power_factor: f64,
    pub cdg: Vec<ControllableGenerator>,
    #[serde(default)]
    pub renewable: Vec<RenewableUnit>,
}

fn default_power_factor() -> f64 {
    0.95
}

impl Microgrid {
    pub fn load_forecast_mw(&self, hour: usize, load_scale: f64) -> f64 {
        self.load_rated_mw * load_scale * self.load_profile[hour]
    }

    pub fn renewable_forecast_mw(&self, hour: usize) -> f64 {
        self.renewable.iter().map(|r| r.forecast_mw(hour)).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DsoFleet {
    #[serde(default)]
    pub cdg: Vec<ControllableGenerator>,
    #[serde(default)]
    pub renewable: Vec<RenewableUnit>,
    #[serde(default)]
    pub storage: Vec<StorageUnit>,
    /// Hourly multiplier on the network's rated bus loads.
    pub load_profile: Vec<f64>,
    pub load_std: f64,
}

/// Prices shared by every scenario that uses the fleet. Penalty weights that
/// depend on the scenario's regime are filled in by [`PriceBook::resolve`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BasePrices {
    /// MG retail price to its end users (RMB/MWh).
    pub mg_retail: f64,
    /// DSO retail price (RMB/MWh).
    pub adn_retail: f64,
    /// HV-grid balancing price (RMB/MWh).
    pub hv_exchange: f64,
    /// Cost of network losses (RMB/MWh).
    pub loss: f64,
    /// Load curtailment penalty (RMB/MWh).
    pub curtailment: f64,
    /// Markup of the balancing charge over the marginal unit's cost.
    #[serde(default = "default_uplift")]
    pub uplift: f64,
    /// Optional cap on HV import (MW); none means unbounded.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hv_import_max_mw: Option<f64>,
}

fn default_uplift() -> f64 {
    0.1
}

/// The two penalty configurations studied for the microgrid cluster.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PenaltyRegime {
    /// Balancing 500 RMB/MW, voltage 100.
    A,
    /// Balancing 100 RMB/MW, voltage 1000; voltage cost also reaches the MGs.
    B,
}

impl PenaltyRegime {
    pub fn balancing_penalty(self) -> f64 {
        match self {
            PenaltyRegime::A => 500.0,
            PenaltyRegime::B => 100.0,
        }
    }

    pub fn voltage_weight(self) -> f64 {
        match self {
            PenaltyRegime::A => 100.0,
            PenaltyRegime::B => 1000.0,
        }
    }

    pub fn reflects_voltage_cost(self) -> bool {
        matches!(self, PenaltyRegime::B)
    }
}

impl std::str::FromStr for PenaltyRegime {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "A" | "a" => Ok(PenaltyRegime::A),
            "B" | "b" => Ok(PenaltyRegime::B),
            other => Err(format!("unknown penalty regime {other:?} (expected A or B)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriceBook {
    pub mg_retail: f64,
    pub adn_retail: f64,
    pub hv_exchange: f64,
    pub loss: f64,
    pub curtailment: f64,
    pub uplift: f64,
    pub hv_import_max_mw: Option<f64>,
    /// Per-MW adder on the balancing charge.
    pub balancing_penalty: f64,
    /// RMB per unit of voltage-quality penalty.
    pub voltage_weight: f64,
    pub alpha_v: f64,
    pub beta_v: f64,
    /// Whether the voltage cost is also subtracted from the MGs' reward.
    pub reflect_voltage_cost: bool,
}

impl PriceBook {
    pub fn resolve(base: &BasePrices, regime: PenaltyRegime, alpha_v: f64, beta_v: f64) -> Self {
        Self {
            mg_retail: base.mg_retail,
            adn_retail: base.adn_retail,
            hv_exchange: base.hv_exchange,
            loss: base.loss,
            curtailment: base.curtailment,
            uplift: base.uplift,
            hv_import_max_mw: base.hv_import_max_mw,
            balancing_penalty: regime.balancing_penalty(),
            voltage_weight: regime.voltage_weight(),
            alpha_v,
            beta_v,
            reflect_voltage_cost: regime.reflects_voltage_cost(),
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        let named = [
            ("mg_retail", self.mg_retail),
            ("adn_retail", self.adn_retail),
            ("hv_exchange", self.hv_exchange),
            ("loss", self.loss),
            ("curtailment", self.curtailment),
            ("uplift", self.uplift),
            ("balancing_penalty", self.balancing_penalty),
            ("voltage_weight", self.voltage_weight),
            ("alpha_v", self.alpha_v),
            ("beta_v", self.beta_v),
        ];
        for (name, v) in named {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(format!("prices.{name} must be a finite non-negative number, got {v}"));
            }
        }
        if let Some(cap) = self.hv_import_max_mw {
            if !(cap >= 0.0) {
                return Err("prices.hv_import_max_mw must be non-negative".into());
            }
        }
        Ok(())
    }
}

/// A correlation block over named uncertain units. Either a full matrix or a
/// single equicorrelation coefficient.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorrelationGroupSpec {
    pub id: String,
    pub members: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rho: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub matrix: Option<Vec<Vec<f64>>>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UncertaintySpec {
    /// Hour-to-hour persistence of normalized errors (AR(1) coefficient).
    #[serde(default)]
    pub persistence: f64,
    #[serde(default)]
    pub groups: Vec<CorrelationGroupSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AssetFleet {
    #[serde(default)]
    pub name: String,
    #[serde(default)]
    pub note: String,
    pub prices: BasePrices,
    #[serde(default)]
    pub uncertainty: UncertaintySpec,
    pub dso: DsoFleet,
    pub mg: Vec<Microgrid>,
}

impl AssetFleet {
    pub fn from_toml_str(text: &str) -> Result<Self, EnvError> {
        let fleet: Self = toml::from_str(text).map_err(|e| EnvError::BadScenario(format!("fleet file: {e}")))?;
        fleet.validate().map_err(EnvError::BadScenario)?;
        Ok(fleet)
    }

    pub fn load(path: &Path) -> Result<Self, EnvError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| EnvError::BadScenario(format!("{}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn n_mg(&self) -> usize {
        self.mg.len()
    }

    /// Names of uncertain quantities in sampling order: the ADN load factor,
    /// each MG load, each MG renewable, each DSO renewable.
    pub fn uncertain_unit_names(&self) -> Vec<String> {
        let mut names = vec!["adn_load".to_string()];
        names.extend(self.mg.iter().map(|m| format!("{}_load", m.name)));
        for m in &self.mg {
            names.extend(m.renewable.iter().map(|r| r.name.clone()));
        }
        names.extend(self.dso.renewable.iter().map(|r| r.name.clone()));
        names
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.mg.is_empty() {
            return Err("fleet needs at least one microgrid".into());
        }
        if self.dso.load_profile.len() != HOURS || self.dso.load_profile.iter().any(|v| !(*v >= 0.0)) {
            return Err(format!("dso.load_profile needs {HOURS} non-negative values"));
        }
        if !(self.dso.load_std >= 0.0) {
            return Err("dso.load_std must be non-negative".into());
        }
        for g in &self.dso.cdg {
            g.validate()?;
            if g.bus.is_none() {
                return Err(format!("{}: DSO generator needs a bus", g.name));
            }
        }
        for r in &self.dso.renewable {
            r.validate()?;
            if r.bus.is_none() {
                return Err(format!("{}: DSO renewable needs a bus", r.name));
            }
        }
        for s in &self.dso.storage {
            s.validate()?;
        }
        for m in &self.mg {
            if m.cdg.is_empty() {
                return Err(format!("{}: a microgrid needs at least one controllable generator", m.name));
            }
            if m.load_profile.len() != HOURS || m.load_profile.iter().any(|v| !(*v >= 0.0)) {
                return Err(format!("{}: load_profile needs {HOURS} non-negative values", m.name));
            }
            if !(m.load_rated_mw >= 0.0 && m.load_std >= 0.0) {
                return Err(format!("{}: load must be non-negative", m.name));
            }
            if !(m.load_power_factor > 0.0 && m.load_power_factor <= 1.0) {
                return Err(format!("{}: load power factor must be in (0, 1]", m.name));
            }
            for g in &m.cdg {
                g.validate()?;
            }
            for r in &m.renewable {
                r.validate()?;
            }
        }
        let base = &self.prices;
        for (name, v) in [
            ("mg_retail", base.mg_retail),
            ("adn_retail", base.adn_retail),
            ("hv_exchange", base.hv_exchange),
            ("loss", base.loss),
            ("curtailment", base.curtailment),
            ("uplift", base.uplift),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(format!("prices.{name} must be a finite non-negative number, got {v}"));
            }
        }
        let names = self.uncertain_unit_names();
        if !(self.uncertainty.persistence >= 0.0 && self.uncertainty.persistence < 1.0) {
            return Err("uncertainty.persistence must be in [0, 1)".into());
        }
        for g in &self.uncertainty.groups {
            for member in &g.members {
                if !names.contains(member) {
                    return Err(format!("correlation group {}: unknown unit {member}", g.id));
                }
            }
        }
        Ok(())
    }
}
