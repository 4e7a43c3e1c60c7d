use super::{catalog, HarnessError};
use crate::env::{AssetFleet, PenaltyRegime, Scenario, ScenarioSettings};
use crate::network::{NetworkFile, NetworkTopology, PowerFlowOptions, ShuntConvention};
use crate::trpo::TrainConfig;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

fn one() -> f64 {
    1.0
}
fn half() -> f64 {
    0.5
}

/// `[scenario]` section of a config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub name: String,
    /// Network file path, or `builtin:<id>`.
    pub network: String,
    /// Fleet file path, or `builtin:<id>`.
    pub fleet: String,
    pub load_scale: f64,
    pub uncertainty_scale: f64,
    pub regime: PenaltyRegime,
    #[serde(default = "one")]
    pub alpha_v: f64,
    #[serde(default = "one")]
    pub beta_v: f64,
    #[serde(default = "half")]
    pub initial_soc: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reward_scale: Option<f64>,
    #[serde(default)]
    pub shunt: ShuntConvention,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub scenario: ScenarioConfig,
    #[serde(default)]
    pub run: TrainConfig,
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |field: &str, reason: &str| {
            Err(HarnessError::Validation { field: format!("scenario.{field}"), reason: reason.into() })
        };
        if self.name.trim().is_empty() {
            return bad("name", "must not be empty");
        }
        if !(self.load_scale > 0.0 && self.load_scale.is_finite()) {
            return bad("load_scale", "must be positive");
        }
        if !(self.uncertainty_scale > 0.0 && self.uncertainty_scale.is_finite()) {
            return bad("uncertainty_scale", "must be positive");
        }
        if !(self.alpha_v >= 0.0) {
            return bad("alpha_v", "must be non-negative");
        }
        if !(self.beta_v >= 0.0) {
            return bad("beta_v", "must be non-negative");
        }
        if !(0.0..=1.0).contains(&self.initial_soc) {
            return bad("initial_soc", "must be a fraction in [0, 1]");
        }
        if let Some(s) = self.reward_scale {
            if !(s > 0.0) {
                return bad("reward_scale", "must be positive");
            }
        }
        Ok(())
    }

    pub fn settings(&self) -> ScenarioSettings {
        ScenarioSettings {
            name: self.name.clone(),
            load_scale: self.load_scale,
            uncertainty_scale: self.uncertainty_scale,
            regime: self.regime,
            alpha_v: self.alpha_v,
            beta_v: self.beta_v,
            initial_soc: self.initial_soc,
            reward_scale: self.reward_scale,
            power_flow: PowerFlowOptions { shunt: self.shunt, ..Default::default() },
        }
    }
}

/// Network and fleet data a scenario refers to, fully loaded.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioData {
    pub network: NetworkFile,
    pub fleet: AssetFleet,
}

fn resolve(reference: &str, base_dir: &Path) -> Result<(String, PathBuf), HarnessError> {
    if let Some(id) = reference.strip_prefix("builtin:") {
        let text = catalog::builtin_data(id)
            .ok_or_else(|| HarnessError::Validation { field: "reference".into(), reason: format!("no bundled data `{id}`") })?;
        Ok((text.to_string(), PathBuf::from(reference)))
    } else {
        let path = base_dir.join(reference);
        let text = std::fs::read_to_string(&path).map_err(|e| HarnessError::Io { path: path.clone(), source: e })?;
        Ok((text, path))
    }
}

impl ScenarioData {
    pub fn load(cfg: &ScenarioConfig, base_dir: &Path) -> Result<Self, HarnessError> {
        let (net_text, net_path) = resolve(&cfg.network, base_dir)?;
        let network: NetworkFile = toml::from_str(&net_text)
            .map_err(|e| HarnessError::Parse { path: net_path, message: e.to_string() })?;
        let (fleet_text, fleet_path) = resolve(&cfg.fleet, base_dir)?;
        let fleet: AssetFleet = toml::from_str(&fleet_text)
            .map_err(|e| HarnessError::Parse { path: fleet_path, message: e.to_string() })?;
        Ok(Self { network, fleet })
    }

    pub fn build(&self, cfg: &ScenarioConfig) -> Result<Scenario, HarnessError> {
        cfg.validate()?;
        if let Err(reason) = self.fleet.validate() {
            return Err(HarnessError::from_fleet_reason(reason));
        }
        let topology = NetworkTopology::new(self.network.clone())?;
        Ok(Scenario::new(topology, self.fleet.clone(), cfg.settings())?)
    }
}

impl ConfigFile {
    pub fn parse(text: &str, origin: &Path) -> Result<Self, HarnessError> {
        let cfg: ConfigFile =
            toml::from_str(text).map_err(|e| HarnessError::Parse { path: origin.to_path_buf(), message: e.to_string() })?;
        cfg.scenario.validate()?;
        cfg.run
            .validate()
            .map_err(|reason| HarnessError::Validation { field: field_of(&reason), reason })?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}

fn field_of(reason: &str) -> String {
    reason.split(':').next().unwrap_or("").to_string()
}

/// Reads and validates a config file together with the data it references.
pub fn load_config(path: &Path) -> Result<(ScenarioConfig, TrainConfig, ScenarioData), HarnessError> {
    let text = std::fs::read_to_string(path).map_err(|e| HarnessError::Io { path: path.to_path_buf(), source: e })?;
    let cfg = ConfigFile::parse(&text, path)?;
    let base = path.parent().unwrap_or(Path::new("."));
    let data = ScenarioData::load(&cfg.scenario, base)?;
    data.build(&cfg.scenario)?;
    Ok((cfg.scenario, cfg.run, data))
}

/// Like [`load_config`] for a bundled scenario id or a file path.
pub fn load_scenario_ref(reference: &str) -> Result<(ScenarioConfig, TrainConfig, ScenarioData), HarnessError> {
    match catalog::builtin_scenario(reference) {
        Some(text) => {
            let origin = PathBuf::from(format!("builtin:{reference}"));
            let cfg = ConfigFile::parse(text, &origin)?;
            let data = ScenarioData::load(&cfg.scenario, Path::new("."))?;
            data.build(&cfg.scenario)?;
            Ok((cfg.scenario, cfg.run, data))
        }
        None => load_config(Path::new(reference)),
    }
}
