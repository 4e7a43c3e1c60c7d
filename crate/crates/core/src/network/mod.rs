//! Radial distribution network model and DistFlow power flow.
//!
//! All network math runs in per-unit on the topology's MVA base. Injections,
//! flows and losses cross this module's boundary in MW / MVAr.

mod powerflow;

pub use powerflow::{
    solve_power_flow, sweep, total_loss, violation_report, voltage_quality_penalty,
    NodalInjection, PowerFlowOptions, PowerFlowSolution, ShuntConvention, Violation,
    ViolationReport,
};

use serde::{Deserialize, Serialize};
use std::collections::{HashMap, VecDeque};
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum NetworkError {
    #[error("network is not radial: {0}")]
    NonRadial(String),
    #[error("invalid network data: {0}")]
    Invalid(String),
    #[error("unknown bus id {0}")]
    UnknownBus(u32),
    #[error("injection vector has {got} entries, network has {expected} buses")]
    InjectionMismatch { expected: usize, got: usize },
    #[error("power flow diverged after {iterations} iterations: {detail}")]
    Diverged { iterations: usize, detail: String },
    #[error("power flow solution did not converge")]
    NotConverged,
    #[error("failed to read network file: {0}")]
    Io(#[from] std::io::Error),
    #[error("failed to parse network file: {0}")]
    Parse(String),
}

/// A bus with its rated (unscaled) base load.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BusData {
    pub id: u32,
    #[serde(default)]
    pub p_mw: f64,
    #[serde(default)]
    pub q_mvar: f64,
}

/// A line as written in the network file. `from` is the upstream end.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LineData {
    pub from: u32,
    pub to: u32,
    pub r_pu: f64,
    pub x_pu: f64,
    #[serde(default)]
    pub b_pu: f64,
}

/// On-disk layout of a network file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkFile {
    #[serde(default)]
    pub name: String,
    pub slack_bus: u32,
    pub base_mva: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub base_kv: Option<f64>,
    pub v_limits: [f64; 2],
    pub buses: Vec<BusData>,
    pub lines: Vec<LineData>,
}

impl NetworkFile {
    pub fn from_toml_str(text: &str) -> Result<Self, NetworkError> {
        toml::from_str(text).map_err(|e| NetworkError::Parse(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, NetworkError> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }
}

/// A validated radial network, oriented away from the slack bus.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkTopology {
    data: NetworkFile,
    index: HashMap<u32, usize>,
    slack: usize,
    /// Line feeding each bus from upstream; `None` for the slack bus.
    upstream_line: Vec<Option<usize>>,
    /// Downstream buses of each bus.
    downstream: Vec<Vec<usize>>,
    /// (upstream bus, downstream bus) per line, after orientation.
    line_ends: Vec<(usize, usize)>,
    /// Buses in breadth-first order from the slack bus.
    order: Vec<usize>,
}

impl NetworkTopology {
    pub fn new(data: NetworkFile) -> Result<Self, NetworkError> {
        let [v_min, v_max] = data.v_limits;
        if !(v_min > 0.0 && v_min < v_max) {
            return Err(NetworkError::Invalid(format!(
                "voltage limits must satisfy 0 < v_min < v_max, got [{v_min}, {v_max}]"
            )));
        }
        if !(data.base_mva > 0.0) {
            return Err(NetworkError::Invalid("base_mva must be positive".into()));
        }
        let mut index = HashMap::with_capacity(data.buses.len());
        for (i, bus) in data.buses.iter().enumerate() {
            if index.insert(bus.id, i).is_some() {
                return Err(NetworkError::Invalid(format!("duplicate bus id {}", bus.id)));
            }
            if !bus.p_mw.is_finite() || !bus.q_mvar.is_finite() {
                return Err(NetworkError::Invalid(format!("bus {} has non-finite load", bus.id)));
            }
        }
        let slack = *index
            .get(&data.slack_bus)
            .ok_or(NetworkError::UnknownBus(data.slack_bus))?;
        let n = data.buses.len();
        if data.lines.len() + 1 != n {
            return Err(NetworkError::NonRadial(format!(
                "{} lines for {} buses (a tree needs {})",
                data.lines.len(),
                n,
                n.saturating_sub(1)
            )));
        }

        let mut adjacency: Vec<Vec<(usize, usize)>> = vec![Vec::new(); n];
        for (l, line) in data.lines.iter().enumerate() {
            if !(line.r_pu >= 0.0 && line.x_pu >= 0.0 && line.b_pu.is_finite()) {
                return Err(NetworkError::Invalid(format!(
                    "line {}-{} needs r_pu >= 0, x_pu >= 0 and finite b_pu",
                    line.from, line.to
                )));
            }
            let a = *index.get(&line.from).ok_or(NetworkError::UnknownBus(line.from))?;
            let b = *index.get(&line.to).ok_or(NetworkError::UnknownBus(line.to))?;
            if a == b {
                return Err(NetworkError::NonRadial(format!("self-loop at bus {}", line.from)));
            }
            adjacency[a].push((b, l));
            adjacency[b].push((a, l));
        }

        let mut upstream_line = vec![None; n];
        let mut downstream = vec![Vec::new(); n];
        let mut line_ends = vec![(usize::MAX, usize::MAX); data.lines.len()];
        let mut visited = vec![false; n];
        let mut order = Vec::with_capacity(n);
        let mut queue = VecDeque::from([slack]);
        visited[slack] = true;
        while let Some(bus) = queue.pop_front() {
            order.push(bus);
            for &(next, l) in &adjacency[bus] {
                if upstream_line[bus] == Some(l) {
                    continue;
                }
                if visited[next] {
                    return Err(NetworkError::NonRadial(format!(
                        "loop through bus {}",
                        data.buses[next].id
                    )));
                }
                visited[next] = true;
                upstream_line[next] = Some(l);
                downstream[bus].push(next);
                line_ends[l] = (bus, next);
                queue.push_back(next);
            }
        }
        if order.len() != n {
            let missing = (0..n).find(|&i| !visited[i]).map(|i| data.buses[i].id);
            return Err(NetworkError::NonRadial(format!(
                "bus {} is not connected to the slack bus",
                missing.unwrap_or_default()
            )));
        }

        Ok(Self { data, index, slack, upstream_line, downstream, line_ends, order })
    }

    pub fn load(path: &Path) -> Result<Self, NetworkError> {
        Self::new(NetworkFile::load(path)?)
    }

    pub fn from_toml_str(text: &str) -> Result<Self, NetworkError> {
        Self::new(NetworkFile::from_toml_str(text)?)
    }

    pub fn data(&self) -> &NetworkFile {
        &self.data
    }

    pub fn n_buses(&self) -> usize {
        self.data.buses.len()
    }

    pub fn n_lines(&self) -> usize {
        self.data.lines.len()
    }

    pub fn base_mva(&self) -> f64 {
        self.data.base_mva
    }

    pub fn v_limits(&self) -> (f64, f64) {
        (self.data.v_limits[0], self.data.v_limits[1])
    }

    pub fn slack_index(&self) -> usize {
        self.slack
    }

    pub fn slack_bus_id(&self) -> u32 {
        self.data.slack_bus
    }

    pub fn bus_index(&self, id: u32) -> Result<usize, NetworkError> {
        self.index.get(&id).copied().ok_or(NetworkError::UnknownBus(id))
    }

    pub fn bus_id(&self, index: usize) -> u32 {
        self.data.buses[index].id
    }

    pub fn bus(&self, index: usize) -> &BusData {
        &self.data.buses[index]
    }

    pub fn line(&self, index: usize) -> &LineData {
        &self.data.lines[index]
    }

    /// Oriented (upstream, downstream) bus indices of a line.
    pub fn line_ends(&self, line: usize) -> (usize, usize) {
        self.line_ends[line]
    }

    /// The line feeding `bus` from upstream.
    pub fn upstream_line(&self, bus: usize) -> Option<usize> {
        self.upstream_line[bus]
    }

    pub fn upstream_bus(&self, bus: usize) -> Option<usize> {
        self.upstream_line[bus].map(|l| self.line_ends[l].0)
    }

    pub fn downstream(&self, bus: usize) -> &[usize] {
        &self.downstream[bus]
    }

    /// Buses in breadth-first order from the slack bus.
    pub fn bfs_order(&self) -> &[usize] {
        &self.order
    }

    pub fn total_base_load_mw(&self) -> f64 {
        self.data.buses.iter().map(|b| b.p_mw).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn chain(n: u32) -> NetworkFile {
        NetworkFile {
            name: "chain".into(),
            slack_bus: 1,
            base_mva: 1.0,
            base_kv: None,
            v_limits: [0.95, 1.05],
            buses: (1..=n).map(|id| BusData { id, p_mw: 0.0, q_mvar: 0.0 }).collect(),
            lines: (1..n)
                .map(|i| LineData { from: i, to: i + 1, r_pu: 0.01, x_pu: 0.01, b_pu: 0.0 })
                .collect(),
        }
    }

    #[test]
    fn orients_reversed_lines_away_from_slack() {
        let mut f = chain(3);
        f.lines[1] = LineData { from: 3, to: 2, r_pu: 0.01, x_pu: 0.02, b_pu: 0.0 };
        let t = NetworkTopology::new(f).unwrap();
        assert_eq!(t.line_ends(1), (1, 2));
        assert_eq!(t.upstream_bus(2), Some(1));
        assert_eq!(t.bfs_order(), &[0, 1, 2]);
    }

    #[test]
    fn rejects_loops_and_islands() {
        let mut f = chain(4);
        f.lines[2] = LineData { from: 3, to: 1, r_pu: 0.01, x_pu: 0.01, b_pu: 0.0 };
        assert!(matches!(NetworkTopology::new(f), Err(NetworkError::NonRadial(_))));

        let mut f = chain(3);
        f.lines.pop();
        assert!(matches!(NetworkTopology::new(f), Err(NetworkError::NonRadial(_))));
    }

    #[test]
    fn rejects_bad_limits_and_negative_impedance() {
        let mut f = chain(2);
        f.v_limits = [1.05, 0.95];
        assert!(matches!(NetworkTopology::new(f), Err(NetworkError::Invalid(_))));
        let mut f = chain(2);
        f.lines[0].r_pu = -0.1;
        assert!(matches!(NetworkTopology::new(f), Err(NetworkError::Invalid(_))));
    }

    #[test]
    fn bundled_feeder_is_a_33_bus_tree() {
        let t = NetworkTopology::from_toml_str(crate::harness::catalog::IEEE33).unwrap();
        assert_eq!(t.n_buses(), 33);
        assert_eq!(t.n_lines(), 32);
        assert!((t.total_base_load_mw() - 3.715).abs() < 1e-12);
        for bus in 0..t.n_buses() {
            if bus != t.slack_index() {
                assert!(t.upstream_line(bus).is_some());
            }
        }
    }
}
