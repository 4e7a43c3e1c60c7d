//! Merit-order settlement of the distribution system operator.

use super::fleet::{DsoFleet, PriceBook};
use super::EnvError;
use crate::network::{
    solve_power_flow, violation_report, voltage_quality_penalty, NetworkTopology, NodalInjection,
    PowerFlowOptions, PowerFlowSolution,
};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ResourceKind {
    Generator(usize),
    Storage(usize),
    HvImport,
}

/// A dispatchable resource for one hour: output in `[lower, upper]` at a
/// constant marginal cost.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Resource {
    pub kind: ResourceKind,
    pub lower: f64,
    pub upper: f64,
    pub cost: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MeritOrderSchedule {
    /// Output per resource, aligned with the input slice.
    pub output: Vec<f64>,
    /// Index of the price-setting resource, if any resource has headroom
    /// or was raised.
    pub marginal: Option<usize>,
    pub cost: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Error)]
pub enum MeritOrderError {
    #[error("demand exceeds available capacity by {shortfall} MW")]
    Infeasible { shortfall: f64 },
    #[error("minimum outputs exceed demand by {excess} MW")]
    Oversupply { excess: f64 },
}

/// Cost-ascending greedy dispatch. Every resource starts at its lower bound
/// and the cheapest ones are raised until `Σ output = demand`; ties keep the
/// input order.
pub fn merit_order(resources: &[Resource], demand: f64) -> Result<MeritOrderSchedule, MeritOrderError> {
    let mut order: Vec<usize> = (0..resources.len()).collect();
    order.sort_by(|&a, &b| resources[a].cost.total_cmp(&resources[b].cost));

    let mut output: Vec<f64> = resources.iter().map(|r| r.lower).collect();
    let floor: f64 = output.iter().sum();
    let mut remaining = demand - floor;
    if remaining < -1e-12 {
        return Err(MeritOrderError::Oversupply { excess: -remaining });
    }
    let mut marginal = None;
    for &i in &order {
        if remaining <= 0.0 {
            break;
        }
        let headroom = resources[i].upper - resources[i].lower;
        if headroom <= 0.0 {
            continue;
        }
        let step = headroom.min(remaining);
        output[i] += step;
        remaining -= step;
        marginal = Some(i);
    }
    if remaining > 1e-9 {
        return Err(MeritOrderError::Infeasible { shortfall: remaining });
    }
    if marginal.is_none() {
        marginal = order.iter().copied().find(|&i| resources[i].upper > resources[i].lower);
    }
    let cost = resources.iter().zip(&output).map(|(r, p)| r.cost * p).sum();
    Ok(MeritOrderSchedule { output, marginal, cost })
}

/// Per-hour inputs to the DSO settlement.
#[derive(Debug, Clone)]
pub struct DispatchRequest<'a> {
    /// Injections of everything the DSO does not dispatch: ADN loads, MG
    /// net positions, DSO renewables.
    pub base: NodalInjection,
    /// Per-bus active load (MW) that may be shed when capacity runs out.
    pub curtailable_mw: Vec<f64>,
    pub previous_output: &'a [f64],
    pub soc: &'a [f64],
    pub power_factor: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DsoSettlement {
    pub generator_mw: Vec<f64>,
    pub storage_mw: Vec<f64>,
    /// Scheduled HV exchange at the PCC (negative when exporting).
    pub hv_import_mw: f64,
    pub marginal_cost: f64,
    /// Balancing charge to the MG cluster (RMB/MWh).
    pub balancing_price: f64,
    /// Loss estimate covered by the correction pass (MW).
    pub loss_allowance_mw: f64,
    /// Fraction of curtailable load that was shed (0 when feasible).
    pub shed_fraction: f64,
    pub solution: PowerFlowSolution,
    pub voltage_penalty: f64,
    pub voltage_max_dev: f64,
    pub objective: f64,
    pub next_soc: Vec<f64>,
    /// `Σ supply + HV − demand − loss allowance`, should be ~0.
    pub balance_residual_mw: f64,
}

struct Offer {
    resources: Vec<Resource>,
}

impl Offer {
    fn build(fleet: &DsoFleet, prices: &PriceBook, previous: &[f64], soc: &[f64]) -> Result<Self, EnvError> {
        let mut resources = Vec::with_capacity(fleet.cdg.len() + fleet.storage.len() + 1);
        for (i, g) in fleet.cdg.iter().enumerate() {
            let (lower, upper) = g.band(previous[i])?;
            resources.push(Resource { kind: ResourceKind::Generator(i), lower, upper, cost: g.cost });
        }
        for (i, s) in fleet.storage.iter().enumerate() {
            resources.push(Resource {
                kind: ResourceKind::Storage(i),
                lower: -s.max_charge(soc[i]),
                upper: s.max_discharge(soc[i]),
                cost: s.cost,
            });
        }
        resources.push(Resource {
            kind: ResourceKind::HvImport,
            lower: 0.0,
            upper: prices.hv_import_max_mw.unwrap_or(f64::INFINITY),
            cost: prices.hv_exchange,
        });
        Ok(Self { resources })
    }

    /// Dispatch for `demand`; oversupply is exported through the PCC and a
    /// shortfall is returned instead of an error.
    fn dispatch(&self, demand: f64) -> (MeritOrderSchedule, f64) {
        match merit_order(&self.resources, demand) {
            Ok(s) => (s, 0.0),
            Err(MeritOrderError::Oversupply { excess }) => {
                let mut output: Vec<f64> = self.resources.iter().map(|r| r.lower).collect();
                let hv = output.len() - 1;
                output[hv] = -excess;
                let marginal = self.cheapest_with_headroom();
                let cost = self.resources.iter().zip(&output).map(|(r, p)| r.cost * p).sum();
                (MeritOrderSchedule { output, marginal, cost }, 0.0)
            }
            Err(MeritOrderError::Infeasible { shortfall }) => {
                let output: Vec<f64> = self.resources.iter().map(|r| r.upper).collect();
                let n = output.len();
                let cost = self.resources.iter().zip(&output).map(|(r, p)| r.cost * p).sum();
                let marginal = (0..n).max_by(|&a, &b| self.resources[a].cost.total_cmp(&self.resources[b].cost));
                (MeritOrderSchedule { output, marginal, cost }, shortfall)
            }
        }
    }

    fn cheapest_with_headroom(&self) -> Option<usize> {
        (0..self.resources.len())
            .filter(|&i| self.resources[i].upper > self.resources[i].lower)
            .min_by(|&a, &b| self.resources[a].cost.total_cmp(&self.resources[b].cost))
    }
}

fn apply_schedule(
    topology: &NetworkTopology,
    fleet: &DsoFleet,
    request: &DispatchRequest<'_>,
    output: &[f64],
    shed_fraction: f64,
) -> Result<NodalInjection, EnvError> {
    let mut inj = request.base.clone();
    for (bus, load) in request.curtailable_mw.iter().enumerate() {
        inj.p_mw[bus] += shed_fraction * load;
    }
    for (i, g) in fleet.cdg.iter().enumerate() {
        let bus = topology.bus_index(g.bus.expect("validated DSO generator bus"))?;
        let p = output[i];
        inj.add(bus, p, g.reactive(p, request.power_factor));
    }
    let offset = fleet.cdg.len();
    for (i, s) in fleet.storage.iter().enumerate() {
        let bus = topology.bus_index(s.bus)?;
        inj.add(bus, output[offset + i], 0.0);
    }
    Ok(inj)
}

/// Settles the DSO's hour: merit-order dispatch for the residual demand,
/// power flow, one loss-correction pass on the marginal resource, storage
/// update, and the balancing charge passed on to the MG cluster.
pub fn dso_merit_order_dispatch(
    topology: &NetworkTopology,
    fleet: &DsoFleet,
    prices: &PriceBook,
    request: &DispatchRequest<'_>,
    pf_options: &PowerFlowOptions,
) -> Result<DsoSettlement, EnvError> {
    if request.previous_output.len() != fleet.cdg.len() || request.soc.len() != fleet.storage.len() {
        return Err(EnvError::DimMismatch("DSO generator/storage state length".into()));
    }
    let offer = Offer::build(fleet, prices, request.previous_output, request.soc)?;
    let demand: f64 = -request.base.p_mw.iter().sum::<f64>();
    let curtailable: f64 = request.curtailable_mw.iter().sum();

    // First pass without losses.
    let (first, short_first) = offer.dispatch(demand);
    let shed_first = shed(short_first, curtailable);
    let inj = apply_schedule(topology, fleet, request, &first.output, shed_first)?;
    let first_pf = solve_power_flow(topology, &inj, pf_options)?;

    // Loss correction.
    let loss_allowance = first_pf.loss_mw;
    let (schedule, shortfall) = offer.dispatch(demand + loss_allowance);
    let shed_fraction = shed(shortfall, curtailable);
    let inj = apply_schedule(topology, fleet, request, &schedule.output, shed_fraction)?;
    let solution = solve_power_flow(topology, &inj, pf_options)?;

    let n_gen = fleet.cdg.len();
    let n_sto = fleet.storage.len();
    let generator_mw = schedule.output[..n_gen].to_vec();
    let storage_mw = schedule.output[n_gen..n_gen + n_sto].to_vec();
    let hv_import_mw = schedule.output[n_gen + n_sto];

    let marginal_cost = schedule.marginal.map(|i| offer.resources[i].cost).unwrap_or(prices.hv_exchange);
    let balancing_price = marginal_cost * (1.0 + prices.uplift) + prices.balancing_penalty;

    let voltage_penalty = voltage_quality_penalty(&solution, topology, prices.alpha_v, prices.beta_v)?;
    let voltage_max_dev = violation_report(&solution, topology)?.max_deviation;

    let served = demand + loss_allowance - shed_fraction * curtailable;
    let supplied: f64 = schedule.output.iter().sum();
    let balance_residual_mw = supplied - served;

    let dg_total: f64 = generator_mw.iter().sum();
    let dg_cost: f64 = fleet.cdg.iter().zip(&generator_mw).map(|(g, p)| g.cost * p).sum();
    let ess_cost: f64 = fleet.storage.iter().zip(&storage_mw).map(|(s, p)| s.cost * p).sum();
    let objective = prices.adn_retail * dg_total
        - dg_cost
        - prices.loss * solution.loss_mw
        - prices.hv_exchange * hv_import_mw
        - ess_cost
        - prices.voltage_weight * voltage_penalty;

    let next_soc = fleet
        .storage
        .iter()
        .zip(request.soc)
        .zip(&storage_mw)
        .map(|((s, &soc), &p)| s.next_soc(soc, p))
        .collect();

    Ok(DsoSettlement {
        generator_mw,
        storage_mw,
        hv_import_mw,
        marginal_cost,
        balancing_price,
        loss_allowance_mw: loss_allowance,
        shed_fraction,
        solution,
        voltage_penalty,
        voltage_max_dev,
        objective,
        next_soc,
        balance_residual_mw,
    })
}

fn shed(shortfall: f64, curtailable: f64) -> f64 {
    if shortfall <= 0.0 || curtailable <= 0.0 {
        0.0
    } else {
        (shortfall / curtailable).min(1.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit(i: usize, upper: f64, cost: f64) -> Resource {
        Resource { kind: ResourceKind::Generator(i), lower: 0.0, upper, cost }
    }

    #[test]
    fn merit_order_by_hand() {
        let res = [unit(0, 1.0, 200.0), unit(1, 1.0, 100.0)];
        let s = merit_order(&res, 1.5).unwrap();
        assert_eq!(s.output, vec![0.5, 1.0]);
        assert_eq!(s.marginal, Some(0));
        assert!((s.cost - 200.0).abs() < 1e-12);
    }

    #[test]
    fn null_dispatch_prices_at_cheapest() {
        let res = [unit(0, 1.0, 200.0), unit(1, 1.0, 100.0)];
        let s = merit_order(&res, 0.0).unwrap();
        assert_eq!(s.output, vec![0.0, 0.0]);
        assert_eq!(s.marginal, Some(1));
    }

    #[test]
    fn infeasible_and_oversupply() {
        let res = [unit(0, 1.0, 100.0)];
        assert!(matches!(merit_order(&res, 1.5), Err(MeritOrderError::Infeasible { .. })));
        let res = [Resource { kind: ResourceKind::Generator(0), lower: 0.5, upper: 1.0, cost: 1.0 }];
        assert!(matches!(merit_order(&res, 0.2), Err(MeritOrderError::Oversupply { .. })));
    }

    #[test]
    fn storage_with_charging_band_absorbs_small_demand() {
        let res = [
            Resource { kind: ResourceKind::Storage(0), lower: -0.3, upper: 0.3, cost: 50.0 },
            unit(1, 1.0, 100.0),
        ];
        let s = merit_order(&res, 0.1).unwrap();
        assert!((s.output[0] - 0.1).abs() < 1e-12);
        assert_eq!(s.output[1], 0.0);
        let s = merit_order(&res, -0.2).unwrap();
        assert!((s.output[0] + 0.2).abs() < 1e-12);
        let err = merit_order(&res, -0.5).unwrap_err();
        assert!(matches!(err, MeritOrderError::Oversupply { .. }));
    }
}
