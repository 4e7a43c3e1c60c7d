use super::{NetworkError, NetworkTopology};
use serde::{Deserialize, Serialize};
use std::io::Write;

/// Net injection (generation minus load) per bus, indexed like the topology's
/// buses. The slack entry is ignored by the solver.
#[derive(Debug, Clone, PartialEq)]
pub struct NodalInjection {
    pub p_mw: Vec<f64>,
    pub q_mvar: Vec<f64>,
}

impl NodalInjection {
    pub fn zeros(topology: &NetworkTopology) -> Self {
        let n = topology.n_buses();
        Self { p_mw: vec![0.0; n], q_mvar: vec![0.0; n] }
    }

    /// Injections equal to the negated base loads scaled by `scale`.
    pub fn from_base_loads(topology: &NetworkTopology, scale: f64) -> Self {
        let buses = &topology.data().buses;
        Self {
            p_mw: buses.iter().map(|b| -b.p_mw * scale).collect(),
            q_mvar: buses.iter().map(|b| -b.q_mvar * scale).collect(),
        }
    }

    pub fn add(&mut self, bus: usize, p_mw: f64, q_mvar: f64) {
        self.p_mw[bus] += p_mw;
        self.q_mvar[bus] += q_mvar;
    }
}

/// Where the line shunt term `b·V²` enters the reactive balance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ShuntConvention {
    /// Reactive consumption at the receiving bus (adds to the line's Q flow).
    #[default]
    Consumption,
    /// Reactive injection at the receiving bus.
    Injection,
}

impl ShuntConvention {
    fn sign(self) -> f64 {
        match self {
            ShuntConvention::Consumption => 1.0,
            ShuntConvention::Injection => -1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerFlowOptions {
    /// Stop once the largest voltage-magnitude change between sweeps is below this.
    pub tolerance: f64,
    pub max_iterations: usize,
    pub shunt: ShuntConvention,
}

impl Default for PowerFlowOptions {
    fn default() -> Self {
        Self { tolerance: 1e-10, max_iterations: 50, shunt: ShuntConvention::Consumption }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PowerFlowSolution {
    /// Voltage magnitude per bus (p.u.).
    pub voltage_pu: Vec<f64>,
    /// Sending-end active flow per line (MW), oriented away from the slack.
    pub p_flow_mw: Vec<f64>,
    pub q_flow_mvar: Vec<f64>,
    pub loss_mw: f64,
    pub slack_p_mw: f64,
    pub slack_q_mvar: f64,
    pub converged: bool,
    pub iterations: usize,
    /// Largest DistFlow equation mismatch at the returned point (p.u.).
    pub residual: f64,
}

impl PowerFlowSolution {
    fn ensure_converged(&self) -> Result<(), NetworkError> {
        if self.converged {
            Ok(())
        } else {
            Err(NetworkError::NotConverged)
        }
    }

    pub fn min_voltage(&self) -> f64 {
        self.voltage_pu.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

/// Forward-backward sweep. Returns the last iterate even when the iteration
/// cap is hit (`converged = false`); errors only on voltage collapse.
pub fn sweep(
    topology: &NetworkTopology,
    injections: &NodalInjection,
    options: &PowerFlowOptions,
) -> Result<PowerFlowSolution, NetworkError> {
    let n = topology.n_buses();
    if injections.p_mw.len() != n || injections.q_mvar.len() != n {
        return Err(NetworkError::InjectionMismatch {
            expected: n,
            got: injections.p_mw.len().min(injections.q_mvar.len()),
        });
    }
    if let Some(i) = (0..n).find(|&i| !injections.p_mw[i].is_finite() || !injections.q_mvar[i].is_finite()) {
        return Err(NetworkError::Invalid(format!(
            "non-finite injection at bus {}",
            topology.bus_id(i)
        )));
    }

    let base = topology.base_mva();
    let p_inj: Vec<f64> = injections.p_mw.iter().map(|p| p / base).collect();
    let q_inj: Vec<f64> = injections.q_mvar.iter().map(|q| q / base).collect();
    let shunt_sign = options.shunt.sign();
    let order = topology.bfs_order();
    let slack = topology.slack_index();

    let mut v2 = vec![1.0; n];
    let mut p = vec![0.0; topology.n_lines()];
    let mut q = vec![0.0; topology.n_lines()];
    let mut converged = false;
    let mut iterations = 0;

    while iterations < options.max_iterations {
        iterations += 1;

        // Backward sweep: accumulate branch flows from the leaves.
        let mut flow_change: f64 = 0.0;
        for &bus in order.iter().rev() {
            let Some(l) = topology.upstream_line(bus) else { continue };
            let line = topology.line(l);
            let up = topology.line_ends(l).0;
            let mut p_down = -p_inj[bus];
            let mut q_down = -q_inj[bus];
            for &child in topology.downstream(bus) {
                let cl = topology.upstream_line(child).expect("child has an upstream line");
                p_down += p[cl];
                q_down += q[cl];
            }
            let s_over_v2 = (p[l] * p[l] + q[l] * q[l]) / v2[up];
            let (p_new, q_new) = (
                p_down + line.r_pu * s_over_v2,
                q_down + line.x_pu * s_over_v2 + shunt_sign * line.b_pu * v2[bus],
            );
            flow_change = flow_change.max((p_new - p[l]).abs()).max((q_new - q[l]).abs());
            p[l] = p_new;
            q[l] = q_new;
        }

        // Forward sweep: update voltages from the slack bus.
        let mut max_change: f64 = 0.0;
        for &bus in order {
            let Some(l) = topology.upstream_line(bus) else { continue };
            let line = topology.line(l);
            let up = topology.line_ends(l).0;
            let s = p[l] * p[l] + q[l] * q[l];
            let new_v2 = v2[up] - 2.0 * (line.r_pu * p[l] + line.x_pu * q[l])
                + s / v2[up] * (line.r_pu * line.r_pu + line.x_pu * line.x_pu);
            if !(new_v2 > 0.0) {
                return Err(NetworkError::Diverged {
                    iterations,
                    detail: format!(
                        "squared voltage {new_v2:.3e} at bus {} (voltage collapse)",
                        topology.bus_id(bus)
                    ),
                });
            }
            max_change = max_change.max((new_v2.sqrt() - v2[bus].sqrt()).abs());
            v2[bus] = new_v2;
        }

        if !(max_change.is_finite() && flow_change.is_finite()) {
            return Err(NetworkError::Diverged {
                iterations,
                detail: "non-finite voltage update".into(),
            });
        }
        // A voltage fixed point with flows still moving is not a solution.
        if max_change <= options.tolerance && flow_change <= options.tolerance {
            converged = true;
            break;
        }
    }

    let residual = distflow_mismatch(topology, &p_inj, &q_inj, &v2, &p, &q, shunt_sign);
    let mut loss = 0.0;
    for l in 0..topology.n_lines() {
        let up = topology.line_ends(l).0;
        loss += topology.line(l).r_pu * (p[l] * p[l] + q[l] * q[l]) / v2[up];
    }
    let (mut slack_p, mut slack_q) = (-p_inj[slack], -q_inj[slack]);
    for &child in topology.downstream(slack) {
        let l = topology.upstream_line(child).expect("child has an upstream line");
        slack_p += p[l];
        slack_q += q[l];
    }

    Ok(PowerFlowSolution {
        voltage_pu: v2.iter().map(|x| x.sqrt()).collect(),
        p_flow_mw: p.iter().map(|x| x * base).collect(),
        q_flow_mvar: q.iter().map(|x| x * base).collect(),
        loss_mw: loss * base,
        slack_p_mw: slack_p * base,
        slack_q_mvar: slack_q * base,
        converged,
        iterations,
        residual,
    })
}

/// Solves the DistFlow equations, failing with `Diverged` if the sweep does
/// not converge within the iteration cap.
pub fn solve_power_flow(
    topology: &NetworkTopology,
    injections: &NodalInjection,
    options: &PowerFlowOptions,
) -> Result<PowerFlowSolution, NetworkError> {
    let solution = sweep(topology, injections, options)?;
    if !solution.converged {
        return Err(NetworkError::Diverged {
            iterations: solution.iterations,
            detail: format!("no convergence, residual {:.3e} p.u.", solution.residual),
        });
    }
    Ok(solution)
}

fn distflow_mismatch(
    topology: &NetworkTopology,
    p_inj: &[f64],
    q_inj: &[f64],
    v2: &[f64],
    p: &[f64],
    q: &[f64],
    shunt_sign: f64,
) -> f64 {
    let mut worst: f64 = 0.0;
    for l in 0..topology.n_lines() {
        let (up, down) = topology.line_ends(l);
        let line = topology.line(l);
        let (mut p_down, mut q_down) = (-p_inj[down], -q_inj[down]);
        for &child in topology.downstream(down) {
            let cl = topology.upstream_line(child).expect("child has an upstream line");
            p_down += p[cl];
            q_down += q[cl];
        }
        let s = p[l] * p[l] + q[l] * q[l];
        let rp = p[l] - line.r_pu * s / v2[up] - p_down;
        let rq = q[l] - line.x_pu * s / v2[up] - q_down - shunt_sign * line.b_pu * v2[down];
        let rv = v2[down]
            - (v2[up] - 2.0 * (line.r_pu * p[l] + line.x_pu * q[l])
                + s / v2[up] * (line.r_pu * line.r_pu + line.x_pu * line.x_pu));
        worst = worst.max(rp.abs()).max(rq.abs()).max(rv.abs());
    }
    worst
}

/// Network loss recomputed from stored flows and voltages (MW).
pub fn total_loss(solution: &PowerFlowSolution, topology: &NetworkTopology) -> Result<f64, NetworkError> {
    solution.ensure_converged()?;
    let base = topology.base_mva();
    let mut loss = 0.0;
    for l in 0..topology.n_lines() {
        let up = topology.line_ends(l).0;
        let p = solution.p_flow_mw[l] / base;
        let q = solution.q_flow_mvar[l] / base;
        let v = solution.voltage_pu[up];
        loss += topology.line(l).r_pu * (p * p + q * q) / (v * v);
    }
    Ok(loss * base)
}

/// `sqrt(alpha_v·Σ(1 − V_i)² + beta_v·(1 − V_pcc)²)` over the non-slack buses.
pub fn voltage_quality_penalty(
    solution: &PowerFlowSolution,
    topology: &NetworkTopology,
    alpha_v: f64,
    beta_v: f64,
) -> Result<f64, NetworkError> {
    solution.ensure_converged()?;
    let slack = topology.slack_index();
    let spread: f64 = solution
        .voltage_pu
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != slack)
        .map(|(_, v)| (1.0 - v) * (1.0 - v))
        .sum();
    let pcc = 1.0 - solution.voltage_pu[slack];
    Ok((alpha_v * spread + beta_v * pcc * pcc).sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Violation {
    pub bus_id: u32,
    pub voltage_pu: f64,
    pub deviation_pu: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ViolationReport {
    pub violations: Vec<Violation>,
    /// Largest distance outside the voltage band; 0 when every bus is inside it.
    pub max_deviation: f64,
}

impl ViolationReport {
    pub fn write_csv<W: Write>(&self, out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        for v in &self.violations {
            w.serialize(v)?;
        }
        if self.violations.is_empty() {
            w.write_record(["bus_id", "voltage_pu", "deviation_pu"])?;
        }
        w.flush()?;
        Ok(())
    }
}

pub fn violation_report(
    solution: &PowerFlowSolution,
    topology: &NetworkTopology,
) -> Result<ViolationReport, NetworkError> {
    solution.ensure_converged()?;
    let (v_min, v_max) = topology.v_limits();
    let mut report = ViolationReport::default();
    for (i, &v) in solution.voltage_pu.iter().enumerate() {
        let deviation = if v < v_min {
            v_min - v
        } else if v > v_max {
            v - v_max
        } else {
            continue;
        };
        report.max_deviation = report.max_deviation.max(deviation);
        report.violations.push(Violation { bus_id: topology.bus_id(i), voltage_pu: v, deviation_pu: deviation });
    }
    Ok(report)
}
