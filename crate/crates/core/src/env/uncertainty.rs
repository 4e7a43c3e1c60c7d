//! Forecast-error model for renewables and loads.
//!
//! Errors are multiplicative: `realized = forecast · (1 + σ·e)` where `e` is a
//! standard Gaussian truncated at ±3, correlated across units inside a
//! correlation group and optionally persistent from hour to hour.

use super::EnvError;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

const TRUNCATION: f64 = 3.0;
const MAX_REDRAWS: usize = 256;

#[derive(Debug, Clone, PartialEq)]
struct Block {
    members: Vec<usize>,
    /// Lower-triangular factor of the block's correlation matrix.
    factor: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ErrorModel {
    std: Vec<f64>,
    persistence: f64,
    blocks: Vec<Block>,
}

/// How a realized value is clipped.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum UncertainKind {
    Renewable { capacity_mw: f64 },
    Load,
}

impl ErrorModel {
    /// `std[i]` is unit `i`'s error std as a fraction of forecast. `groups`
    /// lists (member indices, correlation matrix); ungrouped units are
    /// independent.
    pub fn new(std: Vec<f64>, groups: &[(Vec<usize>, Vec<Vec<f64>>)], persistence: f64) -> Result<Self, EnvError> {
        if std.iter().any(|s| !(*s >= 0.0)) {
            return Err(EnvError::BadScenario("error std fractions must be non-negative".into()));
        }
        if !(0.0..1.0).contains(&persistence) {
            return Err(EnvError::BadScenario("persistence must be in [0, 1)".into()));
        }
        let mut grouped = vec![false; std.len()];
        let mut blocks = Vec::new();
        for (members, matrix) in groups {
            for &m in members {
                if m >= std.len() || grouped[m] {
                    return Err(EnvError::BadCorrelationMatrix(format!(
                        "unit index {m} is out of range or in two groups"
                    )));
                }
                grouped[m] = true;
            }
            blocks.push(Block { members: members.clone(), factor: psd_cholesky(matrix, members.len())? });
        }
        for (i, in_group) in grouped.iter().enumerate() {
            if !in_group {
                blocks.push(Block { members: vec![i], factor: vec![vec![1.0]] });
            }
        }
        blocks.sort_by_key(|b| b.members[0]);
        Ok(Self { std, persistence, blocks })
    }

    /// Model with no uncertainty.
    pub fn deterministic(n_units: usize) -> Self {
        Self::new(vec![0.0; n_units], &[], 0.0).expect("zero model is valid")
    }

    pub fn n_units(&self) -> usize {
        self.std.len()
    }

    pub fn std(&self) -> &[f64] {
        &self.std
    }

    /// Standardized errors `e[unit][hour]`.
    pub fn standardized_errors<R: Rng>(&self, hours: usize, rng: &mut R) -> Vec<Vec<f64>> {
        let mut out = vec![vec![0.0; hours]; self.std.len()];
        let innovation_scale = (1.0 - self.persistence * self.persistence).sqrt();
        for block in &self.blocks {
            let n = block.members.len();
            let mut prev = vec![0.0; n];
            let mut z = vec![0.0; n];
            let mut e = vec![0.0; n];
            for hour in 0..hours {
                let (phi, scale) = if hour == 0 { (0.0, 1.0) } else { (self.persistence, innovation_scale) };
                for attempt in 0.. {
                    for zi in z.iter_mut() {
                        *zi = rng.sample(StandardNormal);
                    }
                    for i in 0..n {
                        let correlated: f64 = (0..=i).map(|k| block.factor[i][k] * z[k]).sum();
                        e[i] = phi * prev[i] + scale * correlated;
                    }
                    if e.iter().all(|v| v.abs() <= TRUNCATION) {
                        break;
                    }
                    if attempt + 1 == MAX_REDRAWS {
                        e.iter_mut().for_each(|v| *v = v.clamp(-TRUNCATION, TRUNCATION));
                        break;
                    }
                }
                for (i, &m) in block.members.iter().enumerate() {
                    out[m][hour] = e[i];
                }
                prev.copy_from_slice(&e);
            }
        }
        out
    }

    /// Applies sampled errors to forecasts and clips to physical bounds.
    pub fn realize<R: Rng>(
        &self,
        forecasts: &[Vec<f64>],
        kinds: &[UncertainKind],
        rng: &mut R,
    ) -> Result<Vec<Vec<f64>>, EnvError> {
        if forecasts.len() != self.std.len() || kinds.len() != self.std.len() {
            return Err(EnvError::BadScenario(format!(
                "{} forecasts / {} kinds for {} uncertain units",
                forecasts.len(),
                kinds.len(),
                self.std.len()
            )));
        }
        let hours = forecasts.iter().map(Vec::len).max().unwrap_or(0);
        let errors = self.standardized_errors(hours, rng);
        Ok(forecasts
            .iter()
            .zip(kinds)
            .enumerate()
            .map(|(u, (forecast, kind))| {
                forecast
                    .iter()
                    .zip(&errors[u])
                    .map(|(f, e)| {
                        let v = f * (1.0 + self.std[u] * e);
                        match kind {
                            UncertainKind::Renewable { capacity_mw } => v.clamp(0.0, *capacity_mw),
                            UncertainKind::Load => v.max(0.0),
                        }
                    })
                    .collect()
            })
            .collect())
    }
}

/// Samples realized profiles from `forecasts[unit][hour]` with a fresh
/// generator seeded by `seed`.
pub fn sample_net_load(
    forecasts: &[Vec<f64>],
    kinds: &[UncertainKind],
    model: &ErrorModel,
    seed: u64,
) -> Result<Vec<Vec<f64>>, EnvError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    model.realize(forecasts, kinds, &mut rng)
}

/// Cholesky factor of a positive semi-definite correlation matrix. Zero
/// pivots (perfectly correlated members) produce zero columns.
fn psd_cholesky(matrix: &[Vec<f64>], n: usize) -> Result<Vec<Vec<f64>>, EnvError> {
    const TOL: f64 = 1e-10;
    if matrix.len() != n || matrix.iter().any(|row| row.len() != n) {
        return Err(EnvError::BadCorrelationMatrix(format!("expected a {n}x{n} matrix")));
    }
    for i in 0..n {
        if (matrix[i][i] - 1.0).abs() > TOL {
            return Err(EnvError::BadCorrelationMatrix("diagonal entries must be 1".into()));
        }
        for j in 0..n {
            let v = matrix[i][j];
            if !v.is_finite() || v.abs() > 1.0 + TOL || (v - matrix[j][i]).abs() > TOL {
                return Err(EnvError::BadCorrelationMatrix(
                    "entries must be symmetric and within [-1, 1]".into(),
                ));
            }
        }
    }
    let mut l = vec![vec![0.0; n]; n];
    for j in 0..n {
        let pivot = matrix[j][j] - (0..j).map(|k| l[j][k] * l[j][k]).sum::<f64>();
        if pivot < -TOL {
            return Err(EnvError::BadCorrelationMatrix("matrix is not positive semi-definite".into()));
        }
        if pivot <= TOL {
            for i in j + 1..n {
                let rest = matrix[i][j] - (0..j).map(|k| l[i][k] * l[j][k]).sum::<f64>();
                if rest.abs() > 1e-8 {
                    return Err(EnvError::BadCorrelationMatrix("matrix is not positive semi-definite".into()));
                }
            }
            continue;
        }
        let d = pivot.sqrt();
        l[j][j] = d;
        for i in j + 1..n {
            l[i][j] = (matrix[i][j] - (0..j).map(|k| l[i][k] * l[j][k]).sum::<f64>()) / d;
        }
    }
    Ok(l)
}

/// Equicorrelation matrix with coefficient `rho`.
pub fn equicorrelation(n: usize, rho: f64) -> Vec<Vec<f64>> {
    (0..n).map(|i| (0..n).map(|j| if i == j { 1.0 } else { rho }).collect()).collect()
}
