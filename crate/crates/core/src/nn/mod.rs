//! Small MLP actor/critic stack with hand-written reverse-mode gradients.
//!
//! Forward and backward passes are generic over [`Real`], so running them on
//! [`Dual`] numbers yields Jacobian-vector products and, through the
//! backward pass, Hessian-vector products of any scalar loss.

mod dual;
mod mlp;
mod normalize;
mod optim;
mod policy;

pub use dual::{Dual, Real};
pub use mlp::{Head, Mlp, MlpSpec, Tape};
pub use normalize::RunningNormalizer;
pub use optim::Adam;
pub use policy::{gaussian_kl, gaussian_log_density, GaussianPolicy, GaussianPolicyOutput, LOG_STD_MAX, LOG_STD_MIN};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NnError {
    #[error("dimension mismatch: {0}")]
    DimMismatch(String),
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
}

pub fn ensure_finite(values: &[f64], what: &'static str) -> Result<(), NnError> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(NnError::NonFinite(what))
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
