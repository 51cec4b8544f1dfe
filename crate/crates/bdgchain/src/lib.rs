//! Steady-state topology of driven-dissipative bosonic BdG chains.
//!
//! A quadratic Liouvillian on `N` bosonic sites is fixed by four matrices
//! (hopping `J`, pairing `K`, loss `Γ`, gain `P`). Everything else in the
//! crate is derived from the `2N × 2N` dynamical matrix built from them:
//! singular values of `ω − ℍ`, Bloch winding numbers, frequency-resolved and
//! equal-time correlations, and disorder-averaged diagnostics.
//!
//! Energies and rates are in units of the uniform coupling `g`; the
//! closed-form oracles in [`analytics`] assume `g = 1` explicitly.

pub mod analytics;
pub mod correlations;
pub mod disorder;
pub mod green;
pub mod io;
pub mod linalg;
pub mod models;
pub mod quadrature;
pub mod topology;
pub mod validate;

pub use linalg::{CMat, C64};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("dynamically unstable: max Im eig(H) = {max_im:.3e}")]
    Unstable { max_im: f64 },
    #[error("singular matrix at omega = {omega}: s_min = {s_min:.3e}")]
    Singular { omega: f64, s_min: f64 },
    #[error("gap closing at omega = {omega} (|det| = {det_abs:.3e} at k = {k})")]
    GapClosing { omega: f64, k: f64, det_abs: f64 },
    #[error("outside the domain of the closed form: {0}")]
    Domain(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("quadrature did not converge: {0}")]
    Quadrature(String),
}

pub type Result<T> = std::result::Result<T, Error>;
