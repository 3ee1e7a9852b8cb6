//! Model-based clustering with parsimonious Gaussian mixtures.
//!
//! Covariances follow the eigen-decomposition `Σ_k = λ_k U_k Δ_k U_kᵀ`, with
//! each of volume, shape and orientation equal, varying or identity across
//! components. Estimation is by EM with optional normal / inverse-Wishart
//! regularization; models are compared by BIC and ICL.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod bootstrap;
pub mod cli;
pub mod covmodels;
pub mod data;
pub mod diagnostics;
pub mod em;
pub mod error;
pub mod prior;
pub mod selection;
pub mod types;

pub use bootstrap::{bootstrap_fit, percentile_ci, BootstrapRun, BootstrapType};
pub use covmodels::{count_free_params, decompose_covariance, ModelCode};
pub use data::{load, parse_text, summarize, IngestOptions};
pub use diagnostics::{avepp, diagnose, entropy_total, DiagnosticsReport};
pub use em::{e_step, fit, fit_from, EmControl, InitStrategy};
pub use error::{Error, Result};
pub use prior::{default_prior, PriorControl, PriorSpec};
pub use selection::{grid_search, GridOptions, SelectionTable};
pub use types::{DataMatrix, FitResult, MixtureParameters, ModelSpec, Responsibilities};
