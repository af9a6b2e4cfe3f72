//! Parsimonious Gaussian mixtures fitted by EM.

mod em;
mod estep;
mod hc;
mod model;
mod mstep;
mod params;
mod select;

pub use em::{em_fit, FitOptions, FitResult};
pub use estep::{e_step, log_density};
pub use hc::{extend_partition, hclust_init, quantile_partition, HcTree};
pub use model::{bic, n_params, CovarianceModel};
pub use mstep::m_step;
pub use params::{log_sum_exp, MixtureParams};
pub use select::{best_fit, fit_models, format_sig, BicTable, ModelSearch};

pub(crate) use select::fit_models_rows;
