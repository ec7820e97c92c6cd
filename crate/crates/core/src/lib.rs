//! Lasso-initialised de-biased estimation and Wald inference for
//! canonical-link generalized linear models with many covariates (p < n).

#[cfg(feature = "cli")]
pub mod cli;
pub mod data;
pub mod debias;
pub mod error;
pub mod family;
pub mod lasso;
pub mod newton;
pub mod inference;
pub mod rng;
pub mod simulate;
pub mod stats;

pub use data::{standardize, CoefMap, Dataset};
pub use debias::{refine_debias, DebiasedFit, Method};
pub use error::{Error, Result};
pub use family::GlmFamily;
pub use lasso::{fit_lasso, LassoFit};
