//! Exact simulation of multifractional Brownian motion and local estimation
//! of its Hurst function with the IR, QV, IR2 and QV2 estimators.

pub mod asymptotic_constants;
pub mod cli;
pub mod error;
pub mod estimators;
pub mod experiments;
pub mod filters;
pub mod fractional_kernels;
pub mod gaussian_sampler;
pub mod mbm_covariance;

pub use error::{Error, Result};
pub use estimators::{EstimateCurve, EstimatorConfig, EstimatorKind};
pub use filters::Filter;
pub use fractional_kernels::HurstValue;
pub use gaussian_sampler::{FieldCase, SampledPath, SeedLineage};
pub use mbm_covariance::{HurstField, MbmSpec};
