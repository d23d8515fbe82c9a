pub mod autodiff;
pub mod nn;
pub mod imputer;
pub mod cohort;
pub mod kv;
pub mod model;
pub mod trainer;
pub mod metrics;
pub mod pipeline;
#[cfg(feature = "cli")]
pub mod cli;
