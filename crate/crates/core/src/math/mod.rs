//! Stochastic and linear-algebra primitives.

pub mod gaussian;
pub mod rng;
pub mod sampling;
pub mod weights;

pub use gaussian::{gaussian_logpdf, sample_gaussian, Gaussian};
pub use rng::{Purpose, RngStream};
pub use sampling::{sample_categorical, sample_dirichlet};
pub use weights::{
    effective_sample_size, normalize_log_weights, systematic_resample, weighted_time_average,
};
