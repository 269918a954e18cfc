//! Hierarchical Bayesian hidden-Markov model of season-level home run
//! hitting: binomial rates with position, park, and age-trajectory
//! effects, a latent elite/non-elite mixture evolving as a two-state
//! Markov chain over each career, Gibbs/Metropolis-Hastings posterior
//! sampling, and posterior predictive forecasts with calibrated
//! intervals.

pub mod basis;
pub mod chain_io;
pub mod commands;
pub mod config;
pub mod data;
pub mod error;
pub mod model;
pub mod num;
pub mod predict;
pub mod pshmm;
pub mod sampler;
pub mod synth;

pub use error::{Error, Result};
