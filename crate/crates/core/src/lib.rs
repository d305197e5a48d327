//! Species-distribution modelling and threat-status mapping: a probabilistic
//! species classifier, conformal assemblage prediction, biogeographic filtering
//! and gridded conservation indicators.

pub mod atlas;
pub mod conformal;
pub mod domain;
pub mod error;
pub mod indicators;
pub mod metrics;
pub mod model;
pub mod prior;
pub mod split;

pub use error::{AtlasError, Result};
pub mod cli;
pub mod config;
pub mod synth;
