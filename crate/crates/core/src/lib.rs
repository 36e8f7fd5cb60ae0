//! Bayesian updating of spatially fluctuating material properties in coupled
//! heat and moisture transport.
//!
//! The pipeline: lognormal parameter fields from a truncated Karhunen–Loève
//! expansion ([`randfield`]) drive a nonlinear finite element model of
//! Künzel's transport equations ([`material`], [`fem`]); noisy sensor data
//! condition the latent field variables through a random-walk
//! Metropolis–Hastings sampler ([`inference`]); [`experiment`] wires the
//! virtual experiment together, [`io`] reads and writes its artifacts and
//! [`pipeline`] runs it in stages against an output directory.

pub mod config;
pub mod experiment;
pub mod fem;
pub mod inference;
pub mod io;
pub mod material;
pub mod pipeline;
pub mod randfield;
