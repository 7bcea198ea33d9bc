//! Simulation and numerical verification of overshoot moment bounds for
//! random walks with exponential-family increments.
//!
//! The crate is organised bottom-up:
//!
//! - [`expfam`]: tilted families, ψ, μ_θ, positive-part moments, samplers
//! - [`ladder`]: first passage, overshoot and ladder-epoch simulation
//! - [`stationary`]: limiting overshoot, renewal function, renewal equation
//! - [`bounds`]: bound evaluators, rate fitting, verifiers, counterexamples
//! - [`transport`]: W₁, quantile coupling, smoothed TV, Wald checks
//! - [`config`], [`report`], [`runner`]: the experiment runner behind the CLI
//!
//! Monte Carlo fan-out goes through [`exec::Exec`]; with the default
//! `parallel` feature replicates run on rayon, otherwise sequentially. Every
//! replicate owns a counter-based stream from [`rng::StreamKey`], so results
//! never depend on the worker count.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bounds;
pub mod config;
pub mod error;
pub mod exec;
pub mod expfam;
pub mod ladder;
pub mod quadrature;
pub mod report;
pub mod rng;
pub mod runner;
pub mod stationary;
pub mod stats;
pub mod transport;

pub use error::{Error, Result};
pub use config::ExperimentConfig;
pub use exec::Exec;
pub use expfam::{BaseMeasure, TiltedFamily};
pub use ladder::{BudgetPolicy, SimBudget};
pub use rng::{RngStream, StreamKey};
pub use runner::{run, RunOptions, RunOutcome, Subcommand};
