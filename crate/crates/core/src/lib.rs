//! Simulation and Lyapunov certification for accelerated gradient flows.
//!
//! The crate integrates second-order damped ODEs on strongly convex
//! objectives, evaluates candidate energy functions along trajectories,
//! searches power-law energy ansätze with exact rational arithmetic, and
//! fits empirical decay rates.

pub mod config;
pub mod dynamics;
pub mod error;
pub mod experiment;
pub mod integrator;
pub mod lyapunov;
pub mod objectives;
pub mod ratefit;
pub mod rational;
pub mod report;
pub mod symsearch;

pub use error::{Error, Result};
