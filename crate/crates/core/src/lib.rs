//! Time-constrained robust MDPs on a discretized parameter grid.
//!
//! The crate builds parametric MDPs, solves them under standard, rectangular,
//! parametric and time-constrained Bellman operators, trains partially
//! observing agents against best-responding adversaries, and evaluates the
//! resulting policies under scheduled or adversarial parameter drift.

pub mod config;
pub mod envs;
pub mod error;
pub mod eval;
pub mod experiment;
pub mod game;
pub mod grid;
pub mod mdp;
pub mod operators;
pub mod policy;
pub mod rng;
pub mod schedules;
pub mod solvers;
pub mod theory;
pub mod value;

pub use error::{Error, Result};
