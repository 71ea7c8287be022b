//! Built-in environments: a parametric chain, a discretized pendulum, and a
//! random tabular generator used by property tests and the check command.

mod chain;
mod pendulum;
mod random;

pub use chain::{build_chain, ChainConfig, ChainModel, LEFT, RIGHT};
pub use pendulum::{build_pendulum, PendulumConfig, PendulumModel};
pub use random::{random_mdp, RandomKernel, RandomSpec};
