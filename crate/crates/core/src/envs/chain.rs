use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::ParameterGrid;
use crate::mdp::{KernelFamily, ParametricMdp};

pub const LEFT: usize = 0;
pub const RIGHT: usize = 1;

/// A line of states. Moves succeed with probability
/// `f(ψ) = success_low + (success_high − success_low)·mean(ψ)` and otherwise
/// leave the agent in place. Reward is 1 in the goal state, 0 elsewhere.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainConfig {
    pub n_states: usize,
    pub goal: usize,
    pub gamma: f64,
    pub success_low: f64,
    pub success_high: f64,
}

impl Default for ChainConfig {
    fn default() -> Self {
        Self {
            n_states: 6,
            goal: 5,
            gamma: 0.9,
            success_low: 0.0,
            success_high: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChainModel {
    n_states: usize,
    low: f64,
    high: f64,
}

impl ChainModel {
    pub fn from_config(cfg: &ChainConfig) -> Self {
        Self {
            n_states: cfg.n_states,
            low: cfg.success_low,
            high: cfg.success_high,
        }
    }

    pub fn success(&self, point: &[f64]) -> f64 {
        let mean = if point.is_empty() {
            0.0
        } else {
            point.iter().sum::<f64>() / point.len() as f64
        };
        self.low + (self.high - self.low) * mean
    }

    pub fn row_at(&self, point: &[f64], s: usize, a: usize) -> Vec<(usize, f64)> {
        let target = if a == LEFT {
            s.saturating_sub(1)
        } else {
            (s + 1).min(self.n_states - 1)
        };
        let f = self.success(point).clamp(0.0, 1.0);
        if target == s || f == 0.0 {
            vec![(s, 1.0)]
        } else if f == 1.0 {
            vec![(target, 1.0)]
        } else {
            vec![(s, 1.0 - f), (target, f)]
        }
    }
}

pub fn build_chain(cfg: &ChainConfig, grid: ParameterGrid) -> Result<ParametricMdp> {
    if cfg.n_states == 0 {
        return Err(Error::Config("env.n_states must be positive".into()));
    }
    if cfg.goal >= cfg.n_states {
        return Err(Error::Config(format!(
            "env.goal {} outside 0..{}",
            cfg.goal, cfg.n_states
        )));
    }
    let model = ChainModel::from_config(cfg);
    for point in grid.points() {
        let f = model.success(&point);
        if !(0.0..=1.0).contains(&f) {
            return Err(Error::Config(format!(
                "success probability {f} at grid point {point:?} is outside [0,1]"
            )));
        }
    }
    let mut reward = vec![0.0; cfg.n_states * 2];
    reward[cfg.goal * 2] = 1.0;
    reward[cfg.goal * 2 + 1] = 1.0;
    ParametricMdp::from_family(cfg.n_states, 2, cfg.gamma, reward, grid, KernelFamily::Chain(model))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn chain(n: usize, goal: usize, low: f64, high: f64, g: usize) -> ParametricMdp {
        let cfg = ChainConfig {
            n_states: n,
            goal,
            gamma: 0.9,
            success_low: low,
            success_high: high,
        };
        build_chain(&cfg, ParameterGrid::new(1, g).unwrap()).unwrap()
    }

    #[test]
    fn boundary_and_midpoint_kernels() {
        let m = chain(4, 3, 0.0, 1.0, 3);
        assert_eq!(m.kernel_eval(0, RIGHT, 2).unwrap(), vec![0.0, 1.0, 0.0, 0.0]);
        assert_eq!(m.kernel_eval(0, RIGHT, 1).unwrap(), vec![0.5, 0.5, 0.0, 0.0]);
        assert_eq!(m.kernel_eval(0, RIGHT, 0).unwrap(), vec![1.0, 0.0, 0.0, 0.0]);
        assert_eq!(m.kernel_eval(0, LEFT, 2).unwrap(), vec![1.0, 0.0, 0.0, 0.0]);
        assert!(m.validate().is_ok());
    }

    #[test]
    fn deterministic_at_psi_one() {
        let m = chain(4, 3, 0.0, 1.0, 2);
        assert!(m.row(1, 0, RIGHT).len() == 1);
        let frozen = chain(4, 3, 1.0, 1.0, 2);
        assert!(frozen.is_deterministic());
    }

    #[test]
    fn rejects_bad_success_map() {
        let cfg = ChainConfig {
            success_high: 1.2,
            ..ChainConfig::default()
        };
        assert!(matches!(
            build_chain(&cfg, ParameterGrid::new(1, 3).unwrap()),
            Err(Error::Config(_))
        ));
        let cfg = ChainConfig {
            goal: 9,
            ..ChainConfig::default()
        };
        assert!(build_chain(&cfg, ParameterGrid::new(1, 3).unwrap()).is_err());
    }

    #[test]
    fn construction_is_deterministic() {
        assert_eq!(chain(5, 4, 0.2, 0.9, 5), chain(5, 4, 0.2, 0.9, 5));
    }

    #[test]
    fn off_grid_rows_follow_success_map() {
        let m = chain(4, 3, 0.0, 1.0, 3);
        let row = m.row_at_point(&[0.3], 1, RIGHT);
        assert_eq!(row, vec![(1, 0.7), (2, 0.3)]);
    }
}
