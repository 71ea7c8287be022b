//! Brute-force worst case over displacement sequences.
//!
//! With deterministic kernels and a deterministic agent every adversary
//! strategy induces a single trajectory, so the adaptive worst case equals the
//! minimum over open-loop sequences and can be found by enumeration.

use crate::error::{Error, Result};
use crate::grid::StepTable;
use crate::mdp::ParametricMdp;
use crate::policy::{JointSpace, PolicyTable};
use crate::solvers::extract::policy_shape;
use crate::value::ValueField;

pub const ENUMERATION_BUDGET: u128 = 10_000_000;

struct Walk<'a> {
    mdp: &'a ParametricMdp,
    steps: &'a StepTable,
    space: JointSpace,
    actions: Vec<usize>,
}

impl Walk<'_> {
    fn worst(&self, row: usize, psi: usize, depth: usize) -> f64 {
        if depth == 0 {
            return 0.0;
        }
        let s = self.space.state_of_row(row);
        let a = self.actions[self.space.obs_key(row, psi)];
        let mut best = f64::INFINITY;
        for &next_psi in self.steps.targets_from(psi) {
            let next = self.mdp.row(next_psi, s, a).states[0];
            let v = self.mdp.reward(s, a)
                + self.mdp.gamma() * self.worst(self.space.next_row(s, a, next), next_psi, depth - 1);
            best = best.min(v);
        }
        best
    }
}

/// Minimum discounted `horizon`-step return over all displacement sequences,
/// for every start state and initial parameter index.
pub fn exhaustive_adversary_oracle(
    agent: &PolicyTable,
    mdp: &ParametricMdp,
    steps: &StepTable,
    horizon: usize,
) -> Result<ValueField> {
    if !agent.is_agent() || agent.shape() != policy_shape(mdp) {
        return Err(Error::Shape("agent table does not match the model".into()));
    }
    if !mdp.is_deterministic() {
        return Err(Error::Precondition("enumeration needs point-mass kernels".into()));
    }
    let space = agent.joint_space();
    let actions = (0..space.n_obs())
        .map(|k| agent.choice(k))
        .collect::<Option<Vec<_>>>()
        .ok_or_else(|| Error::Precondition("enumeration needs a deterministic agent".into()))?;
    let needed = (steps.n_displacements() as u128)
        .checked_pow(horizon as u32)
        .unwrap_or(u128::MAX);
    if needed > ENUMERATION_BUDGET {
        return Err(Error::Budget {
            needed,
            budget: ENUMERATION_BUDGET,
        });
    }
    let walk = Walk {
        mdp,
        steps,
        space,
        actions,
    };
    let mut out = ValueField::augmented(mdp.n_states(), mdp.n_psi());
    for s in 0..mdp.n_states() {
        for psi in 0..mdp.n_psi() {
            out.set(s, psi, walk.worst(space.start_row(s), psi, horizon));
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::{build_chain, ChainConfig, RIGHT};
    use crate::grid::{ParameterGrid, StepBall};
    use crate::policy::ObservationClass;

    fn det_chain() -> ParametricMdp {
        let cfg = ChainConfig {
            success_low: 1.0,
            success_high: 1.0,
            ..ChainConfig::default()
        };
        build_chain(&cfg, ParameterGrid::new(1, 3).unwrap()).unwrap()
    }

    #[test]
    fn zero_horizon_is_zero() {
        let mdp = det_chain();
        let steps = StepTable::new(mdp.grid(), &StepBall::new(1));
        let agent =
            PolicyTable::agent_deterministic(ObservationClass::Vanilla, policy_shape(&mdp), &[RIGHT; 6]).unwrap();
        let v = exhaustive_adversary_oracle(&agent, &mdp, &steps, 0).unwrap();
        assert!(v.data().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn nominal_rollout_when_frozen() {
        let mdp = det_chain();
        let steps = StepTable::new(mdp.grid(), &StepBall::new(0));
        let agent =
            PolicyTable::agent_deterministic(ObservationClass::Vanilla, policy_shape(&mdp), &[RIGHT; 6]).unwrap();
        let v = exhaustive_adversary_oracle(&agent, &mdp, &steps, 8).unwrap();
        // from state 0 the goal (5) is reached after five moves and then held
        let expected: f64 = (5..8).map(|t| 0.9f64.powi(t)).sum();
        assert!((v.get(0, 1) - expected).abs() < 1e-12);
    }

    #[test]
    fn stochastic_kernels_rejected() {
        let mdp = build_chain(&ChainConfig::default(), ParameterGrid::new(1, 3).unwrap()).unwrap();
        let steps = StepTable::new(mdp.grid(), &StepBall::new(1));
        let agent =
            PolicyTable::agent_deterministic(ObservationClass::Vanilla, policy_shape(&mdp), &[RIGHT; 6]).unwrap();
        assert!(matches!(
            exhaustive_adversary_oracle(&agent, &mdp, &steps, 3),
            Err(Error::Precondition(_))
        ));
        let det = det_chain();
        assert!(matches!(
            exhaustive_adversary_oracle(&agent, &det, &steps, 40),
            Err(Error::Budget { .. })
        ));
    }
}
