//! Alternating best-response training for partially observing agents.
//!
//! Each round improves the current agent against the adversary that best
//! responds to it, then evaluates the improved agent with a fresh best
//! response. The incumbent is only replaced by a candidate that is at least as
//! good from every start state and strictly better in total, so the reported
//! worst-case value never goes down.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::StepTable;
use crate::mdp::ParametricMdp;
use crate::policy::{JointSpace, ObservationClass, PolicyTable, TableKind};
use crate::solvers::best_response::{adversary_best_response, joint_occupancy, joint_q_values, BestResponse};
use crate::solvers::extract::policy_shape;

const TIE_TOL: f64 = 1e-12;
const GUARD_TOL: f64 = 1e-12;
const OCCUPANCY_TOL: f64 = 1e-13;
const MAX_INNER_SWEEPS: usize = 10_000;

#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub class: ObservationClass,
    pub rounds: usize,
    pub epsilon: f64,
    pub max_iters: usize,
    /// Starting agent; uniform over actions when `None`.
    pub init: Option<PolicyTable>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainRound {
    pub round: usize,
    /// Candidate's worst-case value from each start state.
    pub candidate_per_start: Vec<f64>,
    /// Minimum of `candidate_per_start`.
    pub candidate_worst: f64,
    pub accepted: bool,
    /// Incumbent's worst-case value after this round.
    pub best_worst: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub agent: PolicyTable,
    pub best_response: BestResponse,
    /// Worst-case value of `agent` from each start state.
    pub per_start: Vec<f64>,
    pub worst: f64,
    /// Worst-case values of the starting agent.
    pub initial_per_start: Vec<f64>,
    pub trace: Vec<TrainRound>,
}

fn min_of(xs: &[f64]) -> f64 {
    xs.iter().copied().fold(f64::INFINITY, f64::min)
}

/// Index of the largest score; the incumbent action wins ties, then the lowest index.
fn pick_action(scores: &[f64], current: Option<usize>) -> usize {
    let top = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let slack = TIE_TOL * top.abs().max(1.0);
    if let Some(c) = current {
        if scores[c] >= top - slack {
            return c;
        }
    }
    scores.iter().position(|&q| q >= top - slack).unwrap_or(0)
}

fn dominates(candidate: &[f64], incumbent: &[f64]) -> bool {
    let pointwise = candidate.iter().zip(incumbent).all(|(c, i)| *c >= *i - GUARD_TOL);
    let total_c: f64 = candidate.iter().sum();
    let total_i: f64 = incumbent.iter().sum();
    pointwise && min_of(candidate) >= min_of(incumbent) && total_c > total_i + GUARD_TOL
}

/// Start distribution: uniform over states at the start rows and uniform over ψ.
fn start_distribution(space: &JointSpace) -> Vec<f64> {
    let np = space.shape.n_psi;
    let w = 1.0 / (space.shape.n_states * np) as f64;
    let mut rho = vec![0.0; space.n_joint()];
    for s in 0..space.shape.n_states {
        let base = space.start_row(s) * np;
        rho[base..base + np].fill(w);
    }
    rho
}

/// One improvement step for classes that hide part of the joint state.
fn improve_hidden(
    agent: &PolicyTable,
    br: &BestResponse,
    mdp: &ParametricMdp,
    steps: &StepTable,
) -> Result<PolicyTable> {
    let space = agent.joint_space();
    let (np, na) = (mdp.n_psi(), mdp.n_actions());
    let q = joint_q_values(mdp, steps, &space, &br.worst);
    let mu = joint_occupancy(
        agent,
        &br.adversary,
        mdp,
        steps,
        &start_distribution(&space),
        OCCUPANCY_TOL,
    )?;
    let mut obs_mass = vec![0.0; space.n_obs()];
    for (joint, &m) in mu.iter().enumerate() {
        obs_mass[space.obs_key(joint / np, joint % np)] += m;
    }
    let mut scores = vec![0.0; space.n_obs() * na];
    for joint in 0..space.n_joint() {
        let obs = space.obs_key(joint / np, joint % np);
        let weight = if obs_mass[obs] > 0.0 { mu[joint] } else { 1.0 };
        for a in 0..na {
            scores[obs * na + a] += weight * q[joint * na + a];
        }
    }
    let actions: Vec<usize> = (0..space.n_obs())
        .map(|obs| pick_action(&scores[obs * na..(obs + 1) * na], agent.choice(obs)))
        .collect();
    PolicyTable::agent_deterministic(space.class, space.shape, &actions)
}

/// Strategy iteration to stability for a fully observing agent.
fn improve_oracle(
    agent: &PolicyTable,
    br: &BestResponse,
    mdp: &ParametricMdp,
    steps: &StepTable,
    cfg: &TrainConfig,
) -> Result<PolicyTable> {
    let space = agent.joint_space();
    let na = mdp.n_actions();
    let mut current = agent.clone();
    let mut worst = br.worst.clone();
    for _ in 0..MAX_INNER_SWEEPS {
        let q = joint_q_values(mdp, steps, &space, &worst);
        let actions: Vec<usize> = (0..space.n_obs())
            .map(|x| pick_action(&q[x * na..(x + 1) * na], current.choice(x)))
            .collect();
        let next = PolicyTable::agent_deterministic(space.class, space.shape, &actions)?;
        if next == current {
            return Ok(current);
        }
        current = next;
        worst = adversary_best_response(&current, mdp, steps, cfg.epsilon, cfg.max_iters)?.worst;
    }
    Ok(current)
}

pub fn alternating_train(mdp: &ParametricMdp, steps: &StepTable, cfg: &TrainConfig) -> Result<TrainOutcome> {
    if cfg.rounds == 0 {
        return Err(Error::Precondition("training needs at least one round".into()));
    }
    let shape = policy_shape(mdp);
    let initial = match &cfg.init {
        Some(p) => {
            if p.kind() != TableKind::Agent(cfg.class) || p.shape() != shape {
                return Err(Error::Shape("initial agent does not match the class or model".into()));
            }
            p.clone()
        }
        None => PolicyTable::uniform_agent(cfg.class, shape),
    };
    let space = JointSpace::new(cfg.class, shape);
    let br = adversary_best_response(&initial, mdp, steps, cfg.epsilon, cfg.max_iters)?;
    let initial_per_start = br.per_start(&space);

    let mut best = (initial.clone(), br.clone(), initial_per_start.clone());
    let mut current = (initial, br);
    let mut trace = Vec::with_capacity(cfg.rounds);
    for round in 0..cfg.rounds {
        let (agent, br) = &current;
        let candidate = match cfg.class {
            ObservationClass::Oracle => improve_oracle(agent, br, mdp, steps, cfg)?,
            _ => improve_hidden(agent, br, mdp, steps)?,
        };
        let cand_br = adversary_best_response(&candidate, mdp, steps, cfg.epsilon, cfg.max_iters)?;
        let per_start = cand_br.per_start(&space);
        let accepted = dominates(&per_start, &best.2);
        if accepted {
            best = (candidate.clone(), cand_br.clone(), per_start.clone());
        }
        trace.push(TrainRound {
            round: round + 1,
            candidate_worst: min_of(&per_start),
            candidate_per_start: per_start,
            accepted,
            best_worst: min_of(&best.2),
        });
        current = (candidate, cand_br);
    }
    let (agent, best_response, per_start) = best;
    Ok(TrainOutcome {
        worst: min_of(&per_start),
        agent,
        best_response,
        per_start,
        initial_per_start,
        trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::{build_chain, ChainConfig};
    use crate::grid::{ParameterGrid, StepBall};

    fn setup() -> (ParametricMdp, StepTable) {
        let mdp = build_chain(&ChainConfig::default(), ParameterGrid::new(1, 5).unwrap()).unwrap();
        let steps = StepTable::new(mdp.grid(), &StepBall::new(1));
        (mdp, steps)
    }

    fn cfg(class: ObservationClass, rounds: usize) -> TrainConfig {
        TrainConfig {
            class,
            rounds,
            epsilon: 1e-9,
            max_iters: 100_000,
            init: None,
        }
    }

    #[test]
    fn single_round_bookkeeping() {
        let (mdp, steps) = setup();
        let out = alternating_train(&mdp, &steps, &cfg(ObservationClass::Vanilla, 1)).unwrap();
        assert_eq!(out.trace.len(), 1);
        assert_eq!(out.worst, out.trace[0].best_worst);
    }

    #[test]
    fn best_value_never_decreases() {
        let (mdp, steps) = setup();
        let out = alternating_train(&mdp, &steps, &cfg(ObservationClass::Stacked, 4)).unwrap();
        for w in out.trace.windows(2) {
            assert!(w[1].best_worst >= w[0].best_worst);
        }
        for (a, b) in out.per_start.iter().zip(&out.initial_per_start) {
            assert!(a >= &(b - 1e-12));
        }
    }

    #[test]
    fn ties_keep_the_incumbent() {
        assert_eq!(pick_action(&[1.0, 1.0, 0.5], Some(1)), 1);
        assert_eq!(pick_action(&[1.0, 1.0, 0.5], None), 0);
        assert_eq!(pick_action(&[0.0, 1.0], Some(0)), 1);
    }

    #[test]
    fn zero_rounds_rejected() {
        let (mdp, steps) = setup();
        assert!(matches!(
            alternating_train(&mdp, &steps, &cfg(ObservationClass::Vanilla, 0)),
            Err(Error::Precondition(_))
        ));
    }
}
