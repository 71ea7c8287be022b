//! Worst-case adversary against a fixed agent of any observation class.
//!
//! The adversary plays a minimizing MDP on the joint game state
//! `x = (s, prev, ψ)`: after seeing the agent's realized action `a` it picks a
//! displacement `b`, the parameter moves to `ψ ⊕ b`, and the next state is
//! drawn from `p_{ψ⊕b}(·|s,a)`.

use std::time::Instant;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::StepTable;
use crate::mdp::ParametricMdp;
use crate::policy::{JointSpace, PolicyTable, TableKind};
use crate::solvers::extract::policy_shape;
use crate::solvers::SolveReport;
use crate::value::{ValueField, ValueKind};

#[derive(Debug, Clone)]
pub struct BestResponse {
    /// Deterministic table keyed by `(joint state, realized action)`.
    pub adversary: PolicyTable,
    /// Worst-case value over `(row, ψ)` where rows are agent-side states.
    pub worst: ValueField,
    pub report: SolveReport,
}

impl BestResponse {
    /// `min_ψ W(start_row(s), ψ)` for every start state `s`.
    pub fn per_start(&self, space: &JointSpace) -> Vec<f64> {
        (0..space.shape.n_states)
            .map(|s| {
                self.worst
                    .row(space.start_row(s))
                    .iter()
                    .copied()
                    .fold(f64::INFINITY, f64::min)
            })
            .collect()
    }
}

fn check_agent(agent: &PolicyTable, mdp: &ParametricMdp, steps: &StepTable) -> Result<JointSpace> {
    if !agent.is_agent() {
        return Err(Error::Contract("best response needs an agent table".into()));
    }
    if agent.shape() != policy_shape(mdp) {
        return Err(Error::Shape("agent table does not match the model".into()));
    }
    if steps.grid() != mdp.grid() {
        return Err(Error::Shape("step table was built for a different grid".into()));
    }
    agent.check_rows()?;
    Ok(agent.joint_space())
}

/// `r(s,a) + γ Σ p_{ψ'}(s'|s,a) W(next_row, ψ')`.
#[inline]
pub(crate) fn continuation(
    mdp: &ParametricMdp,
    space: &JointSpace,
    w: &ValueField,
    s: usize,
    a: usize,
    next_psi: usize,
) -> f64 {
    let row = mdp.row(next_psi, s, a);
    mdp.reward(s, a) + mdp.gamma() * row.expect(|t| w.get(space.next_row(s, a, t), next_psi))
}

/// Lowest-index minimizing displacement and its value.
#[inline]
pub(crate) fn worst_displacement(
    mdp: &ParametricMdp,
    steps: &StepTable,
    space: &JointSpace,
    w: &ValueField,
    s: usize,
    a: usize,
    psi: usize,
) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (b, &next_psi) in steps.targets_from(psi).iter().enumerate() {
        let q = continuation(mdp, space, w, s, a, next_psi);
        if q < best.1 {
            best = (b, q);
        }
    }
    best
}

fn backup(
    agent: &PolicyTable,
    mdp: &ParametricMdp,
    steps: &StepTable,
    space: &JointSpace,
    w: &ValueField,
) -> ValueField {
    let np = mdp.n_psi();
    let mut out = ValueField::augmented(space.n_rows(), np);
    out.data_mut().par_chunks_mut(np).enumerate().for_each(|(row, chunk)| {
        let s = space.state_of_row(row);
        for (psi, slot) in chunk.iter_mut().enumerate() {
            let probs = agent.row(space.obs_key(row, psi));
            let mut acc = 0.0;
            for (a, &p) in probs.iter().enumerate() {
                if p > 0.0 {
                    acc += p * worst_displacement(mdp, steps, space, w, s, a, psi).1;
                }
            }
            *slot = acc;
        }
    });
    out
}

/// Solve the adversary's minimizing MDP against `agent` by value iteration.
pub fn adversary_best_response(
    agent: &PolicyTable,
    mdp: &ParametricMdp,
    steps: &StepTable,
    epsilon: f64,
    max_iters: usize,
) -> Result<BestResponse> {
    adversary_best_response_from(agent, mdp, steps, epsilon, max_iters, None)
}

/// As [`adversary_best_response`], warm-started from `init` when given.
pub fn adversary_best_response_from(
    agent: &PolicyTable,
    mdp: &ParametricMdp,
    steps: &StepTable,
    epsilon: f64,
    max_iters: usize,
    init: Option<ValueField>,
) -> Result<BestResponse> {
    if !(epsilon > 0.0) {
        return Err(Error::Precondition(format!("epsilon must be positive, got {epsilon}")));
    }
    let space = check_agent(agent, mdp, steps)?;
    let started = Instant::now();
    let np = mdp.n_psi();
    let mut w = match init {
        Some(v) if v.kind() == ValueKind::Augmented && v.rows() == space.n_rows() && v.cols() == np => v,
        _ => ValueField::augmented(space.n_rows(), np),
    };
    let mut residuals = Vec::new();
    let mut converged = false;
    for _ in 0..max_iters {
        let next = backup(agent, mdp, steps, &space, &w);
        let r = next.max_abs_diff(&w);
        residuals.push(r);
        w = next;
        if r <= epsilon {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::NonConvergence {
            iterations: residuals.len(),
            residual: residuals.last().copied().unwrap_or(f64::INFINITY),
            best: Box::new(w),
        });
    }
    let na = mdp.n_actions();
    let choices: Vec<usize> = (0..space.n_joint() * na)
        .into_par_iter()
        .map(|key| {
            let a = key % na;
            let joint = key / na;
            let (row, psi) = (joint / np, joint % np);
            worst_displacement(mdp, steps, &space, &w, space.state_of_row(row), a, psi).0
        })
        .collect();
    let adversary = PolicyTable::deterministic(
        TableKind::Adversary(space.class),
        space.shape,
        steps.n_displacements(),
        &choices,
    )?;
    Ok(BestResponse {
        adversary,
        worst: w,
        report: SolveReport {
            iterations: residuals.len(),
            final_residual: residuals.last().copied().unwrap_or(0.0),
            residuals,
            wall_time: started.elapsed().as_secs_f64(),
            mode: None,
        },
    })
}

/// Action values of every joint state against the adversary that produced `worst`.
///
/// Layout: `q[joint * n_actions + a]`.
pub fn joint_q_values(mdp: &ParametricMdp, steps: &StepTable, space: &JointSpace, worst: &ValueField) -> Vec<f64> {
    let (np, na) = (mdp.n_psi(), mdp.n_actions());
    let mut q = vec![0.0; space.n_joint() * na];
    q.par_chunks_mut(na).enumerate().for_each(|(joint, out)| {
        let (row, psi) = (joint / np, joint % np);
        let s = space.state_of_row(row);
        for (a, slot) in out.iter_mut().enumerate() {
            *slot = worst_displacement(mdp, steps, space, worst, s, a, psi).1;
        }
    });
    q
}

/// Normalized discounted occupancy of joint states under a fixed agent and a
/// deterministic adversary table, from `start` (indexed by joint state).
///
/// Solves `μ = (1−γ)ρ + γ Pᵀμ` by fixed-point iteration to an `ℓ₁` change of
/// at most `tol`.
pub fn joint_occupancy(
    agent: &PolicyTable,
    adversary: &PolicyTable,
    mdp: &ParametricMdp,
    steps: &StepTable,
    start: &[f64],
    tol: f64,
) -> Result<Vec<f64>> {
    let space = agent.joint_space();
    let n = space.n_joint();
    if start.len() != n {
        return Err(Error::Shape(format!(
            "start distribution has {} entries, expected {n}",
            start.len()
        )));
    }
    if adversary.kind() != TableKind::Adversary(space.class) || adversary.n_keys_total() != n * mdp.n_actions() {
        return Err(Error::Shape("adversary table does not match the agent".into()));
    }
    let (np, na) = (mdp.n_psi(), mdp.n_actions());
    // transitions as (from, to, prob) with a fixed order
    let mut edges: Vec<(usize, usize, f64)> = Vec::new();
    for joint in 0..n {
        let (row, psi) = (joint / np, joint % np);
        let s = space.state_of_row(row);
        let probs = agent.row(space.obs_key(row, psi));
        for (a, &pa) in probs.iter().enumerate() {
            if pa <= 0.0 {
                continue;
            }
            let b = adversary
                .choice(joint * na + a)
                .ok_or_else(|| Error::Contract("adversary table must be deterministic".into()))?;
            let next_psi = steps.target(psi, b);
            for (t, p) in mdp.row(next_psi, s, a).iter() {
                edges.push((joint, space.next_row(s, a, t) * np + next_psi, pa * p));
            }
        }
    }
    let gamma = mdp.gamma();
    let base: Vec<f64> = start.iter().map(|&p| (1.0 - gamma) * p).collect();
    let mut mu = base.clone();
    for _ in 0..1_000_000 {
        let mut next = base.clone();
        for &(from, to, p) in &edges {
            next[to] += gamma * p * mu[from];
        }
        let change: f64 = next.iter().zip(&mu).map(|(a, b)| (a - b).abs()).sum();
        mu = next;
        if change <= tol {
            return Ok(mu);
        }
    }
    Err(Error::Numerical("occupancy iteration did not settle".into()))
}
