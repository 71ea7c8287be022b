use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::game::{argmin, pure_maximin, solve_zero_sum, Payoff};
use crate::grid::StepTable;
use crate::mdp::ParametricMdp;
use crate::operators::{parametric_payoff, tc_payoff, BackupMode};
use crate::policy::{ObservationClass, PolicyShape, PolicyTable, TableKind};
use crate::value::{ValueField, ValueKind};

pub fn policy_shape(mdp: &ParametricMdp) -> PolicyShape {
    PolicyShape {
        n_states: mdp.n_states(),
        n_actions: mdp.n_actions(),
        n_psi: mdp.n_psi(),
    }
}

/// Agent strategy and committed-adversary reply of one matrix game.
fn solve_rows(m: Payoff<'_>, mode: BackupMode) -> Result<(Vec<f64>, usize)> {
    let p = match mode {
        BackupMode::PureActions => {
            let (i, _) = pure_maximin(m);
            let mut p = vec![0.0; m.rows()];
            p[i] = 1.0;
            p
        }
        BackupMode::MixedExact => solve_zero_sum(m)?.row_strategy,
    };
    let (b, _) = m.row_guarantee(&p);
    Ok((p, b))
}

/// Maximin agent policy on `(s, ψ)` and the adversary's reply, read off the
/// per-state games of an (approximate) fixed point of the optimal TC backup.
///
/// The adversary row answers the agent's mixed commitment (the order of play
/// inside the backup), so it is the same displacement for every realized
/// action at a given `(s, ψ)`.
pub fn extract_oracle_policy(
    v_star: &ValueField,
    mdp: &ParametricMdp,
    steps: &StepTable,
    mode: BackupMode,
) -> Result<(PolicyTable, PolicyTable)> {
    let (ns, np, na) = (mdp.n_states(), mdp.n_psi(), mdp.n_actions());
    if v_star.kind() != ValueKind::Augmented || v_star.rows() != ns || v_star.cols() != np {
        return Err(Error::Shape("extraction needs an augmented field over (s, psi)".into()));
    }
    let nb = steps.n_displacements();
    let solved: Vec<(Vec<f64>, usize)> = (0..ns * np)
        .into_par_iter()
        .map(|x| {
            let (s, psi) = (x / np, x % np);
            let m = tc_payoff(mdp, steps, v_star, s, psi);
            solve_rows(Payoff::new(&m, na, nb), mode)
        })
        .collect::<Result<_>>()?;
    let shape = policy_shape(mdp);
    let rows: Vec<Vec<f64>> = solved.iter().map(|(p, _)| p.clone()).collect();
    let agent = PolicyTable::from_rows(TableKind::Agent(ObservationClass::Oracle), shape, na, rows)?;
    let choices: Vec<usize> = solved.iter().flat_map(|&(_, b)| std::iter::repeat_n(b, na)).collect();
    let adversary = PolicyTable::deterministic(TableKind::Adversary(ObservationClass::Oracle), shape, nb, &choices)?;
    Ok((agent, adversary))
}

/// Vanilla policy from a state-only robust value: the maximin strategy of the
/// per-state parametric game (`rectangular` uses the pure `max_a min_ψ` rule).
pub fn extract_state_policy(v: &ValueField, mdp: &ParametricMdp, mode: BackupMode) -> Result<PolicyTable> {
    if v.kind() != ValueKind::StateOnly || v.rows() != mdp.n_states() {
        return Err(Error::Shape("state policy extraction needs a state-only field".into()));
    }
    let rows = (0..mdp.n_states())
        .map(|s| {
            let m = parametric_payoff(mdp, v, s);
            solve_rows(Payoff::new(&m, mdp.n_actions(), mdp.n_psi()), mode).map(|r| r.0)
        })
        .collect::<Result<Vec<_>>>()?;
    PolicyTable::from_rows(
        TableKind::Agent(ObservationClass::Vanilla),
        policy_shape(mdp),
        mdp.n_actions(),
        rows,
    )
}

/// Greedy vanilla policy for the nominal MDP at one grid point.
pub fn greedy_policy(v: &ValueField, mdp: &ParametricMdp, psi: usize) -> Result<PolicyTable> {
    if v.kind() != ValueKind::StateOnly || v.rows() != mdp.n_states() {
        return Err(Error::Shape("greedy extraction needs a state-only field".into()));
    }
    let actions: Vec<usize> = (0..mdp.n_states())
        .map(|s| {
            let q = (0..mdp.n_actions())
                .map(|a| -(mdp.reward(s, a) + mdp.gamma() * mdp.row(psi, s, a).expect(|t| v.get(t, 0))));
            argmin(q).0
        })
        .collect();
    PolicyTable::agent_deterministic(ObservationClass::Vanilla, policy_shape(mdp), &actions)
}
