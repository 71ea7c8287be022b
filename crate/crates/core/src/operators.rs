//! Bellman backups: nominal, sa-rectangular robust, parametric robust and the
//! time-constrained operators on `(s, ψ)`.
//!
//! Every backup is Jacobi-style: it reads an immutable input field and writes
//! a fresh output, so rows are computed in parallel and the result does not
//! depend on scheduling.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::game::{pure_maximin, solve_zero_sum, Payoff};
use crate::grid::{StepBall, StepTable};
use crate::mdp::ParametricMdp;
use crate::policy::{ObservationClass, PolicyTable, TableKind};
use crate::value::{ValueField, ValueKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum BackupMode {
    /// Agent restricted to deterministic actions: `max_a min_col`.
    PureActions,
    /// Exact value of the per-state matrix game over mixed agent strategies.
    #[default]
    MixedExact,
}

fn expect_shape(v: &ValueField, kind: ValueKind, rows: usize, cols: usize) -> Result<()> {
    if v.kind() != kind || v.rows() != rows || v.cols() != cols {
        return Err(Error::Shape(format!(
            "expected {kind:?} field {rows}x{cols}, got {:?} {}x{}",
            v.kind(),
            v.rows(),
            v.cols()
        )));
    }
    Ok(())
}

#[inline]
fn one_step_state(mdp: &ParametricMdp, v: &ValueField, s: usize, a: usize, psi: usize) -> f64 {
    let row = mdp.row(psi, s, a);
    mdp.reward(s, a) + mdp.gamma() * row.expect(|next| v.get(next, 0))
}

#[inline]
fn one_step_augmented(mdp: &ParametricMdp, v: &ValueField, s: usize, a: usize, psi_next: usize) -> f64 {
    let row = mdp.row(psi_next, s, a);
    mdp.reward(s, a) + mdp.gamma() * row.expect(|next| v.get(next, psi_next))
}

fn game_value(m: Payoff<'_>, mode: BackupMode) -> Result<f64> {
    match mode {
        BackupMode::PureActions => Ok(pure_maximin(m).1),
        BackupMode::MixedExact => Ok(solve_zero_sum(m)?.value),
    }
}

/// `v'(s) = max_a [r(s,a) + γ Σ p_ψ(s'|s,a) v(s')]` at a fixed grid point.
pub fn standard_backup(v: &ValueField, mdp: &ParametricMdp, psi: usize) -> Result<ValueField> {
    expect_shape(v, ValueKind::StateOnly, mdp.n_states(), 1)?;
    if psi >= mdp.n_psi() {
        return Err(Error::Index(format!("psi {psi} outside 0..{}", mdp.n_psi())));
    }
    let data = (0..mdp.n_states())
        .into_par_iter()
        .map(|s| {
            (0..mdp.n_actions())
                .map(|a| one_step_state(mdp, v, s, a, psi))
                .fold(f64::NEG_INFINITY, f64::max)
        })
        .collect();
    Ok(ValueField::from_states(data))
}

/// Payoff matrix of state `s` for the parametric game: rows = actions,
/// columns = grid points.
pub fn parametric_payoff(mdp: &ParametricMdp, v: &ValueField, s: usize) -> Vec<f64> {
    let (na, np) = (mdp.n_actions(), mdp.n_psi());
    let mut m = Vec::with_capacity(na * np);
    for a in 0..na {
        for psi in 0..np {
            m.push(one_step_state(mdp, v, s, a, psi));
        }
    }
    m
}

/// sa-rectangular robust backup. The adversary picks a grid point separately
/// for every action, so the agent's best response is pure:
/// `v'(s) = max_a min_ψ [r(s,a) + γ Σ p_ψ(s'|s,a) v(s')]`.
pub fn rect_robust_backup(v: &ValueField, mdp: &ParametricMdp) -> Result<ValueField> {
    expect_shape(v, ValueKind::StateOnly, mdp.n_states(), 1)?;
    let data = (0..mdp.n_states())
        .into_par_iter()
        .map(|s| {
            let m = parametric_payoff(mdp, v, s);
            pure_maximin(Payoff::new(&m, mdp.n_actions(), mdp.n_psi())).1
        })
        .collect();
    Ok(ValueField::from_states(data))
}

/// Parametric robust backup: one matrix game per state over all grid points.
pub fn param_robust_backup(v: &ValueField, mdp: &ParametricMdp, mode: BackupMode) -> Result<ValueField> {
    expect_shape(v, ValueKind::StateOnly, mdp.n_states(), 1)?;
    let data = (0..mdp.n_states())
        .into_par_iter()
        .map(|s| {
            let m = parametric_payoff(mdp, v, s);
            game_value(Payoff::new(&m, mdp.n_actions(), mdp.n_psi()), mode)
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(ValueField::from_states(data))
}

/// Payoff matrix at `(s, ψ)` for the time-constrained game: rows = actions,
/// columns = ball displacements.
pub fn tc_payoff(mdp: &ParametricMdp, steps: &StepTable, v: &ValueField, s: usize, psi: usize) -> Vec<f64> {
    let na = mdp.n_actions();
    let targets = steps.targets_from(psi);
    let mut m = Vec::with_capacity(na * targets.len());
    for a in 0..na {
        for &next_psi in targets {
            m.push(one_step_augmented(mdp, v, s, a, next_psi));
        }
    }
    m
}

fn check_steps(mdp: &ParametricMdp, steps: &StepTable) -> Result<()> {
    if steps.grid() != mdp.grid() {
        return Err(Error::Shape("step table was built for a different grid".into()));
    }
    Ok(())
}

/// `T_B^* v(s,ψ) = max_{π∈Δ_A} min_{b∈B} E_{a∼π}[r(s,a) + γ Σ p_{ψ⊕b}(s'|s,a) v(s', ψ⊕b)]`.
pub fn tc_backup_optimal(
    v: &ValueField,
    mdp: &ParametricMdp,
    steps: &StepTable,
    mode: BackupMode,
) -> Result<ValueField> {
    check_steps(mdp, steps)?;
    let (ns, np) = (mdp.n_states(), mdp.n_psi());
    expect_shape(v, ValueKind::Augmented, ns, np)?;
    let mut out = ValueField::augmented(ns, np);
    out.data_mut()
        .par_chunks_mut(np)
        .enumerate()
        .try_for_each(|(s, chunk)| -> Result<()> {
            for (psi, slot) in chunk.iter_mut().enumerate() {
                let m = tc_payoff(mdp, steps, v, s, psi);
                *slot = game_value(Payoff::new(&m, mdp.n_actions(), steps.n_displacements()), mode)?;
            }
            Ok(())
        })?;
    Ok(out)
}

fn agent_key(pi: &PolicyTable, s: usize, psi: usize) -> usize {
    match pi.class() {
        ObservationClass::Oracle => s * pi.shape().n_psi + psi,
        _ => s,
    }
}

/// `T_B^π v(s,ψ) = min_b Σ_a π(a|s,ψ)[r(s,a) + γ Σ p_{ψ⊕b}(s'|s,a) v(s', ψ⊕b)]`.
///
/// The adversary answers the agent's mixed commitment, not its realized
/// action. Accepts oracle tables and vanilla tables (which ignore ψ).
pub fn tc_backup_policy(
    v: &ValueField,
    pi: &PolicyTable,
    mdp: &ParametricMdp,
    steps: &StepTable,
) -> Result<ValueField> {
    check_steps(mdp, steps)?;
    let (ns, np, na) = (mdp.n_states(), mdp.n_psi(), mdp.n_actions());
    expect_shape(v, ValueKind::Augmented, ns, np)?;
    match pi.kind() {
        TableKind::Agent(ObservationClass::Oracle) | TableKind::Agent(ObservationClass::Vanilla) => {}
        other => {
            return Err(Error::Contract(format!(
                "policy backup needs an oracle or vanilla agent table, got {other:?}"
            )))
        }
    }
    let shape = pi.shape();
    if shape.n_states != ns || shape.n_actions != na || shape.n_psi != np {
        return Err(Error::Shape("policy table does not match the model".into()));
    }
    pi.check_rows()?;
    let mut out = ValueField::augmented(ns, np);
    out.data_mut().par_chunks_mut(np).enumerate().for_each(|(s, chunk)| {
        for (psi, slot) in chunk.iter_mut().enumerate() {
            let probs = pi.row(agent_key(pi, s, psi));
            let mut worst = f64::INFINITY;
            for &next_psi in steps.targets_from(psi) {
                let mut acc = 0.0;
                for (a, &p) in probs.iter().enumerate() {
                    if p > 0.0 {
                        acc += p * one_step_augmented(mdp, v, s, a, next_psi);
                    }
                }
                worst = worst.min(acc);
            }
            *slot = worst;
        }
    });
    Ok(out)
}

/// A Bellman operator bound to its model, usable by the value-iteration driver.
pub trait BellmanOperator: Sync {
    fn apply(&self, v: &ValueField) -> Result<ValueField>;
    fn gamma(&self) -> f64;
    /// All-zero field of the operator's domain.
    fn zero(&self) -> ValueField;
}

pub struct Standard<'a> {
    pub mdp: &'a ParametricMdp,
    pub psi: usize,
}

pub struct Rectangular<'a> {
    pub mdp: &'a ParametricMdp,
}

pub struct Parametric<'a> {
    pub mdp: &'a ParametricMdp,
    pub mode: BackupMode,
}

pub struct TcOptimal<'a> {
    pub mdp: &'a ParametricMdp,
    pub steps: StepTable,
    pub mode: BackupMode,
}

impl<'a> TcOptimal<'a> {
    pub fn new(mdp: &'a ParametricMdp, ball: &StepBall, mode: BackupMode) -> Self {
        Self {
            mdp,
            steps: StepTable::new(mdp.grid(), ball),
            mode,
        }
    }
}

pub struct TcPolicy<'a> {
    pub mdp: &'a ParametricMdp,
    pub steps: StepTable,
    pub policy: &'a PolicyTable,
}

impl<'a> TcPolicy<'a> {
    pub fn new(mdp: &'a ParametricMdp, ball: &StepBall, policy: &'a PolicyTable) -> Self {
        Self {
            mdp,
            steps: StepTable::new(mdp.grid(), ball),
            policy,
        }
    }
}

impl BellmanOperator for Standard<'_> {
    fn apply(&self, v: &ValueField) -> Result<ValueField> {
        standard_backup(v, self.mdp, self.psi)
    }
    fn gamma(&self) -> f64 {
        self.mdp.gamma()
    }
    fn zero(&self) -> ValueField {
        ValueField::state_only(self.mdp.n_states())
    }
}

impl BellmanOperator for Rectangular<'_> {
    fn apply(&self, v: &ValueField) -> Result<ValueField> {
        rect_robust_backup(v, self.mdp)
    }
    fn gamma(&self) -> f64 {
        self.mdp.gamma()
    }
    fn zero(&self) -> ValueField {
        ValueField::state_only(self.mdp.n_states())
    }
}

impl BellmanOperator for Parametric<'_> {
    fn apply(&self, v: &ValueField) -> Result<ValueField> {
        param_robust_backup(v, self.mdp, self.mode)
    }
    fn gamma(&self) -> f64 {
        self.mdp.gamma()
    }
    fn zero(&self) -> ValueField {
        ValueField::state_only(self.mdp.n_states())
    }
}

impl BellmanOperator for TcOptimal<'_> {
    fn apply(&self, v: &ValueField) -> Result<ValueField> {
        tc_backup_optimal(v, self.mdp, &self.steps, self.mode)
    }
    fn gamma(&self) -> f64 {
        self.mdp.gamma()
    }
    fn zero(&self) -> ValueField {
        ValueField::augmented(self.mdp.n_states(), self.mdp.n_psi())
    }
}

impl BellmanOperator for TcPolicy<'_> {
    fn apply(&self, v: &ValueField) -> Result<ValueField> {
        tc_backup_policy(v, self.policy, self.mdp, &self.steps)
    }
    fn gamma(&self) -> f64 {
        self.mdp.gamma()
    }
    fn zero(&self) -> ValueField {
        ValueField::augmented(self.mdp.n_states(), self.mdp.n_psi())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::{build_chain, ChainConfig};
    use crate::grid::ParameterGrid;
    use crate::policy::PolicyShape;

    fn chain(gamma: f64, g: usize) -> ParametricMdp {
        let cfg = ChainConfig {
            n_states: 4,
            goal: 3,
            gamma,
            success_low: 0.0,
            success_high: 1.0,
        };
        build_chain(&cfg, ParameterGrid::new(1, g).unwrap()).unwrap()
    }

    fn max_reward(mdp: &ParametricMdp, s: usize) -> f64 {
        (0..mdp.n_actions())
            .map(|a| mdp.reward(s, a))
            .fold(f64::NEG_INFINITY, f64::max)
    }

    #[test]
    fn zero_discount_gives_max_reward() {
        let mdp = chain(0.0, 3);
        let v = ValueField::from_states(vec![5.0, -3.0, 2.0, 7.0]);
        let steps = StepTable::new(mdp.grid(), &StepBall::new(1));
        let std = standard_backup(&v, &mdp, 1).unwrap();
        let rect = rect_robust_backup(&v, &mdp).unwrap();
        let param = param_robust_backup(&v, &mdp, BackupMode::MixedExact).unwrap();
        let tc = tc_backup_optimal(&ValueField::augmented(4, 3), &mdp, &steps, BackupMode::MixedExact).unwrap();
        for s in 0..4 {
            let want = max_reward(&mdp, s);
            assert_eq!(std.get(s, 0), want);
            assert_eq!(rect.get(s, 0), want);
            assert_eq!(param.get(s, 0), want);
            for psi in 0..3 {
                assert_eq!(tc.get(s, psi), want);
            }
        }
    }

    #[test]
    fn constant_input_shifts() {
        let mdp = chain(0.9, 3);
        let c = 2.5;
        let v = ValueField::from_states(vec![c; 4]);
        let out = standard_backup(&v, &mdp, 2).unwrap();
        for s in 0..4 {
            assert!((out.get(s, 0) - (max_reward(&mdp, s) + 0.9 * c)).abs() < 1e-12);
        }
    }

    #[test]
    fn single_point_grid_rect_equals_standard() {
        let mdp = chain(0.9, 1);
        let v = ValueField::from_states(vec![0.3, 1.0, -2.0, 4.0]);
        assert_eq!(
            rect_robust_backup(&v, &mdp).unwrap(),
            standard_backup(&v, &mdp, 0).unwrap()
        );
    }

    #[test]
    fn shape_errors() {
        let mdp = chain(0.9, 3);
        let wrong = ValueField::augmented(4, 3);
        assert!(matches!(standard_backup(&wrong, &mdp, 0), Err(Error::Shape(_))));
        assert!(matches!(
            standard_backup(&ValueField::state_only(4), &mdp, 3),
            Err(Error::Index(_))
        ));
        let steps = StepTable::new(mdp.grid(), &StepBall::new(1));
        assert!(tc_backup_optimal(&ValueField::state_only(4), &mdp, &steps, BackupMode::PureActions).is_err());
    }

    #[test]
    fn policy_backup_rejects_bad_rows() {
        let mdp = chain(0.9, 3);
        let shape = PolicyShape {
            n_states: 4,
            n_actions: 2,
            n_psi: 3,
        };
        let steps = StepTable::new(mdp.grid(), &StepBall::new(1));
        let mut pi = PolicyTable::uniform_agent(ObservationClass::Oracle, shape);
        pi.set_row(0, &[0.7, 0.7]);
        let v = ValueField::augmented(4, 3);
        assert!(matches!(
            tc_backup_policy(&v, &pi, &mdp, &steps),
            Err(Error::Contract(_))
        ));
        let stacked = PolicyTable::uniform_agent(ObservationClass::Stacked, shape);
        assert!(matches!(
            tc_backup_policy(&v, &stacked, &mdp, &steps),
            Err(Error::Contract(_))
        ));
    }
}
