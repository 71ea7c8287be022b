//! Mixed policy tables keyed by what the player observes.
//!
//! Agents observe one of three classes: the state and current parameter
//! (oracle), the state plus the previous state and action (stacked), or the
//! state alone (vanilla). Adversary tables are keyed by the full joint state
//! of the game together with the agent's realized action, and choose among
//! step-ball displacements.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const ROW_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ObservationClass {
    Oracle,
    Stacked,
    Vanilla,
}

impl ObservationClass {
    pub fn name(self) -> &'static str {
        match self {
            ObservationClass::Oracle => "oracle",
            ObservationClass::Stacked => "stacked",
            ObservationClass::Vanilla => "vanilla",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PolicyShape {
    pub n_states: usize,
    pub n_actions: usize,
    pub n_psi: usize,
}

/// Layout of the game state `(s, prev, ψ)` for a given agent class.
///
/// `prev` only exists for stacked agents: index 0 is the episode-start
/// sentinel, `1 + s_prev·A + a_prev` encodes a predecessor. The agent-side
/// part `(s, prev)` is called a row; the joint index is `row·n_psi + ψ`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct JointSpace {
    pub class: ObservationClass,
    pub shape: PolicyShape,
    n_prev: usize,
}

impl JointSpace {
    pub fn new(class: ObservationClass, shape: PolicyShape) -> Self {
        let n_prev = match class {
            ObservationClass::Stacked => 1 + shape.n_states * shape.n_actions,
            _ => 1,
        };
        Self { class, shape, n_prev }
    }

    pub fn n_prev(&self) -> usize {
        self.n_prev
    }

    pub fn n_rows(&self) -> usize {
        self.shape.n_states * self.n_prev
    }

    pub fn n_joint(&self) -> usize {
        self.n_rows() * self.shape.n_psi
    }

    #[inline]
    pub fn state_of_row(&self, row: usize) -> usize {
        row / self.n_prev
    }

    #[inline]
    pub fn start_row(&self, s: usize) -> usize {
        s * self.n_prev
    }

    /// Row after taking `a` in `s` and landing in `next`.
    #[inline]
    pub fn next_row(&self, s: usize, a: usize, next: usize) -> usize {
        match self.class {
            ObservationClass::Stacked => next * self.n_prev + 1 + s * self.shape.n_actions + a,
            _ => next,
        }
    }

    /// Agent observation key of a game state.
    #[inline]
    pub fn obs_key(&self, row: usize, psi: usize) -> usize {
        match self.class {
            ObservationClass::Oracle => row * self.shape.n_psi + psi,
            _ => row,
        }
    }

    pub fn n_obs(&self) -> usize {
        match self.class {
            ObservationClass::Oracle => self.shape.n_states * self.shape.n_psi,
            _ => self.n_rows(),
        }
    }

    /// Predecessor `(s_prev, a_prev)` encoded in a row, `None` at episode start.
    pub fn predecessor(&self, row: usize) -> Option<(usize, usize)> {
        let prev = row % self.n_prev;
        if prev == 0 {
            None
        } else {
            let p = prev - 1;
            Some((p / self.shape.n_actions, p % self.shape.n_actions))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TableKind {
    Agent(ObservationClass),
    /// Keyed by `(joint game state, realized action)` for the given agent class.
    Adversary(ObservationClass),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyTable {
    kind: TableKind,
    shape: PolicyShape,
    n_choices: usize,
    probs: Vec<f64>,
}

impl PolicyTable {
    fn n_keys(kind: TableKind, shape: PolicyShape) -> usize {
        match kind {
            TableKind::Agent(class) => JointSpace::new(class, shape).n_obs(),
            TableKind::Adversary(class) => JointSpace::new(class, shape).n_joint() * shape.n_actions,
        }
    }

    pub fn uniform_agent(class: ObservationClass, shape: PolicyShape) -> Self {
        let kind = TableKind::Agent(class);
        let n = Self::n_keys(kind, shape);
        let w = 1.0 / shape.n_actions as f64;
        Self {
            kind,
            shape,
            n_choices: shape.n_actions,
            probs: vec![w; n * shape.n_actions],
        }
    }

    /// Point masses, one choice per key.
    pub fn deterministic(kind: TableKind, shape: PolicyShape, n_choices: usize, choices: &[usize]) -> Result<Self> {
        let n = Self::n_keys(kind, shape);
        if choices.len() != n {
            return Err(Error::Shape(format!("expected {n} choices, got {}", choices.len())));
        }
        let mut probs = vec![0.0; n * n_choices];
        for (key, &c) in choices.iter().enumerate() {
            if c >= n_choices {
                return Err(Error::Index(format!("choice {c} outside 0..{n_choices}")));
            }
            probs[key * n_choices + c] = 1.0;
        }
        Ok(Self {
            kind,
            shape,
            n_choices,
            probs,
        })
    }

    pub fn agent_deterministic(class: ObservationClass, shape: PolicyShape, actions: &[usize]) -> Result<Self> {
        Self::deterministic(TableKind::Agent(class), shape, shape.n_actions, actions)
    }

    /// Explicit rows; every row must be a distribution within [`ROW_TOL`].
    pub fn from_rows(kind: TableKind, shape: PolicyShape, n_choices: usize, rows: Vec<Vec<f64>>) -> Result<Self> {
        let n = Self::n_keys(kind, shape);
        if rows.len() != n || rows.iter().any(|r| r.len() != n_choices) {
            return Err(Error::Shape(format!("policy needs {n} rows of {n_choices} entries")));
        }
        let table = Self {
            kind,
            shape,
            n_choices,
            probs: rows.into_iter().flatten().collect(),
        };
        table.check_rows()?;
        Ok(table)
    }

    pub fn check_rows(&self) -> Result<()> {
        for key in 0..self.n_keys_total() {
            let row = self.row(key);
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > ROW_TOL || row.iter().any(|&p| !(p >= 0.0)) {
                return Err(Error::Contract(format!(
                    "policy row {key} is not a distribution (sum {sum})"
                )));
            }
        }
        Ok(())
    }

    pub fn kind(&self) -> TableKind {
        self.kind
    }

    pub fn shape(&self) -> PolicyShape {
        self.shape
    }

    pub fn n_choices(&self) -> usize {
        self.n_choices
    }

    pub fn n_keys_total(&self) -> usize {
        self.probs.len() / self.n_choices
    }

    /// Observation class of the agent this table belongs to (or plays against).
    pub fn class(&self) -> ObservationClass {
        match self.kind {
            TableKind::Agent(c) | TableKind::Adversary(c) => c,
        }
    }

    pub fn is_agent(&self) -> bool {
        matches!(self.kind, TableKind::Agent(_))
    }

    pub fn joint_space(&self) -> JointSpace {
        JointSpace::new(self.class(), self.shape)
    }

    #[inline]
    pub fn row(&self, key: usize) -> &[f64] {
        &self.probs[key * self.n_choices..(key + 1) * self.n_choices]
    }

    pub fn set_row(&mut self, key: usize, row: &[f64]) {
        assert_eq!(row.len(), self.n_choices);
        self.probs[key * self.n_choices..(key + 1) * self.n_choices].copy_from_slice(row);
    }

    pub fn set_point_mass(&mut self, key: usize, choice: usize) {
        let row = &mut self.probs[key * self.n_choices..(key + 1) * self.n_choices];
        row.fill(0.0);
        row[choice] = 1.0;
    }

    /// The single choice of a point-mass row.
    pub fn choice(&self, key: usize) -> Option<usize> {
        let row = self.row(key);
        let mut hit = None;
        for (i, &p) in row.iter().enumerate() {
            if p > 0.0 {
                if hit.is_some() || p < 1.0 - ROW_TOL {
                    return None;
                }
                hit = Some(i);
            }
        }
        hit
    }

    pub fn is_deterministic(&self) -> bool {
        (0..self.n_keys_total()).all(|k| self.choice(k).is_some())
    }

    /// Re-key a vanilla policy for a richer class without changing its behavior.
    pub fn lift(&self, class: ObservationClass) -> Result<PolicyTable> {
        if self.kind != TableKind::Agent(ObservationClass::Vanilla) {
            return Err(Error::Contract("only vanilla agent tables can be lifted".into()));
        }
        let space = JointSpace::new(class, self.shape);
        let mut out = PolicyTable {
            kind: TableKind::Agent(class),
            shape: self.shape,
            n_choices: self.n_choices,
            probs: vec![0.0; space.n_obs() * self.n_choices],
        };
        for key in 0..space.n_obs() {
            let s = match class {
                ObservationClass::Oracle => key / self.shape.n_psi,
                _ => space.state_of_row(key),
            };
            out.set_row(key, self.row(s));
        }
        Ok(out)
    }

    /// One line per observation key, columns `<key fields>,p_0,..`.
    pub fn to_csv(&self) -> String {
        let space = self.joint_space();
        let mut out = String::new();
        let key_header = match self.kind {
            TableKind::Agent(ObservationClass::Vanilla) => "state",
            TableKind::Agent(ObservationClass::Oracle) => "state,psi",
            TableKind::Agent(ObservationClass::Stacked) => "state,prev_state,prev_action",
            TableKind::Adversary(ObservationClass::Stacked) => "state,prev_state,prev_action,psi,action",
            TableKind::Adversary(_) => "state,psi,action",
        };
        out.push_str(key_header);
        let prefix = if self.is_agent() { "p" } else { "b" };
        for c in 0..self.n_choices {
            let _ = write!(out, ",{prefix}_{c}");
        }
        out.push('\n');
        let fmt_prev = |row: usize| match space.predecessor(row) {
            Some((s, a)) => format!("{s},{a}"),
            None => "start,start".to_string(),
        };
        for key in 0..self.n_keys_total() {
            let fields = match self.kind {
                TableKind::Agent(ObservationClass::Vanilla) => key.to_string(),
                TableKind::Agent(ObservationClass::Oracle) => {
                    format!("{},{}", key / self.shape.n_psi, key % self.shape.n_psi)
                }
                TableKind::Agent(ObservationClass::Stacked) => {
                    format!("{},{}", space.state_of_row(key), fmt_prev(key))
                }
                TableKind::Adversary(class) => {
                    let a = key % self.shape.n_actions;
                    let joint = key / self.shape.n_actions;
                    let (row, psi) = (joint / self.shape.n_psi, joint % self.shape.n_psi);
                    if class == ObservationClass::Stacked {
                        format!("{},{},{psi},{a}", space.state_of_row(row), fmt_prev(row))
                    } else {
                        format!("{row},{psi},{a}")
                    }
                }
            };
            out.push_str(&fields);
            for p in self.row(key) {
                let _ = write!(out, ",{p}");
            }
            out.push('\n');
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SHAPE: PolicyShape = PolicyShape {
        n_states: 3,
        n_actions: 2,
        n_psi: 4,
    };

    #[test]
    fn joint_space_layout() {
        let v = JointSpace::new(ObservationClass::Vanilla, SHAPE);
        assert_eq!(v.n_rows(), 3);
        assert_eq!(v.n_obs(), 3);
        let o = JointSpace::new(ObservationClass::Oracle, SHAPE);
        assert_eq!(o.n_obs(), 12);
        assert_eq!(o.obs_key(2, 3), 11);
        let st = JointSpace::new(ObservationClass::Stacked, SHAPE);
        assert_eq!(st.n_prev(), 7);
        assert_eq!(st.n_rows(), 21);
        let r = st.next_row(1, 1, 2);
        assert_eq!(st.state_of_row(r), 2);
        assert_eq!(st.predecessor(r), Some((1, 1)));
        assert_eq!(st.predecessor(st.start_row(2)), None);
    }

    #[test]
    fn rows_must_be_distributions() {
        let kind = TableKind::Agent(ObservationClass::Vanilla);
        let ok = vec![vec![0.5, 0.5], vec![1.0, 0.0], vec![0.0, 1.0]];
        assert!(PolicyTable::from_rows(kind, SHAPE, 2, ok).is_ok());
        let bad = vec![vec![0.5, 0.4], vec![1.0, 0.0], vec![0.0, 1.0]];
        assert!(matches!(
            PolicyTable::from_rows(kind, SHAPE, 2, bad),
            Err(Error::Contract(_))
        ));
    }

    #[test]
    fn lift_preserves_behavior() {
        let v = PolicyTable::agent_deterministic(ObservationClass::Vanilla, SHAPE, &[1, 0, 1]).unwrap();
        let o = v.lift(ObservationClass::Oracle).unwrap();
        for s in 0..3 {
            for psi in 0..4 {
                assert_eq!(o.choice(s * 4 + psi), v.choice(s));
            }
        }
        let st = v.lift(ObservationClass::Stacked).unwrap();
        let space = st.joint_space();
        for row in 0..space.n_rows() {
            assert_eq!(st.choice(row), v.choice(space.state_of_row(row)));
        }
        assert!(o.lift(ObservationClass::Stacked).is_err());
    }

    #[test]
    fn csv_headers() {
        let u = PolicyTable::uniform_agent(ObservationClass::Stacked, SHAPE);
        let csv = u.to_csv();
        assert!(csv.starts_with("state,prev_state,prev_action,p_0,p_1\n0,start,start,0.5,0.5\n"));
        assert_eq!(csv.lines().count(), 1 + 21);
    }
}
