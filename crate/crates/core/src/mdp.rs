//! Parametric MDP models `(S, A, Ψ, p_ψ, r, γ)` with kernels materialized on a
//! parameter grid.

use serde::{Deserialize, Serialize};

use crate::envs::{ChainModel, PendulumModel};
use crate::error::{Error, Result};
use crate::grid::ParameterGrid;

/// Tolerance for simplex membership of kernel rows.
pub const SIMPLEX_TOL: f64 = 1e-12;

/// Sparse kernel rows in compressed layout, keyed by `(psi, s, a)`.
#[derive(Debug, Clone, PartialEq)]
struct KernelTable {
    offsets: Vec<usize>,
    next: Vec<usize>,
    prob: Vec<f64>,
}

impl KernelTable {
    fn from_rows(rows: Vec<Vec<(usize, f64)>>) -> Self {
        let mut offsets = Vec::with_capacity(rows.len() + 1);
        let total = rows.iter().map(Vec::len).sum();
        let mut next = Vec::with_capacity(total);
        let mut prob = Vec::with_capacity(total);
        offsets.push(0);
        for row in rows {
            for (s, p) in row {
                next.push(s);
                prob.push(p);
            }
            offsets.push(next.len());
        }
        Self { offsets, next, prob }
    }
}

/// One outgoing distribution `p_ψ(·|s,a)` in sparse form.
#[derive(Debug, Clone, Copy)]
pub struct KernelRow<'a> {
    pub states: &'a [usize],
    pub probs: &'a [f64],
}

impl<'a> KernelRow<'a> {
    pub fn iter(&self) -> impl Iterator<Item = (usize, f64)> + 'a {
        self.states.iter().copied().zip(self.probs.iter().copied())
    }

    /// `Σ_{s'} p(s') f(s')`.
    #[inline]
    pub fn expect(&self, mut f: impl FnMut(usize) -> f64) -> f64 {
        let mut acc = 0.0;
        for (&s, &p) in self.states.iter().zip(self.probs) {
            acc += p * f(s);
        }
        acc
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }
}

/// Where the kernel comes from; families can also be evaluated off-grid.
#[derive(Debug, Clone, PartialEq)]
pub enum KernelFamily {
    /// Only the materialized grid tables exist.
    Tabular,
    Chain(ChainModel),
    Pendulum(PendulumModel),
}

impl KernelFamily {
    pub fn row_at(&self, point: &[f64], s: usize, a: usize) -> Option<Vec<(usize, f64)>> {
        match self {
            KernelFamily::Tabular => None,
            KernelFamily::Chain(m) => Some(m.row_at(point, s, a)),
            KernelFamily::Pendulum(m) => Some(m.row_at(point, s, a)),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            KernelFamily::Tabular => "tabular",
            KernelFamily::Chain(_) => "chain",
            KernelFamily::Pendulum(_) => "pendulum",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParametricMdp {
    n_states: usize,
    n_actions: usize,
    gamma: f64,
    reward: Vec<f64>,
    grid: ParameterGrid,
    kernel: KernelTable,
    family: KernelFamily,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum Violation {
    KernelRow {
        psi: usize,
        state: usize,
        action: usize,
        sum: f64,
        min_entry: f64,
    },
    NextStateOutOfRange {
        psi: usize,
        state: usize,
        action: usize,
        next: usize,
    },
    Reward {
        state: usize,
        action: usize,
        value: f64,
    },
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }
}

impl ParametricMdp {
    /// Build from explicit sparse rows indexed `(psi * n_states + s) * n_actions + a`,
    /// rejecting any model that fails [`ParametricMdp::validate`].
    pub fn from_rows(
        n_states: usize,
        n_actions: usize,
        gamma: f64,
        reward: Vec<f64>,
        grid: ParameterGrid,
        rows: Vec<Vec<(usize, f64)>>,
    ) -> Result<Self> {
        let mdp = Self::from_rows_unchecked(n_states, n_actions, gamma, reward, grid, rows)?;
        mdp.ensure_valid()?;
        Ok(mdp)
    }

    /// Shape-checked but not simplex-checked; used to inspect broken models.
    pub fn from_rows_unchecked(
        n_states: usize,
        n_actions: usize,
        gamma: f64,
        reward: Vec<f64>,
        grid: ParameterGrid,
        rows: Vec<Vec<(usize, f64)>>,
    ) -> Result<Self> {
        if n_states == 0 || n_actions == 0 {
            return Err(Error::ModelValidation(
                "model needs at least one state and one action".into(),
            ));
        }
        if !(0.0..1.0).contains(&gamma) {
            return Err(Error::ModelValidation(format!(
                "discount must lie in [0,1), got {gamma}"
            )));
        }
        if reward.len() != n_states * n_actions {
            return Err(Error::Shape(format!(
                "reward table has {} entries, expected {}",
                reward.len(),
                n_states * n_actions
            )));
        }
        let expected = grid.len() * n_states * n_actions;
        if rows.len() != expected {
            return Err(Error::Shape(format!(
                "kernel has {} rows, expected {expected}",
                rows.len()
            )));
        }
        Ok(Self {
            n_states,
            n_actions,
            gamma,
            reward,
            grid,
            kernel: KernelTable::from_rows(rows),
            family: KernelFamily::Tabular,
        })
    }

    /// Materialize a kernel family on every grid point.
    pub fn from_family(
        n_states: usize,
        n_actions: usize,
        gamma: f64,
        reward: Vec<f64>,
        grid: ParameterGrid,
        family: KernelFamily,
    ) -> Result<Self> {
        let mut rows = Vec::with_capacity(grid.len() * n_states * n_actions);
        for psi in 0..grid.len() {
            let point = grid.point(psi);
            for s in 0..n_states {
                for a in 0..n_actions {
                    rows.push(
                        family
                            .row_at(&point, s, a)
                            .ok_or_else(|| Error::ModelValidation("tabular family cannot be materialized".into()))?,
                    );
                }
            }
        }
        let mut mdp = Self::from_rows(n_states, n_actions, gamma, reward, grid, rows)?;
        mdp.family = family;
        Ok(mdp)
    }

    fn ensure_valid(&self) -> Result<()> {
        let report = self.validate();
        match report.violations.first() {
            None => Ok(()),
            Some(v) => Err(Error::ModelValidation(format!(
                "{} violation(s), first: {v:?}",
                report.violations.len()
            ))),
        }
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn grid(&self) -> &ParameterGrid {
        &self.grid
    }

    pub fn n_psi(&self) -> usize {
        self.grid.len()
    }

    pub fn family(&self) -> &KernelFamily {
        &self.family
    }

    pub fn rewards(&self) -> &[f64] {
        &self.reward
    }

    #[inline]
    pub fn reward(&self, s: usize, a: usize) -> f64 {
        self.reward[s * self.n_actions + a]
    }

    /// Same model with a different discount.
    pub fn with_gamma(&self, gamma: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&gamma) {
            return Err(Error::ModelValidation(format!(
                "discount must lie in [0,1), got {gamma}"
            )));
        }
        Ok(Self { gamma, ..self.clone() })
    }

    #[inline]
    fn row_index(&self, psi: usize, s: usize, a: usize) -> usize {
        (psi * self.n_states + s) * self.n_actions + a
    }

    /// Sparse kernel row; indices must be in range.
    #[inline]
    pub fn row(&self, psi: usize, s: usize, a: usize) -> KernelRow<'_> {
        let i = self.row_index(psi, s, a);
        let (lo, hi) = (self.kernel.offsets[i], self.kernel.offsets[i + 1]);
        KernelRow {
            states: &self.kernel.next[lo..hi],
            probs: &self.kernel.prob[lo..hi],
        }
    }

    /// Dense `p_ψ(·|s,a)`.
    pub fn kernel_eval(&self, s: usize, a: usize, psi: usize) -> Result<Vec<f64>> {
        if s >= self.n_states || a >= self.n_actions || psi >= self.n_psi() {
            return Err(Error::Index(format!(
                "(s={s}, a={a}, psi={psi}) outside ({}, {}, {})",
                self.n_states,
                self.n_actions,
                self.n_psi()
            )));
        }
        let mut dense = vec![0.0; self.n_states];
        for (next, p) in self.row(psi, s, a).iter() {
            if next >= self.n_states {
                return Err(Error::ModelValidation(format!(
                    "successor {next} out of range at (s={s}, a={a}, psi={psi})"
                )));
            }
            dense[next] += p;
        }
        let sum: f64 = dense.iter().sum();
        if (sum - 1.0).abs() > SIMPLEX_TOL || dense.iter().any(|&p| p < 0.0) {
            return Err(Error::ModelValidation(format!(
                "kernel row at (s={s}, a={a}, psi={psi}) is not a distribution (sum {sum})"
            )));
        }
        Ok(dense)
    }

    /// Kernel at a continuous parameter. Families evaluate exactly; tabular
    /// models fall back to the nearest grid point.
    pub fn row_at_point(&self, point: &[f64], s: usize, a: usize) -> Vec<(usize, f64)> {
        match self.family.row_at(point, s, a) {
            Some(row) => row,
            None => self.row(self.grid.nearest(point), s, a).iter().collect(),
        }
    }

    pub fn supports_continuous(&self) -> bool {
        !matches!(self.family, KernelFamily::Tabular)
    }

    /// Every row is a point mass.
    pub fn is_deterministic(&self) -> bool {
        (0..self.kernel.offsets.len() - 1).all(|i| {
            let (lo, hi) = (self.kernel.offsets[i], self.kernel.offsets[i + 1]);
            self.kernel.prob[lo..hi].iter().filter(|&&p| p > 0.0).count() == 1
        })
    }

    pub fn validate(&self) -> ValidationReport {
        let mut violations = Vec::new();
        for psi in 0..self.n_psi() {
            for s in 0..self.n_states {
                for a in 0..self.n_actions {
                    let row = self.row(psi, s, a);
                    let mut sum = 0.0;
                    let mut min_entry = f64::INFINITY;
                    for (next, p) in row.iter() {
                        if next >= self.n_states {
                            violations.push(Violation::NextStateOutOfRange {
                                psi,
                                state: s,
                                action: a,
                                next,
                            });
                        }
                        sum += p;
                        min_entry = min_entry.min(p);
                    }
                    if row.is_empty() {
                        min_entry = 0.0;
                    }
                    if !((sum - 1.0).abs() <= SIMPLEX_TOL) || !(min_entry >= 0.0) {
                        violations.push(Violation::KernelRow {
                            psi,
                            state: s,
                            action: a,
                            sum,
                            min_entry,
                        });
                    }
                }
            }
        }
        for s in 0..self.n_states {
            for a in 0..self.n_actions {
                let value = self.reward(s, a);
                if !(0.0..=1.0).contains(&value) {
                    violations.push(Violation::Reward {
                        state: s,
                        action: a,
                        value,
                    });
                }
            }
        }
        ValidationReport { violations }
    }

    pub fn to_dump(&self) -> ModelDump {
        let reward = (0..self.n_states)
            .map(|s| (0..self.n_actions).map(|a| self.reward(s, a)).collect())
            .collect();
        let kernels = (0..self.n_psi())
            .map(|psi| PsiKernel {
                psi,
                point: self.grid.point(psi),
                rows: (0..self.n_states)
                    .map(|s| {
                        (0..self.n_actions)
                            .map(|a| self.row(psi, s, a).iter().collect())
                            .collect()
                    })
                    .collect(),
            })
            .collect();
        ModelDump {
            family: self.family.name().to_string(),
            n_states: self.n_states,
            n_actions: self.n_actions,
            gamma: self.gamma,
            dims: self.grid.dims(),
            segments_per_dim: self.grid.segments_per_dim(),
            reward,
            kernels,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_dump()).expect("model dump serializes")
    }

    /// Load a tabular model from its JSON dump; the result is validated.
    pub fn from_json_str(text: &str) -> Result<Self> {
        let dump: ModelDump = serde_json::from_str(text)?;
        Self::from_dump(dump)
    }

    pub fn from_dump(dump: ModelDump) -> Result<Self> {
        let grid = ParameterGrid::new(dump.dims, dump.segments_per_dim)?;
        if dump.reward.len() != dump.n_states || dump.reward.iter().any(|r| r.len() != dump.n_actions) {
            return Err(Error::Shape("reward table does not match (states, actions)".into()));
        }
        if dump.kernels.len() != grid.len() {
            return Err(Error::Shape(format!(
                "dump has {} kernel tables, grid has {} points",
                dump.kernels.len(),
                grid.len()
            )));
        }
        let mut tables: Vec<Option<PsiKernel>> = (0..grid.len()).map(|_| None).collect();
        for k in dump.kernels {
            let slot = tables
                .get_mut(k.psi)
                .ok_or_else(|| Error::Index(format!("kernel table for psi {}", k.psi)))?;
            if slot.is_some() {
                return Err(Error::Shape(format!("duplicate kernel table for psi {}", k.psi)));
            }
            *slot = Some(k);
        }
        let mut rows = Vec::with_capacity(grid.len() * dump.n_states * dump.n_actions);
        for table in tables {
            let table = table.ok_or_else(|| Error::Shape("missing kernel table".into()))?;
            if table.rows.len() != dump.n_states || table.rows.iter().any(|r| r.len() != dump.n_actions) {
                return Err(Error::Shape(format!(
                    "kernel table for psi {} does not match (states, actions)",
                    table.psi
                )));
            }
            rows.extend(table.rows.into_iter().flatten());
        }
        let reward = dump.reward.into_iter().flatten().collect();
        Self::from_rows(dump.n_states, dump.n_actions, dump.gamma, reward, grid, rows)
    }
}

/// JSON layout of an exported model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelDump {
    pub family: String,
    pub n_states: usize,
    pub n_actions: usize,
    pub gamma: f64,
    pub dims: usize,
    pub segments_per_dim: usize,
    /// `reward[s][a]`.
    pub reward: Vec<Vec<f64>>,
    pub kernels: Vec<PsiKernel>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PsiKernel {
    pub psi: usize,
    pub point: Vec<f64>,
    /// `rows[s][a]` = sparse list of `(next_state, probability)`.
    pub rows: Vec<Vec<Vec<(usize, f64)>>>,
}
