//! Stationary MDP sequences with bounded drift, occupancy measures and the
//! Lipschitz bound on the robust objective.

use std::collections::HashMap;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::envs::{ChainConfig, ChainModel};
use crate::error::{Error, Result};
use crate::grid::{ParameterGrid, StepBall, StepTable};
use crate::policy::{ObservationClass, PolicyTable, TableKind};

const DRIFT_TOL: f64 = 1e-12;
const SIMPLEX_TOL: f64 = 1e-9;

/// Dense stationary MDP: `kernel[(s·A + a)·S + s']`, `reward[s·A + a]`.
#[derive(Debug, Clone, PartialEq)]
pub struct StationaryMdp {
    pub n_states: usize,
    pub n_actions: usize,
    pub gamma: f64,
    pub kernel: Vec<f64>,
    pub reward: Vec<f64>,
}

impl StationaryMdp {
    pub fn new(n_states: usize, n_actions: usize, gamma: f64, kernel: Vec<f64>, reward: Vec<f64>) -> Result<Self> {
        if n_states == 0 || n_actions == 0 {
            return Err(Error::Shape("stationary MDP needs states and actions".into()));
        }
        if !(0.0..1.0).contains(&gamma) {
            return Err(Error::ModelValidation(format!("discount {gamma} outside [0,1)")));
        }
        if kernel.len() != n_states * n_actions * n_states || reward.len() != n_states * n_actions {
            return Err(Error::Shape("kernel or reward table has the wrong size".into()));
        }
        for (i, row) in kernel.chunks(n_states).enumerate() {
            let sum: f64 = row.iter().sum();
            if row.iter().any(|&p| !(p >= 0.0)) || (sum - 1.0).abs() > SIMPLEX_TOL {
                return Err(Error::ModelValidation(format!("kernel row {i} is not a distribution")));
            }
        }
        if reward.iter().any(|r| !(0.0..=1.0).contains(r)) {
            return Err(Error::ModelValidation("rewards must lie in [0,1]".into()));
        }
        Ok(Self {
            n_states,
            n_actions,
            gamma,
            kernel,
            reward,
        })
    }

    pub fn row(&self, s: usize, a: usize) -> &[f64] {
        let base = (s * self.n_actions + a) * self.n_states;
        &self.kernel[base..base + self.n_states]
    }

    pub fn reward(&self, s: usize, a: usize) -> f64 {
        self.reward[s * self.n_actions + a]
    }

    fn check_policy(&self, pi: &PolicyTable) -> Result<()> {
        let shape = pi.shape();
        if pi.kind() != TableKind::Agent(ObservationClass::Vanilla)
            || shape.n_states != self.n_states
            || shape.n_actions != self.n_actions
        {
            return Err(Error::Shape(
                "theory checks need a vanilla policy of matching shape".into(),
            ));
        }
        pi.check_rows()
    }

    /// `P_π[s][s']` and `r_π[s]`.
    fn induced(&self, pi: &PolicyTable) -> (DMatrix<f64>, DVector<f64>) {
        let n = self.n_states;
        let mut p = DMatrix::zeros(n, n);
        let mut r = DVector::zeros(n);
        for s in 0..n {
            for (a, &w) in pi.row(s).iter().enumerate() {
                if w == 0.0 {
                    continue;
                }
                r[s] += w * self.reward(s, a);
                for (t, &q) in self.row(s, a).iter().enumerate() {
                    p[(s, t)] += w * q;
                }
            }
        }
        (p, r)
    }
}

/// Largest L1 kernel-row difference and largest reward difference over `(s, a)`.
pub fn drift_measure(m1: &StationaryMdp, m2: &StationaryMdp) -> Result<(f64, f64)> {
    if m1.n_states != m2.n_states || m1.n_actions != m2.n_actions {
        return Err(Error::Shape("drift needs MDPs of the same shape".into()));
    }
    let kernel = m1
        .kernel
        .chunks(m1.n_states)
        .zip(m2.kernel.chunks(m2.n_states))
        .map(|(a, b)| a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>())
        .fold(0.0, f64::max);
    let reward = m1
        .reward
        .iter()
        .zip(&m2.reward)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max);
    Ok((kernel, reward))
}

fn check_start(start: &[f64], n: usize) -> Result<()> {
    let sum: f64 = start.iter().sum();
    if start.len() != n || start.iter().any(|&p| !(p >= 0.0)) || (sum - 1.0).abs() > SIMPLEX_TOL {
        return Err(Error::Precondition("start must be a distribution over states".into()));
    }
    Ok(())
}

/// Normalized discounted state occupancy, from `(I − γ P_πᵀ) d = (1−γ) ρ`.
pub fn occupancy(pi: &PolicyTable, m: &StationaryMdp, start: &[f64]) -> Result<Vec<f64>> {
    m.check_policy(pi)?;
    check_start(start, m.n_states)?;
    let (p, _) = m.induced(pi);
    let n = m.n_states;
    let a = DMatrix::<f64>::identity(n, n) - p.transpose() * m.gamma;
    let b = DVector::from_iterator(n, start.iter().map(|&x| (1.0 - m.gamma) * x));
    let d = a
        .lu()
        .solve(&b)
        .ok_or_else(|| Error::Numerical("occupancy system is singular".into()))?;
    if d.iter().any(|x| !x.is_finite()) {
        return Err(Error::Numerical("occupancy solve produced non-finite entries".into()));
    }
    Ok(d.iter().map(|&x| x.max(0.0)).collect())
}

/// Expected discounted return written through the occupancy measure.
pub fn return_via_occupancy(pi: &PolicyTable, m: &StationaryMdp, start: &[f64]) -> Result<f64> {
    let d = occupancy(pi, m, start)?;
    let (_, r) = m.induced(pi);
    Ok(d.iter().zip(r.iter()).map(|(x, y)| x * y).sum::<f64>() / (1.0 - m.gamma))
}

/// State values `v^π` from `(I − γ P_π) v = r_π`.
pub fn policy_values(pi: &PolicyTable, m: &StationaryMdp) -> Result<Vec<f64>> {
    m.check_policy(pi)?;
    let (p, r) = m.induced(pi);
    let n = m.n_states;
    let a = DMatrix::<f64>::identity(n, n) - p * m.gamma;
    let v = a
        .lu()
        .solve(&r)
        .ok_or_else(|| Error::Numerical("policy evaluation system is singular".into()))?;
    Ok(v.iter().copied().collect())
}

/// `H`-step truncated discounted return by backward induction.
pub fn truncated_return(pi: &PolicyTable, m: &StationaryMdp, start: &[f64], horizon: usize) -> Result<f64> {
    m.check_policy(pi)?;
    check_start(start, m.n_states)?;
    let (p, r) = m.induced(pi);
    let mut v = DVector::zeros(m.n_states);
    for _ in 0..horizon {
        v = &r + (&p * &v) * m.gamma;
    }
    Ok(start.iter().zip(v.iter()).map(|(a, b)| a * b).sum())
}

/// Chain kernels with a parameter-dependent reward:
/// `r(s,a;ψ) = (1−c)·r_base(s,a) + c·mean(ψ)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainDriftFamily {
    pub chain: ChainConfig,
    pub reward_weight: f64,
}

impl ChainDriftFamily {
    pub fn new(chain: ChainConfig, reward_weight: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&reward_weight) {
            return Err(Error::Config(format!("reward weight {reward_weight} outside [0,1]")));
        }
        if chain.goal >= chain.n_states || chain.n_states == 0 {
            return Err(Error::Config("chain goal must be a state".into()));
        }
        for v in [chain.success_low, chain.success_high] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::Config(format!("success probability {v} outside [0,1]")));
            }
        }
        Ok(Self { chain, reward_weight })
    }

    /// Worst-case drift of one step of size `radius` in the ∞-norm.
    pub fn declared_bounds(&self, radius: f64) -> (f64, f64) {
        let slope = (self.chain.success_high - self.chain.success_low).abs();
        (2.0 * slope * radius, self.reward_weight * radius)
    }

    pub fn mdp_at(&self, point: &[f64]) -> Result<StationaryMdp> {
        let n = self.chain.n_states;
        let model = ChainModel::from_config(&self.chain);
        let mean = point.iter().sum::<f64>() / point.len().max(1) as f64;
        let mut kernel = vec![0.0; n * 2 * n];
        let mut reward = vec![0.0; n * 2];
        for s in 0..n {
            for a in 0..2 {
                for (t, p) in model.row_at(point, s, a) {
                    kernel[(s * 2 + a) * n + t] += p;
                }
                let base = if s == self.chain.goal { 1.0 } else { 0.0 };
                reward[s * 2 + a] = (1.0 - self.reward_weight) * base + self.reward_weight * mean;
            }
        }
        StationaryMdp::new(n, 2, self.chain.gamma, kernel, reward)
    }
}

/// Stationary MDPs `M_0, M_1, ..` with declared drift bounds.
#[derive(Debug, Clone)]
pub struct MdpSequence {
    pub mdps: Vec<StationaryMdp>,
    pub lp: f64,
    pub lr: f64,
}

impl MdpSequence {
    /// Fails with a drift error if any adjacent pair exceeds the declared bounds.
    pub fn new(mdps: Vec<StationaryMdp>, lp: f64, lr: f64) -> Result<Self> {
        for (t, w) in mdps.windows(2).enumerate() {
            let (dk, dr) = drift_measure(&w[0], &w[1])?;
            if dk > lp + DRIFT_TOL || dr > lr + DRIFT_TOL {
                return Err(Error::Drift(format!(
                    "step {t}: kernel drift {dk} (bound {lp}), reward drift {dr} (bound {lr})"
                )));
            }
        }
        Ok(Self { mdps, lp, lr })
    }

    pub fn from_trajectory(family: &ChainDriftFamily, traj: &[Vec<f64>], lp: f64, lr: f64) -> Result<Self> {
        let mdps = traj.iter().map(|p| family.mdp_at(p)).collect::<Result<Vec<_>>>()?;
        Self::new(mdps, lp, lr)
    }
}

/// `L' = γ/(1−γ)²·L_P + L_r/(1−γ)`.
pub fn lipschitz_constant(gamma: f64, lp: f64, lr: f64) -> f64 {
    gamma / (1.0 - gamma).powi(2) * lp + lr / (1.0 - gamma)
}

/// Grid surrogate of the robust objective: trajectories of `ψ` on a grid
/// starting at `psi_start` and moving within a step ball.
#[derive(Debug, Clone)]
pub struct RobustSetup {
    pub family: ChainDriftFamily,
    pub grid: ParameterGrid,
    pub ball: StepBall,
    pub psi_start: usize,
    pub horizon: usize,
}

pub const TRAJECTORY_BUDGET: u128 = 10_000_000;

impl RobustSetup {
    /// Normalized distance covered by one grid step.
    pub fn step_radius(&self) -> f64 {
        self.ball.radius_cells as f64 * self.grid.spacing()
    }

    pub fn truncation_error(&self) -> f64 {
        let g = self.family.chain.gamma;
        g.powi(self.horizon as i32) / (1.0 - g)
    }
}

/// Minimum over all `t`-step grid trajectories of the `H`-truncated return
/// in the MDP at the trajectory's endpoint.
pub fn robust_objective(pi: &PolicyTable, setup: &RobustSetup, start: &[f64], t: usize) -> Result<f64> {
    if setup.psi_start >= setup.grid.len() {
        return Err(Error::Index(format!(
            "start parameter {} outside the grid",
            setup.psi_start
        )));
    }
    let steps = StepTable::new(&setup.grid, &setup.ball);
    let nb = steps.n_displacements();
    let needed = (nb as u128).checked_pow(t as u32).unwrap_or(u128::MAX);
    if needed > TRAJECTORY_BUDGET {
        return Err(Error::Budget {
            needed,
            budget: TRAJECTORY_BUDGET,
        });
    }
    let mut cache: HashMap<usize, f64> = HashMap::new();
    let mut value_at = |psi: usize| -> Result<f64> {
        if let Some(&v) = cache.get(&psi) {
            return Ok(v);
        }
        let m = setup.family.mdp_at(&setup.grid.point(psi))?;
        let v = truncated_return(pi, &m, start, setup.horizon)?;
        cache.insert(psi, v);
        Ok(v)
    };
    // odometer over displacement sequences, lexicographic order
    let mut digits = vec![0usize; t];
    let mut best = f64::INFINITY;
    loop {
        let end = digits.iter().fold(setup.psi_start, |psi, &b| steps.target(psi, b));
        best = best.min(value_at(end)?);
        let mut i = t;
        loop {
            if i == 0 {
                return Ok(best);
            }
            i -= 1;
            digits[i] += 1;
            if digits[i] < nb {
                break;
            }
            digits[i] = 0;
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OneStepGap {
    pub t: usize,
    pub gap: f64,
    pub bound: f64,
    pub holds: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LipschitzReport {
    pub lprime: f64,
    pub t0: usize,
    pub t: usize,
    pub lhs: f64,
    pub rhs: f64,
    pub holds: bool,
    pub truncation_error: f64,
    pub one_step: Vec<OneStepGap>,
}

impl LipschitzReport {
    pub fn all_hold(&self) -> bool {
        self.holds && self.one_step.iter().all(|g| g.holds)
    }
}

/// `|J(π,M_t) − J(π,M_{t+1})|` against its bound on every adjacent pair.
pub fn one_step_gaps(pi: &PolicyTable, seq: &MdpSequence, start: &[f64]) -> Result<Vec<OneStepGap>> {
    let values = seq
        .mdps
        .iter()
        .map(|m| return_via_occupancy(pi, m, start))
        .collect::<Result<Vec<_>>>()?;
    let gamma = seq.mdps.first().map_or(0.0, |m| m.gamma);
    let bound = lipschitz_constant(gamma, seq.lp, seq.lr);
    Ok(values
        .windows(2)
        .enumerate()
        .map(|(t, w)| {
            let gap = (w[0] - w[1]).abs();
            OneStepGap {
                t,
                gap,
                bound,
                holds: gap <= bound + 1e-9,
            }
        })
        .collect())
}

/// Check the one-step bound along `seq` and `|J^R(t0) − J^R(t0+t)| ≤ L'·t`.
pub fn lipschitz_bound_check(
    pi: &PolicyTable,
    seq: &MdpSequence,
    setup: &RobustSetup,
    start: &[f64],
    t0: usize,
    t: usize,
) -> Result<LipschitzReport> {
    let seq = MdpSequence::new(seq.mdps.clone(), seq.lp, seq.lr)?;
    let (lp_grid, lr_grid) = setup.family.declared_bounds(setup.step_radius());
    if lp_grid > seq.lp + DRIFT_TOL || lr_grid > seq.lr + DRIFT_TOL {
        return Err(Error::Drift(format!(
            "grid steps drift by ({lp_grid}, {lr_grid}), beyond the declared ({}, {})",
            seq.lp, seq.lr
        )));
    }
    let gamma = setup.family.chain.gamma;
    let lprime = lipschitz_constant(gamma, seq.lp, seq.lr);
    let lhs = (robust_objective(pi, setup, start, t0)? - robust_objective(pi, setup, start, t0 + t)?).abs();
    let rhs = lprime * t as f64;
    Ok(LipschitzReport {
        lprime,
        t0,
        t,
        lhs,
        rhs,
        holds: lhs <= rhs + 1e-9,
        truncation_error: setup.truncation_error(),
        one_step: one_step_gaps(pi, &seq, start)?,
    })
}
