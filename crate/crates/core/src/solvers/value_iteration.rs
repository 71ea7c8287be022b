use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::operators::{BackupMode, BellmanOperator};
use crate::value::ValueField;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub iterations: usize,
    /// `‖v_n − v_{n−1}‖_∞` at the last iteration.
    pub final_residual: f64,
    /// Residual of every iteration, in order.
    pub residuals: Vec<f64>,
    /// Seconds spent; excluded from serialized artifacts so reruns stay byte-identical.
    #[serde(skip)]
    pub wall_time: f64,
    pub mode: Option<BackupMode>,
}

/// Iterate `v ← T v` from `init` (zero when `None`) until successive iterates
/// differ by at most `epsilon` in sup norm.
///
/// The returned field is the last iterate, so `‖T v − v‖_∞ ≤ γ·epsilon`.
pub fn value_iteration(
    op: &dyn BellmanOperator,
    init: Option<ValueField>,
    epsilon: f64,
    max_iters: usize,
) -> Result<(ValueField, SolveReport)> {
    if !(epsilon > 0.0) {
        return Err(Error::Precondition(format!("epsilon must be positive, got {epsilon}")));
    }
    let started = Instant::now();
    let mut v = init.unwrap_or_else(|| op.zero());
    let mut residuals = Vec::new();
    for _ in 0..max_iters {
        let next = op.apply(&v)?;
        let residual = next.max_abs_diff(&v);
        residuals.push(residual);
        v = next;
        if residual <= epsilon {
            return Ok((
                v,
                SolveReport {
                    iterations: residuals.len(),
                    final_residual: residual,
                    residuals,
                    wall_time: started.elapsed().as_secs_f64(),
                    mode: None,
                },
            ));
        }
    }
    Err(Error::NonConvergence {
        iterations: residuals.len(),
        residual: residuals.last().copied().unwrap_or(f64::INFINITY),
        best: Box::new(v),
    })
}

/// Iteration count guaranteed by the contraction property to reach `epsilon`
/// given the first residual `‖v_1 − v_0‖_∞`.
pub fn contraction_iteration_bound(gamma: f64, epsilon: f64, first_residual: f64) -> usize {
    if first_residual <= epsilon || gamma == 0.0 {
        return 1;
    }
    let n = (epsilon / first_residual).ln() / gamma.ln();
    n.ceil().max(0.0) as usize + 1
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::{build_chain, ChainConfig};
    use crate::grid::ParameterGrid;
    use crate::operators::Standard;

    #[test]
    fn converges_and_respects_bound() {
        let cfg = ChainConfig::default();
        let mdp = build_chain(&cfg, ParameterGrid::new(1, 3).unwrap()).unwrap();
        let op = Standard { mdp: &mdp, psi: 2 };
        let (v, report) = value_iteration(&op, None, 1e-8, 10_000).unwrap();
        assert!(report.final_residual <= 1e-8);
        let bound = contraction_iteration_bound(0.9, 1e-8, report.residuals[0]);
        assert!(report.iterations <= bound, "{} > {bound}", report.iterations);
        for w in report.residuals.windows(2) {
            assert!(w[1] <= 0.9 * w[0] + 1e-9);
        }
        let again = op.apply(&v).unwrap();
        assert!(again.max_abs_diff(&v) <= 1e-8);
    }

    #[test]
    fn reports_non_convergence() {
        let mdp = build_chain(&ChainConfig::default(), ParameterGrid::new(1, 3).unwrap()).unwrap();
        let op = Standard { mdp: &mdp, psi: 2 };
        match value_iteration(&op, None, 1e-12, 3) {
            Err(Error::NonConvergence { iterations, best, .. }) => {
                assert_eq!(iterations, 3);
                assert_eq!(best.rows(), 6);
            }
            other => panic!("expected non-convergence, got {other:?}"),
        }
        assert!(matches!(
            value_iteration(&op, None, 0.0, 3),
            Err(Error::Precondition(_))
        ));
    }
}
