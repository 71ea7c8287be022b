use rand::Rng;

use crate::error::Result;
use crate::grid::ParameterGrid;
use crate::mdp::ParametricMdp;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RandomKernel {
    /// `p_ψ = (1 − t)·P₀ + t·P₁` with `t = mean(ψ)`.
    Smooth,
    /// Independent random rows at every grid point.
    Arbitrary,
    /// Independent random point masses at every grid point.
    Deterministic,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RandomSpec {
    pub n_states: usize,
    pub n_actions: usize,
    pub dims: usize,
    pub segments_per_dim: usize,
    pub gamma: f64,
    /// Maximum number of successors per row.
    pub support: usize,
    pub kernel: RandomKernel,
}

fn random_row<R: Rng>(rng: &mut R, n_states: usize, support: usize) -> Vec<(usize, f64)> {
    let k = rng.gen_range(1..=support.clamp(1, n_states));
    let mut states: Vec<usize> = rand::seq::index::sample(rng, n_states, k).into_vec();
    states.sort_unstable();
    let weights: Vec<f64> = (0..k).map(|_| rng.gen_range(0.05..1.0)).collect();
    let total: f64 = weights.iter().sum();
    let mut row: Vec<(usize, f64)> = states.into_iter().zip(weights).map(|(s, w)| (s, w / total)).collect();
    let head: f64 = row[..k - 1].iter().map(|e| e.1).sum();
    row[k - 1].1 = 1.0 - head;
    row
}

fn mix(a: &[(usize, f64)], b: &[(usize, f64)], t: f64) -> Vec<(usize, f64)> {
    let mut out: Vec<(usize, f64)> = Vec::with_capacity(a.len() + b.len());
    for &(s, p) in a {
        out.push((s, (1.0 - t) * p));
    }
    for &(s, p) in b {
        match out.iter_mut().find(|e| e.0 == s) {
            Some(e) => e.1 += t * p,
            None => out.push((s, t * p)),
        }
    }
    out.retain(|e| e.1 > 0.0);
    out.sort_by_key(|e| e.0);
    out
}

/// Random tabular instance with rewards uniform on `[0, 1]`.
pub fn random_mdp<R: Rng>(rng: &mut R, spec: &RandomSpec) -> Result<ParametricMdp> {
    let grid = ParameterGrid::new(spec.dims, spec.segments_per_dim)?;
    let (ns, na) = (spec.n_states, spec.n_actions);
    let reward: Vec<f64> = (0..ns * na).map(|_| rng.gen_range(0.0..=1.0)).collect();
    let mut rows = Vec::with_capacity(grid.len() * ns * na);
    match spec.kernel {
        RandomKernel::Smooth => {
            let p0: Vec<_> = (0..ns * na).map(|_| random_row(rng, ns, spec.support)).collect();
            let p1: Vec<_> = (0..ns * na).map(|_| random_row(rng, ns, spec.support)).collect();
            for point in grid.points() {
                let t = point.iter().sum::<f64>() / point.len() as f64;
                for i in 0..ns * na {
                    rows.push(mix(&p0[i], &p1[i], t));
                }
            }
        }
        RandomKernel::Arbitrary => {
            for _ in 0..grid.len() * ns * na {
                rows.push(random_row(rng, ns, spec.support));
            }
        }
        RandomKernel::Deterministic => {
            for _ in 0..grid.len() * ns * na {
                rows.push(vec![(rng.gen_range(0..ns), 1.0)]);
            }
        }
    }
    ParametricMdp::from_rows(ns, na, spec.gamma, reward, grid, rows)
}
