//! Reference computations written without the library's solvers: dense
//! kernels, explicit neighbour enumeration and closed-form small games.
#![allow(dead_code)]

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use tcrmdp::envs::{random_mdp, RandomKernel, RandomSpec};
use tcrmdp::mdp::ParametricMdp;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn tiny_instance(seed: u64, n_actions: usize, kernel: RandomKernel) -> ParametricMdp {
    let mut r = rng(seed);
    let spec = RandomSpec {
        n_states: 3,
        n_actions,
        dims: 1,
        segments_per_dim: 4,
        gamma: 0.8,
        support: 2,
        kernel,
    };
    random_mdp(&mut r, &spec).unwrap()
}

/// Dense `p_ψ(·|s,a)` for every `(ψ, s, a)`.
pub fn dense(mdp: &ParametricMdp) -> Vec<Vec<Vec<Vec<f64>>>> {
    (0..mdp.n_psi())
        .map(|psi| {
            (0..mdp.n_states())
                .map(|s| {
                    (0..mdp.n_actions())
                        .map(|a| mdp.kernel_eval(s, a, psi).unwrap())
                        .collect()
                })
                .collect()
        })
        .collect()
}

/// Grid indices reachable in one step of at most `k` cells per axis (clamped).
pub fn neighbours(dims: usize, g: usize, k: usize, psi: usize) -> Vec<usize> {
    let mut coords = vec![0usize; dims];
    let mut rest = psi;
    for i in (0..dims).rev() {
        coords[i] = rest % g;
        rest /= g;
    }
    let mut out = vec![0usize];
    for c in coords {
        let lo = c.saturating_sub(k);
        let hi = (c + k).min(g - 1);
        out = out
            .iter()
            .flat_map(|&prefix| (lo..=hi).map(move |x| prefix * g + x))
            .collect();
    }
    out
}

/// Value of a game with at most two rows by checking every breakpoint of the
/// lower envelope; pure maximin when `mixed` is false.
pub fn game_value(m: &[Vec<f64>], mixed: bool) -> f64 {
    let pure = m
        .iter()
        .map(|row| row.iter().copied().fold(f64::INFINITY, f64::min))
        .fold(f64::NEG_INFINITY, f64::max);
    if !mixed || m.len() == 1 {
        return pure;
    }
    assert_eq!(m.len(), 2, "mixed oracle handles two rows");
    let envelope = |p: f64| {
        (0..m[0].len())
            .map(|j| p * m[0][j] + (1.0 - p) * m[1][j])
            .fold(f64::INFINITY, f64::min)
    };
    let mut candidates = vec![0.0, 1.0];
    for j in 0..m[0].len() {
        for l in 0..j {
            // p·a + (1−p)·b = p·c + (1−p)·d
            let (a, b, c, d) = (m[0][j], m[1][j], m[0][l], m[1][l]);
            let denom = (a - b) - (c - d);
            if denom.abs() > 1e-15 {
                let p = (d - b) / denom;
                if (0.0..=1.0).contains(&p) {
                    candidates.push(p);
                }
            }
        }
    }
    candidates.into_iter().map(envelope).fold(f64::NEG_INFINITY, f64::max)
}

fn dot(p: &[f64], v: &[f64]) -> f64 {
    p.iter().zip(v).map(|(a, b)| a * b).sum()
}

/// `H` steps of the time-constrained recursion from zero; `v[s][ψ]`.
pub fn tc_backward(mdp: &ParametricMdp, k: usize, horizon: usize, mixed: bool) -> Vec<Vec<f64>> {
    let p = dense(mdp);
    let (ns, np, na) = (mdp.n_states(), mdp.n_psi(), mdp.n_actions());
    let (dims, g) = (mdp.grid().dims(), mdp.grid().segments_per_dim());
    let mut v = vec![vec![0.0; np]; ns];
    for _ in 0..horizon {
        let mut next = vec![vec![0.0; np]; ns];
        for s in 0..ns {
            for psi in 0..np {
                let nb = neighbours(dims, g, k, psi);
                let m: Vec<Vec<f64>> = (0..na)
                    .map(|a| {
                        nb.iter()
                            .map(|&q| {
                                let col: Vec<f64> = (0..ns).map(|t| v[t][q]).collect();
                                mdp.reward(s, a) + mdp.gamma() * dot(&p[q][s][a], &col)
                            })
                            .collect()
                    })
                    .collect();
                next[s][psi] = game_value(&m, mixed);
            }
        }
        v = next;
    }
    v
}

/// One-step payoff rows `a`, columns `ψ`, for a state-only value.
pub fn state_payoff(mdp: &ParametricMdp, p: &[Vec<Vec<Vec<f64>>>], v: &[f64], s: usize) -> Vec<Vec<f64>> {
    (0..mdp.n_actions())
        .map(|a| {
            (0..mdp.n_psi())
                .map(|q| mdp.reward(s, a) + mdp.gamma() * dot(&p[q][s][a], v))
                .collect()
        })
        .collect()
}

/// Nominal optimal values at one grid point by iterating to `tol`.
pub fn nominal_values(mdp: &ParametricMdp, psi: usize, tol: f64) -> Vec<f64> {
    let p = dense(mdp);
    let mut v = vec![0.0; mdp.n_states()];
    loop {
        let next: Vec<f64> = (0..mdp.n_states())
            .map(|s| {
                (0..mdp.n_actions())
                    .map(|a| mdp.reward(s, a) + mdp.gamma() * dot(&p[psi][s][a], &v))
                    .fold(f64::NEG_INFINITY, f64::max)
            })
            .collect();
        let diff = next.iter().zip(&v).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        v = next;
        if diff < tol {
            return v;
        }
    }
}

/// Expected `horizon`-step return of a deterministic state policy with `ψ`
/// frozen at a grid point, discounted by `discount` per step.
pub fn finite_horizon_value(
    mdp: &ParametricMdp,
    psi: usize,
    actions: &[usize],
    horizon: usize,
    discount: f64,
) -> Vec<f64> {
    let p = dense(mdp);
    let mut v = vec![0.0; mdp.n_states()];
    for _ in 0..horizon {
        v = (0..mdp.n_states())
            .map(|s| mdp.reward(s, actions[s]) + discount * dot(&p[psi][s][actions[s]], &v))
            .collect();
    }
    v
}

pub fn max_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}
