//! Exact solution of finite two-player zero-sum matrix games.
//!
//! The row player maximizes, the column player minimizes. Games without a
//! pure saddle point are solved with a dense primal simplex on the column
//! player's LP (Bland's rule, so it cannot cycle); the row strategy is read
//! off the optimal duals. Every solution is certified by checking that both
//! strategies guarantee the value up to [`GAP_TOL`].

use crate::error::{Error, Result};

/// Largest accepted duality gap of a returned solution.
pub const GAP_TOL: f64 = 1e-9;

const PIVOT_EPS: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct GameSolution {
    pub value: f64,
    pub row_strategy: Vec<f64>,
    pub col_strategy: Vec<f64>,
    /// `max_i (Mq)_i − min_j (pᵀM)_j` for the returned strategies.
    pub gap: f64,
}

/// Row-major payoff matrix view.
#[derive(Debug, Clone, Copy)]
pub struct Payoff<'a> {
    data: &'a [f64],
    rows: usize,
    cols: usize,
}

impl<'a> Payoff<'a> {
    pub fn new(data: &'a [f64], rows: usize, cols: usize) -> Self {
        assert_eq!(data.len(), rows * cols, "payoff shape");
        assert!(rows > 0 && cols > 0, "empty game");
        Self { data, rows, cols }
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    fn row_min(&self, i: usize) -> (usize, f64) {
        argmin((0..self.cols).map(|j| self.at(i, j)))
    }

    /// Guaranteed payoff of a row mixture against its best column reply.
    pub fn row_guarantee(&self, p: &[f64]) -> (usize, f64) {
        argmin((0..self.cols).map(|j| (0..self.rows).map(|i| p[i] * self.at(i, j)).sum()))
    }

    /// Worst payoff a column mixture concedes to the best row reply.
    pub fn col_guarantee(&self, q: &[f64]) -> (usize, f64) {
        argmax((0..self.rows).map(|i| (0..self.cols).map(|j| q[j] * self.at(i, j)).sum()))
    }
}

/// First index attaining the minimum.
pub fn argmin(values: impl Iterator<Item = f64>) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (i, v) in values.enumerate() {
        if v < best.1 {
            best = (i, v);
        }
    }
    best
}

/// First index attaining the maximum.
pub fn argmax(values: impl Iterator<Item = f64>) -> (usize, f64) {
    let mut best = (0, f64::NEG_INFINITY);
    for (i, v) in values.enumerate() {
        if v > best.1 {
            best = (i, v);
        }
    }
    best
}

fn point_mass(n: usize, at: usize) -> Vec<f64> {
    let mut v = vec![0.0; n];
    v[at] = 1.0;
    v
}

/// `max_i min_j M[i,j]` with the maximizing row (lowest index on ties).
pub fn pure_maximin(m: Payoff<'_>) -> (usize, f64) {
    argmax((0..m.rows).map(|i| m.row_min(i).1))
}

/// Solve the game exactly; errors if the certified gap exceeds [`GAP_TOL`].
pub fn solve_zero_sum(m: Payoff<'_>) -> Result<GameSolution> {
    if m.data.iter().any(|x| !x.is_finite()) {
        return Err(Error::Numerical("non-finite payoff entry".into()));
    }
    let (i_star, lower) = pure_maximin(m);
    let (j_star, upper) =
        argmin((0..m.cols).map(|j| (0..m.rows).map(|i| m.at(i, j)).fold(f64::NEG_INFINITY, f64::max)));
    if upper - lower <= 0.0 {
        return Ok(GameSolution {
            value: lower,
            row_strategy: point_mass(m.rows, i_star),
            col_strategy: point_mass(m.cols, j_star),
            gap: 0.0,
        });
    }
    let (p, q) = simplex_strategies(m)?;
    let (_, lo) = m.row_guarantee(&p);
    let (_, hi) = m.col_guarantee(&q);
    let gap = hi - lo;
    if !(gap <= GAP_TOL) {
        return Err(Error::Numerical(format!(
            "matrix game solution could not be certified (gap {gap:e})"
        )));
    }
    Ok(GameSolution {
        value: 0.5 * (lo + hi),
        row_strategy: p,
        col_strategy: q,
        gap: gap.max(0.0),
    })
}

/// Column LP after shifting payoffs to be ≥ 1:
/// `max Σ y  s.t.  A y ≤ 1, y ≥ 0`. Then `v = 1/Σy`, `q = v·y`, and the
/// optimal duals scaled by `v` give the row strategy.
fn simplex_strategies(m: Payoff<'_>) -> Result<(Vec<f64>, Vec<f64>)> {
    let (rows, cols) = (m.rows, m.cols);
    let shift = 1.0 - m.data.iter().copied().fold(f64::INFINITY, f64::min);
    let width = cols + rows + 1;
    // tableau rows 0..rows are constraints, row `rows` is the objective
    let mut t = vec![0.0; (rows + 1) * width];
    for i in 0..rows {
        for j in 0..cols {
            t[i * width + j] = m.at(i, j) + shift;
        }
        t[i * width + cols + i] = 1.0;
        t[i * width + width - 1] = 1.0;
    }
    for j in 0..cols {
        t[rows * width + j] = -1.0;
    }
    let mut basis: Vec<usize> = (cols..cols + rows).collect();

    let max_pivots = 50 * (rows + cols) + 100;
    let mut pivots = 0;
    loop {
        let obj = &t[rows * width..];
        let entering = (0..cols + rows).find(|&j| obj[j] < -PIVOT_EPS);
        let Some(e) = entering else { break };
        let mut leave: Option<(usize, f64)> = None;
        for i in 0..rows {
            let a = t[i * width + e];
            if a > PIVOT_EPS {
                let ratio = t[i * width + width - 1] / a;
                leave = match leave {
                    None => Some((i, ratio)),
                    Some((li, lr)) => {
                        if ratio < lr - 1e-15 || (ratio <= lr + 1e-15 && basis[i] < basis[li]) {
                            Some((i, ratio))
                        } else {
                            Some((li, lr))
                        }
                    }
                };
            }
        }
        let Some((l, _)) = leave else {
            return Err(Error::Numerical("matrix game LP unbounded".into()));
        };
        let piv = t[l * width + e];
        for x in &mut t[l * width..(l + 1) * width] {
            *x /= piv;
        }
        for i in 0..=rows {
            if i == l {
                continue;
            }
            let f = t[i * width + e];
            if f != 0.0 {
                for j in 0..width {
                    t[i * width + j] -= f * t[l * width + j];
                }
            }
        }
        basis[l] = e;
        pivots += 1;
        if pivots > max_pivots {
            return Err(Error::Numerical("matrix game simplex did not terminate".into()));
        }
    }

    let total = t[rows * width + width - 1];
    if !(total > 0.0) {
        return Err(Error::Numerical("degenerate matrix game LP".into()));
    }
    let mut y = vec![0.0; cols];
    for (i, &b) in basis.iter().enumerate() {
        if b < cols {
            y[b] = t[i * width + width - 1];
        }
    }
    let duals: Vec<f64> = (0..rows).map(|i| t[rows * width + cols + i]).collect();
    Ok((normalize(duals), normalize(y)))
}

fn normalize(mut v: Vec<f64>) -> Vec<f64> {
    for x in &mut v {
        if *x < 0.0 {
            *x = 0.0;
        }
    }
    let s: f64 = v.iter().sum();
    if s > 0.0 {
        for x in &mut v {
            *x /= s;
        }
    }
    v
}
