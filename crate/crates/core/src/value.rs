use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ValueKind {
    /// One column: a value per state.
    StateOnly,
    /// One column per parameter-grid point.
    Augmented,
}

/// Dense real table indexed by (row, column).
///
/// Rows are MDP states for the Bellman operators. Best-response values over
/// richer observation spaces reuse the same layout with one row per agent-side
/// state (for example `(s, s_prev, a_prev)` for stacked agents).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValueField {
    kind: ValueKind,
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl ValueField {
    pub fn state_only(n_states: usize) -> Self {
        Self::filled(ValueKind::StateOnly, n_states, 1, 0.0)
    }

    pub fn augmented(rows: usize, n_psi: usize) -> Self {
        Self::filled(ValueKind::Augmented, rows, n_psi, 0.0)
    }

    pub fn filled(kind: ValueKind, rows: usize, cols: usize, value: f64) -> Self {
        assert!(kind == ValueKind::Augmented || cols == 1);
        Self {
            kind,
            rows,
            cols,
            data: vec![value; rows * cols],
        }
    }

    pub fn from_vec(kind: ValueKind, rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), rows * cols, "value field shape");
        assert!(kind == ValueKind::Augmented || cols == 1);
        Self { kind, rows, cols, data }
    }

    pub fn from_states(values: Vec<f64>) -> Self {
        let n = values.len();
        Self::from_vec(ValueKind::StateOnly, n, 1, values)
    }

    pub fn kind(&self) -> ValueKind {
        self.kind
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.cols + col]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, value: f64) {
        self.data[row * self.cols + col] = value;
    }

    pub fn row(&self, row: usize) -> &[f64] {
        &self.data[row * self.cols..(row + 1) * self.cols]
    }

    pub fn same_shape(&self, other: &ValueField) -> bool {
        self.kind == other.kind && self.rows == other.rows && self.cols == other.cols
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    /// ∞-norm distance; panics on shape mismatch.
    pub fn max_abs_diff(&self, other: &ValueField) -> f64 {
        assert!(self.same_shape(other), "value field shape mismatch");
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    pub fn sup_norm(&self) -> f64 {
        self.data.iter().fold(0.0, |m, x| f64::max(m, x.abs()))
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> ValueField {
        ValueField {
            data: self.data.iter().map(|&x| f(x)).collect(),
            ..self.clone()
        }
    }

    /// Row-wise minimum over columns.
    pub fn row_min(&self) -> Vec<f64> {
        (0..self.rows)
            .map(|r| self.row(r).iter().copied().fold(f64::INFINITY, f64::min))
            .collect()
    }

    /// Rows = states, columns = grid indices, header `state,psi_0,...`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("state");
        for c in 0..self.cols {
            let _ = write!(out, ",psi_{c}");
        }
        out.push('\n');
        for r in 0..self.rows {
            let _ = write!(out, "{r}");
            for c in 0..self.cols {
                let _ = write!(out, ",{:.17e}", self.get(r, c));
            }
            out.push('\n');
        }
        out
    }
}
