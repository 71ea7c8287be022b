//! Normalized parameter lattice and the adversary's per-step displacement set.
//!
//! Parameters live in the box `[0,1]^d`, discretized into `G` points per axis.
//! Grid points are addressed either by their per-axis coordinates
//! (`&[usize]`, each in `0..G`) or by a flat row-major index where axis 0 is
//! the most significant digit.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParameterGrid {
    dims: usize,
    segments_per_dim: usize,
}

impl ParameterGrid {
    /// A `G = 1` grid is accepted as the degenerate single-point set `{0}^d`.
    pub fn new(dims: usize, segments_per_dim: usize) -> Result<Self> {
        if dims == 0 {
            return Err(Error::Config("grid needs at least one dimension".into()));
        }
        if segments_per_dim == 0 {
            return Err(Error::Config("grid.segments_per_dim must be positive".into()));
        }
        let n = (segments_per_dim as u128).checked_pow(dims as u32);
        match n {
            Some(n) if n <= 1 << 24 => {}
            _ => {
                return Err(Error::Config(format!(
                    "grid with {segments_per_dim}^{dims} points is too large"
                )))
            }
        }
        Ok(Self { dims, segments_per_dim })
    }

    pub fn dims(&self) -> usize {
        self.dims
    }

    pub fn segments_per_dim(&self) -> usize {
        self.segments_per_dim
    }

    pub fn len(&self) -> usize {
        self.segments_per_dim.pow(self.dims as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Distance between adjacent points along one axis (0 for a single-point grid).
    pub fn spacing(&self) -> f64 {
        if self.segments_per_dim < 2 {
            0.0
        } else {
            1.0 / (self.segments_per_dim - 1) as f64
        }
    }

    pub fn coords(&self, index: usize) -> Vec<usize> {
        let g = self.segments_per_dim;
        let mut out = vec![0; self.dims];
        let mut rest = index;
        for slot in out.iter_mut().rev() {
            *slot = rest % g;
            rest /= g;
        }
        out
    }

    pub fn index_of(&self, coords: &[usize]) -> Result<usize> {
        if coords.len() != self.dims {
            return Err(Error::Index(format!(
                "expected {} grid coordinates, got {}",
                self.dims,
                coords.len()
            )));
        }
        let mut index = 0;
        for &c in coords {
            if c >= self.segments_per_dim {
                return Err(Error::Index(format!(
                    "grid coordinate {c} outside 0..{}",
                    self.segments_per_dim
                )));
            }
            index = index * self.segments_per_dim + c;
        }
        Ok(index)
    }

    fn coordinate_value(&self, c: usize) -> f64 {
        if self.segments_per_dim < 2 {
            0.0
        } else if c + 1 == self.segments_per_dim {
            1.0
        } else {
            c as f64 / (self.segments_per_dim - 1) as f64
        }
    }

    /// Normalized location of a grid point.
    pub fn point(&self, index: usize) -> Vec<f64> {
        self.coords(index)
            .into_iter()
            .map(|c| self.coordinate_value(c))
            .collect()
    }

    /// Grid point closest to a continuous location (per-axis rounding, clamped).
    pub fn nearest(&self, point: &[f64]) -> usize {
        let g = self.segments_per_dim;
        let mut index = 0;
        for axis in 0..self.dims {
            let x = point.get(axis).copied().unwrap_or(0.0);
            let c = if g < 2 {
                0
            } else {
                let scaled = (x.clamp(0.0, 1.0) * (g - 1) as f64).round();
                (scaled as usize).min(g - 1)
            };
            index = index * g + c;
        }
        index
    }

    pub fn points(&self) -> impl Iterator<Item = Vec<f64>> + '_ {
        (0..self.len()).map(move |i| self.point(i))
    }
}

/// Norm used to bound one parameter step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum BallNorm {
    #[default]
    Linf,
}

/// Per-step displacement set `{δ ∈ ℤ^d : |δ_i| ≤ k}`, measured in grid cells.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepBall {
    pub radius_cells: usize,
    pub norm: BallNorm,
}

impl StepBall {
    pub fn new(radius_cells: usize) -> Self {
        Self {
            radius_cells,
            norm: BallNorm::Linf,
        }
    }

    /// Snap a normalized radius onto the lattice: `k = round(L·(G−1))`.
    pub fn from_radius(radius: f64, grid: &ParameterGrid) -> Result<Self> {
        if !radius.is_finite() || radius < 0.0 {
            return Err(Error::Config(format!("ball radius must be >= 0, got {radius}")));
        }
        let g = grid.segments_per_dim().saturating_sub(1) as f64;
        Ok(Self::new((radius * g).round() as usize))
    }

    pub fn size(&self, dims: usize) -> usize {
        (2 * self.radius_cells + 1).pow(dims as u32)
    }

    /// All displacements in lexicographic order, axis 0 slowest.
    pub fn displacements(&self, dims: usize) -> Vec<Vec<i64>> {
        let k = self.radius_cells as i64;
        let width = (2 * k + 1) as usize;
        (0..self.size(dims))
            .map(|mut i| {
                let mut delta = vec![0i64; dims];
                for slot in delta.iter_mut().rev() {
                    *slot = (i % width) as i64 - k;
                    i /= width;
                }
                delta
            })
            .collect()
    }

    /// Position of the null displacement in [`StepBall::displacements`].
    pub fn null_index(&self, dims: usize) -> usize {
        (self.size(dims) - 1) / 2
    }

    pub fn contains(&self, delta: &[i64]) -> bool {
        delta.iter().all(|d| d.unsigned_abs() <= self.radius_cells as u64)
    }
}

/// `clamp(psi + b, 0, G−1)` componentwise.
pub fn apply_step(psi: &[usize], delta: &[i64], ball: &StepBall, grid: &ParameterGrid) -> Result<Vec<usize>> {
    if psi.len() != grid.dims() || delta.len() != grid.dims() {
        return Err(Error::Contract(format!(
            "parameter step expects {} components",
            grid.dims()
        )));
    }
    if !ball.contains(delta) {
        return Err(Error::Contract(format!(
            "displacement {delta:?} is not in the radius-{} ball",
            ball.radius_cells
        )));
    }
    let top = grid.segments_per_dim() as i64 - 1;
    psi.iter()
        .zip(delta)
        .map(|(&p, &d)| {
            if p as i64 > top {
                return Err(Error::Index(format!("grid coordinate {p} outside 0..={top}")));
            }
            Ok((p as i64 + d).clamp(0, top) as usize)
        })
        .collect()
}

/// Distinct grid points reachable from `psi` in one step.
pub fn ball_neighbors(psi: usize, ball: &StepBall, grid: &ParameterGrid) -> BTreeSet<usize> {
    let coords = grid.coords(psi);
    ball.displacements(grid.dims())
        .iter()
        .map(|d| {
            let next = apply_step(&coords, d, ball, grid).expect("ball displacement");
            grid.index_of(&next).expect("clamped coordinates")
        })
        .collect()
}

/// Precomputed `(psi, displacement index) → psi'` transitions for one grid and ball.
#[derive(Debug, Clone)]
pub struct StepTable {
    grid: ParameterGrid,
    ball: StepBall,
    n_disp: usize,
    targets: Vec<usize>,
}

impl StepTable {
    pub fn new(grid: &ParameterGrid, ball: &StepBall) -> Self {
        let displacements = ball.displacements(grid.dims());
        let mut targets = Vec::with_capacity(grid.len() * displacements.len());
        for psi in 0..grid.len() {
            let coords = grid.coords(psi);
            for d in &displacements {
                let next = apply_step(&coords, d, ball, grid).expect("ball displacement");
                targets.push(grid.index_of(&next).expect("clamped coordinates"));
            }
        }
        Self {
            grid: *grid,
            ball: *ball,
            n_disp: displacements.len(),
            targets,
        }
    }

    pub fn grid(&self) -> &ParameterGrid {
        &self.grid
    }

    pub fn ball(&self) -> &StepBall {
        &self.ball
    }

    pub fn n_psi(&self) -> usize {
        self.grid.len()
    }

    pub fn n_displacements(&self) -> usize {
        self.n_disp
    }

    #[inline]
    pub fn target(&self, psi: usize, disp: usize) -> usize {
        self.targets[psi * self.n_disp + disp]
    }

    pub fn targets_from(&self, psi: usize) -> &[usize] {
        &self.targets[psi * self.n_disp..(psi + 1) * self.n_disp]
    }
}
