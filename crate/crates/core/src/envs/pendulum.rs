//! Discretized torque-limited pendulum with uncertain mass and rod length.
//!
//! Angle 0 is upright. One explicit Euler step of
//! `θ̈ = 3g/(2l)·sin θ + 3u/(m l²)` is taken from the bin center, then the
//! successor `(θ', θ̇')` is split bilinearly onto the surrounding bins
//! (periodic in angle, clamped in velocity), giving at most four successors.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::ParameterGrid;
use crate::mdp::{KernelFamily, ParametricMdp};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PendulumConfig {
    pub angle_bins: usize,
    pub velocity_bins: usize,
    pub torques: Vec<f64>,
    pub mass_range: [f64; 2],
    pub length_range: [f64; 2],
    pub dt: f64,
    pub max_speed: f64,
    pub gravity: f64,
    pub gamma: f64,
}

impl Default for PendulumConfig {
    fn default() -> Self {
        Self {
            angle_bins: 15,
            velocity_bins: 15,
            torques: vec![-2.0, 0.0, 2.0],
            mass_range: [0.5, 1.5],
            length_range: [0.5, 1.5],
            dt: 0.1,
            max_speed: 8.0,
            gravity: 10.0,
            gamma: 0.95,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PendulumModel {
    cfg: PendulumConfig,
}

fn wrap_angle(theta: f64) -> f64 {
    let two_pi = 2.0 * PI;
    let mut x = theta % two_pi;
    if x < 0.0 {
        x += two_pi;
    }
    x
}

impl PendulumModel {
    pub fn n_states(&self) -> usize {
        self.cfg.angle_bins * self.cfg.velocity_bins
    }

    fn angle_step(&self) -> f64 {
        2.0 * PI / self.cfg.angle_bins as f64
    }

    fn velocity_step(&self) -> f64 {
        2.0 * self.cfg.max_speed / (self.cfg.velocity_bins - 1) as f64
    }

    /// Bin center `(θ ∈ (−π, π], θ̇)` of a state.
    pub fn state_center(&self, s: usize) -> (f64, f64) {
        let i = s / self.cfg.velocity_bins;
        let j = s % self.cfg.velocity_bins;
        let mut theta = i as f64 * self.angle_step();
        if theta > PI {
            theta -= 2.0 * PI;
        }
        let omega = -self.cfg.max_speed + j as f64 * self.velocity_step();
        (theta, omega)
    }

    pub fn state_of(&self, angle_bin: usize, velocity_bin: usize) -> usize {
        angle_bin * self.cfg.velocity_bins + velocity_bin
    }

    /// Physical `(mass, length)` at a normalized parameter.
    pub fn physical(&self, point: &[f64]) -> (f64, f64) {
        let [m_lo, m_hi] = self.cfg.mass_range;
        let [l_lo, l_hi] = self.cfg.length_range;
        let x = point.first().copied().unwrap_or(0.0);
        let y = point.get(1).copied().unwrap_or(0.0);
        (m_lo + x * (m_hi - m_lo), l_lo + y * (l_hi - l_lo))
    }

    /// One Euler step from the bin center.
    pub fn euler_step(&self, s: usize, a: usize, point: &[f64]) -> (f64, f64) {
        let (theta, omega) = self.state_center(s);
        let (mass, length) = self.physical(point);
        let u = self.cfg.torques[a];
        let g = self.cfg.gravity;
        let accel = 3.0 * g / (2.0 * length) * theta.sin() + 3.0 / (mass * length * length) * u;
        let omega_next = (omega + accel * self.cfg.dt).clamp(-self.cfg.max_speed, self.cfg.max_speed);
        (theta + omega_next * self.cfg.dt, omega_next)
    }

    pub fn row_at(&self, point: &[f64], s: usize, a: usize) -> Vec<(usize, f64)> {
        let (theta, omega) = self.euler_step(s, a, point);
        let na = self.cfg.angle_bins;
        let nv = self.cfg.velocity_bins;

        let x = wrap_angle(theta) / self.angle_step();
        let base = x.floor();
        let wa = x - base;
        let i0 = (base as usize) % na;
        let i1 = (i0 + 1) % na;

        let y = ((omega + self.cfg.max_speed) / self.velocity_step()).clamp(0.0, (nv - 1) as f64);
        let j0 = (y.floor() as usize).min(nv - 2);
        let wv = y - j0 as f64;

        let mut row: Vec<(usize, f64)> = Vec::with_capacity(4);
        for (i, pa) in [(i0, 1.0 - wa), (i1, wa)] {
            for (j, pv) in [(j0, 1.0 - wv), (j0 + 1, wv)] {
                let p = pa * pv;
                if p > 0.0 {
                    let s2 = self.state_of(i, j);
                    match row.iter_mut().find(|(t, _)| *t == s2) {
                        Some(entry) => entry.1 += p,
                        None => row.push((s2, p)),
                    }
                }
            }
        }
        row.sort_by_key(|&(t, _)| t);
        row
    }

    /// Gym-style quadratic cost mapped affinely onto `[0, 1]`.
    pub fn reward(&self, s: usize, a: usize) -> f64 {
        let (theta, omega) = self.state_center(s);
        let u = self.cfg.torques[a];
        let u_max = self.cfg.torques.iter().fold(0.0f64, |m, t| m.max(t.abs()));
        let cost = theta * theta + 0.1 * omega * omega + 0.001 * u * u;
        let worst = PI * PI + 0.1 * self.cfg.max_speed.powi(2) + 0.001 * u_max * u_max;
        (1.0 - cost / worst).clamp(0.0, 1.0)
    }
}

pub fn build_pendulum(cfg: &PendulumConfig, grid: ParameterGrid) -> Result<ParametricMdp> {
    if cfg.angle_bins < 2 || cfg.velocity_bins < 2 {
        return Err(Error::Config(
            "pendulum needs at least 2 angle and 2 velocity bins".into(),
        ));
    }
    if cfg.torques.is_empty() || cfg.torques.iter().any(|t| !t.is_finite()) {
        return Err(Error::Config(
            "env.torques must be a non-empty list of finite values".into(),
        ));
    }
    for (name, [lo, hi]) in [
        ("env.mass_range", cfg.mass_range),
        ("env.length_range", cfg.length_range),
    ] {
        if !(lo > 0.0 && hi >= lo && hi.is_finite()) {
            return Err(Error::Config(format!(
                "{name} must satisfy 0 < lo <= hi, got [{lo}, {hi}]"
            )));
        }
    }
    if !(cfg.dt > 0.0 && cfg.dt.is_finite()) {
        return Err(Error::Config("env.dt must be positive".into()));
    }
    if !(cfg.max_speed > 0.0 && cfg.max_speed.is_finite()) || !cfg.gravity.is_finite() {
        return Err(Error::Config("env.max_speed must be positive".into()));
    }
    if grid.dims() != 2 {
        return Err(Error::Config(format!(
            "pendulum parameters are (mass, length); grid has {} dims",
            grid.dims()
        )));
    }
    let model = PendulumModel { cfg: cfg.clone() };
    let n_states = model.n_states();
    let n_actions = cfg.torques.len();
    let reward = (0..n_states)
        .flat_map(|s| (0..n_actions).map(move |a| (s, a)))
        .map(|(s, a)| model.reward(s, a))
        .collect();
    ParametricMdp::from_family(
        n_states,
        n_actions,
        cfg.gamma,
        reward,
        grid,
        KernelFamily::Pendulum(model),
    )
}
