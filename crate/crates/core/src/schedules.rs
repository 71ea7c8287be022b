//! Fixed parameter-drift schedules for evaluation.
//!
//! Every schedule starts from a uniformly drawn point of `[0,1]^d` and moves
//! by at most the radius `L` per step in the ∞-norm.

use std::f64::consts::TAU;
use std::fmt::Write as _;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_HORIZON: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScheduleKind {
    RandomWalk,
    Cosine,
    Linear,
    Exponential,
    Logarithmic,
}

impl ScheduleKind {
    pub const ALL: [ScheduleKind; 5] = [
        ScheduleKind::RandomWalk,
        ScheduleKind::Cosine,
        ScheduleKind::Linear,
        ScheduleKind::Exponential,
        ScheduleKind::Logarithmic,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ScheduleKind::RandomWalk => "random_walk",
            ScheduleKind::Cosine => "cosine",
            ScheduleKind::Linear => "linear",
            ScheduleKind::Exponential => "exponential",
            ScheduleKind::Logarithmic => "logarithmic",
        }
    }

    /// Progress along the interpolation curve at `tau ∈ [0,1]`.
    fn curve(self, tau: f64) -> f64 {
        match self {
            ScheduleKind::Linear => tau,
            ScheduleKind::Exponential => (1.0 - (-5.0 * tau).exp()) / (1.0 - (-5.0f64).exp()),
            ScheduleKind::Logarithmic => (1.0 + 9.0 * tau).ln() / 10f64.ln(),
            ScheduleKind::RandomWalk | ScheduleKind::Cosine => 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    pub kind: ScheduleKind,
    pub dims: usize,
    pub radius: f64,
    pub horizon: usize,
}

/// Per-episode draws and the current point of a running schedule.
#[derive(Debug, Clone, PartialEq)]
pub struct ScheduleState {
    pub psi0: Vec<f64>,
    pub psi: Vec<f64>,
    pub vertex: Vec<f64>,
    pub phase: f64,
    pub t: usize,
}

impl Schedule {
    pub fn new(kind: ScheduleKind, dims: usize, radius: f64, horizon: usize) -> Result<Self> {
        if dims == 0 {
            return Err(Error::Config("schedule needs at least one dimension".into()));
        }
        if !(radius >= 0.0 && radius.is_finite()) {
            return Err(Error::Config(format!(
                "schedule radius {radius} must be finite and non-negative"
            )));
        }
        if horizon == 0 {
            return Err(Error::Config("schedule horizon must be at least 1".into()));
        }
        Ok(Self {
            kind,
            dims,
            radius,
            horizon,
        })
    }

    /// Draw `ψ_0`, and the target corner or the phase when the kind uses one.
    pub fn init<R: Rng + ?Sized>(&self, rng: &mut R) -> ScheduleState {
        let psi0: Vec<f64> = (0..self.dims).map(|_| rng.gen::<f64>()).collect();
        let vertex = match self.kind {
            ScheduleKind::Linear | ScheduleKind::Exponential | ScheduleKind::Logarithmic => (0..self.dims)
                .map(|_| if rng.gen_bool(0.5) { 1.0 } else { 0.0 })
                .collect(),
            _ => Vec::new(),
        };
        let phase = if self.kind == ScheduleKind::Cosine {
            rng.gen_range(0.0..TAU)
        } else {
            0.0
        };
        ScheduleState {
            psi: psi0.clone(),
            psi0,
            vertex,
            phase,
            t: 0,
        }
    }

    fn target(&self, st: &ScheduleState, i: usize, t: usize) -> f64 {
        let p0 = st.psi0[i];
        match self.kind {
            ScheduleKind::Cosine => {
                let amp = p0.min(1.0 - p0);
                let omega = self.radius / amp.max(1e-9);
                p0 + amp * (omega * t as f64 + st.phase).cos()
            }
            kind => {
                let tau = t as f64 / self.horizon as f64;
                p0 + (st.vertex[i] - p0) * kind.curve(tau)
            }
        }
    }

    /// Advance to step `t`, which must be the step after the state's current one.
    pub fn step<R: Rng + ?Sized>(&self, st: &mut ScheduleState, t: usize, rng: &mut R) -> Result<Vec<f64>> {
        if t == 0 || t > self.horizon || t != st.t + 1 {
            return Err(Error::Contract(format!(
                "schedule step {t} requested after step {} (horizon {})",
                st.t, self.horizon
            )));
        }
        let l = self.radius;
        for i in 0..self.dims {
            let prev = st.psi[i];
            let next = match self.kind {
                ScheduleKind::RandomWalk => {
                    if l > 0.0 {
                        prev + rng.gen_range(-l..=l)
                    } else {
                        prev
                    }
                }
                _ => {
                    let target = self.target(st, i, t);
                    if (target - prev).abs() <= l {
                        target
                    } else {
                        prev + l.copysign(target - prev)
                    }
                }
            };
            st.psi[i] = next.clamp(0.0, 1.0);
        }
        st.t = t;
        Ok(st.psi.clone())
    }

    /// Full trajectory `ψ_0..ψ_T`.
    pub fn trajectory<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<Vec<f64>> {
        let mut st = self.init(rng);
        let mut out = Vec::with_capacity(self.horizon + 1);
        out.push(st.psi.clone());
        for t in 1..=self.horizon {
            out.push(self.step(&mut st, t, rng).expect("steps are requested in order"));
        }
        out
    }
}

pub fn trajectory_csv(traj: &[Vec<f64>]) -> String {
    let mut out = String::from("t");
    for i in 0..traj.first().map_or(0, Vec::len) {
        let _ = write!(out, ",psi_{i}");
    }
    out.push('\n');
    for (t, p) in traj.iter().enumerate() {
        let _ = write!(out, "{t}");
        for x in p {
            let _ = write!(out, ",{x:.17e}");
        }
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    #[test]
    fn linear_closed_form() {
        let s = Schedule::new(ScheduleKind::Linear, 1, 0.1, 1000).unwrap();
        let mut st = ScheduleState {
            psi0: vec![0.0],
            psi: vec![0.0],
            vertex: vec![1.0],
            phase: 0.0,
            t: 0,
        };
        let mut rng = stream(0, &[]);
        for t in 1..=1000 {
            let p = s.step(&mut st, t, &mut rng).unwrap();
            assert_eq!(p[0], t as f64 / 1000.0);
        }
    }

    #[test]
    fn frozen_when_radius_is_zero() {
        for kind in ScheduleKind::ALL {
            let s = Schedule::new(kind, 2, 0.0, 50).unwrap();
            let traj = s.trajectory(&mut stream(3, &[kind as u64]));
            assert!(traj.iter().all(|p| p == &traj[0]), "{kind:?}");
        }
    }

    #[test]
    fn out_of_order_steps_rejected() {
        let s = Schedule::new(ScheduleKind::Cosine, 1, 0.1, 10).unwrap();
        let mut rng = stream(1, &[]);
        let mut st = s.init(&mut rng);
        assert!(matches!(s.step(&mut st, 2, &mut rng), Err(Error::Contract(_))));
        assert!(matches!(s.step(&mut st, 0, &mut rng), Err(Error::Contract(_))));
        assert!(s.step(&mut st, 1, &mut rng).is_ok());
    }

    #[test]
    fn vertices_are_corners() {
        let s = Schedule::new(ScheduleKind::Exponential, 1, 0.1, 10).unwrap();
        for seed in 0..20 {
            let st = s.init(&mut stream(seed, &[]));
            assert!(st.vertex[0] == 0.0 || st.vertex[0] == 1.0);
        }
    }

    #[test]
    fn csv_has_one_line_per_step() {
        let s = Schedule::new(ScheduleKind::RandomWalk, 2, 0.1, 5).unwrap();
        let csv = trajectory_csv(&s.trajectory(&mut stream(0, &[])));
        assert!(csv.starts_with("t,psi_0,psi_1\n0,"));
        assert_eq!(csv.lines().count(), 7);
    }
}
