//! Experiment configuration read from TOML.
//!
//! Parsing rejects unknown keys, then [`ExperimentConfig::validate`] checks
//! every value and every key against the environment kind before any work
//! starts.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::envs::{build_chain, build_pendulum, ChainConfig, PendulumConfig};
use crate::error::{Error, Result};
use crate::grid::{ParameterGrid, StepBall};
use crate::mdp::ParametricMdp;
use crate::operators::BackupMode;
use crate::policy::ObservationClass;
use crate::schedules::ScheduleKind;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EnvKind {
    Chain,
    Pendulum,
    Tabular,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvSection {
    pub kind: Option<EnvKind>,
    pub gamma: Option<f64>,
    // chain
    pub n_states: Option<usize>,
    pub goal: Option<usize>,
    pub success_low: Option<f64>,
    pub success_high: Option<f64>,
    // pendulum
    pub angle_bins: Option<usize>,
    pub velocity_bins: Option<usize>,
    pub torques: Option<Vec<f64>>,
    pub mass_range: Option<[f64; 2]>,
    pub length_range: Option<[f64; 2]>,
    pub dt: Option<f64>,
    pub max_speed: Option<f64>,
    // tabular
    pub path: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    pub dims: Option<usize>,
    pub segments_per_dim: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BallSection {
    /// Normalized per-step radius `L`.
    pub radius: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OperatorKind {
    Standard,
    Rect,
    Param,
    Tc,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSection {
    pub operator: Option<OperatorKind>,
    pub mode: Option<BackupMode>,
    pub epsilon: Option<f64>,
    pub max_iters: Option<usize>,
    pub rounds: Option<usize>,
    pub classes: Option<Vec<ObservationClass>>,
    /// Parameter point of the nominal model; the center of the cube by default.
    pub nominal_psi: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Protocol {
    TcWorst,
    Static,
    Schedules,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AgentKind {
    Nominal,
    Rect,
    Param,
    TcOracle,
    TcVanilla,
    TcStacked,
}

impl AgentKind {
    pub fn name(self) -> &'static str {
        match self {
            AgentKind::Nominal => "nominal",
            AgentKind::Rect => "rect",
            AgentKind::Param => "param",
            AgentKind::TcOracle => "tc_oracle",
            AgentKind::TcVanilla => "tc_vanilla",
            AgentKind::TcStacked => "tc_stacked",
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalSection {
    pub protocols: Option<Vec<Protocol>>,
    pub agents: Option<Vec<AgentKind>>,
    pub episodes: Option<usize>,
    pub horizon: Option<usize>,
    pub segments: Option<usize>,
    /// Radius of the adversary's ball in the worst-case protocol.
    pub radius: Option<f64>,
    pub discounted: Option<bool>,
    pub start_state: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleSection {
    pub kinds: Option<Vec<ScheduleKind>>,
    pub radius: Option<f64>,
    pub horizon: Option<usize>,
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckSection {
    pub instances: Option<usize>,
    pub pairs: Option<usize>,
    pub sequences: Option<usize>,
    pub sequence_length: Option<usize>,
    pub reward_weight: Option<f64>,
    /// Override the drift bounds that generated sequences must satisfy.
    pub declared_lp: Option<f64>,
    pub declared_lr: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub env: EnvSection,
    #[serde(default)]
    pub grid: GridSection,
    #[serde(default)]
    pub ball: BallSection,
    #[serde(default)]
    pub solver: SolverSection,
    #[serde(default)]
    pub eval: EvalSection,
    #[serde(default)]
    pub schedule: ScheduleSection,
    #[serde(default)]
    pub check: CheckSection,
    pub seeds: Option<Vec<u64>>,
    pub output: Option<PathBuf>,
}

/// Fully resolved environment description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum EnvSpec {
    Chain {
        chain: ChainConfig,
        dims: usize,
        segments_per_dim: usize,
    },
    Pendulum {
        pendulum: PendulumConfig,
        segments_per_dim: usize,
    },
    Tabular {
        path: PathBuf,
        gamma: Option<f64>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Resolved {
    pub env: EnvSpec,
    pub radius: f64,
    pub operator: OperatorKind,
    pub mode: BackupMode,
    pub epsilon: f64,
    pub max_iters: usize,
    pub rounds: usize,
    pub classes: Vec<ObservationClass>,
    pub nominal_psi: Option<Vec<f64>>,
    pub protocols: Vec<Protocol>,
    pub agents: Vec<AgentKind>,
    pub episodes: usize,
    pub horizon: usize,
    pub segments: usize,
    pub eval_radius: f64,
    pub discounted: bool,
    pub start_state: Option<usize>,
    pub schedule_kinds: Vec<ScheduleKind>,
    pub schedule_radius: f64,
    pub schedule_horizon: usize,
    pub schedule_seed: u64,
    pub check_instances: usize,
    pub check_pairs: usize,
    pub check_sequences: usize,
    pub check_sequence_length: usize,
    pub reward_weight: f64,
    pub declared_lp: Option<f64>,
    pub declared_lr: Option<f64>,
    pub seeds: Vec<u64>,
}

fn reject(kind: &str, present: &[(&str, bool)]) -> Result<()> {
    for (name, is_set) in present {
        if *is_set {
            return Err(Error::Config(format!(
                "env.{name} does not apply to env.kind = \"{kind}\""
            )));
        }
    }
    Ok(())
}

fn positive(name: &str, v: f64) -> Result<f64> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(Error::Config(format!("{name} must be positive and finite, got {v}")))
    }
}

fn unit_radius(name: &str, v: f64) -> Result<f64> {
    if (0.0..=1.0).contains(&v) {
        Ok(v)
    } else {
        Err(Error::Config(format!("{name} must lie in [0,1], got {v}")))
    }
}

fn at_least_one(name: &str, v: usize) -> Result<usize> {
    if v >= 1 {
        Ok(v)
    } else {
        Err(Error::Config(format!("{name} must be at least 1")))
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn from_file(path: &std::path::Path) -> Result<Self> {
        let text =
            std::fs::read_to_string(path).map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    /// Check every key and fill in defaults.
    pub fn validate(&self) -> Result<Resolved> {
        let e = &self.env;
        let kind = e.kind.ok_or_else(|| Error::Config("env.kind is required".into()))?;
        if let Some(g) = e.gamma {
            if !(0.0..1.0).contains(&g) {
                return Err(Error::Config(format!("env.gamma must lie in [0,1), got {g}")));
            }
        }
        let pendulum_keys = [
            ("angle_bins", e.angle_bins.is_some()),
            ("velocity_bins", e.velocity_bins.is_some()),
            ("torques", e.torques.is_some()),
            ("mass_range", e.mass_range.is_some()),
            ("length_range", e.length_range.is_some()),
            ("dt", e.dt.is_some()),
            ("max_speed", e.max_speed.is_some()),
        ];
        let chain_keys = [
            ("n_states", e.n_states.is_some()),
            ("goal", e.goal.is_some()),
            ("success_low", e.success_low.is_some()),
            ("success_high", e.success_high.is_some()),
        ];
        let segments = self.grid.segments_per_dim.unwrap_or(5);
        let env = match kind {
            EnvKind::Chain => {
                reject("chain", &pendulum_keys)?;
                reject("chain", &[("path", e.path.is_some())])?;
                let d = ChainConfig::default();
                let n_states = e.n_states.unwrap_or(d.n_states);
                let chain = ChainConfig {
                    n_states,
                    goal: e.goal.unwrap_or(n_states.saturating_sub(1)),
                    gamma: e.gamma.unwrap_or(d.gamma),
                    success_low: e.success_low.unwrap_or(d.success_low),
                    success_high: e.success_high.unwrap_or(d.success_high),
                };
                EnvSpec::Chain {
                    chain,
                    dims: at_least_one("grid.dims", self.grid.dims.unwrap_or(1))?,
                    segments_per_dim: segments,
                }
            }
            EnvKind::Pendulum => {
                reject("pendulum", &chain_keys)?;
                reject("pendulum", &[("path", e.path.is_some())])?;
                if let Some(dims) = self.grid.dims {
                    if dims != 2 {
                        return Err(Error::Config("grid.dims must be 2 for the pendulum".into()));
                    }
                }
                let d = PendulumConfig::default();
                EnvSpec::Pendulum {
                    pendulum: PendulumConfig {
                        angle_bins: e.angle_bins.unwrap_or(d.angle_bins),
                        velocity_bins: e.velocity_bins.unwrap_or(d.velocity_bins),
                        torques: e.torques.clone().unwrap_or(d.torques),
                        mass_range: e.mass_range.unwrap_or(d.mass_range),
                        length_range: e.length_range.unwrap_or(d.length_range),
                        dt: e.dt.unwrap_or(d.dt),
                        max_speed: e.max_speed.unwrap_or(d.max_speed),
                        gravity: d.gravity,
                        gamma: e.gamma.unwrap_or(d.gamma),
                    },
                    segments_per_dim: segments,
                }
            }
            EnvKind::Tabular => {
                reject("tabular", &chain_keys)?;
                reject("tabular", &pendulum_keys)?;
                if self.grid.dims.is_some() || self.grid.segments_per_dim.is_some() {
                    return Err(Error::Config(
                        "tabular models carry their own grid; remove [grid]".into(),
                    ));
                }
                EnvSpec::Tabular {
                    path: e
                        .path
                        .clone()
                        .ok_or_else(|| Error::Config("env.path is required for tabular models".into()))?,
                    gamma: e.gamma,
                }
            }
        };

        let s = &self.solver;
        let epsilon = positive("solver.epsilon", s.epsilon.unwrap_or(1e-8))?;
        let classes = s.classes.clone().unwrap_or_else(|| {
            vec![
                ObservationClass::Vanilla,
                ObservationClass::Stacked,
                ObservationClass::Oracle,
            ]
        });
        if classes.is_empty() {
            return Err(Error::Config("solver.classes must not be empty".into()));
        }
        let v = &self.eval;
        let protocols = v
            .protocols
            .clone()
            .unwrap_or_else(|| vec![Protocol::TcWorst, Protocol::Static, Protocol::Schedules]);
        let agents = v.agents.clone().unwrap_or_else(|| {
            vec![
                AgentKind::Nominal,
                AgentKind::Rect,
                AgentKind::Param,
                AgentKind::TcOracle,
                AgentKind::TcVanilla,
                AgentKind::TcStacked,
            ]
        });
        if protocols.is_empty() || agents.is_empty() {
            return Err(Error::Config("eval.protocols and eval.agents must not be empty".into()));
        }
        let horizon = at_least_one("eval.horizon", v.horizon.unwrap_or(1000))?;
        let segments_eval = v.segments.unwrap_or(10);
        if segments_eval < 2 {
            return Err(Error::Config("eval.segments must be at least 2".into()));
        }
        let radius = unit_radius("ball.radius", self.ball.radius.unwrap_or(0.1))?;
        let sc = &self.schedule;
        let schedule_kinds = sc.kinds.clone().unwrap_or_else(|| ScheduleKind::ALL.to_vec());
        if schedule_kinds.is_empty() {
            return Err(Error::Config("schedule.kinds must not be empty".into()));
        }
        let schedule_horizon = sc.horizon.unwrap_or(horizon);
        if schedule_horizon < horizon {
            return Err(Error::Config(format!(
                "schedule.horizon {schedule_horizon} is shorter than eval.horizon {horizon}"
            )));
        }
        let seeds = self.seeds.clone().unwrap_or_else(|| vec![0]);
        if seeds.is_empty() {
            return Err(Error::Config("seeds must not be empty".into()));
        }
        let c = &self.check;
        let reward_weight = c.reward_weight.unwrap_or(0.1);
        if !(0.0..=1.0).contains(&reward_weight) {
            return Err(Error::Config("check.reward_weight must lie in [0,1]".into()));
        }
        for (name, val) in [
            ("check.declared_lp", c.declared_lp),
            ("check.declared_lr", c.declared_lr),
        ] {
            if let Some(x) = val {
                if !(x >= 0.0 && x.is_finite()) {
                    return Err(Error::Config(format!("{name} must be non-negative")));
                }
            }
        }
        let resolved = Resolved {
            env,
            radius,
            operator: s.operator.unwrap_or(OperatorKind::Tc),
            mode: s.mode.unwrap_or_default(),
            epsilon,
            max_iters: at_least_one("solver.max_iters", s.max_iters.unwrap_or(100_000))?,
            rounds: at_least_one("solver.rounds", s.rounds.unwrap_or(5))?,
            classes,
            nominal_psi: s.nominal_psi.clone(),
            protocols,
            agents,
            episodes: at_least_one("eval.episodes", v.episodes.unwrap_or(10))?,
            horizon,
            segments: segments_eval,
            eval_radius: unit_radius("eval.radius", v.radius.unwrap_or(radius))?,
            discounted: v.discounted.unwrap_or(false),
            start_state: v.start_state,
            schedule_kinds,
            schedule_radius: unit_radius("schedule.radius", sc.radius.unwrap_or(radius))?,
            schedule_horizon,
            schedule_seed: sc.seed.unwrap_or(0),
            check_instances: at_least_one("check.instances", c.instances.unwrap_or(50))?,
            check_pairs: at_least_one("check.pairs", c.pairs.unwrap_or(20))?,
            check_sequences: at_least_one("check.sequences", c.sequences.unwrap_or(100))?,
            check_sequence_length: at_least_one("check.sequence_length", c.sequence_length.unwrap_or(20))?,
            reward_weight,
            declared_lp: c.declared_lp,
            declared_lr: c.declared_lr,
            seeds,
        };
        // catch model errors (grid size, success range, pendulum physics) up front
        if !matches!(resolved.env, EnvSpec::Tabular { .. }) {
            let mdp = resolved.build_mdp()?;
            resolved.check_against(&mdp)?;
        }
        Ok(resolved)
    }

    /// SHA-256 of the canonical JSON form of the parsed config.
    pub fn hash(&self) -> String {
        let canonical = serde_json::to_vec(self).expect("config serializes");
        Sha256::digest(&canonical).iter().map(|b| format!("{b:02x}")).collect()
    }
}

impl Resolved {
    pub fn build_mdp(&self) -> Result<ParametricMdp> {
        match &self.env {
            EnvSpec::Chain {
                chain,
                dims,
                segments_per_dim,
            } => build_chain(chain, ParameterGrid::new(*dims, *segments_per_dim)?),
            EnvSpec::Pendulum {
                pendulum,
                segments_per_dim,
            } => build_pendulum(pendulum, ParameterGrid::new(2, *segments_per_dim)?),
            EnvSpec::Tabular { path, gamma } => {
                let text = std::fs::read_to_string(path)
                    .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
                let mdp = ParametricMdp::from_json_str(&text)?;
                let mdp = match gamma {
                    Some(g) => mdp.with_gamma(*g)?,
                    None => mdp,
                };
                self.check_against(&mdp)?;
                Ok(mdp)
            }
        }
    }

    fn check_against(&self, mdp: &ParametricMdp) -> Result<()> {
        if let Some(p) = &self.nominal_psi {
            if p.len() != mdp.grid().dims() || p.iter().any(|x| !(0.0..=1.0).contains(x)) {
                return Err(Error::Config(format!(
                    "solver.nominal_psi must be a point of [0,1]^{}",
                    mdp.grid().dims()
                )));
            }
        }
        if let Some(s) = self.start_state {
            if s >= mdp.n_states() {
                return Err(Error::Config(format!(
                    "eval.start_state {s} outside 0..{}",
                    mdp.n_states()
                )));
            }
        }
        Ok(())
    }

    pub fn ball(&self, grid: &ParameterGrid) -> Result<StepBall> {
        StepBall::from_radius(self.radius, grid)
    }

    /// Grid index of the nominal model.
    pub fn nominal_index(&self, grid: &ParameterGrid) -> usize {
        match &self.nominal_psi {
            Some(p) => grid.nearest(p),
            None => grid.nearest(&vec![0.5; grid.dims()]),
        }
    }

    pub fn gamma(&self) -> Option<f64> {
        match &self.env {
            EnvSpec::Chain { chain, .. } => Some(chain.gamma),
            EnvSpec::Pendulum { pendulum, .. } => Some(pendulum.gamma),
            EnvSpec::Tabular { gamma, .. } => *gamma,
        }
    }
}
