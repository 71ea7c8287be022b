//! Monte Carlo rollouts and the evaluation protocols built on them.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{ParameterGrid, StepBall, StepTable};
use crate::mdp::ParametricMdp;
use crate::policy::{ObservationClass, PolicyTable, TableKind};
use crate::rng::stream;
use crate::schedules::{Schedule, ScheduleKind};
use crate::solvers::{adversary_best_response, policy_shape, BestResponse};

const TAG_ADVERSARY: u64 = 1;
const TAG_STATIC: u64 = 2;
const TAG_SCHEDULE: u64 = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RolloutConfig {
    pub horizon: usize,
    pub episodes: usize,
    pub seed: u64,
    /// Discount rewards by `γ^t` instead of summing them.
    pub discounted: bool,
    /// Fixed initial state; uniform over states when `None`.
    pub start_state: Option<usize>,
}

impl Default for RolloutConfig {
    fn default() -> Self {
        Self {
            horizon: 1000,
            episodes: 10,
            seed: 0,
            discounted: false,
            start_state: None,
        }
    }
}

/// Source of parameter motion during a rollout.
#[derive(Debug, Clone, Copy)]
pub enum Disturbance<'a> {
    Schedule(&'a Schedule),
    /// Adversary table on grid indices; `ψ` starts uniform on the grid.
    Adversary {
        table: &'a PolicyTable,
        steps: &'a StepTable,
    },
    /// `ψ` held at a point of `[0,1]^d` for the whole episode.
    Frozen(&'a [f64]),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    pub label: String,
    pub mean: f64,
    /// Sample standard deviation across episodes (zero for a single episode).
    pub sd: f64,
    pub min: f64,
    pub max: f64,
    pub returns: Vec<f64>,
}

impl EvalResult {
    pub fn from_returns(label: impl Into<String>, returns: Vec<f64>) -> Self {
        let n = returns.len() as f64;
        let mean = returns.iter().sum::<f64>() / n;
        let sd = if returns.len() > 1 {
            (returns.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        let min = returns.iter().copied().fold(f64::INFINITY, f64::min);
        let max = returns.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        Self {
            label: label.into(),
            mean: mean.clamp(min, max),
            sd,
            min,
            max,
            returns,
        }
    }

    pub fn standard_error(&self) -> f64 {
        self.sd / (self.returns.len() as f64).sqrt()
    }
}

fn sample(probs: impl Iterator<Item = (usize, f64)>, rng: &mut ChaCha8Rng) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    let mut last = 0;
    for (i, p) in probs {
        if p <= 0.0 {
            continue;
        }
        acc += p;
        last = i;
        if u < acc {
            return i;
        }
    }
    last
}

fn check_agent(agent: &PolicyTable, mdp: &ParametricMdp) -> Result<ObservationClass> {
    match agent.kind() {
        TableKind::Agent(class) if agent.shape() == policy_shape(mdp) => Ok(class),
        TableKind::Agent(_) => Err(Error::Shape("agent table does not match the model".into())),
        TableKind::Adversary(_) => Err(Error::Contract("rollout agent must be an agent table".into())),
    }
}

fn check_disturbance(
    class: ObservationClass,
    mdp: &ParametricMdp,
    dist: &Disturbance<'_>,
    horizon: usize,
) -> Result<()> {
    let dims = mdp.grid().dims();
    match dist {
        Disturbance::Schedule(s) => {
            if s.dims != dims {
                return Err(Error::Shape(format!("schedule has {} dims, model has {dims}", s.dims)));
            }
            if s.horizon < horizon {
                return Err(Error::Contract(format!(
                    "schedule horizon {} shorter than rollout horizon {horizon}",
                    s.horizon
                )));
            }
        }
        Disturbance::Adversary { table, steps } => {
            if table.kind() != TableKind::Adversary(class) {
                return Err(Error::Contract(format!(
                    "adversary was built for a different observation class than {}",
                    class.name()
                )));
            }
            if table.shape() != policy_shape(mdp) || steps.grid() != mdp.grid() {
                return Err(Error::Shape("adversary table does not match the model".into()));
            }
        }
        Disturbance::Frozen(p) => {
            if p.len() != dims || p.iter().any(|x| !(0.0..=1.0).contains(x)) {
                return Err(Error::Shape("frozen parameter must be a point of the unit cube".into()));
            }
        }
    }
    Ok(())
}

enum Param {
    Point(Vec<f64>, crate::schedules::ScheduleState),
    Index(usize),
    Fixed(Vec<f64>),
}

fn episode(
    mdp: &ParametricMdp,
    agent: &PolicyTable,
    dist: &Disturbance<'_>,
    cfg: &RolloutConfig,
    rng: &mut ChaCha8Rng,
) -> Result<f64> {
    let space = agent.joint_space();
    let grid = mdp.grid();
    let (np, na) = (mdp.n_psi(), mdp.n_actions());
    let mut s = match cfg.start_state {
        Some(s) => s,
        None => rng.gen_range(0..mdp.n_states()),
    };
    let mut row = space.start_row(s);
    let mut param = match dist {
        Disturbance::Schedule(sched) => {
            let st = sched.init(rng);
            Param::Point(st.psi.clone(), st)
        }
        Disturbance::Adversary { .. } => Param::Index(rng.gen_range(0..np)),
        Disturbance::Frozen(p) => Param::Fixed(p.to_vec()),
    };
    let mut total = 0.0;
    let mut weight = 1.0;
    for t in 0..cfg.horizon {
        let psi_idx = match &param {
            Param::Index(i) => *i,
            Param::Point(p, _) | Param::Fixed(p) => {
                if space.class == ObservationClass::Oracle {
                    grid.nearest(p)
                } else {
                    0
                }
            }
        };
        let a = sample(agent.row(space.obs_key(row, psi_idx)).iter().copied().enumerate(), rng);
        total += weight * mdp.reward(s, a);
        if cfg.discounted {
            weight *= mdp.gamma();
        }
        let next = match (&mut param, dist) {
            (Param::Point(p, st), Disturbance::Schedule(sched)) => {
                *p = sched.step(st, t + 1, rng)?;
                sample(mdp.row_at_point(p, s, a).into_iter(), rng)
            }
            (Param::Index(i), Disturbance::Adversary { table, steps }) => {
                let key = (row * np + *i) * na + a;
                let b = sample(table.row(key).iter().copied().enumerate(), rng);
                *i = steps.target(*i, b);
                sample(mdp.row(*i, s, a).iter(), rng)
            }
            (Param::Fixed(p), _) => sample(mdp.row_at_point(p, s, a).into_iter(), rng),
            _ => unreachable!("parameter state always matches the disturbance"),
        };
        row = space.next_row(s, a, next);
        s = next;
    }
    Ok(total)
}

/// Per-episode returns; episode `e` draws from the stream `(seed, condition, e)`.
pub fn rollout(
    mdp: &ParametricMdp,
    agent: &PolicyTable,
    dist: Disturbance<'_>,
    cfg: &RolloutConfig,
    condition: &[u64],
) -> Result<Vec<f64>> {
    if cfg.horizon == 0 || cfg.episodes == 0 {
        return Err(Error::Config(
            "rollouts need a positive horizon and episode count".into(),
        ));
    }
    if let Some(s) = cfg.start_state {
        if s >= mdp.n_states() {
            return Err(Error::Index(format!("start state {s} outside 0..{}", mdp.n_states())));
        }
    }
    let class = check_agent(agent, mdp)?;
    agent.check_rows()?;
    check_disturbance(class, mdp, &dist, cfg.horizon)?;
    (0..cfg.episodes)
        .into_par_iter()
        .map(|e| {
            let mut path = condition.to_vec();
            path.push(e as u64);
            let mut rng = stream(cfg.seed, &path);
            episode(mdp, agent, &dist, cfg, &mut rng)
        })
        .collect()
}

/// Best-responding adversary within `radius` and Monte Carlo returns against it.
pub fn tc_worst_case_eval(
    agent: &PolicyTable,
    mdp: &ParametricMdp,
    radius: f64,
    cfg: &RolloutConfig,
    epsilon: f64,
    max_iters: usize,
) -> Result<(EvalResult, BestResponse)> {
    let ball = StepBall::from_radius(radius, mdp.grid())?;
    let steps = StepTable::new(mdp.grid(), &ball);
    let br = adversary_best_response(agent, mdp, &steps, epsilon, max_iters)?;
    let returns = rollout(
        mdp,
        agent,
        Disturbance::Adversary {
            table: &br.adversary,
            steps: &steps,
        },
        cfg,
        &[TAG_ADVERSARY],
    )?;
    Ok((EvalResult::from_returns("tc_worst", returns), br))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StaticPoint {
    pub point: Vec<f64>,
    pub result: EvalResult,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StaticGridResult {
    pub worst: f64,
    pub average: f64,
    pub points: Vec<StaticPoint>,
}

/// Freeze `ψ` at each point of a lattice with `segments` points per axis.
pub fn static_grid_eval(
    agent: &PolicyTable,
    mdp: &ParametricMdp,
    segments: usize,
    cfg: &RolloutConfig,
) -> Result<StaticGridResult> {
    if segments < 2 {
        return Err(Error::Config(format!(
            "static evaluation needs at least 2 segments, got {segments}"
        )));
    }
    let lattice = ParameterGrid::new(mdp.grid().dims(), segments)?;
    let points = (0..lattice.len())
        .map(|i| {
            let point = lattice.point(i);
            let returns = rollout(mdp, agent, Disturbance::Frozen(&point), cfg, &[TAG_STATIC, i as u64])?;
            Ok(StaticPoint {
                result: EvalResult::from_returns(format!("static_{i}"), returns),
                point,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let means: Vec<f64> = points.iter().map(|p| p.result.mean).collect();
    let worst = means.iter().copied().fold(f64::INFINITY, f64::min);
    let average = means.iter().sum::<f64>() / means.len() as f64;
    Ok(StaticGridResult {
        worst,
        average: average.max(worst),
        points,
    })
}

/// One result per schedule kind, each with its own random streams.
pub fn schedule_sweep(
    agent: &PolicyTable,
    mdp: &ParametricMdp,
    kinds: &[ScheduleKind],
    radius: f64,
    cfg: &RolloutConfig,
) -> Result<Vec<(ScheduleKind, EvalResult)>> {
    if kinds.is_empty() {
        return Err(Error::Config("schedule sweep needs at least one kind".into()));
    }
    kinds
        .iter()
        .map(|&kind| {
            let sched = Schedule::new(kind, mdp.grid().dims(), radius, cfg.horizon)?;
            let returns = rollout(
                mdp,
                agent,
                Disturbance::Schedule(&sched),
                cfg,
                &[TAG_SCHEDULE, kind as u64],
            )?;
            Ok((kind, EvalResult::from_returns(kind.name(), returns)))
        })
        .collect()
}

/// `(v − low) / |target − low|`.
pub fn normalize_score(v: f64, low: f64, target: f64) -> Result<f64> {
    let gap = (target - low).abs();
    if !(gap > 1e-12) {
        return Err(Error::UndefinedNormalization { low, target });
    }
    Ok((v - low) / gap)
}
