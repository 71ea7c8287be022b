//! Config-driven commands. Each command maps a validated configuration to a
//! set of named output files held in memory; writing them is up to the caller.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rand::Rng;
use serde_json::{json, Value};

use crate::config::{AgentKind, EnvSpec, ExperimentConfig, OperatorKind, Protocol, Resolved, SCHEMA_VERSION};
use crate::envs::{random_mdp, ChainConfig, RandomKernel, RandomSpec};
use crate::error::{Error, Result};
use crate::eval::{normalize_score, schedule_sweep, static_grid_eval, tc_worst_case_eval, EvalResult, RolloutConfig};
use crate::grid::{ParameterGrid, StepBall, StepTable};
use crate::mdp::ParametricMdp;
use crate::operators::{BackupMode, BellmanOperator, Parametric, Rectangular, Standard, TcOptimal, TcPolicy};
use crate::policy::{ObservationClass, PolicyTable};
use crate::rng::stream;
use crate::schedules::{Schedule, ScheduleKind};
use crate::solvers::{
    alternating_train, extract_oracle_policy, extract_state_policy, greedy_policy, policy_shape, value_iteration,
    SolveReport, TrainConfig, TrainOutcome,
};
use crate::theory::{
    lipschitz_bound_check, lipschitz_constant, policy_values, return_via_occupancy, ChainDriftFamily, MdpSequence,
    RobustSetup, TRAJECTORY_BUDGET,
};
use crate::value::{ValueField, ValueKind};

pub type Artifacts = BTreeMap<String, Vec<u8>>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Solve,
    Train,
    Eval,
    Check,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Solve => "solve",
            Command::Train => "train",
            Command::Eval => "eval",
            Command::Check => "check",
        }
    }
}

#[derive(Debug, Clone)]
pub struct Outcome {
    pub artifacts: Artifacts,
    /// False when a check command found a violated property.
    pub passed: bool,
}

pub fn run(command: Command, cfg: &ExperimentConfig) -> Result<Outcome> {
    let resolved = cfg.validate()?;
    let header = json!({
        "schema_version": SCHEMA_VERSION,
        "command": command.name(),
        "config_hash": cfg.hash(),
        "seeds": resolved.seeds,
    });
    match command {
        Command::Solve => solve(&resolved, header),
        Command::Train => train(&resolved, header),
        Command::Eval => eval(&resolved, header),
        Command::Check => check(&resolved, header),
    }
}

fn to_json(v: &Value) -> Vec<u8> {
    let mut out = serde_json::to_vec_pretty(v).expect("json values serialize");
    out.push(b'\n');
    out
}

fn with(header: &Value, extra: Value) -> Value {
    let mut out = header.clone();
    if let (Some(o), Value::Object(e)) = (out.as_object_mut(), extra) {
        o.extend(e);
    }
    out
}

fn solve_report_json(report: &SolveReport, mode: Option<BackupMode>) -> Value {
    let mut r = report.clone();
    r.mode = mode;
    serde_json::to_value(r).expect("reports serialize")
}

struct Solved {
    values: ValueField,
    report: SolveReport,
    agent: PolicyTable,
    adversary: Option<PolicyTable>,
    mode: Option<BackupMode>,
}

fn solve_operator(r: &Resolved, mdp: &ParametricMdp, operator: OperatorKind, mode: BackupMode) -> Result<Solved> {
    let grid = mdp.grid();
    match operator {
        OperatorKind::Standard => {
            let psi = r.nominal_index(grid);
            let (values, report) = value_iteration(&Standard { mdp, psi }, None, r.epsilon, r.max_iters)?;
            let agent = greedy_policy(&values, mdp, psi)?;
            Ok(Solved {
                values,
                report,
                agent,
                adversary: None,
                mode: None,
            })
        }
        OperatorKind::Rect => {
            let (values, report) = value_iteration(&Rectangular { mdp }, None, r.epsilon, r.max_iters)?;
            let agent = extract_state_policy(&values, mdp, BackupMode::PureActions)?;
            Ok(Solved {
                values,
                report,
                agent,
                adversary: None,
                mode: None,
            })
        }
        OperatorKind::Param => {
            let (values, report) = value_iteration(&Parametric { mdp, mode }, None, r.epsilon, r.max_iters)?;
            let agent = extract_state_policy(&values, mdp, mode)?;
            Ok(Solved {
                values,
                report,
                agent,
                adversary: None,
                mode: Some(mode),
            })
        }
        OperatorKind::Tc => {
            let op = TcOptimal::new(mdp, &r.ball(grid)?, mode);
            let (values, report) = value_iteration(&op, None, r.epsilon, r.max_iters)?;
            let (agent, adversary) = extract_oracle_policy(&values, mdp, &op.steps, mode)?;
            Ok(Solved {
                values,
                report,
                agent,
                adversary: Some(adversary),
                mode: Some(mode),
            })
        }
    }
}

fn operator_name(op: OperatorKind) -> &'static str {
    match op {
        OperatorKind::Standard => "standard",
        OperatorKind::Rect => "rect",
        OperatorKind::Param => "param",
        OperatorKind::Tc => "tc",
    }
}

fn mode_name(mode: Option<BackupMode>) -> &'static str {
    match mode {
        Some(BackupMode::PureActions) => "pure_actions",
        Some(BackupMode::MixedExact) => "mixed_exact",
        None => "",
    }
}

fn solve(r: &Resolved, header: Value) -> Result<Outcome> {
    let mdp = r.build_mdp()?;
    let solved = solve_operator(r, &mdp, r.operator, r.mode)?;
    let per_state = solved.values.row_min();
    let vmin = solved.values.data().iter().copied().fold(f64::INFINITY, f64::min);
    let vmax = solved.values.data().iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let vmean = solved.values.data().iter().sum::<f64>() / solved.values.data().len() as f64;
    let name = operator_name(r.operator);
    let mut artifacts = Artifacts::new();
    artifacts.insert("values.csv".into(), solved.values.to_csv().into_bytes());
    artifacts.insert("policy.csv".into(), solved.agent.to_csv().into_bytes());
    if let Some(adv) = &solved.adversary {
        artifacts.insert("adversary.csv".into(), adv.to_csv().into_bytes());
    }
    let results = format!(
        "operator,mode,iterations,final_residual,value_min,value_max,value_mean\n{name},{},{},{},{vmin},{vmax},{vmean}\n",
        mode_name(solved.mode),
        solved.report.iterations,
        solved.report.final_residual,
    );
    artifacts.insert("results.csv".into(), results.into_bytes());
    let summary = with(
        &header,
        json!({
            "operator": name,
            "mode": solved.mode,
            "iterations": solved.report.iterations,
            "final_residual": solved.report.final_residual,
            "value_min": vmin,
            "value_max": vmax,
            "worst_per_state": per_state,
        }),
    );
    artifacts.insert("summary.json".into(), to_json(&summary));
    let report = with(
        &header,
        json!({
            "config": r,
            "n_states": mdp.n_states(),
            "n_actions": mdp.n_actions(),
            "n_psi": mdp.n_psi(),
            "ball_cells": r.ball(mdp.grid())?.radius_cells,
            "solve_report": solve_report_json(&solved.report, solved.mode),
        }),
    );
    artifacts.insert("report.json".into(), to_json(&report));
    Ok(Outcome {
        artifacts,
        passed: true,
    })
}

/// Train the requested classes. Stacked agents start from the lifted vanilla
/// result, so vanilla is trained whenever stacked is requested.
fn train_classes(
    r: &Resolved,
    mdp: &ParametricMdp,
    steps: &StepTable,
    classes: &[ObservationClass],
) -> Result<BTreeMap<&'static str, TrainOutcome>> {
    let mut out = BTreeMap::new();
    let wants = |c| classes.contains(&c);
    let base = TrainConfig {
        class: ObservationClass::Vanilla,
        rounds: r.rounds,
        epsilon: r.epsilon,
        max_iters: r.max_iters,
        init: None,
    };
    let mut vanilla = None;
    if wants(ObservationClass::Vanilla) || wants(ObservationClass::Stacked) {
        let v = alternating_train(mdp, steps, &base)?;
        vanilla = Some(v.agent.clone());
        if wants(ObservationClass::Vanilla) {
            out.insert("vanilla", v);
        }
    }
    if wants(ObservationClass::Stacked) {
        let init = vanilla.map(|v| v.lift(ObservationClass::Stacked)).transpose()?;
        let cfg = TrainConfig {
            class: ObservationClass::Stacked,
            init,
            ..base.clone()
        };
        out.insert("stacked", alternating_train(mdp, steps, &cfg)?);
    }
    if wants(ObservationClass::Oracle) {
        let cfg = TrainConfig {
            class: ObservationClass::Oracle,
            ..base
        };
        out.insert("oracle", alternating_train(mdp, steps, &cfg)?);
    }
    Ok(out)
}

fn train(r: &Resolved, header: Value) -> Result<Outcome> {
    let mdp = r.build_mdp()?;
    let steps = StepTable::new(mdp.grid(), &r.ball(mdp.grid())?);
    let trained = train_classes(r, &mdp, &steps, &r.classes)?;
    let mut artifacts = Artifacts::new();
    let mut results = String::from("class,rounds,accepted_rounds,initial_worst,worst\n");
    let mut summary_classes = serde_json::Map::new();
    let mut traces = serde_json::Map::new();
    for (name, outcome) in &trained {
        let initial = outcome.initial_per_start.iter().copied().fold(f64::INFINITY, f64::min);
        let accepted = outcome.trace.iter().filter(|t| t.accepted).count();
        let _ = writeln!(
            results,
            "{name},{},{accepted},{initial},{}",
            outcome.trace.len(),
            outcome.worst
        );
        artifacts.insert(format!("policy_{name}.csv"), outcome.agent.to_csv().into_bytes());
        summary_classes.insert(
            name.to_string(),
            json!({ "worst": outcome.worst, "per_start": outcome.per_start }),
        );
        traces.insert(
            name.to_string(),
            serde_json::to_value(&outcome.trace).expect("traces serialize"),
        );
    }
    artifacts.insert("results.csv".into(), results.into_bytes());
    artifacts.insert(
        "summary.json".into(),
        to_json(&with(&header, json!({ "classes": summary_classes }))),
    );
    artifacts.insert(
        "report.json".into(),
        to_json(&with(&header, json!({ "config": r, "traces": traces }))),
    );
    Ok(Outcome {
        artifacts,
        passed: true,
    })
}

/// Agents named in the config, built on the training ball.
pub fn build_agents(r: &Resolved, mdp: &ParametricMdp) -> Result<Vec<(AgentKind, PolicyTable)>> {
    let steps = StepTable::new(mdp.grid(), &r.ball(mdp.grid())?);
    let mut classes = Vec::new();
    if r.agents.contains(&AgentKind::TcVanilla) {
        classes.push(ObservationClass::Vanilla);
    }
    if r.agents.contains(&AgentKind::TcStacked) {
        classes.push(ObservationClass::Stacked);
    }
    let mut trained = train_classes(r, mdp, &steps, &classes)?;
    let mut agents = Vec::new();
    for &kind in &r.agents {
        let table = match kind {
            AgentKind::Nominal => solve_operator(r, mdp, OperatorKind::Standard, r.mode)?.agent,
            AgentKind::Rect => solve_operator(r, mdp, OperatorKind::Rect, r.mode)?.agent,
            AgentKind::Param => solve_operator(r, mdp, OperatorKind::Param, r.mode)?.agent,
            AgentKind::TcOracle => solve_operator(r, mdp, OperatorKind::Tc, r.mode)?.agent,
            AgentKind::TcVanilla => trained.remove("vanilla").expect("vanilla was trained").agent,
            AgentKind::TcStacked => trained.remove("stacked").expect("stacked was trained").agent,
        };
        agents.push((kind, table));
    }
    Ok(agents)
}

struct Row {
    seed: u64,
    agent: AgentKind,
    protocol: &'static str,
    condition: String,
    result: Option<EvalResult>,
    value: f64,
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

fn eval(r: &Resolved, header: Value) -> Result<Outcome> {
    let mdp = r.build_mdp()?;
    let agents = build_agents(r, &mdp)?;
    let mut rows: Vec<Row> = Vec::new();
    let mut dp_worst = serde_json::Map::new();
    for &seed in &r.seeds {
        let cfg = RolloutConfig {
            horizon: r.horizon,
            episodes: r.episodes,
            seed,
            discounted: r.discounted,
            start_state: r.start_state,
        };
        for (kind, agent) in &agents {
            for protocol in &r.protocols {
                match protocol {
                    Protocol::TcWorst => {
                        let (res, br) = tc_worst_case_eval(agent, &mdp, r.eval_radius, &cfg, r.epsilon, r.max_iters)?;
                        let per_start = br.per_start(&agent.joint_space());
                        dp_worst.insert(kind.name().to_string(), json!(per_start));
                        rows.push(Row {
                            seed,
                            agent: *kind,
                            protocol: "tc_worst",
                            condition: "adversary".into(),
                            value: res.mean,
                            result: Some(res),
                        });
                    }
                    Protocol::Static => {
                        let res = static_grid_eval(agent, &mdp, r.segments, &cfg)?;
                        for (i, p) in res.points.into_iter().enumerate() {
                            rows.push(Row {
                                seed,
                                agent: *kind,
                                protocol: "static",
                                condition: format!("point_{i}"),
                                value: p.result.mean,
                                result: Some(p.result),
                            });
                        }
                        for (cond, value) in [("worst", res.worst), ("average", res.average)] {
                            rows.push(Row {
                                seed,
                                agent: *kind,
                                protocol: "static",
                                condition: cond.into(),
                                result: None,
                                value,
                            });
                        }
                    }
                    Protocol::Schedules => {
                        let sweep_cfg = RolloutConfig {
                            seed: seed ^ r.schedule_seed.rotate_left(32),
                            ..cfg.clone()
                        };
                        for (k, res) in schedule_sweep(agent, &mdp, &r.schedule_kinds, r.schedule_radius, &sweep_cfg)? {
                            rows.push(Row {
                                seed,
                                agent: *kind,
                                protocol: "schedules",
                                condition: k.name().into(),
                                value: res.mean,
                                result: Some(res),
                            });
                        }
                    }
                }
            }
        }
    }
    // reference scores: nominal agent is the low anchor, rectangular the target
    let lookup = |seed: u64, agent: AgentKind, protocol: &str, condition: &str| {
        rows.iter()
            .find(|x| x.seed == seed && x.agent == agent && x.protocol == protocol && x.condition == condition)
            .map(|x| x.value)
    };
    let mut csv = String::from("seed,agent,protocol,condition,episodes,mean,sd,min,max,normalized\n");
    let mut summary_rows = Vec::new();
    for row in &rows {
        let low = lookup(row.seed, AgentKind::Nominal, row.protocol, &row.condition);
        let target = lookup(row.seed, AgentKind::Rect, row.protocol, &row.condition);
        let normalized = match (low, target) {
            (Some(l), Some(t)) => normalize_score(row.value, l, t).ok(),
            _ => None,
        };
        let (episodes, sd, min, max) = match &row.result {
            Some(res) => (
                res.returns.len().to_string(),
                Some(res.sd),
                Some(res.min),
                Some(res.max),
            ),
            None => (String::new(), None, None, None),
        };
        let _ = writeln!(
            csv,
            "{},{},{},{},{episodes},{},{},{},{},{}",
            row.seed,
            row.agent.name(),
            row.protocol,
            row.condition,
            row.value,
            fmt_opt(sd),
            fmt_opt(min),
            fmt_opt(max),
            fmt_opt(normalized)
        );
        if !row.condition.starts_with("point_") {
            summary_rows.push(json!({
                "seed": row.seed,
                "agent": row.agent.name(),
                "protocol": row.protocol,
                "condition": row.condition,
                "mean": row.value,
                "sd": sd,
                "normalized": normalized,
            }));
        }
    }
    let mut artifacts = Artifacts::new();
    artifacts.insert("results.csv".into(), csv.into_bytes());
    artifacts.insert(
        "summary.json".into(),
        to_json(&with(
            &header,
            json!({ "results": summary_rows, "dp_worst_per_start": dp_worst }),
        )),
    );
    let returns: Vec<Value> = rows
        .iter()
        .filter_map(|row| {
            row.result.as_ref().map(|res| {
                json!({
                    "seed": row.seed,
                    "agent": row.agent.name(),
                    "protocol": row.protocol,
                    "condition": row.condition,
                    "returns": res.returns,
                })
            })
        })
        .collect();
    artifacts.insert(
        "report.json".into(),
        to_json(&with(&header, json!({ "config": r, "episodes": returns }))),
    );
    for (kind, agent) in &agents {
        artifacts.insert(format!("policy_{}.csv", kind.name()), agent.to_csv().into_bytes());
    }
    Ok(Outcome {
        artifacts,
        passed: true,
    })
}

fn random_field<R: Rng>(rng: &mut R, kind: ValueKind, rows: usize, cols: usize, scale: f64) -> ValueField {
    let data = (0..rows * cols).map(|_| rng.gen_range(-scale..=scale)).collect();
    ValueField::from_vec(kind, rows, cols, data)
}

/// Contraction of every operator on random instances.
fn contraction_sweep(r: &Resolved, seed: u64) -> Result<Value> {
    let mut checks = 0usize;
    let mut failures = 0usize;
    let mut worst_excess = f64::NEG_INFINITY;
    for i in 0..r.check_instances {
        let mut rng = stream(seed, &[10, i as u64]);
        let dims = rng.gen_range(1..=2);
        let spec = RandomSpec {
            n_states: rng.gen_range(2..=10),
            n_actions: rng.gen_range(1..=4),
            dims,
            segments_per_dim: rng.gen_range(1..=5),
            gamma: rng.gen_range(0.5..0.99),
            support: 3,
            kernel: [
                RandomKernel::Smooth,
                RandomKernel::Arbitrary,
                RandomKernel::Deterministic,
            ][i % 3],
        };
        let mdp = random_mdp(&mut rng, &spec)?;
        let ball = StepBall::new(rng.gen_range(0..=2));
        let (ns, np, na) = (mdp.n_states(), mdp.n_psi(), mdp.n_actions());
        let rows: Vec<Vec<f64>> = (0..ns * np)
            .map(|_| {
                let w: Vec<f64> = (0..na).map(|_| rng.gen_range(0.01..1.0)).collect();
                let t: f64 = w.iter().sum();
                w.into_iter().map(|x| x / t).collect()
            })
            .collect();
        let pi = PolicyTable::from_rows(
            crate::policy::TableKind::Agent(ObservationClass::Oracle),
            policy_shape(&mdp),
            na,
            rows,
        )?;
        let psi = rng.gen_range(0..np);
        let mut ops: Vec<Box<dyn BellmanOperator + '_>> = vec![
            Box::new(Standard { mdp: &mdp, psi }),
            Box::new(Rectangular { mdp: &mdp }),
            Box::new(TcPolicy::new(&mdp, &ball, &pi)),
        ];
        for mode in [BackupMode::PureActions, BackupMode::MixedExact] {
            ops.push(Box::new(Parametric { mdp: &mdp, mode }));
            ops.push(Box::new(TcOptimal::new(&mdp, &ball, mode)));
        }
        let scale = 1.0 / (1.0 - mdp.gamma());
        for _ in 0..r.check_pairs {
            for op in &ops {
                let z = op.zero();
                let v1 = random_field(&mut rng, z.kind(), z.rows(), z.cols(), scale);
                let v2 = random_field(&mut rng, z.kind(), z.rows(), z.cols(), scale);
                let lhs = op.apply(&v1)?.max_abs_diff(&op.apply(&v2)?);
                let rhs = op.gamma() * v1.max_abs_diff(&v2);
                checks += 1;
                worst_excess = worst_excess.max(lhs - rhs);
                if lhs > rhs + 1e-9 {
                    failures += 1;
                }
            }
        }
    }
    Ok(json!({
        "instances": r.check_instances,
        "checks": checks,
        "failures": failures,
        "max_excess": worst_excess,
    }))
}

/// One-step and robust-objective bounds on schedule-generated chain sequences.
fn drift_sweep(r: &Resolved, seed: u64) -> Result<Value> {
    let (chain, dims, segments) = match &r.env {
        EnvSpec::Chain {
            chain,
            dims,
            segments_per_dim,
        } => (chain.clone(), *dims, *segments_per_dim),
        _ => (ChainConfig::default(), 1, 5),
    };
    let family = ChainDriftFamily::new(chain, r.reward_weight)?;
    let grid = ParameterGrid::new(dims, segments)?;
    let ball = StepBall::from_radius(r.radius, &grid)?;
    let setup_probe = RobustSetup {
        family: family.clone(),
        grid,
        ball,
        psi_start: grid.nearest(&vec![0.5; dims]),
        horizon: 200,
    };
    let (lp_auto, lr_auto) = family.declared_bounds(r.schedule_radius.max(setup_probe.step_radius()));
    let lp = r.declared_lp.unwrap_or(lp_auto);
    let lr = r.declared_lr.unwrap_or(lr_auto);
    let gamma = family.chain.gamma;
    let n = family.chain.n_states;
    let start = vec![1.0 / n as f64; n];
    let nb = ball.size(dims) as u128;
    let max_steps = (1..=8u32)
        .take_while(|&t| nb.pow(t) <= TRAJECTORY_BUDGET)
        .last()
        .unwrap_or(1) as usize;
    let mut one_step_failures = 0usize;
    let mut bound_failures = 0usize;
    let mut occupancy_gap = 0.0f64;
    let mut worst_ratio = 0.0f64;
    let mut per_sequence = Vec::new();
    for j in 0..r.check_sequences {
        let mut rng = stream(seed, &[20, j as u64]);
        let kind = ScheduleKind::ALL[j % ScheduleKind::ALL.len()];
        let sched = Schedule::new(kind, dims, r.schedule_radius, r.check_sequence_length)?;
        let traj = sched.trajectory(&mut rng);
        let seq = MdpSequence::from_trajectory(&family, &traj, lp, lr)?;
        let actions: Vec<usize> = (0..n).map(|_| rng.gen_range(0..2)).collect();
        let pi = PolicyTable::agent_deterministic(
            ObservationClass::Vanilla,
            crate::policy::PolicyShape {
                n_states: n,
                n_actions: 2,
                n_psi: 1,
            },
            &actions,
        )?;
        for m in &seq.mdps {
            let v = policy_values(&pi, m)?;
            let exact: f64 = v.iter().zip(&start).map(|(a, b)| a * b).sum();
            occupancy_gap = occupancy_gap.max((return_via_occupancy(&pi, m, &start)? - exact).abs());
        }
        let t0 = rng.gen_range(0..max_steps);
        let t = rng.gen_range(1..=(max_steps - t0).max(1));
        let setup = RobustSetup {
            psi_start: rng.gen_range(0..grid.len()),
            ..setup_probe.clone()
        };
        let report = lipschitz_bound_check(&pi, &seq, &setup, &start, t0, t)?;
        one_step_failures += report.one_step.iter().filter(|g| !g.holds).count();
        for g in &report.one_step {
            if g.bound > 0.0 {
                worst_ratio = worst_ratio.max(g.gap / g.bound);
            }
        }
        if !report.holds {
            bound_failures += 1;
        }
        per_sequence.push(json!({
            "schedule": kind.name(),
            "t0": report.t0,
            "t": report.t,
            "lhs": report.lhs,
            "rhs": report.rhs,
            "margin": report.rhs - report.lhs,
            "max_one_step_gap": report.one_step.iter().map(|g| g.gap).fold(0.0, f64::max),
        }));
    }
    Ok(json!({
        "sequences": r.check_sequences,
        "declared_lp": lp,
        "declared_lr": lr,
        "lprime": lipschitz_constant(gamma, lp, lr),
        "one_step_bound": lipschitz_constant(gamma, lp, lr),
        "one_step_failures": one_step_failures,
        "worst_one_step_ratio": worst_ratio,
        "bound_failures": bound_failures,
        "occupancy_identity_max_gap": occupancy_gap,
        "truncation_error": setup_probe.truncation_error(),
        "per_sequence": per_sequence,
    }))
}

fn check(r: &Resolved, header: Value) -> Result<Outcome> {
    let seed = r.seeds[0];
    let contraction = contraction_sweep(r, seed)?;
    let drift = drift_sweep(r, seed)?;
    let spot = lipschitz_constant(0.9, 0.1, 0.01);
    let c_fail = contraction["failures"].as_u64().unwrap_or(0);
    let o_fail = drift["one_step_failures"].as_u64().unwrap_or(0);
    let b_fail = drift["bound_failures"].as_u64().unwrap_or(0);
    let occ = drift["occupancy_identity_max_gap"].as_f64().unwrap_or(f64::INFINITY);
    let occ_ok = occ <= 1e-8;
    let spot_ok = (spot - 9.1).abs() < 1e-12;
    let passed = c_fail == 0 && o_fail == 0 && b_fail == 0 && occ_ok && spot_ok;
    let mut csv = String::from("check,count,failures,max_violation\n");
    let _ = writeln!(
        csv,
        "contraction,{},{c_fail},{}",
        contraction["checks"], contraction["max_excess"]
    );
    let _ = writeln!(csv, "one_step_bound,{},{o_fail},", drift["sequences"]);
    let _ = writeln!(csv, "robust_objective_bound,{},{b_fail},", drift["sequences"]);
    let _ = writeln!(
        csv,
        "occupancy_identity,{},{},{occ}",
        drift["sequences"],
        u8::from(!occ_ok)
    );
    let _ = writeln!(
        csv,
        "lipschitz_spot_value,1,{},{}",
        u8::from(!spot_ok),
        (spot - 9.1).abs()
    );
    let mut artifacts = Artifacts::new();
    artifacts.insert("results.csv".into(), csv.into_bytes());
    artifacts.insert(
        "summary.json".into(),
        to_json(&with(
            &header,
            json!({
                "passed": passed,
                "contraction_failures": c_fail,
                "one_step_failures": o_fail,
                "bound_failures": b_fail,
                "occupancy_identity_max_gap": occ,
                "lprime_spot_value": spot,
            }),
        )),
    );
    artifacts.insert(
        "report.json".into(),
        to_json(&with(
            &header,
            json!({ "config": r, "contraction": contraction, "drift": drift, "passed": passed }),
        )),
    );
    Ok(Outcome { artifacts, passed })
}

/// Structured error payload written when a command fails.
pub fn error_json(err: &Error) -> Vec<u8> {
    to_json(&json!({ "kind": err.kind(), "message": err.to_string() }))
}
