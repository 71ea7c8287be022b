mod common;

use common::*;
use rand::Rng;
use tcrmdp::envs::{build_chain, build_pendulum, ChainConfig, PendulumConfig, RandomKernel, LEFT, RIGHT};
use tcrmdp::eval::{rollout, schedule_sweep, static_grid_eval, Disturbance, RolloutConfig};
use tcrmdp::grid::{ParameterGrid, StepBall, StepTable};
use tcrmdp::mdp::ParametricMdp;
use tcrmdp::operators::{
    param_robust_backup, rect_robust_backup, standard_backup, tc_backup_optimal, tc_backup_policy, BackupMode,
    Standard, TcOptimal, TcPolicy,
};
use tcrmdp::policy::{ObservationClass, PolicyShape, PolicyTable};
use tcrmdp::rng::stream;
use tcrmdp::schedules::{Schedule, ScheduleKind};
use tcrmdp::solvers::{
    adversary_best_response, alternating_train, exhaustive_adversary_oracle, extract_oracle_policy, policy_shape,
    value_iteration, TrainConfig,
};
use tcrmdp::theory::{
    drift_measure, occupancy, return_via_occupancy, robust_objective, ChainDriftFamily, MdpSequence, RobustSetup,
    StationaryMdp,
};
use tcrmdp::value::{ValueField, ValueKind};

fn chain(n: usize, low: f64, high: f64, g: usize) -> ParametricMdp {
    let cfg = ChainConfig {
        n_states: n,
        goal: n - 1,
        gamma: 0.9,
        success_low: low,
        success_high: high,
    };
    build_chain(&cfg, ParameterGrid::new(1, g).unwrap()).unwrap()
}

fn random_field(seed: u64, kind: ValueKind, rows: usize, cols: usize) -> ValueField {
    let mut r = rng(seed);
    let data = (0..rows * cols).map(|_| r.gen_range(0.0..5.0)).collect();
    ValueField::from_vec(kind, rows, cols, data)
}

fn as_rows(v: &ValueField) -> Vec<Vec<f64>> {
    (0..v.rows()).map(|r| v.row(r).to_vec()).collect()
}

#[test]
fn pendulum_rows_are_distributions_everywhere() {
    let cfg = PendulumConfig {
        angle_bins: 9,
        velocity_bins: 7,
        ..PendulumConfig::default()
    };
    let mdp = build_pendulum(&cfg, ParameterGrid::new(2, 4).unwrap()).unwrap();
    assert!(mdp.validate().is_ok());
    for psi in 0..mdp.n_psi() {
        for s in 0..mdp.n_states() {
            for a in 0..mdp.n_actions() {
                let row = mdp.kernel_eval(s, a, psi).unwrap();
                let sum: f64 = row.iter().sum();
                assert!((sum - 1.0).abs() <= 1e-12);
                assert!(row.iter().filter(|&&p| p > 0.0).count() <= 4);
            }
        }
    }
}

#[test]
fn three_state_chain_optimal_value_by_policy_enumeration() {
    let cfg = ChainConfig {
        n_states: 3,
        goal: 2,
        gamma: 0.9,
        success_low: 1.0,
        success_high: 1.0,
    };
    let mdp = build_chain(&cfg, ParameterGrid::new(1, 2).unwrap()).unwrap();
    let mut best = [f64::NEG_INFINITY; 3];
    for code in 0..8usize {
        let actions: Vec<usize> = (0..3).map(|s| (code >> s) & 1).collect();
        let v = finite_horizon_value(&mdp, 0, &actions, 400, 0.9);
        for s in 0..3 {
            best[s] = best[s].max(v[s]);
        }
    }
    let (v, _) = value_iteration(&Standard { mdp: &mdp, psi: 0 }, None, 1e-12, 10_000).unwrap();
    for s in 0..3 {
        assert!((v.get(s, 0) - best[s]).abs() < 1e-9);
    }
    assert!((v.get(0, 0) - 0.81 / 0.1).abs() < 1e-9);
}

#[test]
fn nominal_fixed_point_is_stationary() {
    let mdp = tiny_instance(1, 3, RandomKernel::Arbitrary);
    let v = nominal_values(&mdp, 2, 1e-13);
    let next = standard_backup(&ValueField::from_states(v.clone()), &mdp, 2).unwrap();
    assert!(max_diff(next.data(), &v) <= 1e-9);
}

#[test]
fn rect_and_param_backups_match_enumeration() {
    for seed in 0..5 {
        let mdp = tiny_instance(100 + seed, 2, RandomKernel::Arbitrary);
        let p = dense(&mdp);
        let v = random_field(seed, ValueKind::StateOnly, mdp.n_states(), 1);
        let rect = rect_robust_backup(&v, &mdp).unwrap();
        let pure = param_robust_backup(&v, &mdp, BackupMode::PureActions).unwrap();
        let mixed = param_robust_backup(&v, &mdp, BackupMode::MixedExact).unwrap();
        for s in 0..mdp.n_states() {
            let m = state_payoff(&mdp, &p, v.data(), s);
            assert!((rect.get(s, 0) - game_value(&m, false)).abs() < 1e-12);
            assert!((pure.get(s, 0) - game_value(&m, false)).abs() < 1e-12);
            assert!((mixed.get(s, 0) - game_value(&m, true)).abs() < 1e-9);
        }
    }
}

#[test]
fn chain_parametric_game_matches_support_enumeration() {
    let mdp = chain(4, 0.0, 1.0, 3);
    let p = dense(&mdp);
    let v = ValueField::from_states(vec![0.0, 3.0, 1.0, 10.0]);
    let out = param_robust_backup(&v, &mdp, BackupMode::MixedExact).unwrap();
    for s in 0..4 {
        let m = state_payoff(&mdp, &p, v.data(), s);
        assert!((out.get(s, 0) - game_value(&m, true)).abs() < 1e-9, "state {s}");
    }
}

#[test]
fn tc_backups_match_enumeration() {
    for seed in 0..5 {
        let mdp = tiny_instance(200 + seed, 2, RandomKernel::Smooth);
        let steps = StepTable::new(mdp.grid(), &StepBall::new(1));
        let v = random_field(seed, ValueKind::Augmented, mdp.n_states(), mdp.n_psi());
        let init = as_rows(&v);
        for (mode, mixed) in [(BackupMode::PureActions, false), (BackupMode::MixedExact, true)] {
            let out = tc_backup_optimal(&v, &mdp, &steps, mode).unwrap();
            // one application of the reference recursion from `v`
            let p = dense(&mdp);
            for s in 0..mdp.n_states() {
                for psi in 0..mdp.n_psi() {
                    let nb = neighbours(1, mdp.grid().segments_per_dim(), 1, psi);
                    let m: Vec<Vec<f64>> = (0..2)
                        .map(|a| {
                            nb.iter()
                                .map(|&q| {
                                    let col: Vec<f64> = init.iter().map(|r| r[q]).collect();
                                    mdp.reward(s, a)
                                        + mdp.gamma() * p[q][s][a].iter().zip(&col).map(|(x, y)| x * y).sum::<f64>()
                                })
                                .collect()
                        })
                        .collect();
                    assert!((out.get(s, psi) - game_value(&m, mixed)).abs() < 1e-9);
                }
            }
        }
        // policy backup: explicit minimum over every displacement of the expected payoff
        let pi = PolicyTable::from_rows(
            tcrmdp::policy::TableKind::Agent(ObservationClass::Oracle),
            policy_shape(&mdp),
            2,
            (0..mdp.n_states() * mdp.n_psi())
                .map(|i| vec![0.25 + 0.1 * (i % 3) as f64, 0.75 - 0.1 * (i % 3) as f64])
                .collect(),
        )
        .unwrap();
        let out = tc_backup_policy(&v, &pi, &mdp, &steps).unwrap();
        let p = dense(&mdp);
        for s in 0..mdp.n_states() {
            for psi in 0..mdp.n_psi() {
                let probs = pi.row(s * mdp.n_psi() + psi);
                let want = neighbours(1, mdp.grid().segments_per_dim(), 1, psi)
                    .into_iter()
                    .map(|q| {
                        (0..2)
                            .map(|a| {
                                let col: Vec<f64> = init.iter().map(|r| r[q]).collect();
                                probs[a]
                                    * (mdp.reward(s, a)
                                        + mdp.gamma() * p[q][s][a].iter().zip(&col).map(|(x, y)| x * y).sum::<f64>())
                            })
                            .sum::<f64>()
                    })
                    .fold(f64::INFINITY, f64::min);
                assert!((out.get(s, psi) - want).abs() < 1e-12);
            }
        }
    }
}

#[test]
fn extracted_oracle_policy_beats_every_deterministic_policy() {
    let mut r = rng(5);
    let spec = tcrmdp::envs::RandomSpec {
        n_states: 2,
        n_actions: 2,
        dims: 1,
        segments_per_dim: 3,
        gamma: 0.8,
        support: 2,
        kernel: RandomKernel::Arbitrary,
    };
    let mdp = tcrmdp::envs::random_mdp(&mut r, &spec).unwrap();
    let ball = StepBall::new(1);
    let op = TcOptimal::new(&mdp, &ball, BackupMode::MixedExact);
    let (v, _) = value_iteration(&op, None, 1e-11, 100_000).unwrap();
    let (agent, _) = extract_oracle_policy(&v, &mdp, &op.steps, BackupMode::MixedExact).unwrap();
    let (va, _) = value_iteration(&TcPolicy::new(&mdp, &ball, &agent), None, 1e-11, 100_000).unwrap();
    let shape = policy_shape(&mdp);
    for code in 0..64usize {
        let actions: Vec<usize> = (0..6).map(|i| (code >> i) & 1).collect();
        let pi = PolicyTable::agent_deterministic(ObservationClass::Oracle, shape, &actions).unwrap();
        let (vp, _) = value_iteration(&TcPolicy::new(&mdp, &ball, &pi), None, 1e-11, 100_000).unwrap();
        for (a, b) in va.data().iter().zip(vp.data()) {
            assert!(*a >= b - 1e-8, "policy {code}: {a} < {b}");
        }
    }
}

#[test]
fn best_response_matches_exhaustive_enumeration() {
    let h = 8;
    let mut cases: Vec<ParametricMdp> = vec![chain(5, 0.0, 1.0, 2)];
    for seed in 0..3 {
        let mut r = rng(300 + seed);
        let spec = tcrmdp::envs::RandomSpec {
            n_states: 4,
            n_actions: 2,
            dims: 1,
            segments_per_dim: 4,
            gamma: 0.7,
            support: 1,
            kernel: RandomKernel::Deterministic,
        };
        cases.push(tcrmdp::envs::random_mdp(&mut r, &spec).unwrap());
    }
    for (i, mdp) in cases.iter().enumerate() {
        let steps = StepTable::new(mdp.grid(), &StepBall::new(1));
        let shape = policy_shape(mdp);
        let bound = mdp.gamma().powi(h as i32) / (1.0 - mdp.gamma());
        let mut r = rng(400 + i as u64);
        for class in [
            ObservationClass::Vanilla,
            ObservationClass::Oracle,
            ObservationClass::Stacked,
        ] {
            let n_obs = tcrmdp::policy::JointSpace::new(class, shape).n_obs();
            let actions: Vec<usize> = (0..n_obs).map(|_| r.gen_range(0..2)).collect();
            let agent = PolicyTable::agent_deterministic(class, shape, &actions).unwrap();
            let br = adversary_best_response(&agent, mdp, &steps, 1e-12, 100_000).unwrap();
            let brute = exhaustive_adversary_oracle(&agent, mdp, &steps, h).unwrap();
            let space = agent.joint_space();
            for s in 0..mdp.n_states() {
                for psi in 0..mdp.n_psi() {
                    let w = br.worst.get(space.start_row(s), psi);
                    assert!(
                        (w - brute.get(s, psi)).abs() <= bound + 1e-9,
                        "{class:?} s={s} psi={psi}"
                    );
                }
            }
        }
    }
}

#[test]
fn oracle_policy_is_the_hardest_to_exploit() {
    let mdp = chain(6, 0.0, 1.0, 5);
    let steps = StepTable::new(mdp.grid(), &StepBall::new(1));
    let op = TcOptimal {
        mdp: &mdp,
        steps: steps.clone(),
        mode: BackupMode::PureActions,
    };
    let (v, _) = value_iteration(&op, None, 1e-10, 100_000).unwrap();
    let (oracle, _) = extract_oracle_policy(&v, &mdp, &steps, BackupMode::PureActions).unwrap();
    let best = adversary_best_response(&oracle, &mdp, &steps, 1e-10, 100_000).unwrap();
    let best_starts = best.per_start(&oracle.joint_space());
    let shape = policy_shape(&mdp);
    let mut others = vec![
        PolicyTable::uniform_agent(ObservationClass::Vanilla, shape),
        PolicyTable::uniform_agent(ObservationClass::Stacked, shape),
        PolicyTable::agent_deterministic(ObservationClass::Vanilla, shape, &[RIGHT; 6]).unwrap(),
        PolicyTable::agent_deterministic(ObservationClass::Vanilla, shape, &[LEFT; 6]).unwrap(),
    ];
    let mut r = rng(9);
    for _ in 0..5 {
        let acts: Vec<usize> = (0..30).map(|_| r.gen_range(0..2)).collect();
        others.push(PolicyTable::agent_deterministic(ObservationClass::Oracle, shape, &acts).unwrap());
    }
    for other in &others {
        let br = adversary_best_response(other, &mdp, &steps, 1e-10, 100_000).unwrap();
        for (o, b) in br.per_start(&other.joint_space()).iter().zip(&best_starts) {
            assert!(*o <= b + 1e-8);
        }
    }
    // the fully observing class trained by alternation lands on the same value
    let bound = 2.0 * 1e-10 / (1.0 - mdp.gamma());
    let trained = alternating_train(
        &mdp,
        &steps,
        &TrainConfig {
            class: ObservationClass::Oracle,
            rounds: 1,
            epsilon: 1e-10,
            max_iters: 100_000,
            init: None,
        },
    )
    .unwrap();
    for (t, b) in trained.per_start.iter().zip(&best_starts) {
        assert!((t - b).abs() <= bound + 1e-8, "{t} vs {b}");
    }
}

fn four_state_mdp(seed: u64) -> StationaryMdp {
    let mut r = rng(seed);
    let n = 4;
    let mut kernel = Vec::new();
    for _ in 0..n * 2 {
        let w: Vec<f64> = (0..n).map(|_| r.gen_range(0.0..1.0)).collect();
        let t: f64 = w.iter().sum();
        kernel.extend(w.iter().map(|x| x / t));
    }
    let reward = (0..n * 2).map(|_| r.gen_range(0.0..1.0)).collect();
    StationaryMdp::new(n, 2, 0.9, kernel, reward).unwrap()
}

fn mixed_policy(n: usize) -> PolicyTable {
    let rows = (0..n)
        .map(|s| vec![0.2 + 0.15 * s as f64, 0.8 - 0.15 * s as f64])
        .collect();
    PolicyTable::from_rows(
        tcrmdp::policy::TableKind::Agent(ObservationClass::Vanilla),
        PolicyShape {
            n_states: n,
            n_actions: 2,
            n_psi: 1,
        },
        2,
        rows,
    )
    .unwrap()
}

#[test]
fn occupancy_matches_power_series() {
    let m = four_state_mdp(1);
    let pi = mixed_policy(4);
    let start = [0.1, 0.2, 0.3, 0.4];
    let d = occupancy(&pi, &m, &start).unwrap();
    // (1−γ) Σ_k γ^k ρ P_π^k, 500 terms
    let mut dist = start.to_vec();
    let mut series = vec![0.0; 4];
    let mut weight = 1.0 - m.gamma;
    for _ in 0..500 {
        for s in 0..4 {
            series[s] += weight * dist[s];
        }
        let mut next = vec![0.0; 4];
        for s in 0..4 {
            for a in 0..2 {
                let pa = pi.row(s)[a];
                for t in 0..4 {
                    next[t] += dist[s] * pa * m.row(s, a)[t];
                }
            }
        }
        dist = next;
        weight *= m.gamma;
    }
    assert!(max_diff(&d, &series) <= 1e-8);
    assert!((d.iter().sum::<f64>() - 1.0).abs() <= 1e-9);
}

#[test]
fn occupancy_return_matches_iterative_evaluation() {
    for seed in 0..5 {
        let m = four_state_mdp(10 + seed);
        let pi = mixed_policy(4);
        let start = [0.25; 4];
        let mut v = [0.0; 4];
        for _ in 0..2000 {
            let mut next = [0.0; 4];
            for s in 0..4 {
                for a in 0..2 {
                    let ev: f64 = (0..4).map(|t| m.row(s, a)[t] * v[t]).sum();
                    next[s] += pi.row(s)[a] * (m.reward(s, a) + m.gamma * ev);
                }
            }
            v = next;
        }
        let exact: f64 = v.iter().map(|x| x * 0.25).sum();
        assert!((return_via_occupancy(&pi, &m, &start).unwrap() - exact).abs() <= 1e-8);
    }
}

fn recursive_robust(grid: &ParameterGrid, k: usize, psi: usize, t: usize, f: &dyn Fn(usize) -> f64) -> f64 {
    if t == 0 {
        return f(psi);
    }
    neighbours(grid.dims(), grid.segments_per_dim(), k, psi)
        .into_iter()
        .map(|q| recursive_robust(grid, k, q, t - 1, f))
        .fold(f64::INFINITY, f64::min)
}

#[test]
fn robust_objective_matches_recursive_enumeration() {
    let family = ChainDriftFamily::new(ChainConfig::default(), 0.2).unwrap();
    let grid = ParameterGrid::new(1, 7).unwrap();
    let pi = mixed_policy(6);
    let start = vec![1.0 / 6.0; 6];
    let h = 80;
    let value_at = |psi: usize| {
        let m = family.mdp_at(&grid.point(psi)).unwrap();
        // truncated return by direct forward propagation of the state distribution
        let mut dist = start.clone();
        let mut total = 0.0;
        let mut w = 1.0;
        for _ in 0..h {
            let mut next = vec![0.0; 6];
            for s in 0..6 {
                for a in 0..2 {
                    let pa = pi.row(s)[a];
                    total += w * dist[s] * pa * m.reward(s, a);
                    for t in 0..6 {
                        next[t] += dist[s] * pa * m.row(s, a)[t];
                    }
                }
            }
            dist = next;
            w *= m.gamma;
        }
        total
    };
    for psi_start in [0, 3, 6] {
        let setup = RobustSetup {
            family: family.clone(),
            grid,
            ball: StepBall::new(1),
            psi_start,
            horizon: h,
        };
        let got = robust_objective(&pi, &setup, &start, 3).unwrap();
        let want = recursive_robust(&grid, 1, psi_start, 3, &value_at);
        assert!((got - want).abs() <= 1e-10, "{got} vs {want}");
    }
}

#[test]
fn schedule_generated_sequences_respect_declared_drift() {
    let family = ChainDriftFamily::new(ChainConfig::default(), 0.1).unwrap();
    let (lp, lr) = family.declared_bounds(0.1);
    for (i, kind) in ScheduleKind::ALL.into_iter().enumerate() {
        let sched = Schedule::new(kind, 1, 0.1, 60).unwrap();
        let traj = sched.trajectory(&mut stream(i as u64, &[]));
        let seq = MdpSequence::from_trajectory(&family, &traj, lp, lr).unwrap();
        for w in seq.mdps.windows(2) {
            let (dk, dr) = drift_measure(&w[0], &w[1]).unwrap();
            assert!(dk <= lp + 1e-12 && dr <= lr + 1e-12);
        }
    }
}

#[test]
fn initial_points_are_uniform() {
    let sched = Schedule::new(ScheduleKind::Cosine, 3, 0.1, 10).unwrap();
    let mut r = stream(17, &[]);
    let mut sums = [0.0; 3];
    let n = 10_000;
    for _ in 0..n {
        let st = sched.init(&mut r);
        for (acc, x) in sums.iter_mut().zip(&st.psi0) {
            *acc += x;
        }
    }
    for s in sums {
        assert!((s / n as f64 - 0.5).abs() <= 0.02);
    }
}

#[test]
fn monte_carlo_matches_finite_horizon_evaluation() {
    let mdp = chain(6, 0.0, 1.0, 5);
    let actions = [RIGHT; 6];
    let agent = PolicyTable::agent_deterministic(ObservationClass::Vanilla, policy_shape(&mdp), &actions).unwrap();
    let horizon = 20;
    let cfg = RolloutConfig {
        horizon,
        episodes: 10_000,
        seed: 3,
        discounted: false,
        start_state: Some(0),
    };
    let point = mdp.grid().point(2);
    let returns = rollout(&mdp, &agent, Disturbance::Frozen(&point), &cfg, &[1]).unwrap();
    let res = tcrmdp::eval::EvalResult::from_returns("x", returns);
    let exact = finite_horizon_value(&mdp, 2, &actions, horizon, 1.0)[0];
    assert!(
        (res.mean - exact).abs() <= 3.0 * res.standard_error(),
        "{} vs {exact}",
        res.mean
    );
}

#[test]
fn static_point_matches_nominal_value() {
    let mdp = chain(6, 0.0, 1.0, 5);
    let agent = PolicyTable::agent_deterministic(ObservationClass::Vanilla, policy_shape(&mdp), &[RIGHT; 6]).unwrap();
    let cfg = RolloutConfig {
        horizon: 30,
        episodes: 2000,
        seed: 4,
        discounted: false,
        start_state: Some(1),
    };
    // 5 evaluation points per axis coincide with the solver grid
    let res = static_grid_eval(&agent, &mdp, 5, &cfg).unwrap();
    for (i, p) in res.points.iter().enumerate() {
        let exact = finite_horizon_value(&mdp, i, &[RIGHT; 6], 30, 1.0)[1];
        let slack = 3.0 * p.result.standard_error() + 1e-12;
        assert!((p.result.mean - exact).abs() <= slack, "point {i}");
    }
    assert!(res.worst <= res.average);
}

#[test]
fn worst_case_monte_carlo_matches_dp() {
    let mdp = chain(6, 0.0, 1.0, 5);
    let steps = StepTable::new(mdp.grid(), &StepBall::new(1));
    let op = TcOptimal {
        mdp: &mdp,
        steps: steps.clone(),
        mode: BackupMode::PureActions,
    };
    let (v, _) = value_iteration(&op, None, 1e-10, 100_000).unwrap();
    let (oracle, _) = extract_oracle_policy(&v, &mdp, &steps, BackupMode::PureActions).unwrap();
    let cfg = RolloutConfig {
        horizon: 250,
        episodes: 4000,
        seed: 8,
        discounted: true,
        start_state: None,
    };
    let (res, br) = tcrmdp::eval::tc_worst_case_eval(&oracle, &mdp, 0.25, &cfg, 1e-10, 100_000).unwrap();
    let space = oracle.joint_space();
    let mut dp = 0.0;
    for s in 0..6 {
        for psi in 0..5 {
            dp += br.worst.get(space.start_row(s), psi) / 30.0;
        }
    }
    let slack = 3.0 * res.standard_error() + 0.9f64.powi(250) / 0.1;
    assert!((res.mean - dp).abs() <= slack, "{} vs {dp}", res.mean);
}

#[test]
fn robust_agent_not_worse_than_nominal_under_random_walk() {
    let mdp = chain(6, 0.2, 1.0, 5);
    let steps = StepTable::new(mdp.grid(), &StepBall::new(1));
    let op = TcOptimal {
        mdp: &mdp,
        steps: steps.clone(),
        mode: BackupMode::PureActions,
    };
    let (v, _) = value_iteration(&op, None, 1e-10, 100_000).unwrap();
    let (oracle, _) = extract_oracle_policy(&v, &mdp, &steps, BackupMode::PureActions).unwrap();
    let (vn, _) = value_iteration(&Standard { mdp: &mdp, psi: 2 }, None, 1e-10, 100_000).unwrap();
    let nominal = tcrmdp::solvers::greedy_policy(&vn, &mdp, 2).unwrap();
    let cfg = RolloutConfig {
        horizon: 100,
        episodes: 200,
        seed: 1,
        discounted: false,
        start_state: Some(0),
    };
    let tc = schedule_sweep(&oracle, &mdp, &[ScheduleKind::RandomWalk], 0.1, &cfg).unwrap();
    let nom = schedule_sweep(&nominal, &mdp, &[ScheduleKind::RandomWalk], 0.1, &cfg).unwrap();
    let slack = 3.0 * (tc[0].1.standard_error().powi(2) + nom[0].1.standard_error().powi(2)).sqrt();
    assert!(tc[0].1.mean >= nom[0].1.mean - slack);
}
