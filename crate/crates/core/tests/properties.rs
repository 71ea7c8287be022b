mod common;

use common::rng;
use proptest::prelude::*;
use rand::Rng;
use tcrmdp::envs::{random_mdp, RandomKernel, RandomSpec};
use tcrmdp::eval::{normalize_score, static_grid_eval, RolloutConfig};
use tcrmdp::grid::{apply_step, ParameterGrid, StepBall, StepTable};
use tcrmdp::mdp::ParametricMdp;
use tcrmdp::operators::{BackupMode, BellmanOperator, Parametric, Rectangular, Standard, TcOptimal, TcPolicy};
use tcrmdp::policy::{ObservationClass, PolicyTable};
use tcrmdp::schedules::{Schedule, ScheduleKind};
use tcrmdp::solvers::{policy_shape, value_iteration};
use tcrmdp::value::{ValueField, ValueKind};

fn instance(seed: u64) -> ParametricMdp {
    let mut r = rng(seed);
    let dims = r.gen_range(1..=2);
    let spec = RandomSpec {
        n_states: r.gen_range(2..=5),
        n_actions: r.gen_range(2..=3),
        dims,
        segments_per_dim: if dims == 1 {
            r.gen_range(2..=6)
        } else {
            r.gen_range(2..=3)
        },
        gamma: r.gen_range(0.5..0.95),
        support: r.gen_range(1..=3),
        kernel: [
            RandomKernel::Smooth,
            RandomKernel::Arbitrary,
            RandomKernel::Deterministic,
        ][r.gen_range(0..3)],
    };
    random_mdp(&mut r, &spec).unwrap()
}

fn field_like(seed: u64, proto: &ValueField, scale: f64) -> ValueField {
    let mut r = rng(seed);
    let data = (0..proto.data().len()).map(|_| r.gen_range(-scale..scale)).collect();
    ValueField::from_vec(proto.kind(), proto.rows(), proto.cols(), data)
}

fn operators<'a>(mdp: &'a ParametricMdp, k: usize, agent: &'a PolicyTable) -> Vec<Box<dyn BellmanOperator + 'a>> {
    let ball = StepBall::new(k);
    let mut ops: Vec<Box<dyn BellmanOperator + 'a>> = vec![
        Box::new(Standard {
            mdp,
            psi: mdp.n_psi() - 1,
        }),
        Box::new(Rectangular { mdp }),
        Box::new(TcPolicy::new(mdp, &ball, agent)),
    ];
    for mode in [BackupMode::PureActions, BackupMode::MixedExact] {
        ops.push(Box::new(Parametric { mdp, mode }));
        ops.push(Box::new(TcOptimal::new(mdp, &ball, mode)));
    }
    ops
}

fn mixed_agent(mdp: &ParametricMdp, seed: u64) -> PolicyTable {
    let shape = policy_shape(mdp);
    let mut r = rng(seed);
    let rows = (0..shape.n_states * shape.n_psi)
        .map(|_| {
            let w: Vec<f64> = (0..shape.n_actions).map(|_| r.gen_range(0.01..1.0)).collect();
            let t: f64 = w.iter().sum();
            w.into_iter().map(|x| x / t).collect()
        })
        .collect();
    PolicyTable::from_rows(
        tcrmdp::policy::TableKind::Agent(ObservationClass::Oracle),
        shape,
        shape.n_actions,
        rows,
    )
    .unwrap()
}

fn fixed_point(op: &dyn BellmanOperator) -> ValueField {
    value_iteration(op, None, 1e-11, 100_000).unwrap().0
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn operators_contract_are_monotone_and_shift(seed in any::<u64>(), k in 0usize..3, c in -3.0f64..3.0) {
        let mdp = instance(seed);
        let agent = mixed_agent(&mdp, seed ^ 1);
        for (i, op) in operators(&mdp, k, &agent).iter().enumerate() {
            let zero = op.zero();
            let v = field_like(seed.wrapping_add(i as u64), &zero, 10.0);
            let w = field_like(seed.wrapping_add(100 + i as u64), &zero, 10.0);
            let tv = op.apply(&v).unwrap();
            let tw = op.apply(&w).unwrap();
            let gap = v.max_abs_diff(&w);
            prop_assert!(tv.max_abs_diff(&tw) <= op.gamma() * gap + 1e-9);

            let hi = v.map(|x| x + 0.5);
            let thi = op.apply(&hi).unwrap();
            for (a, b) in tv.data().iter().zip(thi.data()) {
                prop_assert!(*a <= b + 1e-9);
            }

            let shifted = op.apply(&v.map(|x| x + c)).unwrap();
            for (a, b) in tv.data().iter().zip(shifted.data()) {
                prop_assert!((b - a - op.gamma() * c).abs() <= 1e-8);
            }
        }
    }

    #[test]
    fn robust_values_are_ordered(seed in any::<u64>(), k in 0usize..3) {
        let mdp = instance(seed);
        let rect = fixed_point(&Rectangular { mdp: &mdp });
        let param = fixed_point(&Parametric { mdp: &mdp, mode: BackupMode::MixedExact });
        let param_pure = fixed_point(&Parametric { mdp: &mdp, mode: BackupMode::PureActions });
        let tc = fixed_point(&TcOptimal::new(&mdp, &StepBall::new(k), BackupMode::MixedExact));
        let tc_pure = fixed_point(&TcOptimal::new(&mdp, &StepBall::new(k), BackupMode::PureActions));
        for s in 0..mdp.n_states() {
            prop_assert!(rect.get(s, 0) <= param.get(s, 0) + 1e-6);
            prop_assert!(param_pure.get(s, 0) <= param.get(s, 0) + 1e-6);
            for psi in 0..mdp.n_psi() {
                prop_assert!(param.get(s, 0) <= tc.get(s, psi) + 1e-6);
                prop_assert!(tc_pure.get(s, psi) <= tc.get(s, psi) + 1e-6);
            }
        }
    }

    #[test]
    fn ball_size_orders_tc_values(seed in any::<u64>()) {
        let mdp = instance(seed);
        let g = mdp.grid().segments_per_dim();
        let mut prev: Option<ValueField> = None;
        for k in 0..g {
            let v = fixed_point(&TcOptimal::new(&mdp, &StepBall::new(k), BackupMode::MixedExact));
            if let Some(p) = &prev {
                for (a, b) in v.data().iter().zip(p.data()) {
                    prop_assert!(*a <= b + 1e-6);
                }
            }
            prev = Some(v);
        }
        // one step covers the whole grid: no memory of ψ remains
        let full = prev.unwrap();
        let param = fixed_point(&Parametric { mdp: &mdp, mode: BackupMode::MixedExact });
        for s in 0..mdp.n_states() {
            for psi in 0..mdp.n_psi() {
                prop_assert!((full.get(s, psi) - param.get(s, 0)).abs() <= 1e-6);
            }
        }
    }

    #[test]
    fn frozen_ball_recovers_nominal_values(seed in any::<u64>()) {
        let mdp = instance(seed);
        for mode in [BackupMode::PureActions, BackupMode::MixedExact] {
            let tc = fixed_point(&TcOptimal::new(&mdp, &StepBall::new(0), mode));
            for psi in 0..mdp.n_psi() {
                let v = fixed_point(&Standard { mdp: &mdp, psi });
                for s in 0..mdp.n_states() {
                    prop_assert!((tc.get(s, psi) - v.get(s, 0)).abs() <= 1e-6);
                }
            }
        }
    }

    #[test]
    fn steps_stay_on_grid(dims in 1usize..4, g in 1usize..6, k in 0usize..4, seed in any::<u64>()) {
        let grid = ParameterGrid::new(dims, g).unwrap();
        let ball = StepBall::new(k);
        let table = StepTable::new(&grid, &ball);
        let mut r = rng(seed);
        let psi = r.gen_range(0..grid.len());
        let coords = grid.coords(psi);
        let zero = vec![0i64; dims];
        prop_assert_eq!(apply_step(&coords, &zero, &ball, &grid).unwrap(), coords.clone());
        for (i, delta) in ball.displacements(dims).iter().enumerate() {
            let once = apply_step(&coords, delta, &ball, &grid).unwrap();
            prop_assert!(once.iter().all(|&c| c < g));
            prop_assert_eq!(grid.index_of(&once).unwrap(), table.target(psi, i));
            // a saturated axis stays saturated under the same push
            let twice = apply_step(&once, delta, &ball, &grid).unwrap();
            for ((a, b), d) in once.iter().zip(&twice).zip(delta) {
                if (*a == 0 && *d <= 0) || (*a == g - 1 && *d >= 0) {
                    prop_assert_eq!(a, b);
                }
            }
        }
    }

    #[test]
    fn schedules_respect_radius(kind_ix in 0usize..5, dims in 1usize..4, radius in 0.001f64..0.5, seed in any::<u64>()) {
        let kind = ScheduleKind::ALL[kind_ix];
        let sched = Schedule::new(kind, dims, radius, 200).unwrap();
        let traj = sched.trajectory(&mut rng(seed));
        prop_assert_eq!(traj.len(), 201);
        for w in traj.windows(2) {
            for (a, b) in w[0].iter().zip(&w[1]) {
                prop_assert!((0.0..=1.0).contains(b));
                prop_assert!((a - b).abs() <= radius + 1e-12);
            }
        }
    }

    #[test]
    fn normalization_is_affine(low in -100.0f64..100.0, span in 0.01f64..100.0, x in -2.0f64..2.0) {
        let target = low + span;
        prop_assert!(normalize_score(low, low, target).unwrap().abs() <= 1e-12);
        prop_assert!((normalize_score(target, low, target).unwrap() - 1.0).abs() <= 1e-9);
        let v = low + x * span;
        prop_assert!((normalize_score(v, low, target).unwrap() - x).abs() <= 1e-9);
    }

    #[test]
    fn static_worst_never_exceeds_average(seed in any::<u64>()) {
        let mdp = instance(seed);
        let agent = PolicyTable::uniform_agent(ObservationClass::Vanilla, policy_shape(&mdp));
        let cfg = RolloutConfig { horizon: 20, episodes: 3, seed, discounted: true, start_state: None };
        let res = static_grid_eval(&agent, &mdp, 3, &cfg).unwrap();
        prop_assert!(res.worst <= res.average + 1e-12);
    }

    #[test]
    fn model_json_roundtrips(seed in any::<u64>()) {
        let mdp = instance(seed);
        let text = mdp.to_json();
        let back = ParametricMdp::from_json_str(&text).unwrap();
        prop_assert_eq!(back.to_json(), text);
        prop_assert_eq!(back.n_psi(), mdp.n_psi());
        let v = ValueField::filled(ValueKind::StateOnly, mdp.n_states(), 1, 1.0);
        let a = Rectangular { mdp: &mdp }.apply(&v).unwrap();
        let b = Rectangular { mdp: &back }.apply(&v).unwrap();
        prop_assert_eq!(a.data(), b.data());
    }
}
