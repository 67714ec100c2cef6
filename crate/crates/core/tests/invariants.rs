use dmof_core::dmof::{
    check_lower_bound, check_up1, eoec, oec, DivergenceSpec, ExplicitDmof, ExplicitModel, ScoredDmof, ScoredModel,
};
use dmof_core::games::{solve_zero_sum, PayoffMatrix};
use dmof_core::generate::policy_labels;
use dmof_core::lemmalab::{check_h2_com, check_refined_com, check_tv_com};
use dmof_core::sequential::{random_testbed, PolicyRef, SeqGen};
use dmof_core::stats::stream_rng;
use dmof_core::supervised::{random_sl, SlGen};
use dmof_core::{hellinger_sq, kl, tv, FiniteDist, Instance};
use proptest::prelude::*;

const EPS: f64 = 1e-7;

fn dist(n: usize) -> impl Strategy<Value = FiniteDist> {
    prop::collection::vec(0.0f64..1.0, n).prop_filter_map("positive mass", |w| {
        if w.iter().sum::<f64>() > 1e-6 {
            FiniteDist::new(w).ok()
        } else {
            None
        }
    })
}

fn pair_with_values() -> impl Strategy<Value = (FiniteDist, FiniteDist, Vec<f64>, f64)> {
    (1usize..6, 0.1f64..5.0).prop_flat_map(|(n, b)| {
        (dist(n), dist(n), prop::collection::vec(0.0..=b, n), Just(b))
    })
}

fn scored() -> impl Strategy<Value = ScoredDmof> {
    (1usize..7, 1usize..6).prop_flat_map(|(m, p)| {
        let models = prop::collection::vec(
            (prop::collection::vec(0.0f64..=1.0, p), -8.0f64..0.0)
                .prop_map(|(loss_row, rel_log_lik)| ScoredModel { loss_row, rel_log_lik }),
            m,
        );
        (models, 0..m).prop_map(move |(models, star)| ScoredDmof::new(models, policy_labels(p), 1.0, Some(star)).unwrap())
    })
}

fn explicit() -> impl Strategy<Value = ExplicitDmof> {
    (1usize..5, 1usize..4, 1usize..5).prop_flat_map(|(m, p, o)| {
        prop::collection::vec(
            (dist(o), prop::collection::vec(0.0f64..=1.0, p)).prop_map(|(obs_dist, loss_row)| ExplicitModel { obs_dist, loss_row }),
            m,
        )
        .prop_map(move |models| ExplicitDmof::new(o, models, policy_labels(p), 1.0, Some(0)).unwrap())
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn divergence_sandwich(n in 1usize..7, seed in any::<u64>()) {
        let rng = &mut stream_rng(seed, &[]);
        let p = dmof_core::generate::flat_dirichlet(n, rng).unwrap();
        let q = dmof_core::generate::flat_dirichlet(n, rng).unwrap();
        let (h, t, k) = (hellinger_sq(&p, &q).unwrap(), tv(&p, &q).unwrap(), kl(&p, &q).unwrap());
        prop_assert!(h <= 2.0 * t + 1e-12);
        prop_assert!(t * t <= h + 1e-12);
        prop_assert!(k >= h - 1e-12);
        prop_assert_eq!(hellinger_sq(&p, &p).unwrap(), 0.0);
        prop_assert_eq!(tv(&p, &p).unwrap(), 0.0);
        prop_assert_eq!(kl(&p, &p).unwrap(), 0.0);
    }

    #[test]
    fn edd_loss_is_below_eoec(problem in scored(), lambda in 0.0f64..3.0) {
        let r = check_up1(&problem, lambda, EPS).unwrap();
        prop_assert!(r.edd_loss <= r.eoec + 2.0 * EPS);
    }

    #[test]
    fn eoec_dominates_the_real_models_best_loss(problem in scored(), lambda in 0.0f64..3.0) {
        let star = problem.star.unwrap();
        let best = problem.models[star].loss_row.iter().cloned().fold(f64::INFINITY, f64::min);
        prop_assert!(eoec(&problem, lambda, EPS).unwrap().value >= best - EPS);
    }

    #[test]
    fn oec_is_monotone_and_below_the_plain_game(problem in explicit(), l1 in 0.0f64..2.0, dl in 0.0f64..2.0) {
        let refs = problem.model_laws();
        let loss = problem.loss_matrix().unwrap();
        let plain = solve_zero_sum(&loss, EPS).unwrap().value;
        for spec in DivergenceSpec::all() {
            let a = oec(&problem, &refs, spec, l1, EPS).unwrap().value;
            let b = oec(&problem, &refs, spec, l1 + dl, EPS).unwrap().value;
            prop_assert!(b <= a + 2.0 * EPS);
            prop_assert!(a <= plain + EPS);
        }
    }

    #[test]
    fn minimax_value_dominates_the_oec_lower_bound(problem in explicit()) {
        let refs = problem.model_laws();
        for spec in DivergenceSpec::all() {
            let r = check_lower_bound(&problem, &refs, spec, 1e-6).unwrap();
            prop_assert!(r.holds, "{:?}", r);
        }
    }

    #[test]
    fn change_of_measure_inequalities((p, q, g, b) in pair_with_values()) {
        prop_assert!(check_tv_com(&p, &q, &g, b).unwrap().holds);
        prop_assert!(check_h2_com(&p, &q, &g, b).unwrap().holds);
        for spec in DivergenceSpec::all() {
            prop_assert!(check_refined_com(spec, &p, &q, &g, b).unwrap().holds);
        }
    }

    #[test]
    fn scored_instances_round_trip(problem in scored()) {
        let inst = Instance::Scored(problem);
        let text = inst.to_toml().unwrap();
        prop_assert_eq!(Instance::from_toml(&text).unwrap(), inst);
    }

    #[test]
    fn game_value_shifts_with_constant(rows in 1usize..5, cols in 1usize..5, c in -3.0f64..3.0, seed in any::<u64>()) {
        use rand::Rng;
        let rng = &mut stream_rng(seed, &[]);
        let data: Vec<f64> = (0..rows * cols).map(|_| rng.random::<f64>()).collect();
        let g = PayoffMatrix::from_fn(rows, cols, |r, k| data[r * cols + k]).unwrap();
        let h = PayoffMatrix::from_fn(rows, cols, |r, k| data[r * cols + k] + c).unwrap();
        let (a, b) = (solve_zero_sum(&g, EPS).unwrap(), solve_zero_sum(&h, EPS).unwrap());
        prop_assert!((b.value - a.value - c).abs() <= 2.0 * EPS);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn sequential_occupancy_coverage_and_zero_regret(seed in any::<u64>(), states in 1usize..4, actions in 1usize..3) {
        let gen = SeqGen { horizon: 2, n_states: states, n_actions: actions, n_models: 3, mix: vec![] };
        let tb = random_testbed(&gen, &mut stream_rng(seed, &[])).unwrap();
        let msp = &tb.msp;
        for m in 0..msp.n_models() {
            let (_, policy) = msp.optimal_value(m).unwrap();
            for layer in msp.occupancy(m, &policy).unwrap() {
                prop_assert!((layer.weights().iter().sum::<f64>() - 1.0).abs() <= 1e-12);
            }
            let best = (0..msp.n_policies()).map(|pi| msp.rl_loss(m, pi).unwrap()).fold(f64::INFINITY, f64::min);
            prop_assert_eq!(best, 0.0);
        }
        let target = PolicyRef::Index(tb.optimal_policy);
        prop_assert_eq!(msp.coverage_coefficient(&target, &tb.behavior).unwrap(), 1.0);
        for pi in 0..msp.n_policies().min(8) {
            let c = msp.coverage_coefficient(&PolicyRef::Index(pi), &tb.behavior).unwrap();
            prop_assert!(c >= 1.0 - 1e-12);
        }
    }

    #[test]
    fn centered_supervised_losses(seed in any::<u64>()) {
        let inst = random_sl(&SlGen::default(), &mut stream_rng(seed, &[])).unwrap();
        for row in inst.loss_matrix(true).unwrap() {
            prop_assert!(row.iter().all(|&v| (0.0..=inst.bound).contains(&v)));
            prop_assert!(row.contains(&0.0));
        }
    }
}
