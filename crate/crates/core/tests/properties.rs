use proptest::prelude::*;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use lqtd::agents::{greedy_control_v, td_error_v, Schedule, ValueEstimate};
use lqtd::matrix::{
    ordering_contraction, psd_order_geq, spd_solve, spectral_norm, spectral_radius, woodbury_residual, Mat, SymMat,
    Vector,
};
use lqtd::model::{random_stabilizable, step, LqProblem, Policy};
use lqtd::oracle::{policy_value, riccati_map, solve_default};
use lqtd::rng::{indexed_rng, standard_normal};

fn uniform(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Mat {
    Mat::from_fn(r, c, |_, _| rng.random_range(-1.0..=1.0))
}

fn spd(rng: &mut ChaCha8Rng, n: usize, floor: f64) -> SymMat {
    let a = uniform(rng, n, n);
    SymMat::gram(&a).add(&SymMat::scaled_identity(n, floor))
}

fn problem(seed: u64, n: usize, m: usize) -> LqProblem {
    random_stabilizable(&mut indexed_rng(seed, 0), n, m).problem
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn woodbury_forms_agree(seed in any::<u64>(), n in 1usize..=5, m in 1usize..=5) {
        let mut rng = indexed_rng(seed, 0);
        let r = spd(&mut rng, m, 0.1);
        let g = uniform(&mut rng, n, m);
        let pi = spd(&mut rng, n, 0.1);
        prop_assert!(woodbury_residual(&r, &g, &pi).unwrap() <= 1e-9);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn ordering_contraction_matches_explicit_solve(seed in any::<u64>(), n in 1usize..=5) {
        let mut rng = indexed_rng(seed, 1);
        let b = spd(&mut rng, n, 0.0);
        let a = b.add(&spd(&mut rng, n, 0.01));
        let via_cholesky = ordering_contraction(&a, &b).unwrap();
        let via_solve = spectral_radius(&spd_solve(&a, b.as_mat()).unwrap()).unwrap();
        prop_assert!((via_cholesky - via_solve).abs() <= 1e-8 * (1.0 + via_solve));
        prop_assert!(via_cholesky < 1.0 + 1e-10);
    }

    #[test]
    fn spectral_norm_is_submultiplicative(seed in any::<u64>(), n in 1usize..=5) {
        let mut rng = indexed_rng(seed, 2);
        let a = uniform(&mut rng, n, n);
        let b = uniform(&mut rng, n, n);
        let ab = spectral_norm(&(&a * &b)).unwrap();
        prop_assert!(ab <= spectral_norm(&a).unwrap() * spectral_norm(&b).unwrap() * (1.0 + 1e-12) + 1e-14);
    }

    #[test]
    fn spd_solve_residual_is_small(seed in any::<u64>(), n in 1usize..=5, k in 1usize..=3) {
        let mut rng = indexed_rng(seed, 3);
        let a = spd(&mut rng, n, 0.1);
        let rhs = uniform(&mut rng, n, k);
        let x = spd_solve(&a, &rhs).unwrap();
        let res = (a.as_mat() * &x - &rhs).norm();
        prop_assert!(res <= 1e-10 * (1.0 + rhs.norm()));
    }

    #[test]
    fn riccati_map_is_monotone(seed in any::<u64>(), n in 1usize..=3, m in 1usize..=3) {
        let prob = problem(seed, n, m);
        let mut rng = indexed_rng(seed, 4);
        let lo = spd(&mut rng, n, 0.0);
        let hi = lo.add(&spd(&mut rng, n, 0.0));
        let t_lo = riccati_map(&prob, &lo).unwrap();
        let t_hi = riccati_map(&prob, &hi).unwrap();
        prop_assert!(psd_order_geq(&t_hi, &t_lo, 1e-9 * (1.0 + t_hi.frobenius_norm())).unwrap());
    }

    #[test]
    fn every_stabilizing_gain_costs_at_least_the_optimum(seed in any::<u64>(), n in 1usize..=3, m in 1usize..=3) {
        let prob = problem(seed, n, m);
        let sol = solve_default(&prob).unwrap();
        let mut rng = indexed_rng(seed, 5);
        let gain = sol.gain_star.gain.clone() + uniform(&mut rng, m, n) * 0.1;
        if let Ok(pi_l) = policy_value(&prob, &Policy::new(gain), 1e-10) {
            let tol = 1e-8 * (1.0 + pi_l.frobenius_norm());
            prop_assert!(psd_order_geq(&pi_l, &sol.pi_star, tol).unwrap());
        }
    }

    #[test]
    fn td_update_keeps_the_estimate_symmetric(seed in any::<u64>(), n in 1usize..=3, m in 1usize..=3) {
        let prob = problem(seed, n, m);
        let mut rng = indexed_rng(seed, 6);
        let mut est = ValueEstimate::new(spd(&mut rng, n, 0.1));
        let x = standard_normal(&mut rng, n);
        let u = greedy_control_v(&prob, &est, &x).unwrap();
        let outcome = step(&prob, &x, &u, rng.random()).unwrap();
        let delta = td_error_v(&prob, &est, &x, &u, &outcome);
        let rate = Schedule::new(1.0, 100.0).learning_rate(rng.random_range(0..1000), &x);
        est.update(rate.alpha, delta, &x);
        let pi = est.pi.as_mat();
        prop_assert_eq!(pi, &pi.transpose());
    }

    #[test]
    fn step_size_respects_both_caps(a in 1e-3f64..10.0, b in 1.0f64..1e4, t in 0u64..1_000_000, norm in 0.0f64..100.0) {
        let rate = Schedule::new(a, b).learning_rate_for_norm(t, norm);
        prop_assert!(rate.alpha > 0.0);
        prop_assert!(rate.alpha <= a / (b + t as f64));
        if norm > 0.0 {
            prop_assert!(rate.alpha * norm.powi(4) <= 1.0 + 1e-12);
        }
        prop_assert!(rate.scaling > 0.0 && rate.scaling <= 1.0);
    }

    #[test]
    fn greedy_control_beats_perturbations(seed in any::<u64>(), n in 1usize..=3, m in 1usize..=3) {
        let prob = problem(seed, n, m);
        let mut rng = indexed_rng(seed, 7);
        let est = ValueEstimate::new(spd(&mut rng, n, 0.0));
        let x = standard_normal(&mut rng, n);
        let u = greedy_control_v(&prob, &est, &x).unwrap();
        let cost = |v: &Vector| prob.r.quad_form(v) + est.value(&(&prob.f * &x + &prob.g * v));
        let best = cost(&u);
        for _ in 0..8 {
            let v = &u + standard_normal(&mut rng, m) * 0.1;
            prop_assert!(best <= cost(&v) + 1e-9 * (1.0 + best.abs()));
        }
    }
}
