use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

use lowrex::certificates::{certificate_report, linearized_precertificate};
use lowrex::problem::{apply_forward, gen_gaussian_map, gen_signal, substream_seed, LinearMap, SignalKind, SignalSpec};
use lowrex::regularizers::{Regularizer, TOL_ACTIVE};
use lowrex::risk::{dof_closed_form, sure};
use lowrex::solvers::{fb_solve, SolveOptions};
use lowrex::xcli::Value;

fn vec_strategy(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-3.0..3.0f64, n)
}

fn prox_family() -> impl Strategy<Value = Regularizer> {
    prop_oneof![
        Just(Regularizer::L1),
        Just(Regularizer::Linf),
        Just(Regularizer::uniform_groups(4, 2).unwrap()),
        Just(Regularizer::nuclear(2).unwrap()),
    ]
}

fn objective(j: &Regularizer, gamma: f64, x: &DVector<f64>, u: &DVector<f64>) -> f64 {
    0.5 * (u - x).norm_squared() + gamma * j.eval(u).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn prox_beats_random_competitors(j in prox_family(), gamma in 0.01..2.0f64, x in vec_strategy(4), d in vec_strategy(4), t in 1e-3..1.0f64) {
        let x = DVector::from_vec(x);
        let p = j.prox(gamma, &x).unwrap();
        let competitor = &p + DVector::from_vec(d) * t;
        prop_assert!(objective(&j, gamma, &x, &p) <= objective(&j, gamma, &x, &competitor) + 1e-12);
    }

    #[test]
    fn prox_is_firmly_nonexpansive(j in prox_family(), gamma in 0.01..2.0f64, a in vec_strategy(4), b in vec_strategy(4)) {
        let (a, b) = (DVector::from_vec(a), DVector::from_vec(b));
        let (pa, pb) = (j.prox(gamma, &a).unwrap(), j.prox(gamma, &b).unwrap());
        prop_assert!((&pa - &pb).norm_squared() <= (&pa - &pb).dot(&(&a - &b)) + 1e-10);
    }

    #[test]
    fn norms_are_absolutely_homogeneous_and_subadditive(j in prox_family(), a in vec_strategy(4), b in vec_strategy(4), s in -5.0..5.0f64) {
        let (a, b) = (DVector::from_vec(a), DVector::from_vec(b));
        let ja = j.eval(&a).unwrap();
        prop_assert!(ja >= 0.0);
        prop_assert!((j.eval(&(&a * s)).unwrap() - s.abs() * ja).abs() <= 1e-10 * (1.0 + ja.abs() * s.abs()));
        prop_assert!(j.eval(&(&a + &b)).unwrap() <= ja + j.eval(&b).unwrap() + 1e-10);
    }

    #[test]
    fn model_basis_is_orthonormal_and_contains_the_sign(j in prox_family(), seed in any::<u64>(), zeros in prop::collection::vec(any::<bool>(), 4)) {
        let mut x = DVector::from_vec(vec_strategy_sample(seed, 4));
        if !matches!(j, Regularizer::Nuclear { .. }) {
            for (i, z) in zeros.iter().enumerate() {
                if *z { x[i] = 0.0; }
            }
        }
        let m = j.model_tangent(&x, TOL_ACTIVE).unwrap();
        let b = &m.basis;
        let gram = b.transpose() * b;
        prop_assert!((gram - DMatrix::identity(m.dim(), m.dim())).amax() <= 1e-10);
        prop_assert!((m.project(&m.e) - &m.e).amax() <= 1e-10);
    }

    #[test]
    fn forward_model_is_exact(seed in any::<u64>(), x in vec_strategy(6), w in vec_strategy(4)) {
        let phi = gen_gaussian_map(4, 6, seed, false).unwrap();
        let (x, w) = (DVector::from_vec(x), DVector::from_vec(w));
        let y = apply_forward(&phi, &x, &w).unwrap();
        prop_assert_eq!(y, phi.matrix() * &x + &w);
    }

    #[test]
    fn gaussian_maps_are_seeded_and_normalized(seed in any::<u64>(), p in 1usize..8, n in 1usize..8) {
        let a = gen_gaussian_map(p, n, seed, true).unwrap();
        let b = gen_gaussian_map(p, n, seed, true).unwrap();
        prop_assert_eq!(a.matrix(), b.matrix());
        for c in a.matrix().column_iter() {
            prop_assert!((c.norm() - 1.0).abs() <= 1e-12);
        }
    }

    #[test]
    fn sparse_signals_have_exact_support(seed in any::<u64>(), k in 0usize..10) {
        let x = gen_signal(&SignalSpec::new(SignalKind::sparse(k), seed), 10).unwrap();
        prop_assert_eq!(x.iter().filter(|v| **v != 0.0).count(), k);
        prop_assert!(x.iter().all(|v| *v == 0.0 || (1.0..=2.0).contains(&v.abs())));
    }

    #[test]
    fn precertificate_restricts_to_the_sign(seed in any::<u64>(), k in 1usize..5) {
        let phi = gen_gaussian_map(12, 20, seed, true).unwrap();
        let x0 = gen_signal(&SignalSpec::new(SignalKind::sparse(k), substream_seed(seed, 1)), 20).unwrap();
        let eta = linearized_precertificate(&phi, &Regularizer::L1, &x0).unwrap();
        for i in 0..20 {
            if x0[i] != 0.0 {
                prop_assert!((eta[i] - x0[i].signum()).abs() <= 1e-8);
            }
        }
        let r = certificate_report(&phi, &Regularizer::L1, &x0).unwrap();
        prop_assert_eq!(r.identifiable, r.injective && r.position.value == lowrex::regularizers::Position::Interior);
        if let (Some(ic), Some(erc), Some(werc)) = (r.ic, r.erc, r.werc) {
            prop_assert!(ic <= erc + 1e-10 && erc <= werc + 1e-10);
        }
    }

    #[test]
    fn sure_is_composed_exactly(y in vec_strategy(5), mu in vec_strategy(5), dof in 0.0..5.0f64, sigma in 0.0..2.0f64) {
        let (y, mu) = (DVector::from_vec(y), DVector::from_vec(mu));
        let s2 = sigma * sigma;
        let expected = (&y - &mu).norm_squared() + 2.0 * s2 * dof - 5.0 * s2;
        prop_assert_eq!(sure(&y, &mu, dof, sigma).unwrap(), expected);
    }

    #[test]
    fn csv_floats_round_trip(v in any::<f64>().prop_filter("finite", |v| v.is_finite())) {
        let s = Value::Float(v).to_string();
        prop_assert_eq!(s.parse::<f64>().unwrap(), v);
        prop_assert_eq!(s, format!("{v:.16e}"));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn plain_fb_objective_is_nonincreasing(seed in any::<u64>(), lambda in 0.01..1.0f64) {
        let phi = gen_gaussian_map(10, 20, seed, true).unwrap();
        let x0 = gen_signal(&SignalSpec::new(SignalKind::sparse(3), substream_seed(seed, 1)), 20).unwrap();
        let y = phi.apply(&x0);
        let opts = SolveOptions { max_iter: 500, ..SolveOptions::default() };
        let (_, trace) = fb_solve(&phi, &y, lambda, &Regularizer::L1, &opts).unwrap();
        for w in trace.objectives.windows(2) {
            prop_assert!(w[1] <= w[0] + 1e-12, "{} > {}", w[1], w[0]);
        }
    }

    #[test]
    fn l1_dof_is_support_size(seed in any::<u64>(), lambda in 0.05..1.0f64) {
        let phi = gen_gaussian_map(16, 24, seed, true).unwrap();
        let x0 = gen_signal(&SignalSpec::new(SignalKind::sparse(3), substream_seed(seed, 1)), 24).unwrap();
        let y = phi.apply(&x0);
        let opts = SolveOptions { tol_rel: 1e-12, ..SolveOptions::untraced() };
        let (x, trace) = fb_solve(&phi, &y, lambda, &Regularizer::L1, &opts).unwrap();
        prop_assume!(trace.converged);
        let dof = dof_closed_form(&phi, &Regularizer::L1, &x, lambda).unwrap();
        prop_assert_eq!(dof, x.iter().filter(|v| **v != 0.0).count() as f64);
    }
}

fn vec_strategy_sample(seed: u64, n: usize) -> Vec<f64> {
    use rand::Rng;
    let mut r = lowrex::problem::rng(seed);
    (0..n).map(|_| r.random_range(-3.0..3.0)).collect()
}

#[test]
fn identity_map_precertificate_is_the_sign() {
    let x0 = DVector::from_vec(vec![0.0, -1.5, 0.0, 2.0]);
    let eta = linearized_precertificate(&LinearMap::identity(4), &Regularizer::L1, &x0).unwrap();
    assert!((eta - DVector::from_vec(vec![0.0, -1.0, 0.0, 1.0])).amax() <= 1e-12);
}
