//! Property tests of the structural identities across random models.

use keldysh_core::bounds::{
    decay_bounds_analytic, decay_constants_numeric, det_bound, det_bound_property_test, interaction_norm, one_inf_norm,
};
use keldysh_core::covariance::{
    commuting_covariance, grid_consistency, Branch, ContinuumCovariance, Covariance, DiscreteKeldyshSystem,
    KeldyshPoint, TimeOrder,
};
use keldysh_core::cumulants::exact_cumulants;
use keldysh_core::fock::{car_deviation, EvolutionState, FockSpace};
use keldysh_core::model::{Interaction, OneParticleModel, Vertex};
use keldysh_core::presets::random_model;
use keldysh_core::scalar::cx;
use keldysh_core::wick::{first_order_correction, wick_moment, WickQuery};
use nalgebra::DMatrix;
use proptest::prelude::*;

fn diagonal_model(eps: f64, a: &[f64], b: &[f64], q: &[f64]) -> OneParticleModel<f64> {
    let d = |v: &[f64]| DMatrix::from_fn(v.len(), v.len(), |r, c| cx(if r == c { v[r] } else { 0.0 }, 0.0));
    OneParticleModel::new(eps, d(a), d(b), d(q)).unwrap()
}

fn random_vertex_interaction(n: usize, seed: u64, coupling: f64) -> Interaction<f64> {
    let mut v = Vertex::new(2, 2);
    let mut state = seed;
    let mut next = || {
        state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        ((state >> 11) as f64 / (1u64 << 53) as f64) - 0.5
    };
    for x0 in 0..n {
        for x1 in x0 + 1..n {
            for y0 in 0..n {
                for y1 in y0 + 1..n {
                    v.add_antisymmetrized(&[x0, x1], &[y0, y1], cx(next(), next()));
                }
            }
        }
    }
    let mut out = Interaction::zero(n);
    out.add_vertex(v).unwrap();
    out.with_coupling(coupling)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn car_holds(n in 1usize..=5, eps in 0.2f64..5.0) {
        let z = DMatrix::from_element(n, n, cx(0.0, 0.0));
        let m = OneParticleModel::new(eps, z.clone(), z.clone(), z).unwrap();
        prop_assert!(car_deviation(&FockSpace::new(&m).unwrap()).unwrap() < 1e-12);
    }

    #[test]
    fn unitary_trace_conserved_dissipative_trace_decays(seed in 0u64..1000, t in 0.1f64..2.0) {
        let m = random_model(3, 1.0, 0.0, seed).unwrap();
        let fock = FockSpace::new(&m).unwrap();
        let v = random_vertex_interaction(3, seed, 0.4);
        let v = {
            // Hermitian part keeps H Hermitian.
            let mut h = Interaction::zero(3);
            let sym = v.vertices().next().unwrap().clone();
            let adj = v.adjoint().vertices().next().unwrap().clone();
            let mut sum = Vertex::new(2, 2);
            for (x, y, z) in sym.entries().chain(adj.entries()) {
                sum.add_raw(x, y, z * 0.5);
            }
            h.add_vertex(sum).unwrap();
            h.with_coupling(0.4)
        };
        let s = EvolutionState::new(&fock, &m, &v, 1.0, t).unwrap();
        prop_assert!((s.z_evolved() - cx(s.z0(), 0.0)).norm() < 1e-9 * s.z0());

        let d = random_model(3, 1.0, 0.5, seed).unwrap();
        let zero = Interaction::zero(3);
        let early = EvolutionState::new(&fock, &d, &zero, 1.0, t).unwrap().z_evolved().re;
        let late = EvolutionState::new(&fock, &d, &zero, 1.0, t + 0.3).unwrap().z_evolved().re;
        prop_assert!(late <= early * (1.0 + 1e-12));
    }

    #[test]
    fn grid_consistency_random(seed in 0u64..1000, b in prop::bool::ANY, steps in 1usize..=8) {
        let m = random_model(2, 1.0, if b { 0.5 } else { 0.0 }, seed).unwrap();
        let cov = ContinuumCovariance::new(&m, 0.9, 0.7).unwrap();
        let mut sys = DiscreteKeldyshSystem::new(&m, 0.9, 0.7, steps).unwrap();
        let g = grid_consistency(&mut sys, &cov).unwrap();
        prop_assert!(g.relative < 1e-10, "{g:?}");
        let expected = cov.determinant().unwrap();
        prop_assert!((sys.determinant() - expected).norm() < 1e-10 * expected.norm());
    }

    #[test]
    fn commuting_form_agrees(
        a in prop::collection::vec(-1.0f64..1.0, 3),
        b in 0.0f64..0.8,
        q in prop::collection::vec(-1.0f64..1.0, 3),
        t in 0.0f64..1.0, t2 in 0.0f64..1.0,
    ) {
        let m = diagonal_model(1.0, &a, &[b; 3], &q);
        let general = ContinuumCovariance::new(&m, 1.2, 1.0).unwrap();
        let simple = commuting_covariance(&m, 1.2, 1.0).unwrap();
        for s in Branch::BOTH {
            for s2 in Branch::BOTH {
                let g = general.block(s, t, s2, t2, TimeOrder::Inclusive).unwrap();
                let c = simple.block(s, t, s2, t2, TimeOrder::Inclusive).unwrap();
                prop_assert!(keldysh_core::linalg::max_abs_diff(&g, &c) < 1e-10);
            }
        }
    }

    #[test]
    fn wick_antisymmetric(seed in 0u64..1000, times in prop::collection::vec(0.0f64..1.0, 4)) {
        let m = random_model(3, 1.0, 0.3, seed).unwrap();
        let cov = ContinuumCovariance::new(&m, 1.0, 1.0).unwrap();
        let p = |k: usize, b: Branch| KeldyshPoint::new(b, times[k], k % 3);
        let psi = vec![p(0, Branch::Plus), p(1, Branch::Minus)];
        let psibar = vec![p(2, Branch::Minus), p(3, Branch::Plus)];
        let base = wick_moment(&cov, &WickQuery::new(psi.clone(), psibar.clone()), TimeOrder::Inclusive).unwrap();
        let swapped = wick_moment(&cov, &WickQuery::new(vec![psi[1], psi[0]], psibar), TimeOrder::Inclusive).unwrap();
        prop_assert!((base + swapped).norm() < 1e-12 * (1.0 + base.norm()));
    }

    #[test]
    fn cumulants_antisymmetric_odd_vanish(seed in 0u64..1000) {
        let m = random_model(3, 1.0, 0.2, seed).unwrap();
        let fock = FockSpace::new(&m).unwrap();
        let v = random_vertex_interaction(3, seed, 0.3);
        let s = EvolutionState::new(&fock, &m, &v, 1.0, 0.6).unwrap();
        let table = exact_cumulants(&s, 0.3, 4).unwrap();
        for ((m, mbar), t) in &table.gamma_t {
            prop_assert!(t.antisymmetry_deviation() < 1e-10);
            if (m + mbar) % 2 == 1 {
                prop_assert!(t.max_abs() < 1e-10);
            }
        }
    }

    #[test]
    fn norm_homogeneous_and_additive(seed in 0u64..1000, s in 0.1f64..4.0, h in 0.1f64..3.0, eps in 0.3f64..2.0) {
        let v = random_vertex_interaction(3, seed, 1.0);
        let vertex = v.vertices().next().unwrap();
        let base = one_inf_norm(vertex, eps);
        prop_assert!((one_inf_norm(&vertex.scaled(cx(s, 0.0)), eps) - s * base).abs() < 1e-12 * (1.0 + base));
        let scaled = v.clone().with_coupling(s);
        prop_assert!((interaction_norm(&scaled, h, eps).unwrap() - s * base * h.powi(4)).abs() < 1e-9 * (1.0 + base));
    }

    #[test]
    fn first_order_linear_in_vertex(seed in 0u64..1000) {
        let m = random_model(2, 1.0, 0.2, seed).unwrap();
        let cov = ContinuumCovariance::new(&m, 1.0, 0.5).unwrap();
        let v = random_vertex_interaction(2, seed, 1.0);
        let one = first_order_correction(&cov, &v, (1, 1), 8).unwrap().tensor;
        let two = first_order_correction(&cov, &v.clone().with_coupling(2.0), (1, 1), 8).unwrap().tensor;
        prop_assert!(two.max_abs_diff(&one.map(|z| z * 2.0)) < 1e-12 * (1.0 + one.max_abs()));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn commuting_models_respect_bounds(
        a in prop::collection::vec(-1.0f64..1.0, 2),
        b in prop::sample::select(vec![0.0, 0.3, 1.0]),
        q in prop::collection::vec(0.0f64..2.0, 2),
        beta in 0.5f64..2.0,
        total in 0.25f64..1.5,
        seed in 0u64..1000,
    ) {
        let m = diagonal_model(1.0, &a, &[b; 2], &q);
        let cov = ContinuumCovariance::new(&m, beta, total).unwrap();
        let delta = det_bound(&m, beta).unwrap().delta;
        let sampling = det_bound_property_test(&cov, delta, 100, 6, seed).unwrap();
        prop_assert!(sampling.pass, "{sampling:?}");
        let bound = decay_bounds_analytic(&m, beta, total).unwrap();
        let numeric = decay_constants_numeric(&cov, 16).unwrap();
        prop_assert!(numeric.alpha <= bound.alpha * 1.01, "{numeric:?} {bound:?}");
        prop_assert!(numeric.alpha_tilde <= bound.alpha_tilde * 1.01);
    }
}
