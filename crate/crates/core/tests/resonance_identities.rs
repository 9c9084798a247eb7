//! Transfer family, shift identity and Herglotz sum against independent
//! evaluations.

use proptest::prelude::*;
use resatlas::assignment::matching_distance;
use resatlas::numerics::{c, general_eigen, trace_norm};
use resatlas::resonance::{
    coupling_consistency, herglotz_sum, resonances_at, shift_identity_residual,
    shifted_transfer_at, transfer_at, weyl_report, DEFAULT_ZERO_TOL,
};
use resatlas::{
    build_ensemble, Complex64, ComplexMatrix, EnsembleKind, EnsembleSpec, ResonanceProblem,
};

fn ensemble(kind: EnsembleKind, n: usize, k: usize, seed: u64) -> ResonanceProblem {
    build_ensemble(&EnsembleSpec {
        kind,
        n,
        k,
        seed,
        scale: 1.0,
    })
    .unwrap()
}

/// `F (H₀ + sV − z)⁻¹ F* J` through a dense LU inverse.
fn direct_shifted_transfer(p: &ResonanceProblem, s: f64, z: Complex64) -> ComplexMatrix {
    let n = p.n();
    let a = p.h0() + p.perturbation() * c(s, 0.0) - ComplexMatrix::identity(n, n) * z;
    let inv = a.try_inverse().unwrap();
    p.f() * inv * p.f().adjoint() * p.j()
}

#[test]
fn shifted_sigmas_match_direct_evaluation() {
    let p = ensemble(EnsembleKind::DenseGaussian, 9, 4, 3);
    for (z, s) in [
        (c(0.2, 0.5), 0.4),
        (c(-1.0, -0.3), -1.1),
        (c(2.0, 1.0), 0.0),
    ] {
        let direct = general_eigen(&direct_shifted_transfer(&p, s, z))
            .unwrap()
            .values;
        let sample = shifted_transfer_at(&p, s, z).unwrap();
        assert!(matching_distance(&direct, &sample.eigenvalues) < 1e-9);
    }
}

#[test]
fn shift_identity_random_instance() {
    let p = ensemble(EnsembleKind::DenseGaussian, 12, 4, 12);
    let residual = shift_identity_residual(&p, c(0.3, 0.8), 0.7).unwrap();
    assert!(residual < 1e-8, "{residual}");
}

#[test]
fn zero_shift_is_self_consistent() {
    let p = ensemble(EnsembleKind::Jacobi, 7, 3, 4);
    assert!(shift_identity_residual(&p, c(1.0, 0.4), 0.0).unwrap() < 1e-12);
}

#[test]
fn conjugation_symmetry_for_real_problems() {
    let base = ensemble(EnsembleKind::DenseGaussian, 8, 3, 2);
    let real = |m: &ComplexMatrix| m.map(|x| c(x.re, 0.0));
    let h0 = real(base.h0());
    let j = real(base.j());
    let p = ResonanceProblem::new(
        (&h0 + h0.transpose()) * c(0.5, 0.0),
        real(base.f()),
        (&j + j.transpose()) * c(0.5, 0.0),
    )
    .unwrap();
    assert!(p.is_real());
    for z in [c(0.5, 0.3), c(2.7, 1.2), c(-0.4, 0.05)] {
        let up = resonances_at(&transfer_at(&p, z, DEFAULT_ZERO_TOL).unwrap()).values;
        let down = resonances_at(&transfer_at(&p, z.conj(), DEFAULT_ZERO_TOL).unwrap()).values;
        let conj: Vec<Complex64> = up.iter().map(|r| r.conj()).collect();
        let scale = up.iter().map(|r| r.norm()).fold(1.0, f64::max);
        assert!(matching_distance(&conj, &down) < 1e-10 * scale);
    }
}

#[test]
fn herglotz_sum_identity_perturbation() {
    let p = ResonanceProblem::identity_perturbation(&[1.0, -1.0]).unwrap();
    let h = herglotz_sum(&p, c(0.0, 1.0), 0.0).unwrap();
    assert!((h.f_sum - c(0.0, 1.0)).norm() < 1e-14);
    assert!((h.f_trace - c(0.0, 1.0)).norm() < 1e-14);
    assert!(h.f_trace.norm() <= h.trace_norm_bound + 1e-14);
}

#[test]
fn rank_one_resonance_closed_form() {
    let v = [c(1.0 / 2f64.sqrt(), 0.0), c(1.0 / 2f64.sqrt(), 0.0)];
    let p = ResonanceProblem::rank_one(&[1.0, -1.0], &v).unwrap();
    let z = c(0.0, 0.5);
    let r = resonances_at(&transfer_at(&p, z, DEFAULT_ZERO_TOL).unwrap()).values;
    // (z² − 1)/z at z = i/2
    assert_eq!(r.len(), 1);
    assert!((r[0] - c(0.0, 2.5)).norm() < 1e-13);
    let cc = coupling_consistency(&p, z, r[0]).unwrap();
    assert!(cc.passes(z));
}

#[test]
fn non_resonant_coupling_is_regular() {
    let p = ensemble(EnsembleKind::RankKPerturbation, 8, 3, 6);
    let z = c(0.2, 0.6);
    let r = resonances_at(&transfer_at(&p, z, DEFAULT_ZERO_TOL).unwrap()).values;
    let cc = coupling_consistency(&p, z, r[0] + 1.0).unwrap();
    assert!(cc.sing_min > 1e-3, "{}", cc.sing_min);
    assert!(!cc.passes(z));
}

#[test]
fn weyl_on_random_square_matrices() {
    let mut rng = resatlas::problem::SeededRng::new(10);
    for _ in 0..10 {
        let a = rng.gaussian_matrix(10, 10);
        for p in [0.5, 1.0, 2.0] {
            assert!(weyl_report(&a, p).unwrap().holds());
        }
    }
}

#[test]
fn ensembles_validate_and_round_trip() {
    for kind in [
        EnsembleKind::Diagonal,
        EnsembleKind::Jacobi,
        EnsembleKind::DenseGaussian,
        EnsembleKind::RankKPerturbation,
    ] {
        let p = ensemble(kind, 7, 3, 21);
        assert!(p.validate().passed(), "{kind}");
        let back = ResonanceProblem::from_json(&p.to_json()).unwrap();
        assert_eq!(back, p, "{kind}");
        assert_eq!(back.to_json(), p.to_json());
    }
}

fn small_problem() -> impl Strategy<Value = ResonanceProblem> {
    (1usize..7, 1usize..4, any::<u64>(), 0usize..4).prop_map(|(n, k, seed, kind)| {
        let kind = [
            EnsembleKind::Diagonal,
            EnsembleKind::Jacobi,
            EnsembleKind::DenseGaussian,
            EnsembleKind::RankKPerturbation,
        ][kind];
        ensemble(kind, n.max(k), k, seed)
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn shift_identity_holds(p in small_problem(), x in -3.0f64..3.0, y in 0.05f64..2.0, s in -2.0f64..2.0, lower in any::<bool>()) {
        let z = if lower { c(x, -y) } else { c(x, y) };
        let ms_norm = shifted_transfer_at(&p, s, z).unwrap().m.norm();
        match shift_identity_residual(&p, z, s) {
            Ok(res) => prop_assert!(res < 1e-8 * (1.0 + ms_norm), "{}", res),
            Err(resatlas::Error::CouplingCollision { .. }) => {}
            Err(e) => return Err(TestCaseError::fail(e.to_string())),
        }
    }

    #[test]
    fn trace_is_bounded_by_trace_norm(p in small_problem(), x in -3.0f64..3.0, y in 0.05f64..2.0, s in -2.0f64..2.0) {
        let z = c(x, y);
        let m = shifted_transfer_at(&p, s, z).unwrap().m;
        prop_assert!(m.trace().norm() <= trace_norm(&m).unwrap() * (1.0 + 1e-12));
        if let Ok(h) = herglotz_sum(&p, z, s) {
            prop_assert!(h.residual < 1e-8 * (1.0 + h.trace_norm_bound));
        }
    }

    #[test]
    fn resonances_solve_the_coupled_problem(p in small_problem(), x in -3.0f64..3.0, y in 0.05f64..2.0) {
        let z = c(x, y);
        for r in resonances_at(&transfer_at(&p, z, DEFAULT_ZERO_TOL).unwrap()).values {
            let cc = coupling_consistency(&p, z, r).unwrap();
            prop_assert!(cc.passes(z), "{:?}", cc);
        }
    }

    #[test]
    fn weyl_inequality(seed in any::<u64>(), n in 1usize..9, p in prop::sample::select(vec![0.5, 1.0, 2.0])) {
        let a = resatlas::problem::SeededRng::new(seed).gaussian_matrix(n, n);
        prop_assert!(weyl_report(&a, p).unwrap().holds());
    }
}
