//! Path tracking, monodromy and branch-point location on seeded problems.

use resatlas::continuation::{
    classify_approach, locate_branch_points, monodromy, trace_branches, BranchPoint,
    Classification, PathSpec, Permutation, Rect, Tracker,
};
use resatlas::numerics::c;
use resatlas::{build_ensemble, Complex64, EnsembleKind, EnsembleSpec, ResonanceProblem};

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

fn rank_one_example() -> ResonanceProblem {
    let w = c(1.0 / 2f64.sqrt(), 0.0);
    ResonanceProblem::rank_one(&[1.0, -1.0], &[w, w]).unwrap()
}

/// First problem (over the seeds tried) with a branch point in `region`.
fn problem_with_branch_point(
    kind: EnsembleKind,
    n: usize,
    region: Rect,
) -> (ResonanceProblem, Vec<BranchPoint>) {
    for seed in 0..40 {
        let p = ensemble(kind, n, 3, seed);
        let points = locate_branch_points(&p, region, 8).unwrap();
        if !points.is_empty() {
            return (p, points);
        }
    }
    panic!("no branch point found for {kind}");
}

#[test]
fn identity_perturbation_branches_are_exact() {
    let lambda = [0.0, 1.0, 2.5];
    let p = ResonanceProblem::identity_perturbation(&lambda).unwrap();
    let path = PathSpec::open(vec![c(0.0, 1.0), c(2.0, 1.0)], 0.05, 1e-9);
    let fam = trace_branches(&p, &path).unwrap();
    assert!(fam.consistency.unwrap().all_pass);
    for label in 0..3 {
        let start = fam.start_values()[label];
        let lam = lambda
            .iter()
            .copied()
            .find(|l| (c(0.0, 1.0) - l - start).norm() < 1e-12)
            .unwrap();
        for (sample, r) in fam.samples.iter().zip(fam.branch(label)) {
            assert!((r - (sample.z - lam)).norm() < 1e-12 * (1.0 + sample.z.norm()));
        }
        let end = fam.end_values()[label];
        assert!((end - (c(2.0, 1.0) - lam)).norm() < 1e-12);
    }
}

#[test]
fn located_points_reproduce_their_monodromy() {
    let region = Rect::new(-2.0, 4.0, 0.05, 3.0).unwrap();
    let (p, points) = problem_with_branch_point(EnsembleKind::Jacobi, 8, region);
    let tracker = Tracker::new(&p).unwrap();
    for bp in &points {
        assert!(!bp.monodromy.is_identity());
        let path = bp.loop_path(bp.radius);
        let once = tracker.monodromy(&path).unwrap();
        assert_eq!(once, bp.monodromy);
        let twice = tracker.trace_repeated(&path, 2).unwrap().composed();
        assert_eq!(twice, once.pow(2));
        assert_eq!(tracker.monodromy(&path.reversed()).unwrap(), once.inverse());
    }
}

#[test]
fn two_cycle_closes_after_two_turns() {
    let region = Rect::new(-2.0, 4.0, 0.05, 3.0).unwrap();
    let (p, points) = problem_with_branch_point(EnsembleKind::Jacobi, 6, region);
    let tracker = Tracker::new(&p).unwrap();
    let bp = points
        .iter()
        .find(|b| b.periods == vec![2])
        .expect("a 2-cycle");
    let fam = tracker.trace_repeated(&bp.loop_path(bp.radius), 2).unwrap();
    assert!(fam.composed().is_identity());
    for label in fam.labels.clone() {
        let values = fam.branch(label);
        let (first, last) = (values[0], values[values.len() - 1]);
        assert!((first - last).norm() < 1e-6 * (1.0 + first.norm()));
    }
}

/// Monodromy at base point `to`, given the monodromy at `from` on the same
/// ray and the transport between them.
fn rebase(perm: &Permutation, transport: &Permutation) -> Permutation {
    transport.inverse().then(perm).then(transport)
}

fn two_radius_check(p: &ResonanceProblem, region: Rect) -> usize {
    let tracker = Tracker::new(p).unwrap();
    let points = locate_branch_points(p, region, 8).unwrap();
    let mut confirmed = 0;
    for bp in &points {
        let isolated = |rho: f64| {
            points
                .iter()
                .all(|o| o == bp || (o.location - bp.location).norm() > 1.5 * rho)
        };
        let base = tracker.monodromy(&bp.loop_path(bp.radius)).unwrap();
        for rho in [0.5 * bp.radius, 2.0 * bp.radius] {
            if !isolated(rho) || (bp.location.im - rho) <= 0.0 {
                continue;
            }
            let m = tracker.monodromy(&bp.loop_path(rho)).unwrap();
            let t = tracker
                .transport(bp.base_point(), bp.location + rho, bp.radius / 8.0)
                .unwrap();
            assert!(!m.is_identity());
            assert_eq!(m, rebase(&base, &t));
            confirmed += 1;
        }
    }
    confirmed
}

#[test]
fn two_radius_confirmation() {
    let unit = Rect::new(0.1, 2.0, 0.1, 2.0).unwrap();
    for kind in [
        EnsembleKind::Jacobi,
        EnsembleKind::DenseGaussian,
        EnsembleKind::RankKPerturbation,
    ] {
        two_radius_check(&ensemble(kind, 8, 3, 11), unit);
    }
    let confirmed = two_radius_check(&ensemble(EnsembleKind::Jacobi, 8, 3, 2), unit);
    assert!(confirmed > 0);
}

#[test]
fn entire_and_scalar_families_have_no_branch_points() {
    let region = Rect::new(-1.0, 3.0, 0.1, 2.0).unwrap();
    let p = ResonanceProblem::identity_perturbation(&[0.0, 1.0, 2.0]).unwrap();
    assert!(locate_branch_points(&p, region, 6).unwrap().is_empty());
    let q = ensemble(EnsembleKind::DenseGaussian, 6, 1, 3);
    assert!(locate_branch_points(&q, region, 6).unwrap().is_empty());
}

#[test]
fn homotopic_paths_agree() {
    let p = ensemble(EnsembleKind::Jacobi, 8, 3, 2);
    let tracker = Tracker::new(&p).unwrap();
    // high above the real axis, where this problem has no branch points
    let (a, b) = (c(0.5, 2.0), c(3.5, 2.0));
    let upper = PathSpec::open(vec![a, c(2.0, 2.6), b], 0.05, 1e-10);
    let lower = PathSpec::open(vec![a, c(2.0, 1.5), b], 0.05, 1e-10);
    let fu = tracker.trace(&upper).unwrap();
    let fl = tracker.trace(&lower).unwrap();
    assert_eq!(fu.composed(), fl.composed());
    for (x, y) in fu.end_values().iter().zip(fl.end_values()) {
        assert!((x - y).norm() < 1e-7 * (1.0 + x.norm()));
    }
    let small = PathSpec::circle(c(2.0, 2.2), 0.3, 24);
    assert!(monodromy(&p, &small).unwrap().is_identity());
}

#[test]
fn classification_examples() {
    let p = rank_one_example();
    let report = classify_approach(&p, c(0.0, 0.0), c(1.0, 0.0), 6).unwrap();
    assert_eq!(report.classification, Classification::PoleLike { order: 1 });

    let q = ResonanceProblem::identity_perturbation(&[0.0, 2.0]).unwrap();
    let report = classify_approach(&q, c(1.0, 0.5), Complex64::from_polar(1.0, 0.7), 6).unwrap();
    assert_eq!(report.classification, Classification::Regular);

    let region = Rect::new(-2.0, 4.0, 0.05, 3.0).unwrap();
    let (p, points) = problem_with_branch_point(EnsembleKind::Jacobi, 8, region);
    let bp = &points[0];
    let report = classify_approach(&p, bp.location, c(0.0, 1.0), 6).unwrap();
    assert_eq!(
        report.classification,
        Classification::Branching,
        "{:?}",
        report.note
    );
}
