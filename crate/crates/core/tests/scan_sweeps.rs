//! Grid scans, zero isolation, holomorphy and ray sweeps.

use resatlas::numerics::c;
use resatlas::resonance::ShiftEvaluator;
use resatlas::scan::{absorbing_sweep, grid_scan, holomorphy_check, RayFan, Region, ScanReport};
use resatlas::{build_ensemble, EnsembleKind, EnsembleSpec, ResonanceProblem};

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

fn two_level() -> ResonanceProblem {
    ResonanceProblem::identity_perturbation(&[1.0, -1.0]).unwrap()
}

#[test]
fn rational_function_at_a_node() {
    let region = Region::new(-2.0, 2.0, 0.5, 2.0).unwrap();
    let report = grid_scan(&two_level(), &region, 41, 4, 0.0).unwrap();
    assert_eq!(report.records.len(), 41 * 4);
    let node = report
        .records
        .iter()
        .find(|r| (r.z - c(0.0, 1.0)).norm() < 1e-14)
        .unwrap();
    // f(z) = −2z/(z² − 1) = i at z = i
    assert!((node.f - c(0.0, 1.0)).norm() < 1e-14);
    assert!((node.f.norm() - 1.0).abs() < 1e-14);
}

#[test]
fn region_inside_margin_is_skipped() {
    let region = Region::new(0.9, 1.1, -0.1, 0.1).unwrap().with_margin(1.0);
    let report = grid_scan(&two_level(), &region, 5, 5, 0.0).unwrap();
    assert_eq!(report.summary.evaluated, 0);
    assert_eq!(report.summary.skipped, 25);
    assert!(report
        .records
        .iter()
        .all(|r| r.skipped.as_deref().unwrap().contains("margin")));
    assert!(report.summary.zero_candidates.is_empty());
}

#[test]
fn nested_grids_refine_monotonically() {
    let p = ensemble(EnsembleKind::Jacobi, 6, 2, 1);
    let region = Region::new(-1.0, 5.0, 0.2, 2.0).unwrap();
    let coarse = grid_scan(&p, &region, 9, 5, 0.0).unwrap().summary;
    let fine = grid_scan(&p, &region, 17, 9, 0.0).unwrap().summary;
    assert!(fine.abs_f[0] <= coarse.abs_f[0]);
    assert!(fine.abs_f[1] >= coarse.abs_f[1]);
    assert!(fine.sigma_min[0] <= coarse.sigma_min[0]);
    assert!(fine.sigma_max[1] >= coarse.sigma_max[1]);
}

#[test]
fn zero_of_f_is_found_and_isolated() {
    let region = Region::new(-0.5, 0.5, -0.5, 0.5).unwrap();
    let report = grid_scan(&two_level(), &region, 21, 21, 0.0).unwrap();
    let zeros = &report.summary.zero_candidates;
    assert_eq!(zeros.len(), 1);
    assert!(zeros[0].z.norm() < 1e-12);
    assert!(zeros[0].isolated);
}

#[test]
fn indefinite_coupling_zeros_are_isolated() {
    let mut found = 0;
    for seed in 0..6 {
        let p = ensemble(EnsembleKind::DenseGaussian, 6, 3, seed);
        let region = Region::new(-2.0, 2.0, 0.05, 1.5).unwrap();
        let report = grid_scan(&p, &region, 48, 24, 0.0).unwrap();
        for z in &report.summary.zero_candidates {
            assert!(z.isolated, "seed {seed}: {z:?}");
            found += 1;
        }
    }
    assert!(found > 0);
}

#[test]
fn mean_value_property() {
    let p = ensemble(EnsembleKind::Jacobi, 8, 3, 4);
    let eval = ShiftEvaluator::new(&p, 0.3).unwrap();
    let region = Region::new(-1.0, 5.0, 0.1, 2.0).unwrap();
    let checks = holomorphy_check(&eval, &region, 100).unwrap();
    assert_eq!(checks.len(), 100);
    for (z, _, residual) in checks {
        assert!(residual < 1e-7, "{z}: {residual}");
    }
}

#[test]
fn sweep_examples() {
    let lambda = [0.0, 1.0, 2.0];
    let p = ResonanceProblem::identity_perturbation(&lambda).unwrap();
    let region = Region::new(-1.0, 3.0, -1.0, 1.0).unwrap();
    let fan = RayFan {
        targets: vec![
            c(0.5, 0.5),
            c(1.5, -0.5),
            c(-0.5, 0.2),
            c(2.5, 0.7),
            c(1.0, 0.9),
        ],
        directions_per_target: 8,
    };
    let summary = absorbing_sweep(&p, &region, &fan, 6).unwrap();
    assert_eq!(summary.regular, 40);
    assert!(summary.errors.is_empty());

    let w = c(1.0 / 2f64.sqrt(), 0.0);
    let rank_one = ResonanceProblem::rank_one(&[1.0, -1.0], &[w, w]).unwrap();
    let fan = RayFan {
        targets: vec![c(0.0, 0.0)],
        directions_per_target: 8,
    };
    let summary = absorbing_sweep(
        &rank_one,
        &Region::new(-0.5, 0.5, -0.5, 0.5).unwrap(),
        &fan,
        6,
    )
    .unwrap();
    assert_eq!(summary.pole_like.get(&1), Some(&8));
}

#[test]
fn random_ensemble_has_no_absorbing_points() {
    let kinds = [
        EnsembleKind::Jacobi,
        EnsembleKind::DenseGaussian,
        EnsembleKind::RankKPerturbation,
    ];
    for seed in 0..50u64 {
        let p = ensemble(
            kinds[seed as usize % 3],
            6,
            1 + seed as usize % 3,
            100 + seed,
        );
        let region = Region::new(-3.0, 5.0, -2.0, 2.0).unwrap();
        let fan = RayFan {
            targets: vec![c(0.3, 0.4), c(1.7, -0.6)],
            directions_per_target: 4,
        };
        let summary = absorbing_sweep(&p, &region, &fan, 6).unwrap();
        assert_eq!(
            summary.suspected_absorbing, 0,
            "seed {seed}: {:?}",
            summary.findings
        );
    }
}

fn scan_bytes(report: &ScanReport) -> (Vec<u8>, String) {
    let mut csv = Vec::new();
    report.write_csv(&mut csv).unwrap();
    (csv, report.summary_json().to_string())
}

#[test]
fn output_is_independent_of_thread_count() {
    let p = ensemble(EnsembleKind::DenseGaussian, 8, 3, 9);
    let region = Region::new(-2.0, 2.0, 0.05, 1.5).unwrap();
    let run = |threads: usize| {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap();
        pool.install(|| scan_bytes(&grid_scan(&p, &region, 32, 16, 0.0).unwrap()))
    };
    let one = run(1);
    assert_eq!(one, run(4));
    assert_eq!(one, run(3));
    let header = String::from_utf8(one.0).unwrap();
    assert!(header.starts_with(
        "re(z),im(z),sigma_min,sigma_max,abs_f,re_f,im_f,zero_count,condition,skipped\n"
    ));
    assert!(one.1.contains("\"schema\":\"resatlas-scan/1\""));
}
