//! Classify how the branches behave along rays into a point: a simple pole of
//! `r` where `σ` has a simple zero, bounded branches for `V = I`, and
//! branching at a located branch point.
//!
//! ```text
//! cargo run --example classify_divergence
//! ```

use resatlas::continuation::{classify_approach, locate_branch_points, Rect};
use resatlas::numerics::c;
use resatlas::{build_ensemble, Complex64, EnsembleKind, EnsembleSpec, ResonanceProblem};

fn main() -> resatlas::Result<()> {
    let w = c(1.0 / 2f64.sqrt(), 0.0);
    let rank_one = ResonanceProblem::rank_one(&[1.0, -1.0], &[w, w])?;
    let report = classify_approach(&rank_one, c(0.0, 0.0), c(1.0, 0.0), 6)?;
    println!(
        "rank one at 0: {} (slope {:.4})",
        report.classification, report.fits[0].slope
    );

    let identity = ResonanceProblem::identity_perturbation(&[0.0, 2.0])?;
    let report = classify_approach(&identity, c(1.0, 0.5), Complex64::from_polar(1.0, 2.0), 6)?;
    println!("V = I at 1+0.5i: {}", report.classification);

    let p = build_ensemble(&EnsembleSpec {
        kind: EnsembleKind::Jacobi,
        n: 8,
        k: 3,
        seed: 2,
        scale: 1.0,
    })?;
    let points = locate_branch_points(&p, Rect::new(1.0, 2.0, 0.1, 0.5)?, 8)?;
    if let Some(bp) = points.first() {
        let report = classify_approach(&p, bp.location, c(0.0, 1.0), 6)?;
        println!(
            "branch point {:.6}: {} (local monodromy {:?})",
            bp.location,
            report.classification,
            report.local_monodromy.as_slice()
        );
    }
    Ok(())
}
