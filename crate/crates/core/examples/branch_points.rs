//! Locate branching points with the monodromy quadtree and confirm that each
//! cycle closes after as many turns as its length.
//!
//! ```text
//! cargo run --example branch_points
//! ```

use resatlas::continuation::{locate_branch_points, Rect, Tracker};
use resatlas::{build_ensemble, EnsembleKind, EnsembleSpec};

fn main() -> resatlas::Result<()> {
    let p = build_ensemble(&EnsembleSpec {
        kind: EnsembleKind::Jacobi,
        n: 8,
        k: 3,
        seed: 2,
        scale: 1.0,
    })?;
    let region = Rect::new(-0.5, 4.5, 0.05, 2.5)?;
    let points = locate_branch_points(&p, region, 8)?;
    let tracker = Tracker::new(&p)?;
    println!(
        "{} branch point(s) in {:?}",
        points.len(),
        region.as_array()
    );
    for bp in &points {
        let turns: usize = bp.periods.iter().product();
        let fam = tracker.trace_repeated(&bp.loop_path(bp.radius), turns)?;
        println!(
            "  {:.6} radius {:.1e} monodromy {:?} periods {:?} closes after {turns} turn(s): {}",
            bp.location,
            bp.radius,
            bp.monodromy.as_slice(),
            bp.periods,
            fam.composed().is_identity()
        );
    }
    Ok(())
}
