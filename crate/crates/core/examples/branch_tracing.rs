//! Follow the resonance branches along a path and around a loop, verifying
//! every sample against the coupled operator.
//!
//! ```text
//! cargo run --example branch_tracing
//! ```

use resatlas::continuation::{trace_branches, PathSpec, Tracker};
use resatlas::numerics::c;
use resatlas::{build_ensemble, EnsembleKind, EnsembleSpec};

fn main() -> resatlas::Result<()> {
    let p = build_ensemble(&EnsembleSpec {
        kind: EnsembleKind::Jacobi,
        n: 8,
        k: 3,
        seed: 2,
        scale: 1.0,
    })?;

    let open = PathSpec::open(vec![c(0.5, 1.0), c(2.0, 1.2), c(3.5, 0.8)], 0.05, 1e-10);
    let fam = trace_branches(&p, &open)?;
    println!("open path: {} samples", fam.samples.len());
    for (label, start) in fam.start_values().iter().enumerate() {
        println!(
            "  branch {label}: {start:.5} → {:.5}",
            fam.end_values()[label]
        );
    }
    println!("  consistency: {:?}", fam.consistency.unwrap());

    // this loop encloses the branch point near 1.361 + 0.158i
    let tracker = Tracker::new(&p)?;
    let around = PathSpec::circle(c(1.3607, 0.158), 0.03, 32);
    let m = tracker.monodromy(&around)?;
    println!(
        "loop monodromy {:?}, periods {:?}",
        m.as_slice(),
        m.periods()
    );
    println!(
        "reversed loop  {:?}",
        tracker.monodromy(&around.reversed())?.as_slice()
    );
    let twice = tracker.trace_repeated(&around, 2)?;
    println!("two turns      {:?}", twice.composed().as_slice());
    Ok(())
}
