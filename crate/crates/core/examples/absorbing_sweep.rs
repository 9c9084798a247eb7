//! Fans of approach rays into many targets over a seeded ensemble, counting
//! the classification of every ray.
//!
//! ```text
//! cargo run --release --example absorbing_sweep
//! ```

use resatlas::numerics::c;
use resatlas::scan::{absorbing_sweep, RayFan, Region, SweepSummary};
use resatlas::{build_ensemble, EnsembleKind, EnsembleSpec};

fn main() -> resatlas::Result<()> {
    let kinds = [
        EnsembleKind::Jacobi,
        EnsembleKind::DenseGaussian,
        EnsembleKind::RankKPerturbation,
    ];
    let mut total = SweepSummary::default();
    for seed in 0..20u64 {
        let spec = EnsembleSpec {
            kind: kinds[seed as usize % 3],
            n: 8,
            k: 1 + seed as usize % 4,
            seed,
            scale: 1.0,
        };
        let p = build_ensemble(&spec)?;
        let region = Region::new(-3.0, 5.0, -2.0, 2.0)?;
        let fan = RayFan {
            targets: vec![c(0.25, 0.5), c(1.5, -0.3), c(3.0, 1.0)],
            directions_per_target: 8,
        };
        total.merge(absorbing_sweep(&p, &region, &fan, 6)?);
    }
    println!(
        "{} rays: regular {}, pole_like {:?}, branching {}, suspected_absorbing {}, errors {}",
        total.rays,
        total.regular,
        total.pole_like,
        total.branching,
        total.suspected_absorbing,
        total.errors.len()
    );
    for finding in &total.findings {
        println!("{}", finding.to_json());
    }
    Ok(())
}
