//! Scan `σ` and `f(z) = Σ_j (s − r_j(z))⁻¹` over a grid, locate the zeros of
//! `f`, check their isolation and the mean-value property, and write the CSV
//! and JSON outputs.
//!
//! ```text
//! cargo run --example grid_scan [output-dir]
//! ```

use std::path::PathBuf;

use resatlas::resonance::ShiftEvaluator;
use resatlas::scan::{grid_scan, holomorphy_check, Region};
use resatlas::{build_ensemble, EnsembleKind, EnsembleSpec};

fn main() -> resatlas::Result<()> {
    let dir = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(std::env::temp_dir);
    let p = build_ensemble(&EnsembleSpec {
        kind: EnsembleKind::DenseGaussian,
        n: 8,
        k: 3,
        seed: 1,
        scale: 1.0,
    })?;
    let region = Region::new(-2.0, 2.0, -1.0, 1.0)?;
    let report = grid_scan(&p, &region, 81, 41, 0.0)?;
    let s = &report.summary;
    println!(
        "{} nodes, {} skipped (margin {:.1e})",
        report.records.len(),
        s.skipped,
        report.margin
    );
    println!(
        "|f| range [{:.3e}, {:.3e}], median {:.3e}",
        s.abs_f[0], s.abs_f[1], s.median_abs_f
    );
    for z in &s.zero_candidates {
        println!(
            "  zero {:.8}  |f| = {:.1e}  annulus min {:.2e}  isolated {}",
            z.z, z.abs_f, z.annulus_min, z.isolated
        );
    }

    let eval = ShiftEvaluator::new(&p, 0.0)?;
    let upper = Region::new(-2.0, 2.0, 0.05, 1.0)?;
    let worst = holomorphy_check(&eval, &upper, 100)?
        .iter()
        .map(|(_, _, r)| *r)
        .fold(0.0, f64::max);
    println!("mean-value residual over 100 circles: {worst:.2e}");

    let csv = dir.join("resatlas-scan.csv");
    let mut bytes = Vec::new();
    report.write_csv(&mut bytes)?;
    std::fs::write(&csv, bytes)?;
    std::fs::write(
        csv.with_extension("json"),
        report.summary_json().to_string(),
    )?;
    println!("wrote {}", csv.display());
    Ok(())
}
