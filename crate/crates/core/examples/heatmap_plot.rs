//! Render a scan as an SVG heatmap of `log10 σ_min` with the spectrum of `H₀`
//! marked on the real axis.
//!
//! ```text
//! cargo run --example heatmap_plot [output.svg]
//! ```

use std::path::PathBuf;

use resatlas::cli::{render_svg, ScanGrid};
use resatlas::resonance::TransferFamily;
use resatlas::scan::{grid_scan, Region};
use resatlas::{build_ensemble, EnsembleKind, EnsembleSpec};

fn main() -> resatlas::Result<()> {
    let out = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("resatlas-sigma-min.svg"));
    let p = build_ensemble(&EnsembleSpec {
        kind: EnsembleKind::Jacobi,
        n: 8,
        k: 3,
        seed: 2,
        scale: 1.0,
    })?;
    let report = grid_scan(&p, &Region::new(-0.5, 4.5, -1.0, 1.0)?, 100, 40, 0.0)?;
    let mut csv = Vec::new();
    report.write_csv(&mut csv)?;
    let grid = ScanGrid::from_csv(&csv, "sigma_min")?;
    let spectrum = TransferFamily::new(&p)?.spectrum().to_vec();
    std::fs::write(&out, render_svg(&grid, "sigma_min", &spectrum))?;
    println!("wrote {} ({}x{} cells)", out.display(), grid.nx, grid.ny);
    Ok(())
}
