//! The shift identity: `(s − r_j(z))⁻¹` are the eigenvalues of
//! `F(H₀ + sV − z)⁻¹F*J`, and their sum is its trace `f(z)`.
//!
//! ```text
//! cargo run --example shift_identity
//! ```

use resatlas::numerics::c;
use resatlas::resonance::ShiftEvaluator;
use resatlas::{build_ensemble, EnsembleKind, EnsembleSpec};

fn main() -> resatlas::Result<()> {
    let p = build_ensemble(&EnsembleSpec {
        kind: EnsembleKind::DenseGaussian,
        n: 12,
        k: 4,
        seed: 12,
        scale: 1.0,
    })?;
    println!(
        "{:>16} {:>6} {:>12} {:>12} {:>12}",
        "z", "s", "shift res", "|Σ − tr|", "‖M_s‖₁"
    );
    for (z, s) in [
        (c(0.3, 0.8), 0.7),
        (c(-1.0, 0.2), -0.5),
        (c(0.5, -0.6), 1.9),
        (c(2.0, 1.5), 0.0),
    ] {
        let eval = ShiftEvaluator::new(&p, s)?;
        let (dist, _) = eval.shift_residual(z)?;
        let h = eval.herglotz(z)?;
        println!(
            "{:>16} {s:>6} {dist:>12.2e} {:>12.2e} {:>12.4}",
            format!("{z}"),
            h.residual,
            h.trace_norm_bound
        );
    }
    Ok(())
}
