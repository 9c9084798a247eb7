//! Evaluate the transfer matrix `M(z) = F(H₀ − z)⁻¹F*J`, read off the
//! coupling resonances `r_j(z) = −1/σ_j(z)` and check each one against the
//! coupled operator `H₀ + r_j V`.
//!
//! ```text
//! cargo run --example transfer_resonances
//! ```

use resatlas::numerics::c;
use resatlas::resonance::{
    coupling_consistency_with, resonances_at, TransferFamily, DEFAULT_ZERO_TOL,
};
use resatlas::{build_ensemble, EnsembleKind, EnsembleSpec, ResonanceProblem};

fn main() -> resatlas::Result<()> {
    // rank one: σ(z) = −z/(z² − 1), so r(z) = (z² − 1)/z
    let w = c(1.0 / 2f64.sqrt(), 0.0);
    let rank_one = ResonanceProblem::rank_one(&[1.0, -1.0], &[w, w])?;
    let family = TransferFamily::new(&rank_one)?;
    for z in [c(0.0, 0.5), c(0.3, 1.0), c(0.0, 0.0)] {
        let sample = family.sample(z, DEFAULT_ZERO_TOL)?;
        let r = resonances_at(&sample);
        println!(
            "rank one  z = {z:<12} σ = {:?}  r = {:?}  zero_count = {}",
            sample.sigmas, r.values, sample.zero_count
        );
    }

    let p = build_ensemble(&EnsembleSpec {
        kind: EnsembleKind::DenseGaussian,
        n: 10,
        k: 4,
        seed: 3,
        scale: 1.0,
    })?;
    let family = TransferFamily::new(&p)?;
    let z = c(0.2, 0.4);
    let sample = family.sample(z, DEFAULT_ZERO_TOL)?;
    println!(
        "\ndense n=10 k=4 at z = {z}: condition {:.2}",
        sample.condition
    );
    for r in resonances_at(&sample).values {
        let cc = coupling_consistency_with(&p, &family, z, r)?;
        println!(
            "  r = {r:.6}  dist(z, spec(H₀ + rV)) = {:.1e}  σ_min(I + rM) = {:.1e}  ok = {}",
            cc.eig_distance,
            cc.sing_min,
            cc.passes(z)
        );
    }

    match family.sample(c(family.spectrum()[0], 0.0), DEFAULT_ZERO_TOL) {
        Err(e) => println!("\non the spectrum: {e}"),
        Ok(_) => unreachable!(),
    }
    Ok(())
}
