//! Generate each ensemble, validate it and round-trip it through the JSON
//! problem format.
//!
//! ```text
//! cargo run --example problem_files
//! ```

use resatlas::{build_ensemble, EnsembleKind, EnsembleSpec, ResonanceProblem};

fn main() -> resatlas::Result<()> {
    for kind in [
        EnsembleKind::Diagonal,
        EnsembleKind::Jacobi,
        EnsembleKind::DenseGaussian,
        EnsembleKind::RankKPerturbation,
    ] {
        let spec = EnsembleSpec {
            kind,
            n: 6,
            k: 2,
            seed: 42,
            scale: 1.0,
        };
        let p = build_ensemble(&spec)?;
        let report = p.validate();
        let bytes = p.to_json();
        let back = ResonanceProblem::from_json(&bytes)?;
        println!(
            "{kind:<20} n={} k={} valid={} json={} bytes round-trip={}",
            p.n(),
            p.k(),
            report.passed(),
            bytes.len(),
            back == p
        );
    }

    let minimal = br#"{"n":1,"k":1,"h0":[0],"f":[[[1,0]]],"j":[[[1,0]]]}"#;
    let p = ResonanceProblem::from_json(minimal)?;
    println!("minimal document: n={} k={}", p.n(), p.k());

    match ResonanceProblem::from_json(br#"{"n":1,"k":1,"h0":[0],"f":[[[1,0]]]}"#) {
        Err(e) => println!("missing field rejected: {e}"),
        Ok(_) => unreachable!(),
    }
    Ok(())
}
