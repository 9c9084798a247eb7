//! Prefix sums of `|λ_j|^p` against prefix sums of `s_j^p`: strict slack for
//! a Jordan block, equality for a normal matrix.
//!
//! ```text
//! cargo run --example weyl_inequality
//! ```

use resatlas::numerics::c;
use resatlas::problem::SeededRng;
use resatlas::resonance::weyl_report;
use resatlas::ComplexMatrix;

fn main() -> resatlas::Result<()> {
    let jordan =
        ComplexMatrix::from_row_slice(2, 2, &[c(0.0, 0.0), c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0)]);
    let r = weyl_report(&jordan, 1.0)?;
    println!(
        "Jordan block: λ-sums {:?} s-sums {:?} slack {}",
        r.prefix_lambda_sums, r.prefix_s_sums, r.min_slack
    );

    let diag = ComplexMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![
        c(0.0, 3.0),
        c(2.0, 0.0),
        c(-1.0, 0.0),
    ]));
    println!(
        "normal matrix: slack {:.1e}",
        weyl_report(&diag, 1.0)?.min_slack
    );

    let a = SeededRng::new(10).gaussian_matrix(10, 10);
    for p in [0.5, 1.0, 2.0] {
        let r = weyl_report(&a, p)?;
        println!(
            "random 10×10, p = {p}: min slack {:.4} holds = {}",
            r.min_slack,
            r.holds()
        );
    }
    Ok(())
}
