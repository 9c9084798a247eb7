//! Dense complex linear algebra: Hermitian and general eigensolvers, singular
//! values, and resolvent solves against a Hermitian matrix.
//!
//! The factorizations themselves come from `nalgebra`; this module fixes the
//! orderings, tolerances and error reporting the rest of the crate relies on.

use nalgebra::{DMatrix, Schur, SymmetricEigen};
use num_complex::Complex64;

use crate::error::{Error, Result};

/// Dense complex matrix. Entries must be finite at every public boundary.
pub type ComplexMatrix = DMatrix<Complex64>;

/// Relative Hermiticity tolerance used throughout the crate.
pub const HERMITIAN_TOL: f64 = 1e-12;

/// Relative separation below which `z` counts as a point of the spectrum.
pub const SPECTRUM_GUARD: f64 = 1e-13;

const SCHUR_EPS: f64 = 1e-15;
const SCHUR_MAX_ITER: usize = 10_000;

pub fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

pub fn ensure_finite(a: &ComplexMatrix, which: &str) -> Result<()> {
    if a.iter().all(|x| x.re.is_finite() && x.im.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite {
            which: which.to_string(),
        })
    }
}

fn ensure_square(a: &ComplexMatrix) -> Result<()> {
    if a.nrows() == a.ncols() {
        Ok(())
    } else {
        Err(Error::NotSquare {
            rows: a.nrows(),
            cols: a.ncols(),
        })
    }
}

/// Relative Hermiticity defect `‖A − A*‖_F / ‖A‖_F` (absolute when `A = 0`).
pub fn hermitian_defect(a: &ComplexMatrix) -> f64 {
    let diff = (a - a.adjoint()).norm();
    let scale = a.norm();
    if scale > 0.0 {
        diff / scale
    } else {
        diff
    }
}

/// Fails with `NotHermitian` unless `a` is square, finite, and Hermitian to
/// [`HERMITIAN_TOL`].
pub fn ensure_hermitian(a: &ComplexMatrix, which: &str) -> Result<()> {
    ensure_finite(a, which)?;
    ensure_square(a)?;
    let defect = hermitian_defect(a);
    if defect > HERMITIAN_TOL {
        return Err(Error::NotHermitian {
            which: which.to_string(),
            defect,
        });
    }
    Ok(())
}

/// Spectral decomposition `A = U Λ U*` of a Hermitian matrix.
#[derive(Debug, Clone)]
pub struct HermitianEigen {
    /// Ascending.
    pub values: Vec<f64>,
    /// Orthonormal eigenvectors stored as columns, in the order of `values`.
    pub vectors: ComplexMatrix,
}

impl HermitianEigen {
    pub fn reconstruct(&self) -> ComplexMatrix {
        let n = self.values.len();
        let mut scaled = self.vectors.clone();
        for (col, &lambda) in self.values.iter().enumerate() {
            for row in 0..n {
                scaled[(row, col)] *= lambda;
            }
        }
        &scaled * self.vectors.adjoint()
    }

    /// Spectral norm, i.e. the largest `|λ|`.
    pub fn norm(&self) -> f64 {
        self.values.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }
}

pub fn hermitian_eigen(a: &ComplexMatrix) -> Result<HermitianEigen> {
    ensure_hermitian(a, "A")?;
    let n = a.nrows();
    // Symmetrize so the solver sees an exactly Hermitian input.
    let sym = (a + a.adjoint()).scale(0.5);
    let eig =
        SymmetricEigen::try_new(sym, SCHUR_EPS, SCHUR_MAX_ITER).ok_or(Error::NoConvergence {
            budget: SCHUR_MAX_ITER,
        })?;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = ComplexMatrix::from_fn(n, n, |r, col| eig.eigenvectors[(r, order[col])]);
    Ok(HermitianEigen { values, vectors })
}

/// Eigenvalues of a general square matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct EigenResult {
    /// Descending magnitude; equal magnitudes ordered by ascending argument.
    pub values: Vec<Complex64>,
    /// Relative Schur backward error `‖A − QTQ*‖_F / ‖A‖_F`. Every computed
    /// eigenvalue is an exact eigenvalue of a perturbation of `A` this small.
    pub residual_bound: f64,
}

pub fn magnitude_order(a: &Complex64, b: &Complex64) -> std::cmp::Ordering {
    b.norm()
        .total_cmp(&a.norm())
        .then_with(|| a.arg().total_cmp(&b.arg()))
}

pub fn general_eigen(a: &ComplexMatrix) -> Result<EigenResult> {
    ensure_finite(a, "A")?;
    ensure_square(a)?;
    let n = a.nrows();
    if n == 0 {
        return Ok(EigenResult {
            values: Vec::new(),
            residual_bound: 0.0,
        });
    }
    if n == 1 {
        return Ok(EigenResult {
            values: vec![a[(0, 0)]],
            residual_bound: 0.0,
        });
    }
    let schur =
        Schur::try_new(a.clone(), SCHUR_EPS, SCHUR_MAX_ITER).ok_or(Error::NoConvergence {
            budget: SCHUR_MAX_ITER,
        })?;
    let (q, t) = schur.unpack();
    let mut values: Vec<Complex64> = (0..n).map(|i| t[(i, i)]).collect();
    values.sort_by(magnitude_order);
    let scale = a.norm();
    let backward = (a - &q * &t * q.adjoint()).norm();
    let residual_bound = if scale > 0.0 { backward / scale } else { 0.0 };
    Ok(EigenResult {
        values,
        residual_bound,
    })
}

/// Singular values in descending order.
pub fn singular_values(a: &ComplexMatrix) -> Result<Vec<f64>> {
    ensure_finite(a, "A")?;
    if a.is_empty() {
        return Ok(Vec::new());
    }
    let mut s: Vec<f64> = a.clone().singular_values().iter().copied().collect();
    s.sort_by(|x, y| y.total_cmp(x));
    Ok(s)
}

/// Trace norm `Σ s_j`.
pub fn trace_norm(a: &ComplexMatrix) -> Result<f64> {
    Ok(singular_values(a)?.iter().sum())
}

/// Spectral norm `s_1`.
pub fn spectral_norm(a: &ComplexMatrix) -> Result<f64> {
    Ok(singular_values(a)?.first().copied().unwrap_or(0.0))
}

/// Result of a shifted solve `(H − z) X = B`.
#[derive(Debug, Clone)]
pub struct ShiftedSolve {
    pub x: ComplexMatrix,
    /// `max_j |λ_j − z| / min_j |λ_j − z|`.
    pub condition: f64,
}

/// Resolvent of a fixed Hermitian matrix, reusable across many `z`.
#[derive(Debug, Clone)]
pub struct SpectralResolvent {
    eigen: HermitianEigen,
}

impl SpectralResolvent {
    pub fn new(h: &ComplexMatrix) -> Result<Self> {
        Ok(Self {
            eigen: hermitian_eigen(h)?,
        })
    }

    pub fn eigen(&self) -> &HermitianEigen {
        &self.eigen
    }

    pub fn spectrum(&self) -> &[f64] {
        &self.eigen.values
    }

    pub fn norm(&self) -> f64 {
        self.eigen.norm()
    }

    /// Distance from `z` to the spectrum.
    pub fn separation(&self, z: Complex64) -> f64 {
        self.eigen
            .values
            .iter()
            .map(|&l| (c(l, 0.0) - z).norm())
            .fold(f64::INFINITY, f64::min)
    }

    /// Checks the spectrum guard and returns `(min |λ−z|, max |λ−z|)`.
    pub fn guard(&self, z: Complex64) -> Result<(f64, f64)> {
        if !(z.re.is_finite() && z.im.is_finite()) {
            return Err(Error::InvalidArgument(format!("non-finite z = {z}")));
        }
        let mut lo = f64::INFINITY;
        let mut hi = 0.0_f64;
        for &l in &self.eigen.values {
            let d = (c(l, 0.0) - z).norm();
            lo = lo.min(d);
            hi = hi.max(d);
        }
        if lo == 0.0 || lo < SPECTRUM_GUARD * self.norm() {
            return Err(Error::SpectrumHit { z, distance: lo });
        }
        Ok((lo, hi))
    }

    /// Diagonal of `(Λ − z)^{-1}` after the spectrum guard.
    pub fn inverse_gaps(&self, z: Complex64) -> Result<(Vec<Complex64>, f64)> {
        let (lo, hi) = self.guard(z)?;
        let d = self
            .eigen
            .values
            .iter()
            .map(|&l| (c(l, 0.0) - z).inv())
            .collect();
        Ok((d, hi / lo))
    }

    pub fn solve(&self, z: Complex64, b: &ComplexMatrix) -> Result<ShiftedSolve> {
        let n = self.eigen.values.len();
        if b.nrows() != n {
            return Err(Error::DimensionMismatch(format!(
                "right-hand side has {} rows, expected {n}",
                b.nrows()
            )));
        }
        ensure_finite(b, "B")?;
        let (d, condition) = self.inverse_gaps(z)?;
        let u = &self.eigen.vectors;
        let mut y = u.adjoint() * b;
        for (row, di) in d.iter().enumerate() {
            for col in 0..y.ncols() {
                y[(row, col)] *= di;
            }
        }
        Ok(ShiftedSolve {
            x: u * y,
            condition,
        })
    }
}

/// Solves `(H − z) X = B` for Hermitian `H`.
pub fn solve_shifted(h: &ComplexMatrix, z: Complex64, b: &ComplexMatrix) -> Result<ShiftedSolve> {
    SpectralResolvent::new(h)?.solve(z, b)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn real(rows: usize, cols: usize, data: &[f64]) -> ComplexMatrix {
        ComplexMatrix::from_row_slice(
            rows,
            cols,
            &data.iter().map(|&x| c(x, 0.0)).collect::<Vec<_>>(),
        )
    }

    #[test]
    fn hermitian_small_cases() {
        let e = hermitian_eigen(&real(2, 2, &[2.0, 0.0, 0.0, 1.0])).unwrap();
        assert_eq!(e.values, vec![1.0, 2.0]);
        let e = hermitian_eigen(&real(2, 2, &[0.0, 1.0, 1.0, 0.0])).unwrap();
        assert!((e.values[0] + 1.0).abs() < 1e-15 && (e.values[1] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn hermitian_rejects_asymmetric() {
        let err = hermitian_eigen(&real(2, 2, &[0.0, 1.0, 0.0, 0.0])).unwrap_err();
        assert!(matches!(err, Error::NotHermitian { .. }));
        let mut a = real(2, 2, &[1.0, 0.0, 0.0, 1.0]);
        a[(0, 0)] = c(f64::NAN, 0.0);
        assert!(matches!(hermitian_eigen(&a), Err(Error::NonFinite { .. })));
    }

    #[test]
    fn general_small_cases() {
        let e = general_eigen(&real(2, 2, &[0.0, 1.0, 0.0, 0.0])).unwrap();
        assert!(e.values.iter().all(|v| v.norm() < 1e-12));

        let a = ComplexMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![
            c(0.0, 3.0),
            c(2.0, 0.0),
            c(-1.0, 0.0),
        ]));
        let e = general_eigen(&a).unwrap();
        let want = [c(0.0, 3.0), c(2.0, 0.0), c(-1.0, 0.0)];
        for (got, want) in e.values.iter().zip(want) {
            assert!((got - want).norm() < 1e-14);
        }

        // companion matrix of z^2 - 1
        let e = general_eigen(&real(2, 2, &[0.0, 1.0, 1.0, 0.0])).unwrap();
        let mut re: Vec<f64> = e.values.iter().map(|v| v.re).collect();
        re.sort_by(f64::total_cmp);
        assert!((re[0] + 1.0).abs() < 1e-14 && (re[1] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn magnitude_ties_break_on_argument() {
        let a = ComplexMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![
            c(1.0, 0.0),
            c(-1.0, 0.0),
            c(0.0, -1.0),
            c(0.0, 1.0),
        ]));
        let e = general_eigen(&a).unwrap();
        let args: Vec<f64> = e.values.iter().map(|v| v.arg()).collect();
        assert!(args.windows(2).all(|w| w[0] <= w[1]), "{args:?}");
    }

    #[test]
    fn singular_values_small_cases() {
        assert_eq!(
            singular_values(&real(2, 2, &[0.0, 1.0, 0.0, 0.0])).unwrap(),
            vec![1.0, 0.0]
        );
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let u = ComplexMatrix::from_row_slice(2, 2, &[c(s, 0.0), c(0.0, s), c(0.0, s), c(s, 0.0)]);
        for v in singular_values(&u).unwrap() {
            assert!((v - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn shifted_solve_diagonal_resolvent() {
        let h = real(2, 2, &[1.0, 0.0, 0.0, -1.0]);
        let out = solve_shifted(&h, c(0.0, 1.0), &ComplexMatrix::identity(2, 2)).unwrap();
        assert!((out.x[(0, 0)] - c(1.0, -1.0).inv()).norm() < 1e-15);
        assert!((out.x[(1, 1)] - c(-1.0, -1.0).inv()).norm() < 1e-15);
        assert!(out.x[(0, 1)].norm() < 1e-15);
        assert!((out.condition - 1.0).abs() < 1e-15);
    }

    #[test]
    fn shifted_solve_in_spectrum() {
        let h = real(2, 2, &[1.0, 0.0, 0.0, -1.0]);
        let err = solve_shifted(&h, c(1.0, 0.0), &ComplexMatrix::identity(2, 2)).unwrap_err();
        assert!(matches!(err, Error::SpectrumHit { .. }));
    }
}
