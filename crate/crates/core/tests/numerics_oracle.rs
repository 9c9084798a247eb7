//! Linear-algebra kernels against independent oracles.

use resatlas::numerics::{c, general_eigen, hermitian_eigen, singular_values, solve_shifted};
use resatlas::problem::SeededRng;
use resatlas::{Complex64, ComplexMatrix};

/// `det(A)` by Gaussian elimination with partial pivoting.
fn det(mut a: ComplexMatrix) -> Complex64 {
    let n = a.nrows();
    let mut d = c(1.0, 0.0);
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&x, &y| a[(x, col)].norm().total_cmp(&a[(y, col)].norm()))
            .unwrap();
        if a[(pivot, col)].norm() == 0.0 {
            return c(0.0, 0.0);
        }
        if pivot != col {
            a.swap_rows(pivot, col);
            d = -d;
        }
        d *= a[(col, col)];
        for row in col + 1..n {
            let factor = a[(row, col)] / a[(col, col)];
            for k in col..n {
                let v = a[(col, k)];
                a[(row, k)] -= factor * v;
            }
        }
    }
    d
}

/// Real roots of `λ ↦ det(H − λI)` for Hermitian `H`, by sign changes on a
/// fine grid over the Gershgorin interval followed by bisection.
fn charpoly_roots(h: &ComplexMatrix) -> Vec<f64> {
    let n = h.nrows();
    let radius = (0..n)
        .map(|i| (0..n).map(|j| h[(i, j)].norm()).sum::<f64>())
        .fold(0.0, f64::max);
    let p = |x: f64| det(h - ComplexMatrix::identity(n, n) * c(x, 0.0)).re;
    let steps = 40_000;
    let (lo, hi) = (-radius - 1.0, radius + 1.0);
    let mut roots = Vec::new();
    let mut prev_x = lo;
    let mut prev = p(lo);
    for q in 1..=steps {
        let x = lo + (hi - lo) * q as f64 / steps as f64;
        let v = p(x);
        if prev == 0.0 {
            roots.push(prev_x);
        } else if prev.signum() != v.signum() && v != 0.0 {
            let (mut a, mut b, mut fa) = (prev_x, x, prev);
            for _ in 0..200 {
                let m = 0.5 * (a + b);
                let fm = p(m);
                if fm == 0.0 || (b - a) < 1e-15 * (1.0 + m.abs()) {
                    a = m;
                    b = m;
                    break;
                }
                if fm.signum() == fa.signum() {
                    a = m;
                    fa = fm;
                } else {
                    b = m;
                }
            }
            roots.push(0.5 * (a + b));
        }
        prev_x = x;
        prev = v;
    }
    roots
}

/// Eigenvalues of `SeededRng::new(2024).hermitian_matrix(8)` from the
/// determinant-expansion oracle.
const FROZEN_EIGENVALUES: [f64; 8] = [
    -2.578120633606795,
    -1.4565889498442501,
    -0.4665764432090168,
    0.3352771413070219,
    1.0303375031202069,
    1.5862357014970472,
    1.9714277809516663,
    3.9772877751333806,
];

#[test]
fn hermitian_eigen_matches_determinant_oracle() {
    let h = SeededRng::new(2024).hermitian_matrix(8);
    let roots = charpoly_roots(&h);
    assert_eq!(roots.len(), 8);
    let eig = hermitian_eigen(&h).unwrap();
    for (a, b) in eig.values.iter().zip(&roots) {
        assert!((a - b).abs() < 1e-9, "{a} vs {b}");
    }
    for (a, b) in eig.values.iter().zip(&FROZEN_EIGENVALUES) {
        assert!((a - b).abs() < 1e-9, "{a} vs frozen {b}");
    }
}

#[test]
fn companion_matrix_roots() {
    // companion matrix of z² − 1
    let a =
        ComplexMatrix::from_row_slice(2, 2, &[c(0.0, 0.0), c(1.0, 0.0), c(1.0, 0.0), c(0.0, 0.0)]);
    let eig = general_eigen(&a).unwrap();
    assert!((eig.values[0] - c(1.0, 0.0)).norm() < 1e-14);
    assert!((eig.values[1] - c(-1.0, 0.0)).norm() < 1e-14);
    for v in &eig.values {
        assert!(det(&a - ComplexMatrix::identity(2, 2) * *v).norm() < 1e-14);
    }
}

#[test]
fn general_eigen_roots_of_determinant() {
    let mut rng = SeededRng::new(77);
    let a = rng.gaussian_matrix(7, 7);
    let eig = general_eigen(&a).unwrap();
    assert!(eig.residual_bound < 1e-12);
    for v in &eig.values {
        // relative to the product of the other gaps, det(A − vI) must vanish
        let d = det(&a - ComplexMatrix::identity(7, 7) * *v).norm();
        let others: f64 = eig
            .values
            .iter()
            .filter(|w| *w != v)
            .map(|w| (w - v).norm())
            .product();
        assert!(d / others < 1e-10, "{v}: {d} vs {others}");
    }
}

#[test]
fn singular_values_square_to_gram_eigenvalues() {
    let a = SeededRng::new(5).gaussian_matrix(6, 4);
    let s = singular_values(&a).unwrap();
    let gram = a.adjoint() * &a;
    let mut e = hermitian_eigen(&gram).unwrap().values;
    e.reverse();
    assert_eq!(s.len(), 4);
    for (sj, ej) in s.iter().zip(&e) {
        assert!((sj * sj - ej).abs() < 1e-10 * ej.abs().max(1.0));
    }
}

#[test]
fn shifted_solve_residual() {
    let mut rng = SeededRng::new(9);
    let h = rng.hermitian_matrix(10);
    let b = rng.gaussian_matrix(10, 3);
    let z = c(0.3, 0.7);
    let sol = solve_shifted(&h, z, &b).unwrap();
    let shifted = &h - ComplexMatrix::identity(10, 10) * z;
    let residual = (&shifted * &sol.x - &b).norm() / b.norm();
    assert!(residual < 1e-12, "{residual}");
    let direct = shifted.lu().solve(&b).unwrap();
    assert!((direct - &sol.x).norm() < 1e-10 * sol.x.norm());
}
