//! Optimal bipartite matching of complex multisets under `|a − b|` cost.

use num_complex::Complex64;

/// Solves the square assignment problem, returning `col[row]` that minimizes
/// the total cost. Sizes up to three are enumerated exhaustively; larger ones
/// use the Hungarian method with row/column potentials.
pub fn optimal_assignment(cost: &[Vec<f64>]) -> Vec<usize> {
    let n = cost.len();
    debug_assert!(cost.iter().all(|row| row.len() == n));
    match n {
        0 => Vec::new(),
        1 => vec![0],
        2 | 3 => exhaustive(cost),
        _ => hungarian(cost),
    }
}

fn exhaustive(cost: &[Vec<f64>]) -> Vec<usize> {
    let n = cost.len();
    let mut best: Option<(f64, Vec<usize>)> = None;
    let mut perm: Vec<usize> = (0..n).collect();
    loop {
        let total: f64 = perm.iter().enumerate().map(|(i, &j)| cost[i][j]).sum();
        if best.as_ref().is_none_or(|(b, _)| total < *b) {
            best = Some((total, perm.clone()));
        }
        if !next_permutation(&mut perm) {
            break;
        }
    }
    best.map(|(_, p)| p).unwrap_or_default()
}

/// Lexicographic successor; returns false after the last permutation.
fn next_permutation(p: &mut [usize]) -> bool {
    let n = p.len();
    if n < 2 {
        return false;
    }
    let mut i = n - 1;
    while i > 0 && p[i - 1] >= p[i] {
        i -= 1;
    }
    if i == 0 {
        return false;
    }
    let mut j = n - 1;
    while p[j] <= p[i - 1] {
        j -= 1;
    }
    p.swap(i - 1, j);
    p[i..].reverse();
    true
}

fn hungarian(cost: &[Vec<f64>]) -> Vec<usize> {
    let n = cost.len();
    let inf = f64::INFINITY;
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    // owner[j]: row (1-based) assigned to column j; 0 = free
    let mut owner = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for row in 1..=n {
        owner[0] = row;
        let mut j0 = 0;
        let mut minv = vec![inf; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = owner[j0];
            let mut delta = inf;
            let mut j1 = 0;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[owner[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if owner[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            owner[j0] = owner[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut assignment = vec![0; n];
    for j in 1..=n {
        assignment[owner[j] - 1] = j - 1;
    }
    assignment
}

/// Assignment of `a` onto `b` (equal lengths) minimizing `Σ |a_i − b_σ(i)|`.
pub fn match_multisets(a: &[Complex64], b: &[Complex64]) -> Vec<usize> {
    let cost: Vec<Vec<f64>> = a
        .iter()
        .map(|x| b.iter().map(|y| (x - y).norm()).collect())
        .collect();
    optimal_assignment(&cost)
}

/// Largest pair distance under the optimal assignment. The shorter multiset
/// is padded with zeros, which stand for numerically vanishing eigenvalues.
pub fn matching_distance(a: &[Complex64], b: &[Complex64]) -> f64 {
    let n = a.len().max(b.len());
    let pad = |v: &[Complex64]| {
        let mut v = v.to_vec();
        v.resize(n, Complex64::new(0.0, 0.0));
        v
    };
    let (a, b) = (pad(a), pad(b));
    let perm = match_multisets(&a, &b);
    perm.iter()
        .enumerate()
        .map(|(i, &j)| (a[i] - b[j]).norm())
        .fold(0.0, f64::max)
}
