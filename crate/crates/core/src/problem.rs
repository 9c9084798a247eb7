//! The pair `(H₀, V = F*JF)`: construction, validation, seeded ensembles and
//! the JSON problem file.

use nalgebra::DVector;
use num_complex::Complex64;
use rand_core::{RngCore, SeedableRng};
use rand_xoshiro::SplitMix64;
use serde_json::{json, Map, Value};

use crate::error::{Error, Result};
use crate::numerics::{c, ensure_finite, hermitian_defect, ComplexMatrix, HERMITIAN_TOL};

/// A finite-dimensional pair `H₀` (n×n) and `V = F*JF` with `F` k×n and `J`
/// k×k.
#[derive(Debug, Clone, PartialEq)]
pub struct ResonanceProblem {
    h0: ComplexMatrix,
    f: ComplexMatrix,
    j: ComplexMatrix,
}

impl ResonanceProblem {
    /// Checks shapes and finiteness. Hermiticity is reported by
    /// [`ResonanceProblem::validate`].
    pub fn new(h0: ComplexMatrix, f: ComplexMatrix, j: ComplexMatrix) -> Result<Self> {
        let n = h0.nrows();
        let k = j.nrows();
        if n == 0 || k == 0 {
            return Err(Error::DimensionMismatch(
                "n and k must be at least 1".into(),
            ));
        }
        if h0.ncols() != n {
            return Err(Error::DimensionMismatch(format!(
                "h0 is {}x{}",
                n,
                h0.ncols()
            )));
        }
        if j.ncols() != k {
            return Err(Error::DimensionMismatch(format!(
                "j is {}x{}",
                k,
                j.ncols()
            )));
        }
        if f.nrows() != k || f.ncols() != n {
            return Err(Error::DimensionMismatch(format!(
                "f is {}x{}, expected {k}x{n}",
                f.nrows(),
                f.ncols()
            )));
        }
        ensure_finite(&h0, "h0")?;
        ensure_finite(&f, "f")?;
        ensure_finite(&j, "j")?;
        Ok(Self { h0, f, j })
    }

    /// `H₀ = diag(λ)`, `F = v*` (a single row), `J = [1]`: the perturbation
    /// `V = ⟨v, ·⟩ v`.
    pub fn rank_one(lambda: &[f64], v: &[Complex64]) -> Result<Self> {
        let h0 = ComplexMatrix::from_diagonal(&DVector::from_iterator(
            lambda.len(),
            lambda.iter().map(|&l| c(l, 0.0)),
        ));
        let f = ComplexMatrix::from_row_iterator(1, v.len(), v.iter().map(|x| x.conj()));
        Self::new(h0, f, ComplexMatrix::identity(1, 1))
    }

    /// `H₀ = diag(λ)` with `F = J = I`, so `V = I`.
    pub fn identity_perturbation(lambda: &[f64]) -> Result<Self> {
        let n = lambda.len();
        let h0 = ComplexMatrix::from_diagonal(&DVector::from_iterator(
            n,
            lambda.iter().map(|&l| c(l, 0.0)),
        ));
        Self::new(
            h0,
            ComplexMatrix::identity(n, n),
            ComplexMatrix::identity(n, n),
        )
    }

    pub fn n(&self) -> usize {
        self.h0.nrows()
    }

    pub fn k(&self) -> usize {
        self.j.nrows()
    }

    pub fn h0(&self) -> &ComplexMatrix {
        &self.h0
    }

    pub fn f(&self) -> &ComplexMatrix {
        &self.f
    }

    pub fn j(&self) -> &ComplexMatrix {
        &self.j
    }

    /// `V = F*JF`.
    pub fn perturbation(&self) -> ComplexMatrix {
        self.f.adjoint() * (&self.j * &self.f)
    }

    /// `H_s = H₀ + sV`, symmetrized to remove rounding asymmetry.
    pub fn coupled_operator(&self, s: f64) -> ComplexMatrix {
        let h = &self.h0 + self.perturbation().scale(s);
        (&h + h.adjoint()).scale(0.5)
    }

    /// The pair `(H₀ + sV, V)` with the same `F` and `J`.
    pub fn shifted(&self, s: f64) -> Self {
        Self {
            h0: self.coupled_operator(s),
            f: self.f.clone(),
            j: self.j.clone(),
        }
    }

    /// True when every entry of `H₀`, `F` and `J` is real.
    pub fn is_real(&self) -> bool {
        [&self.h0, &self.f, &self.j]
            .iter()
            .all(|m| m.iter().all(|x| x.im == 0.0))
    }

    pub fn validate(&self) -> ValidationReport {
        let mut checks = Vec::new();
        let mut herm = |name: &str, m: &ComplexMatrix| {
            let defect = hermitian_defect(m);
            checks.push(ValidationCheck {
                name: format!("{name} hermitian"),
                passed: defect <= HERMITIAN_TOL,
                defect,
            });
        };
        herm("h0", &self.h0);
        herm("j", &self.j);
        herm("v", &self.perturbation());
        ValidationReport { checks }
    }

    pub fn to_json(&self) -> Vec<u8> {
        let h0 = if is_real_diagonal(&self.h0) {
            Value::from(
                (0..self.n())
                    .map(|i| self.h0[(i, i)].re)
                    .collect::<Vec<_>>(),
            )
        } else {
            matrix_value(&self.h0)
        };
        let doc = json!({
            "n": self.n(),
            "k": self.k(),
            "h0": h0,
            "f": matrix_value(&self.f),
            "j": matrix_value(&self.j),
        });
        let mut out = serde_json::to_vec_pretty(&doc).expect("problem serializes");
        out.push(b'\n');
        out
    }

    pub fn from_json(bytes: &[u8]) -> Result<Self> {
        let doc: Value = serde_json::from_slice(bytes).map_err(|e| Error::Parse {
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        })?;
        let obj = doc
            .as_object()
            .ok_or_else(|| schema("<root>", "expected a JSON object"))?;
        for key in obj.keys() {
            if !["n", "k", "h0", "f", "j"].contains(&key.as_str()) {
                return Err(schema(key, "unknown field"));
            }
        }
        let n = read_count(obj, "n")?;
        let k = read_count(obj, "k")?;
        let h0_value = obj.get("h0").ok_or_else(|| schema("h0", "missing field"))?;
        let h0 = match h0_value.as_array() {
            Some(items) if items.iter().all(Value::is_number) => {
                if items.len() != n {
                    return Err(schema("h0", &format!("expected {n} diagonal entries")));
                }
                let diag: Vec<Complex64> = items
                    .iter()
                    .map(|x| c(x.as_f64().unwrap_or(f64::NAN), 0.0))
                    .collect();
                ComplexMatrix::from_diagonal(&DVector::from_vec(diag))
            }
            _ => read_matrix(h0_value, "h0", n, n)?,
        };
        let f = read_matrix(
            obj.get("f").ok_or_else(|| schema("f", "missing field"))?,
            "f",
            k,
            n,
        )?;
        let j = read_matrix(
            obj.get("j").ok_or_else(|| schema("j", "missing field"))?,
            "j",
            k,
            k,
        )?;
        Self::new(h0, f, j).map_err(|e| match e {
            Error::NonFinite { which } => schema(&which, "non-finite entry"),
            other => other,
        })
    }
}

/// Outcome of [`ResonanceProblem::validate`].
#[derive(Debug, Clone, PartialEq)]
pub struct ValidationReport {
    pub checks: Vec<ValidationCheck>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValidationCheck {
    pub name: String,
    pub passed: bool,
    pub defect: f64,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    /// The first failed check as an error.
    pub fn into_result(self) -> Result<()> {
        match self.checks.into_iter().find(|c| !c.passed) {
            None => Ok(()),
            Some(check) => Err(Error::NotHermitian {
                which: check.name.trim_end_matches(" hermitian").to_string(),
                defect: check.defect,
            }),
        }
    }
}

fn is_real_diagonal(m: &ComplexMatrix) -> bool {
    m.iter().enumerate().all(|(idx, x)| {
        let (row, col) = (idx % m.nrows(), idx / m.nrows());
        x.im == 0.0 && (row == col || x.re == 0.0)
    })
}

fn matrix_value(m: &ComplexMatrix) -> Value {
    Value::from(
        (0..m.nrows())
            .map(|r| {
                Value::from(
                    (0..m.ncols())
                        .map(|col| json!([m[(r, col)].re, m[(r, col)].im]))
                        .collect::<Vec<_>>(),
                )
            })
            .collect::<Vec<_>>(),
    )
}

fn schema(field: &str, message: &str) -> Error {
    Error::Schema {
        field: field.to_string(),
        message: message.to_string(),
    }
}

fn read_count(obj: &Map<String, Value>, field: &str) -> Result<usize> {
    obj.get(field)
        .ok_or_else(|| schema(field, "missing field"))?
        .as_u64()
        .filter(|&v| v >= 1)
        .map(|v| v as usize)
        .ok_or_else(|| schema(field, "expected a positive integer"))
}

fn read_matrix(value: &Value, field: &str, rows: usize, cols: usize) -> Result<ComplexMatrix> {
    let shape = || {
        schema(
            field,
            &format!("expected {rows}x{cols} array of [re, im] pairs"),
        )
    };
    let row_values = value.as_array().ok_or_else(shape)?;
    if row_values.len() != rows {
        return Err(shape());
    }
    let mut entries = Vec::with_capacity(rows * cols);
    for row in row_values {
        let row = row.as_array().ok_or_else(shape)?;
        if row.len() != cols {
            return Err(shape());
        }
        for entry in row {
            let pair = entry.as_array().ok_or_else(shape)?;
            match pair.as_slice() {
                [re, im] => entries.push(c(
                    re.as_f64().ok_or_else(shape)?,
                    im.as_f64().ok_or_else(shape)?,
                )),
                _ => return Err(shape()),
            }
        }
    }
    Ok(ComplexMatrix::from_row_slice(rows, cols, &entries))
}

/// Seeded generator behind every ensemble.
///
/// The stream is SplitMix64 seeded with the raw `seed`. Uniform doubles take
/// the top 53 bits: `(x >> 11) · 2⁻⁵³ ∈ [0, 1)`. Gaussians use one Box–Muller
/// draw per pair of uniforms: `√(−2 ln(1 − u₁)) · cos(2π u₂)`. A standard
/// complex Gaussian is `(g₁ + i g₂)/√2`.
#[derive(Debug, Clone)]
pub struct SeededRng(SplitMix64);

impl SeededRng {
    pub fn new(seed: u64) -> Self {
        Self(SplitMix64::from_seed(seed.to_le_bytes()))
    }

    pub fn next_u64(&mut self) -> u64 {
        self.0.next_u64()
    }

    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn uniform_in(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    pub fn gaussian(&mut self) -> f64 {
        let u1 = 1.0 - self.uniform();
        let u2 = self.uniform();
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }

    pub fn complex_gaussian(&mut self) -> Complex64 {
        let re = self.gaussian();
        let im = self.gaussian();
        c(re, im) * std::f64::consts::FRAC_1_SQRT_2
    }

    pub fn gaussian_matrix(&mut self, rows: usize, cols: usize) -> ComplexMatrix {
        let entries: Vec<Complex64> = (0..rows * cols).map(|_| self.complex_gaussian()).collect();
        ComplexMatrix::from_row_slice(rows, cols, &entries)
    }

    /// `(G + G*)/2` with `G` complex Gaussian.
    pub fn hermitian_matrix(&mut self, n: usize) -> ComplexMatrix {
        let g = self.gaussian_matrix(n, n);
        (&g + g.adjoint()).scale(0.5)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EnsembleKind {
    /// `H₀ = diag(λ)`, `λ ~ U[−scale, scale]`; `F = [I_k 0]`, `J = I`.
    Diagonal,
    /// Dirichlet Laplacian stencil `(2, −1)·scale`; Gaussian `F/√n`, `J = I`.
    Jacobi,
    /// Hermitian Gaussian `H₀`, Gaussian `F/√n`, Hermitian Gaussian `J/√k`.
    DenseGaussian,
    /// Hermitian Gaussian `H₀`; `F` with orthonormal rows; real diagonal `J`
    /// with random signs and magnitudes in `[0.5, 1.5)`.
    RankKPerturbation,
}

impl std::str::FromStr for EnsembleKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "diagonal" => Ok(Self::Diagonal),
            "jacobi" => Ok(Self::Jacobi),
            "dense-gaussian" => Ok(Self::DenseGaussian),
            "rank-k-perturbation" => Ok(Self::RankKPerturbation),
            other => Err(Error::BadSpec(format!("unknown ensemble kind `{other}`"))),
        }
    }
}

impl std::fmt::Display for EnsembleKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Diagonal => "diagonal",
            Self::Jacobi => "jacobi",
            Self::DenseGaussian => "dense-gaussian",
            Self::RankKPerturbation => "rank-k-perturbation",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnsembleSpec {
    pub kind: EnsembleKind,
    pub n: usize,
    pub k: usize,
    pub seed: u64,
    pub scale: f64,
}

pub fn build_ensemble(spec: &EnsembleSpec) -> Result<ResonanceProblem> {
    let EnsembleSpec {
        kind,
        n,
        k,
        seed,
        scale,
    } = *spec;
    if n == 0 || k == 0 {
        return Err(Error::BadSpec("n and k must be at least 1".into()));
    }
    if !(scale.is_finite() && scale > 0.0) {
        return Err(Error::BadSpec(format!(
            "scale must be positive, got {scale}"
        )));
    }
    if k > n {
        return Err(Error::BadSpec(format!("k = {k} exceeds n = {n}")));
    }
    let mut rng = SeededRng::new(seed);
    let sqrt_n = (n as f64).sqrt();
    let (h0, f, j) = match kind {
        EnsembleKind::Diagonal => {
            let diag: Vec<Complex64> = (0..n)
                .map(|_| c(rng.uniform_in(-scale, scale), 0.0))
                .collect();
            let h0 = ComplexMatrix::from_diagonal(&DVector::from_vec(diag));
            (
                h0,
                ComplexMatrix::identity(k, n),
                ComplexMatrix::identity(k, k),
            )
        }
        EnsembleKind::Jacobi => {
            let h0 = ComplexMatrix::from_fn(n, n, |r, col| {
                if r == col {
                    c(2.0 * scale, 0.0)
                } else if r.abs_diff(col) == 1 {
                    c(-scale, 0.0)
                } else {
                    c(0.0, 0.0)
                }
            });
            let f = rng.gaussian_matrix(k, n).unscale(sqrt_n);
            (h0, f, ComplexMatrix::identity(k, k))
        }
        EnsembleKind::DenseGaussian => {
            let h0 = rng.hermitian_matrix(n).scale(scale / sqrt_n);
            let f = rng.gaussian_matrix(k, n).unscale(sqrt_n);
            let j = rng.hermitian_matrix(k).unscale((k as f64).sqrt());
            (h0, f, j)
        }
        EnsembleKind::RankKPerturbation => {
            let h0 = rng.hermitian_matrix(n).scale(scale / sqrt_n);
            let g = rng.gaussian_matrix(n, k);
            let q = g.qr().q();
            let f = q.adjoint();
            let diag: Vec<Complex64> = (0..k)
                .map(|_| {
                    let sign = if rng.uniform() < 0.5 { -1.0 } else { 1.0 };
                    c(sign * rng.uniform_in(0.5, 1.5), 0.0)
                })
                .collect();
            (
                h0,
                f,
                ComplexMatrix::from_diagonal(&DVector::from_vec(diag)),
            )
        }
    };
    ResonanceProblem::new(h0, f, j)
}
