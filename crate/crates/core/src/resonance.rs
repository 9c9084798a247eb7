//! The transfer family `M(z) = F(H₀ − z)⁻¹F*J`, its eigenvalues `σ_j(z)`, the
//! coupling resonances `r_j(z) = −1/σ_j(z)`, and the identities they satisfy.

use num_complex::Complex64;

use crate::assignment::matching_distance;
use crate::error::{Error, Result};
use crate::numerics::{c, general_eigen, singular_values, ComplexMatrix, SpectralResolvent};
use crate::problem::ResonanceProblem;

/// Default relative threshold separating vanishing eigenvalues of `M(z)`.
pub const DEFAULT_ZERO_TOL: f64 = 1e-10;

/// `|r_j − s|` below this makes the shift identities undefined.
pub const COLLISION_TOL: f64 = 1e-12;

/// `M(z)` for one problem, with the spectral decomposition of `H₀` cached so
/// that each evaluation costs `O(k²n)`.
#[derive(Debug, Clone)]
pub struct TransferFamily {
    resolvent: SpectralResolvent,
    // F U and U* F*, where H₀ = U Λ U*
    left: ComplexMatrix,
    right: ComplexMatrix,
    j: ComplexMatrix,
}

impl TransferFamily {
    pub fn new(p: &ResonanceProblem) -> Result<Self> {
        let resolvent = SpectralResolvent::new(p.h0())?;
        let u = &resolvent.eigen().vectors;
        let left = p.f() * u;
        let right = left.adjoint();
        Ok(Self {
            resolvent,
            left,
            right,
            j: p.j().clone(),
        })
    }

    /// Family of the pair `(H₀ + sV, V)`.
    pub fn shifted(p: &ResonanceProblem, s: f64) -> Result<Self> {
        Self::new(&p.shifted(s))
    }

    pub fn k(&self) -> usize {
        self.j.nrows()
    }

    /// Ascending spectrum of the unperturbed operator.
    pub fn spectrum(&self) -> &[f64] {
        self.resolvent.spectrum()
    }

    pub fn separation(&self, z: Complex64) -> f64 {
        self.resolvent.separation(z)
    }

    pub fn resolvent(&self) -> &SpectralResolvent {
        &self.resolvent
    }

    /// `M(z)` and the condition estimate of `H₀ − z`.
    pub fn matrix(&self, z: Complex64) -> Result<(ComplexMatrix, f64)> {
        let (d, condition) = self.resolvent.inverse_gaps(z)?;
        Ok((self.sandwich(&d), condition))
    }

    /// `M'(z) = F(H₀ − z)⁻²F*J`.
    pub fn derivative(&self, z: Complex64) -> Result<ComplexMatrix> {
        let (d, _) = self.resolvent.inverse_gaps(z)?;
        let d2: Vec<Complex64> = d.iter().map(|x| x * x).collect();
        Ok(self.sandwich(&d2))
    }

    fn sandwich(&self, d: &[Complex64]) -> ComplexMatrix {
        let mut scaled = self.left.clone();
        for (col, di) in d.iter().enumerate() {
            for row in 0..scaled.nrows() {
                scaled[(row, col)] *= di;
            }
        }
        scaled * &self.right * &self.j
    }

    pub fn sample(&self, z: Complex64, zero_tol: f64) -> Result<TransferSample> {
        let (m, condition) = self.matrix(z)?;
        TransferSample::from_matrix(z, m, condition, zero_tol)
    }

    /// All `k` eigenvalues of `M(z)`, vanishing ones included.
    pub fn eigenvalues(&self, z: Complex64) -> Result<Vec<Complex64>> {
        let (m, _) = self.matrix(z)?;
        Ok(general_eigen(&m)?.values)
    }

    pub fn resonances(&self, z: Complex64) -> Result<ResonanceSet> {
        Ok(resonances_at(&self.sample(z, DEFAULT_ZERO_TOL)?))
    }
}

/// `M(z)` at one point together with its eigenvalue split.
#[derive(Debug, Clone)]
pub struct TransferSample {
    pub z: Complex64,
    pub m: ComplexMatrix,
    /// Every eigenvalue of `m` in descending magnitude.
    pub eigenvalues: Vec<Complex64>,
    /// Eigenvalues retained as nonzero, same order.
    pub sigmas: Vec<Complex64>,
    pub zero_count: usize,
    pub condition: f64,
    pub zero_tol: f64,
}

impl TransferSample {
    fn from_matrix(z: Complex64, m: ComplexMatrix, condition: f64, zero_tol: f64) -> Result<Self> {
        let eigenvalues = general_eigen(&m)?.values;
        let cutoff = zero_tol * m.norm();
        let sigmas: Vec<Complex64> = eigenvalues
            .iter()
            .copied()
            .filter(|s| s.norm() != 0.0 && s.norm() >= cutoff)
            .collect();
        let zero_count = eigenvalues.len() - sigmas.len();
        Ok(Self {
            z,
            m,
            eigenvalues,
            sigmas,
            zero_count,
            condition,
            zero_tol,
        })
    }
}

/// The values `r_j(z)` of the multi-valued resonance function at `z`.
#[derive(Debug, Clone, PartialEq)]
pub struct ResonanceSet {
    pub z: Complex64,
    pub values: Vec<Complex64>,
}

pub fn transfer_at(p: &ResonanceProblem, z: Complex64, zero_tol: f64) -> Result<TransferSample> {
    TransferFamily::new(p)?.sample(z, zero_tol)
}

pub fn resonances_at(sample: &TransferSample) -> ResonanceSet {
    ResonanceSet {
        z: sample.z,
        values: sample.sigmas.iter().map(|s| -s.inv()).collect(),
    }
}

pub fn shifted_transfer_at(p: &ResonanceProblem, s: f64, z: Complex64) -> Result<TransferSample> {
    TransferFamily::shifted(p, s)?.sample(z, DEFAULT_ZERO_TOL)
}

/// Evaluates both sides of the shift identity for a fixed coupling `s`.
#[derive(Debug, Clone)]
pub struct ShiftEvaluator {
    base: TransferFamily,
    shifted: TransferFamily,
    s: f64,
}

/// `f(z) = Σ_j (s − r_j(z))⁻¹` against `tr M_s(z)`, with the trace-norm bound.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HerglotzReport {
    pub z: Complex64,
    pub s: f64,
    pub f_sum: Complex64,
    pub f_trace: Complex64,
    pub residual: f64,
    pub trace_norm_bound: f64,
}

impl ShiftEvaluator {
    pub fn new(p: &ResonanceProblem, s: f64) -> Result<Self> {
        if !s.is_finite() {
            return Err(Error::InvalidArgument(format!("coupling s = {s}")));
        }
        Ok(Self {
            base: TransferFamily::new(p)?,
            shifted: TransferFamily::shifted(p, s)?,
            s,
        })
    }

    pub fn s(&self) -> f64 {
        self.s
    }

    pub fn base(&self) -> &TransferFamily {
        &self.base
    }

    pub fn shifted(&self) -> &TransferFamily {
        &self.shifted
    }

    /// `{(s − r_j)⁻¹}` over the resonances of the base pair at `z`.
    pub fn predicted(&self, z: Complex64) -> Result<Vec<Complex64>> {
        let r = self.base.resonances(z)?;
        let s = c(self.s, 0.0);
        r.values
            .iter()
            .map(|&rj| {
                if (rj - s).norm() < COLLISION_TOL {
                    Err(Error::CouplingCollision {
                        s: self.s,
                        z,
                        resonance: rj,
                    })
                } else {
                    Ok((s - rj).inv())
                }
            })
            .collect()
    }

    /// Matching distance between the predicted values and the nonzero
    /// eigenvalues of `M_s(z)`, together with `‖M_s(z)‖₂`.
    pub fn shift_residual(&self, z: Complex64) -> Result<(f64, f64)> {
        let predicted = self.predicted(z)?;
        let sample = self.shifted.sample(z, DEFAULT_ZERO_TOL)?;
        let norm = singular_values(&sample.m)?[0];
        Ok((matching_distance(&predicted, &sample.sigmas), norm))
    }

    pub fn herglotz(&self, z: Complex64) -> Result<HerglotzReport> {
        let predicted = self.predicted(z)?;
        let f_sum: Complex64 = predicted.iter().sum();
        let (ms, _) = self.shifted.matrix(z)?;
        let f_trace = ms.trace();
        let trace_norm_bound: f64 = singular_values(&ms)?.iter().sum();
        Ok(HerglotzReport {
            z,
            s: self.s,
            f_sum,
            f_trace,
            residual: (f_sum - f_trace).norm(),
            trace_norm_bound,
        })
    }

    /// `f(z) = tr M_s(z)` without the branch decomposition.
    pub fn f(&self, z: Complex64) -> Result<Complex64> {
        Ok(self.shifted.matrix(z)?.0.trace())
    }

    /// `f'(z) = tr M_s'(z)`.
    pub fn f_derivative(&self, z: Complex64) -> Result<Complex64> {
        Ok(self.shifted.derivative(z)?.trace())
    }
}

/// Distance between `{(s − r_j(z))⁻¹}` and the nonzero eigenvalues of
/// `F R_z(H_s) F*J`.
pub fn shift_identity_residual(p: &ResonanceProblem, z: Complex64, s: f64) -> Result<f64> {
    Ok(ShiftEvaluator::new(p, s)?.shift_residual(z)?.0)
}

pub fn herglotz_sum(p: &ResonanceProblem, z: Complex64, s: f64) -> Result<HerglotzReport> {
    ShiftEvaluator::new(p, s)?.herglotz(z)
}

/// Prefix sums of `|λ_j|^p` and `s_j^p` for one matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct WeylReport {
    pub p: f64,
    pub prefix_lambda_sums: Vec<f64>,
    pub prefix_s_sums: Vec<f64>,
    /// `min_n (Σ_{j≤n} s_j^p − Σ_{j≤n} |λ_j|^p)`.
    pub min_slack: f64,
}

impl WeylReport {
    /// Tolerance-adjusted check `min_slack ≥ −1e−12·max(1, Σ s_j^p)`.
    pub fn holds(&self) -> bool {
        let total = self.prefix_s_sums.last().copied().unwrap_or(0.0);
        self.min_slack >= -1e-12 * total.max(1.0)
    }
}

pub fn weyl_report(a: &ComplexMatrix, p: f64) -> Result<WeylReport> {
    if !(p.is_finite() && p > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "exponent p = {p} must be positive"
        )));
    }
    let lambdas = general_eigen(a)?.values;
    let s = singular_values(a)?;
    let prefix = |xs: &mut dyn Iterator<Item = f64>| {
        xs.scan(0.0, |acc, x| {
            *acc += x.powf(p);
            Some(*acc)
        })
        .collect::<Vec<_>>()
    };
    let prefix_lambda_sums = prefix(&mut lambdas.iter().map(|l| l.norm()));
    let prefix_s_sums = prefix(&mut s.iter().copied());
    let min_slack = prefix_s_sums
        .iter()
        .zip(&prefix_lambda_sums)
        .map(|(s, l)| s - l)
        .fold(f64::INFINITY, f64::min);
    Ok(WeylReport {
        p,
        prefix_lambda_sums,
        prefix_s_sums,
        min_slack,
    })
}

/// Two independent witnesses that `r` is a coupling resonance at `z`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CouplingConsistency {
    /// `min_w |w − z|` over eigenvalues `w` of `H₀ + rV`.
    pub eig_distance: f64,
    /// Smallest singular value of `I + r M(z)`.
    pub sing_min: f64,
    /// Frobenius norm of `H₀ + rV`, the natural scale of `eig_distance`.
    pub operator_norm: f64,
}

impl CouplingConsistency {
    /// Acceptance tolerance `1e−7·(1+|z|)·(1+‖H₀+rV‖)` for the eigenvalue
    /// distance and `1e−7` for the singular value.
    pub fn passes(&self, z: Complex64) -> bool {
        self.eig_distance < 1e-7 * (1.0 + z.norm()) * (1.0 + self.operator_norm)
            && self.sing_min < 1e-7
    }
}

pub fn coupling_consistency(
    p: &ResonanceProblem,
    z: Complex64,
    r: Complex64,
) -> Result<CouplingConsistency> {
    if r.norm() == 0.0 {
        return Err(Error::InvalidArgument("coupling r must be nonzero".into()));
    }
    let family = TransferFamily::new(p)?;
    coupling_consistency_with(p, &family, z, r)
}

pub fn coupling_consistency_with(
    p: &ResonanceProblem,
    family: &TransferFamily,
    z: Complex64,
    r: Complex64,
) -> Result<CouplingConsistency> {
    let (m, _) = family.matrix(z)?;
    let k = family.k();
    let pencil = ComplexMatrix::identity(k, k) + &m * r;
    let sing_min = singular_values(&pencil)?.last().copied().unwrap_or(0.0);
    let operator = p.h0() + p.perturbation() * r;
    let eig_distance = general_eigen(&operator)?
        .values
        .iter()
        .map(|w| (w - z).norm())
        .fold(f64::INFINITY, f64::min);
    Ok(CouplingConsistency {
        eig_distance,
        sing_min,
        operator_norm: operator.norm(),
    })
}

/// Mean-value defect of `M` around `z0`: the largest entry deviation between
/// `M(z0)` and the average of `M` over `points` equispaced nodes on the circle
/// of the given radius, relative to `‖M(z0)‖_F`.
pub fn transfer_mean_value_residual(
    family: &TransferFamily,
    z0: Complex64,
    radius: f64,
    points: usize,
) -> Result<f64> {
    let (center, _) = family.matrix(z0)?;
    let mut avg = ComplexMatrix::zeros(center.nrows(), center.ncols());
    for q in 0..points {
        let theta = std::f64::consts::TAU * q as f64 / points as f64;
        let (m, _) = family.matrix(z0 + Complex64::from_polar(radius, theta))?;
        avg += m;
    }
    avg.unscale_mut(points as f64);
    let dev = (avg - &center).iter().fold(0.0_f64, |m, x| m.max(x.norm()));
    let scale = center.norm();
    Ok(if scale > 0.0 { dev / scale } else { dev })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn i() -> Complex64 {
        c(0.0, 1.0)
    }

    fn rank_one_pm1() -> ResonanceProblem {
        let v = std::f64::consts::FRAC_1_SQRT_2;
        ResonanceProblem::rank_one(&[1.0, -1.0], &[c(v, 0.0), c(v, 0.0)]).unwrap()
    }

    #[test]
    fn diagonal_transfer() {
        let p = ResonanceProblem::identity_perturbation(&[1.0, -1.0]).unwrap();
        let sample = transfer_at(&p, i(), DEFAULT_ZERO_TOL).unwrap();
        assert!((sample.m[(0, 0)] - c(0.5, 0.5)).norm() < 1e-15);
        assert!((sample.m[(1, 1)] - c(-0.5, 0.5)).norm() < 1e-15);
        assert_eq!(sample.zero_count, 0);
        assert!(matching_distance(&sample.sigmas, &[c(0.5, 0.5), c(-0.5, 0.5)]) < 1e-15);
    }

    #[test]
    fn rank_one_zero_at_origin() {
        let sample = transfer_at(&rank_one_pm1(), c(0.0, 0.0), DEFAULT_ZERO_TOL).unwrap();
        assert_eq!(sample.m[(0, 0)], c(0.0, 0.0));
        assert!(sample.sigmas.is_empty());
        assert_eq!(sample.zero_count, 1);
        assert!(resonances_at(&sample).values.is_empty());
    }

    #[test]
    fn spectrum_hit_propagates() {
        let err = transfer_at(&rank_one_pm1(), c(1.0, 0.0), DEFAULT_ZERO_TOL).unwrap_err();
        assert!(matches!(err, Error::SpectrumHit { .. }));
    }

    #[test]
    fn identity_perturbation_resonances() {
        let p = ResonanceProblem::identity_perturbation(&[0.0, 2.0]).unwrap();
        let r = resonances_at(&transfer_at(&p, i(), DEFAULT_ZERO_TOL).unwrap());
        assert!(matching_distance(&r.values, &[i(), i() - 2.0]) < 1e-14);
    }

    #[test]
    fn shifted_diagonal() {
        let p = ResonanceProblem::identity_perturbation(&[0.0, 2.0]).unwrap();
        let sample = shifted_transfer_at(&p, 1.0, i()).unwrap();
        let want = [c(1.0, -1.0).inv(), c(3.0, -1.0).inv()];
        assert!(matching_distance(&sample.sigmas, &want) < 1e-15);
        let base = transfer_at(&p, i(), DEFAULT_ZERO_TOL).unwrap();
        let zero_shift = shifted_transfer_at(&p, 0.0, i()).unwrap();
        assert_eq!(base.m, zero_shift.m);
    }

    #[test]
    fn herglotz_identity_perturbation() {
        let p = ResonanceProblem::identity_perturbation(&[1.0, -1.0]).unwrap();
        let report = herglotz_sum(&p, i(), 0.0).unwrap();
        assert!((report.f_sum - i()).norm() < 1e-15);
        assert!(report.residual < 1e-15);
        assert!(report.f_trace.norm() <= report.trace_norm_bound);
    }

    #[test]
    fn collision_is_reported() {
        // V = I, r_j(z) = z − λ_j; at z = 0.5 (real) r = 0.5 − 0 = 0.5
        let p = ResonanceProblem::identity_perturbation(&[0.0, 2.0]).unwrap();
        let err = shift_identity_residual(&p, c(0.5, 0.0), 0.5).unwrap_err();
        assert!(matches!(err, Error::CouplingCollision { .. }));
    }

    #[test]
    fn weyl_nilpotent() {
        let mut a = ComplexMatrix::zeros(2, 2);
        a[(0, 1)] = c(1.0, 0.0);
        let w = weyl_report(&a, 1.0).unwrap();
        assert_eq!(w.prefix_lambda_sums, vec![0.0, 0.0]);
        assert_eq!(w.prefix_s_sums, vec![1.0, 1.0]);
        assert_eq!(w.min_slack, 1.0);
        assert!(weyl_report(&a, 0.0).is_err());
    }

    #[test]
    fn coupling_consistency_identity() {
        let p = ResonanceProblem::identity_perturbation(&[0.0, 2.0]).unwrap();
        let z = c(0.3, 0.4);
        let cc = coupling_consistency(&p, z, z - 2.0).unwrap();
        assert!(cc.eig_distance < 1e-15);
        assert!(cc.sing_min < 1e-15);
    }

    #[test]
    fn coupling_consistency_rank_one_closed_form() {
        let z = c(0.0, 0.5);
        let r = (z * z - 1.0) / z;
        let sigma = -z / (z * z - 1.0);
        assert!((c(1.0, 0.0) + r * sigma).norm() < 1e-15);
        let cc = coupling_consistency(&rank_one_pm1(), z, r).unwrap();
        assert!(cc.passes(z), "{cc:?}");
    }
}
