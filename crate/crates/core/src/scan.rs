//! Grid scans of `M(z)` and of `f(z) = Σ_j (s − r_j(z))⁻¹` over a rectangle,
//! with zero refinement and isolation checks, mean-value holomorphy checks,
//! and fans of approach rays probing for absorbing points.
//!
//! Work items (grid nodes, rays) are independent and evaluated with rayon;
//! results are always gathered in input order, so output does not depend on
//! the number of worker threads.

use std::collections::BTreeMap;
use std::io::Write;

use num_complex::Complex64;
use rayon::prelude::*;
use serde_json::{json, Value};

use crate::continuation::{classify_with, Classification, DivergenceReport, Rect};
use crate::error::{Error, Result};
use crate::numerics::c;
use crate::problem::ResonanceProblem;
use crate::resonance::{ShiftEvaluator, DEFAULT_ZERO_TOL};

pub const SCAN_SCHEMA: &str = "resatlas-scan/1";

/// Shift applied when the requested coupling collides with a resonance.
pub const COLLISION_RETRY_SHIFT: f64 = 0.37;
const MAX_RETRIES: usize = 4;

/// Relative threshold (against the median `|f|`) for accepting a refined zero.
pub const ZERO_THRESHOLD: f64 = 1e-6;
/// Outer radius of the isolation annulus as a multiple of the inner one.
pub const ANNULUS_FACTOR: f64 = 3.0;
const ANNULUS_CIRCLES: usize = 5;
const CIRCLE_POINTS: usize = 64;

/// Scan rectangle plus the exclusion margin kept around the spectrum of `H₀`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Region {
    pub re_min: f64,
    pub re_max: f64,
    pub im_min: f64,
    pub im_max: f64,
    /// `None` selects `10⁻³ ×` the spectral diameter of `H₀`.
    pub margin: Option<f64>,
}

impl Region {
    pub fn new(re_min: f64, re_max: f64, im_min: f64, im_max: f64) -> Result<Self> {
        Rect::new(re_min, re_max, im_min, im_max)?;
        Ok(Self {
            re_min,
            re_max,
            im_min,
            im_max,
            margin: None,
        })
    }

    pub fn with_margin(mut self, margin: f64) -> Self {
        self.margin = Some(margin);
        self
    }

    /// Parses `re_min,re_max,im_min,im_max`.
    pub fn parse(text: &str) -> Result<Self> {
        let parts: Vec<f64> = text
            .split(',')
            .map(|s| s.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::InvalidArgument(format!("region `{text}`: {e}")))?;
        match parts.as_slice() {
            [a, b, c, d] => Self::new(*a, *b, *c, *d),
            _ => Err(Error::InvalidArgument(format!(
                "region `{text}` must be re_min,re_max,im_min,im_max"
            ))),
        }
    }

    pub fn rect(&self) -> Rect {
        Rect {
            re_min: self.re_min,
            re_max: self.re_max,
            im_min: self.im_min,
            im_max: self.im_max,
        }
    }

    pub fn contains(&self, z: Complex64) -> bool {
        self.rect().contains(z)
    }

    pub fn resolved_margin(&self, spectrum: &[f64]) -> f64 {
        self.margin.unwrap_or_else(|| default_margin(spectrum))
    }

    pub fn as_array(&self) -> [f64; 4] {
        [self.re_min, self.re_max, self.im_min, self.im_max]
    }
}

/// `10⁻³ ×` spectral diameter, falling back to `10⁻³ × max(1, |λ|)` for a
/// single-point spectrum.
pub fn default_margin(spectrum: &[f64]) -> f64 {
    let lo = spectrum.first().copied().unwrap_or(0.0);
    let hi = spectrum.last().copied().unwrap_or(0.0);
    let diameter = hi - lo;
    if diameter > 0.0 {
        1e-3 * diameter
    } else {
        1e-3 * lo.abs().max(1.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScanRecord {
    pub z: Complex64,
    /// Smallest and largest `|σ_j(z)|` over all eigenvalues of `M(z)`.
    pub sigma_min: f64,
    pub sigma_max: f64,
    /// `f(z) = tr M_s(z)`, the analytic form of `Σ_j (s − r_j(z))⁻¹`.
    pub f: Complex64,
    /// `|f_sum − f_trace|` at this node.
    pub identity_residual: f64,
    pub zero_count: usize,
    pub condition: f64,
    pub skipped: Option<String>,
}

impl ScanRecord {
    fn skipped(z: Complex64, reason: String) -> Self {
        Self {
            z,
            sigma_min: f64::NAN,
            sigma_max: f64::NAN,
            f: c(f64::NAN, f64::NAN),
            identity_residual: f64::NAN,
            zero_count: 0,
            condition: f64::NAN,
            skipped: Some(reason),
        }
    }
}

/// A refined zero of `f` with its isolation check.
#[derive(Debug, Clone, PartialEq)]
pub struct ZeroCandidate {
    pub z: Complex64,
    pub abs_f: f64,
    /// Inner radius of the isolation annulus.
    pub radius: f64,
    /// Smallest `|f|` seen on the annulus `radius ≤ |z − z*| ≤ 3·radius`.
    pub annulus_min: f64,
    /// `annulus_min > 10·abs_f`.
    pub isolated: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScanSummary {
    pub evaluated: usize,
    pub skipped: usize,
    pub sigma_min: [f64; 2],
    pub sigma_max: [f64; 2],
    pub abs_f: [f64; 2],
    pub condition: [f64; 2],
    pub median_abs_f: f64,
    pub max_identity_residual: f64,
    pub zero_candidates: Vec<ZeroCandidate>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScanReport {
    pub region: Region,
    pub margin: f64,
    pub nx: usize,
    pub ny: usize,
    /// Coupling actually used (after collision retries).
    pub s: f64,
    /// Row-major: all nodes of the lowest row first, left to right.
    pub records: Vec<ScanRecord>,
    pub summary: ScanSummary,
}

fn grid_nodes(region: &Region, nx: usize, ny: usize) -> Vec<Complex64> {
    let dx = (region.re_max - region.re_min) / (nx - 1) as f64;
    let dy = (region.im_max - region.im_min) / (ny - 1) as f64;
    (0..ny)
        .flat_map(|row| {
            (0..nx).map(move |col| {
                c(
                    region.re_min + col as f64 * dx,
                    region.im_min + row as f64 * dy,
                )
            })
        })
        .collect()
}

pub fn grid_scan(
    p: &ResonanceProblem,
    region: &Region,
    nx: usize,
    ny: usize,
    s: f64,
) -> Result<ScanReport> {
    if nx < 2 || ny < 2 {
        return Err(Error::InvalidArgument(format!(
            "grid {nx}x{ny} must be at least 2x2"
        )));
    }
    let mut shift = s;
    for _ in 0..=MAX_RETRIES {
        let eval = ShiftEvaluator::new(p, shift)?;
        match scan_with(&eval, region, nx, ny) {
            Err(Error::CouplingCollision { .. }) => shift += COLLISION_RETRY_SHIFT,
            other => return other,
        }
    }
    Err(Error::InvalidArgument(format!(
        "coupling collisions persisted up to s = {shift}"
    )))
}

fn scan_with(eval: &ShiftEvaluator, region: &Region, nx: usize, ny: usize) -> Result<ScanReport> {
    let margin = region.resolved_margin(eval.base().spectrum());
    let nodes = grid_nodes(region, nx, ny);
    let records: Vec<Result<ScanRecord>> = nodes
        .par_iter()
        .map(|&z| evaluate_node(eval, z, margin))
        .collect();
    let records: Vec<ScanRecord> = records.into_iter().collect::<Result<_>>()?;
    let summary = summarize(eval, region, nx, ny, &records);
    Ok(ScanReport {
        region: *region,
        margin,
        nx,
        ny,
        s: eval.s(),
        records,
        summary,
    })
}

fn evaluate_node(eval: &ShiftEvaluator, z: Complex64, margin: f64) -> Result<ScanRecord> {
    let sep = eval.base().separation(z);
    if sep < margin {
        return Ok(ScanRecord::skipped(
            z,
            format!("inside exclusion margin ({sep:.3e} < {margin:.3e})"),
        ));
    }
    let sample = match eval.base().sample(z, DEFAULT_ZERO_TOL) {
        Ok(s) => s,
        Err(e) => return Ok(ScanRecord::skipped(z, e.to_string())),
    };
    let report = match eval.herglotz(z) {
        Ok(r) => r,
        Err(e @ Error::CouplingCollision { .. }) => return Err(e),
        Err(e) => return Ok(ScanRecord::skipped(z, e.to_string())),
    };
    let (lo, hi) = sample
        .eigenvalues
        .iter()
        .map(|x| x.norm())
        .fold((f64::INFINITY, 0.0_f64), |(lo, hi), a| {
            (lo.min(a), hi.max(a))
        });
    Ok(ScanRecord {
        z,
        sigma_min: lo,
        sigma_max: hi,
        f: report.f_trace,
        identity_residual: report.residual,
        zero_count: sample.zero_count,
        condition: sample.condition,
        skipped: None,
    })
}

fn min_max(values: impl Iterator<Item = f64>) -> [f64; 2] {
    values.fold([f64::INFINITY, f64::NEG_INFINITY], |[lo, hi], v| {
        [lo.min(v), hi.max(v)]
    })
}

fn summarize(
    eval: &ShiftEvaluator,
    region: &Region,
    nx: usize,
    ny: usize,
    records: &[ScanRecord],
) -> ScanSummary {
    let live: Vec<&ScanRecord> = records.iter().filter(|r| r.skipped.is_none()).collect();
    let mut abs_f: Vec<f64> = live.iter().map(|r| r.f.norm()).collect();
    abs_f.sort_by(f64::total_cmp);
    let median_abs_f = if abs_f.is_empty() {
        f64::NAN
    } else {
        abs_f[abs_f.len() / 2]
    };
    let dx = (region.re_max - region.re_min) / (nx - 1) as f64;
    let dy = (region.im_max - region.im_min) / (ny - 1) as f64;
    let zero_candidates = if live.is_empty() {
        Vec::new()
    } else {
        find_zeros(eval, records, nx, ny, dx, dy, median_abs_f)
    };
    ScanSummary {
        evaluated: live.len(),
        skipped: records.len() - live.len(),
        sigma_min: min_max(live.iter().map(|r| r.sigma_min)),
        sigma_max: min_max(live.iter().map(|r| r.sigma_max)),
        abs_f: min_max(live.iter().map(|r| r.f.norm())),
        condition: min_max(live.iter().map(|r| r.condition)),
        median_abs_f,
        max_identity_residual: live.iter().map(|r| r.identity_residual).fold(0.0, f64::max),
        zero_candidates,
    }
}

fn find_zeros(
    eval: &ShiftEvaluator,
    records: &[ScanRecord],
    nx: usize,
    ny: usize,
    dx: f64,
    dy: f64,
    median: f64,
) -> Vec<ZeroCandidate> {
    let at = |col: usize, row: usize| &records[row * nx + col];
    let mut starts = Vec::new();
    for row in 1..ny.saturating_sub(1) {
        for col in 1..nx.saturating_sub(1) {
            let centre = at(col, row);
            if centre.skipped.is_some() {
                continue;
            }
            let v = centre.f.norm();
            let is_min = (row - 1..=row + 1).all(|r| {
                (col - 1..=col + 1).all(|cc| {
                    let nb = at(cc, r);
                    (r == row && cc == col) || (nb.skipped.is_none() && v < nb.f.norm())
                })
            });
            if is_min {
                starts.push(centre.z);
            }
        }
    }
    let reach = 2.0 * dx.max(dy);
    let radius = 0.5 * dx.min(dy);
    let refined: Vec<Option<ZeroCandidate>> = starts
        .par_iter()
        .map(|&z0| {
            let z = newton_zero(eval, z0, reach)?;
            let abs_f = eval.f(z).ok()?.norm();
            if abs_f.is_nan() || abs_f >= ZERO_THRESHOLD * median {
                return None;
            }
            let annulus_min = annulus_min(eval, z, radius);
            Some(ZeroCandidate {
                z,
                abs_f,
                radius,
                annulus_min,
                isolated: annulus_min > 10.0 * abs_f,
            })
        })
        .collect();
    let mut out: Vec<ZeroCandidate> = Vec::new();
    for cand in refined.into_iter().flatten() {
        if out
            .iter()
            .all(|o| (o.z - cand.z).norm() > 1e-8 * (1.0 + cand.z.norm()))
        {
            out.push(cand);
        }
    }
    out
}

/// Newton iteration for a zero of `f`, confined to `reach` of the start.
pub fn newton_zero(eval: &ShiftEvaluator, start: Complex64, reach: f64) -> Option<Complex64> {
    let mut z = start;
    for _ in 0..60 {
        let f = eval.f(z).ok()?;
        let fp = eval.f_derivative(z).ok()?;
        if fp.norm() == 0.0 {
            return None;
        }
        let dz = f / fp;
        z -= dz;
        if (z - start).norm() > reach || !z.re.is_finite() {
            return None;
        }
        if dz.norm() <= 1e-15 * (1.0 + z.norm()) {
            return Some(z);
        }
    }
    Some(z)
}

/// Smallest `|f|` on circles spanning the annulus `[radius, 3·radius]`;
/// evaluation failures count as zero.
pub fn annulus_min(eval: &ShiftEvaluator, center: Complex64, radius: f64) -> f64 {
    let mut lo = f64::INFINITY;
    for q in 0..ANNULUS_CIRCLES {
        let rho = radius * (1.0 + (ANNULUS_FACTOR - 1.0) * q as f64 / (ANNULUS_CIRCLES - 1) as f64);
        for m in 0..CIRCLE_POINTS {
            let z = center
                + Complex64::from_polar(
                    rho,
                    std::f64::consts::TAU * m as f64 / CIRCLE_POINTS as f64,
                );
            lo = lo.min(eval.f(z).map(|v| v.norm()).unwrap_or(0.0));
        }
    }
    lo
}

/// `|f(z₀) − mean of f on the circle| / (1 + max_circle |f|)` with `points`
/// equispaced nodes.
pub fn mean_value_residual(
    eval: &ShiftEvaluator,
    z0: Complex64,
    radius: f64,
    points: usize,
) -> Result<f64> {
    let center = eval.f(z0)?;
    let mut sum = c(0.0, 0.0);
    let mut peak = 0.0_f64;
    for m in 0..points {
        let v =
            eval.f(z0
                + Complex64::from_polar(radius, std::f64::consts::TAU * m as f64 / points as f64))?;
        peak = peak.max(v.norm());
        sum += v;
    }
    Ok((center - sum / points as f64).norm() / (1.0 + peak))
}

/// Mean-value checks at up to `count` nodes of an interior lattice whose
/// circles (radius: half the distance to the poles of `f`, capped by the
/// distance to the region boundary) stay inside the region and clear of the
/// exclusion margin. Returns `(z, radius, residual)` triples.
pub fn holomorphy_check(
    eval: &ShiftEvaluator,
    region: &Region,
    count: usize,
) -> Result<Vec<(Complex64, f64, f64)>> {
    let margin = region.resolved_margin(eval.base().spectrum());
    let side = (count as f64).sqrt().ceil() as usize + 1;
    let mut nodes = Vec::new();
    for row in 1..=side {
        for col in 1..=side {
            let z = c(
                region.re_min + (region.re_max - region.re_min) * col as f64 / (side + 1) as f64,
                region.im_min + (region.im_max - region.im_min) * row as f64 / (side + 1) as f64,
            );
            let to_edge = (z.re - region.re_min)
                .min(region.re_max - z.re)
                .min(z.im - region.im_min)
                .min(region.im_max - z.im);
            let poles = eval.shifted().separation(z).min(eval.base().separation(z));
            let radius = (0.5 * poles).min(0.9 * to_edge);
            if radius > 0.0 && eval.base().separation(z) - radius > margin {
                nodes.push((z, radius));
            }
        }
    }
    nodes.truncate(count);
    nodes
        .par_iter()
        .map(|&(z, radius)| {
            Ok((
                z,
                radius,
                mean_value_residual(eval, z, radius, CIRCLE_POINTS)?,
            ))
        })
        .collect()
}

impl ScanReport {
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let io = |e: csv::Error| Error::Io(e.to_string());
        w.write_record([
            "re(z)",
            "im(z)",
            "sigma_min",
            "sigma_max",
            "abs_f",
            "re_f",
            "im_f",
            "zero_count",
            "condition",
            "skipped",
        ])
        .map_err(io)?;
        for r in &self.records {
            let num = |x: f64| format!("{x:?}");
            let row = if let Some(reason) = &r.skipped {
                vec![
                    num(r.z.re),
                    num(r.z.im),
                    String::new(),
                    String::new(),
                    String::new(),
                    String::new(),
                    String::new(),
                    String::new(),
                    String::new(),
                    reason.clone(),
                ]
            } else {
                vec![
                    num(r.z.re),
                    num(r.z.im),
                    num(r.sigma_min),
                    num(r.sigma_max),
                    num(r.f.norm()),
                    num(r.f.re),
                    num(r.f.im),
                    r.zero_count.to_string(),
                    num(r.condition),
                    String::new(),
                ]
            };
            w.write_record(&row).map_err(io)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn summary_json(&self) -> Value {
        let s = &self.summary;
        json!({
            "schema": SCAN_SCHEMA,
            "kind": "scan",
            "region": self.region.as_array(),
            "margin": self.margin,
            "grid": [self.nx, self.ny],
            "shift": self.s,
            "summary": {
                "evaluated": s.evaluated,
                "skipped": s.skipped,
                "sigma_min": finite_pair(s.sigma_min),
                "sigma_max": finite_pair(s.sigma_max),
                "abs_f": finite_pair(s.abs_f),
                "condition": finite_pair(s.condition),
                "median_abs_f": finite(s.median_abs_f),
                "max_identity_residual": s.max_identity_residual,
            },
            "zero_candidates": s.zero_candidates.iter().map(|z| json!({
                "z": [z.z.re, z.z.im],
                "abs_f": z.abs_f,
                "radius": z.radius,
                "annulus_min": z.annulus_min,
                "isolated": z.isolated,
            })).collect::<Vec<_>>(),
            "findings": [],
        })
    }
}

fn finite(x: f64) -> Value {
    if x.is_finite() {
        json!(x)
    } else {
        Value::Null
    }
}

fn finite_pair(p: [f64; 2]) -> Value {
    json!([finite(p[0]), finite(p[1])])
}

/// Approach rays: `directions_per_target` equally spaced directions, the
/// first along the positive real axis, at each target.
#[derive(Debug, Clone, PartialEq)]
pub struct RayFan {
    pub targets: Vec<Complex64>,
    pub directions_per_target: usize,
}

impl RayFan {
    pub fn rays(&self) -> Vec<(Complex64, Complex64)> {
        let d = self.directions_per_target;
        self.targets
            .iter()
            .flat_map(|&t| {
                (0..d).map(move |q| {
                    (
                        t,
                        Complex64::from_polar(1.0, std::f64::consts::TAU * q as f64 / d as f64),
                    )
                })
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RayError {
    pub target: Complex64,
    pub direction: Complex64,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SweepSummary {
    pub rays: usize,
    pub regular: usize,
    /// Count per pole order.
    pub pole_like: BTreeMap<u32, usize>,
    pub branching: usize,
    pub suspected_absorbing: usize,
    /// Every suspected absorbing ray with its full sample data.
    pub findings: Vec<DivergenceReport>,
    pub errors: Vec<RayError>,
}

impl SweepSummary {
    pub fn record(&mut self, report: DivergenceReport) {
        self.rays += 1;
        match report.classification {
            Classification::Regular => self.regular += 1,
            Classification::PoleLike { order } => *self.pole_like.entry(order).or_default() += 1,
            Classification::Branching => self.branching += 1,
            Classification::SuspectedAbsorbing => {
                self.suspected_absorbing += 1;
                self.findings.push(report);
            }
        }
    }

    pub fn merge(&mut self, other: SweepSummary) {
        self.rays += other.rays;
        self.regular += other.regular;
        for (k, v) in other.pole_like {
            *self.pole_like.entry(k).or_default() += v;
        }
        self.branching += other.branching;
        self.suspected_absorbing += other.suspected_absorbing;
        self.findings.extend(other.findings);
        self.errors.extend(other.errors);
    }

    pub fn pole_like_total(&self) -> usize {
        self.pole_like.values().sum()
    }

    pub fn to_json(&self) -> Value {
        json!({
            "schema": SCAN_SCHEMA,
            "kind": "absorbing_sweep",
            "rays": self.rays,
            "counts": {
                "regular": self.regular,
                "pole_like": self.pole_like.iter().map(|(k, v)| (k.to_string(), json!(v))).collect::<serde_json::Map<_, _>>(),
                "branching": self.branching,
                "suspected_absorbing": self.suspected_absorbing,
                "errors": self.errors.len(),
            },
            "findings": self.findings.iter().map(DivergenceReport::to_json).collect::<Vec<_>>(),
            "errors": self.errors.iter().map(|e| json!({
                "target": [e.target.re, e.target.im],
                "direction": [e.direction.re, e.direction.im],
                "message": e.message,
            })).collect::<Vec<_>>(),
        })
    }
}

pub fn absorbing_sweep(
    p: &ResonanceProblem,
    region: &Region,
    fan: &RayFan,
    decades: u32,
) -> Result<SweepSummary> {
    let family = crate::resonance::TransferFamily::new(p)?;
    let outcomes: Vec<(Complex64, Complex64, Result<DivergenceReport>)> = fan
        .rays()
        .into_par_iter()
        .map(|(target, direction)| {
            let res = if region.contains(target) {
                classify_with(&family, target, direction, decades)
            } else {
                Err(Error::InvalidArgument(format!(
                    "target {target} outside region"
                )))
            };
            (target, direction, res)
        })
        .collect();
    let mut summary = SweepSummary::default();
    for (target, direction, res) in outcomes {
        match res {
            Ok(report) => summary.record(report),
            Err(e) => summary.errors.push(RayError {
                target,
                direction,
                message: e.to_string(),
            }),
        }
    }
    Ok(summary)
}
