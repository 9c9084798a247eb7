//! Analytic continuation of resonance branches along paths.
//!
//! Branches are followed by optimal matching between consecutive samples;
//! a step is accepted only when the matching moves every value by less than
//! half the smallest gap of the previous sample, which makes the assignment
//! the unique nearest-neighbour one. Closed loops give monodromy
//! permutations, a quadtree of loop cells locates branch points, and radial
//! approach rays classify how branches behave near a point.

use num_complex::Complex64;
use serde_json::{json, Value};

use crate::assignment::match_multisets;
use crate::error::{Error, Result};
use crate::numerics::c;
use crate::problem::ResonanceProblem;
use crate::resonance::{coupling_consistency_with, ResonanceSet, TransferFamily};

/// A permutation of branch indices: `self[i]` is where index `i` goes.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Permutation(Vec<usize>);

impl Permutation {
    pub fn identity(n: usize) -> Self {
        Self((0..n).collect())
    }

    pub fn from_vec(map: Vec<usize>) -> Result<Self> {
        let mut seen = vec![false; map.len()];
        for &i in &map {
            if i >= map.len() || std::mem::replace(&mut seen[i], true) {
                return Err(Error::InvalidArgument(format!(
                    "{map:?} is not a permutation"
                )));
            }
        }
        Ok(Self(map))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.0
    }

    pub fn apply(&self, i: usize) -> usize {
        self.0[i]
    }

    pub fn is_identity(&self) -> bool {
        self.0.iter().enumerate().all(|(i, &j)| i == j)
    }

    /// `self` followed by `next`: `i ↦ next[self[i]]`.
    pub fn then(&self, next: &Permutation) -> Permutation {
        Permutation(self.0.iter().map(|&i| next.0[i]).collect())
    }

    pub fn inverse(&self) -> Permutation {
        let mut inv = vec![0; self.0.len()];
        for (i, &j) in self.0.iter().enumerate() {
            inv[j] = i;
        }
        Permutation(inv)
    }

    pub fn pow(&self, times: usize) -> Permutation {
        (0..times).fold(Self::identity(self.len()), |acc, _| acc.then(self))
    }

    /// Cycles in order of their smallest element.
    pub fn cycles(&self) -> Vec<Vec<usize>> {
        let mut seen = vec![false; self.0.len()];
        let mut out = Vec::new();
        for start in 0..self.0.len() {
            if seen[start] {
                continue;
            }
            let mut cycle = vec![start];
            seen[start] = true;
            let mut i = self.0[start];
            while i != start {
                seen[i] = true;
                cycle.push(i);
                i = self.0[i];
            }
            out.push(cycle);
        }
        out
    }

    /// Lengths of the nontrivial cycles, descending.
    pub fn periods(&self) -> Vec<usize> {
        let mut p: Vec<usize> = self
            .cycles()
            .iter()
            .map(Vec::len)
            .filter(|&l| l > 1)
            .collect();
        p.sort_by(|a, b| b.cmp(a));
        p
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum MatchOutcome {
    Matched(Permutation),
    Ambiguous { max_distance: f64, half_gap: f64 },
}

/// Relative size below which two values of one sample count as the same
/// (degenerate) branch value rather than a gap.
const CLUSTER_TOL: f64 = 1e-10;

pub fn match_spectra(prev: &ResonanceSet, next: &ResonanceSet) -> Result<MatchOutcome> {
    match_values(&prev.values, &next.values)
}

pub(crate) fn match_values(prev: &[Complex64], next: &[Complex64]) -> Result<MatchOutcome> {
    if prev.len() != next.len() {
        return Err(Error::CardinalityMismatch {
            prev: prev.len(),
            next: next.len(),
        });
    }
    let perm = match_multisets(prev, next);
    let max_distance = perm
        .iter()
        .enumerate()
        .map(|(i, &j)| (prev[i] - next[j]).norm())
        .fold(0.0, f64::max);
    let scale = 1.0 + prev.iter().fold(0.0_f64, |m, x| m.max(x.norm()));
    let cluster = CLUSTER_TOL * scale;
    let mut gap = f64::INFINITY;
    for a in 0..prev.len() {
        for b in a + 1..prev.len() {
            let d = (prev[a] - prev[b]).norm();
            if d > cluster {
                gap = gap.min(d);
            }
        }
    }
    let half_gap = 0.5 * gap;
    if max_distance > half_gap && max_distance > 1e-12 * scale {
        Ok(MatchOutcome::Ambiguous {
            max_distance,
            half_gap,
        })
    } else {
        Ok(MatchOutcome::Matched(Permutation(perm)))
    }
}

/// A polygonal path through the resolvent set.
#[derive(Debug, Clone, PartialEq)]
pub struct PathSpec {
    pub waypoints: Vec<Complex64>,
    pub max_step: f64,
    pub min_step: f64,
    /// Closed paths return to the first waypoint.
    pub closed: bool,
}

impl PathSpec {
    pub fn open(waypoints: Vec<Complex64>, max_step: f64, min_step: f64) -> Self {
        Self {
            waypoints,
            max_step,
            min_step,
            closed: false,
        }
    }

    /// Regular polygon with `points` vertices on the circle `|z − center| =
    /// radius`, starting at `center + radius` and running counter-clockwise.
    pub fn circle(center: Complex64, radius: f64, points: usize) -> Self {
        Self::circle_from(center, radius, points, 0.0)
    }

    /// As [`PathSpec::circle`], starting at `center + radius·e^{i·start_angle}`.
    pub fn circle_from(center: Complex64, radius: f64, points: usize, start_angle: f64) -> Self {
        let waypoints = (0..points)
            .map(|q| {
                let theta = start_angle + std::f64::consts::TAU * q as f64 / points as f64;
                center + Complex64::from_polar(radius, theta)
            })
            .collect();
        let side = 2.0 * radius * (std::f64::consts::PI / points as f64).sin();
        Self {
            waypoints,
            max_step: side,
            min_step: side * 1e-9,
            closed: true,
        }
    }

    /// Same loop, opposite orientation, same base point.
    pub fn reversed(&self) -> Self {
        let mut waypoints = self.waypoints.clone();
        if self.closed {
            waypoints[1..].reverse();
        } else {
            waypoints.reverse();
        }
        Self {
            waypoints,
            ..self.clone()
        }
    }

    /// Vertex sequence actually traversed, including the return for loops.
    pub fn vertices(&self) -> Vec<Complex64> {
        let mut v = self.waypoints.clone();
        if self.closed {
            v.push(self.waypoints[0]);
        }
        v
    }

    pub fn validate(&self, spectrum: &[f64]) -> Result<()> {
        let min_points = if self.closed { 3 } else { 2 };
        if self.waypoints.len() < min_points {
            return Err(Error::InvalidPath(format!(
                "need at least {min_points} waypoints"
            )));
        }
        if !(self.min_step > 0.0 && self.max_step >= self.min_step && self.max_step.is_finite()) {
            return Err(Error::InvalidPath(format!(
                "steps must satisfy 0 < min_step ≤ max_step (got {}, {})",
                self.min_step, self.max_step
            )));
        }
        let vertices = self.vertices();
        for w in vertices.windows(2) {
            if w[0] == w[1] {
                return Err(Error::InvalidPath(format!(
                    "repeated consecutive waypoint {}",
                    w[0]
                )));
            }
            let d = segment_distance_to_spectrum(w[0], w[1], spectrum);
            if d < 10.0 * self.min_step {
                return Err(Error::InvalidPath(format!(
                    "segment {} → {} passes within {d:.3e} of the spectrum",
                    w[0], w[1]
                )));
            }
        }
        Ok(())
    }
}

fn segment_distance_to_spectrum(a: Complex64, b: Complex64, spectrum: &[f64]) -> f64 {
    let ab = b - a;
    let len2 = ab.norm_sqr();
    spectrum
        .iter()
        .map(|&l| {
            let p = c(l, 0.0);
            let t = if len2 > 0.0 {
                (((p - a) * ab.conj()).re / len2).clamp(0.0, 1.0)
            } else {
                0.0
            };
            (a + ab * t - p).norm()
        })
        .fold(f64::INFINITY, f64::min)
}

/// One accepted sample on a traced path.
#[derive(Debug, Clone, PartialEq)]
pub struct PathSample {
    pub z: Complex64,
    pub values: Vec<Complex64>,
    /// Matching from the previous sample's indices into this sample's.
    pub step: Permutation,
}

/// Raw output of the adaptive tracker.
#[derive(Debug, Clone)]
struct Track {
    samples: Vec<PathSample>,
    /// Sample index of every traversed vertex.
    vertex_samples: Vec<usize>,
}

impl Track {
    /// `positions[m][label]`: index of branch `label` within sample `m`.
    fn positions(&self) -> Vec<Vec<usize>> {
        let k = self.samples[0].values.len();
        let mut current = Permutation::identity(k);
        let mut out = Vec::with_capacity(self.samples.len());
        for (m, sample) in self.samples.iter().enumerate() {
            if m > 0 {
                current = current.then(&sample.step);
            }
            out.push(current.0.clone());
        }
        out
    }

    fn composed(&self) -> Permutation {
        let k = self.samples[0].values.len();
        self.samples
            .iter()
            .skip(1)
            .fold(Permutation::identity(k), |acc, s| acc.then(&s.step))
    }
}

fn track<F>(vertices: &[Complex64], max_step: f64, min_step: f64, eval: F) -> Result<Track>
where
    F: Fn(Complex64) -> Result<Vec<Complex64>>,
{
    let first = vertices[0];
    let first_values = eval(first)?;
    let k = first_values.len();
    let mut samples = vec![PathSample {
        z: first,
        values: first_values,
        step: Permutation::identity(k),
    }];
    let mut vertex_samples = vec![0];
    let mut step = max_step;
    for seg in vertices.windows(2) {
        let (a, b) = (seg[0], seg[1]);
        let length = (b - a).norm();
        let mut t = 0.0;
        while t < length {
            let mut h = step.min(length - t);
            loop {
                let end = t + h >= length;
                let z = if end {
                    b
                } else {
                    a + (b - a) * ((t + h) / length)
                };
                let values = eval(z)?;
                let prev = &samples.last().expect("nonempty").values;
                let outcome = match match_values(prev, &values) {
                    Ok(MatchOutcome::Matched(perm)) => Some(perm),
                    Ok(MatchOutcome::Ambiguous { .. }) | Err(Error::CardinalityMismatch { .. }) => {
                        None
                    }
                    Err(e) => return Err(e),
                };
                match outcome {
                    Some(perm) => {
                        samples.push(PathSample {
                            z,
                            values,
                            step: perm,
                        });
                        t = if end { length } else { t + h };
                        if h < step {
                            step = (2.0 * h).min(max_step);
                        } else {
                            step = (1.5 * step).min(max_step);
                        }
                        break;
                    }
                    None => {
                        h *= 0.5;
                        step = h;
                        if h < min_step {
                            return Err(Error::StepCollapse {
                                at: samples.last().expect("nonempty").z,
                                step: h,
                            });
                        }
                    }
                }
            }
        }
        vertex_samples.push(samples.len() - 1);
    }
    Ok(Track {
        samples,
        vertex_samples,
    })
}

/// Resonance branches followed along a path.
#[derive(Debug, Clone)]
pub struct BranchFamily {
    pub samples: Vec<PathSample>,
    /// Labels assigned at the first sample (its indices).
    pub labels: Vec<usize>,
    /// Sample index reached at each traversed vertex.
    pub vertex_samples: Vec<usize>,
    /// Worst coupling-consistency figures over every sample, when verified.
    pub consistency: Option<ConsistencyStats>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConsistencyStats {
    pub worst_eig_distance_rel: f64,
    pub worst_sing_min: f64,
    pub all_pass: bool,
}

impl BranchFamily {
    fn from_track(track: Track) -> Self {
        let k = track.samples[0].values.len();
        Self {
            labels: (0..k).collect(),
            vertex_samples: track.vertex_samples.clone(),
            samples: track.samples,
            consistency: None,
        }
    }

    fn as_track(&self) -> Track {
        Track {
            samples: self.samples.clone(),
            vertex_samples: self.vertex_samples.clone(),
        }
    }

    /// Start index ↦ end index.
    pub fn composed(&self) -> Permutation {
        self.as_track().composed()
    }

    /// Values of branch `label` at every sample.
    pub fn branch(&self, label: usize) -> Vec<Complex64> {
        self.as_track()
            .positions()
            .iter()
            .zip(&self.samples)
            .map(|(pos, s)| s.values[pos[label]])
            .collect()
    }

    /// Branch values at the final sample, indexed by starting label.
    pub fn end_values(&self) -> Vec<Complex64> {
        let last = self.samples.last().expect("nonempty");
        let perm = self.composed();
        self.labels
            .iter()
            .map(|&l| last.values[perm.apply(l)])
            .collect()
    }

    pub fn start_values(&self) -> &[Complex64] {
        &self.samples[0].values
    }
}

/// Resonance continuation for a fixed problem.
#[derive(Debug, Clone)]
pub struct Tracker {
    family: TransferFamily,
}

impl Tracker {
    pub fn new(p: &ResonanceProblem) -> Result<Self> {
        Ok(Self {
            family: TransferFamily::new(p)?,
        })
    }

    pub fn family(&self) -> &TransferFamily {
        &self.family
    }

    fn resonance_values(&self, z: Complex64) -> Result<Vec<Complex64>> {
        Ok(self.family.resonances(z)?.values)
    }

    pub fn trace(&self, path: &PathSpec) -> Result<BranchFamily> {
        path.validate(self.family.spectrum())?;
        let track = track(&path.vertices(), path.max_step, path.min_step, |z| {
            self.resonance_values(z)
        })?;
        Ok(BranchFamily::from_track(track))
    }

    /// Traverses a closed path `times` times without restarting.
    pub fn trace_repeated(&self, path: &PathSpec, times: usize) -> Result<BranchFamily> {
        if !path.closed {
            return Err(Error::InvalidPath(
                "repeated traversal needs a closed path".into(),
            ));
        }
        path.validate(self.family.spectrum())?;
        let mut vertices = vec![path.waypoints[0]];
        for _ in 0..times {
            vertices.extend(path.waypoints.iter().skip(1));
            vertices.push(path.waypoints[0]);
        }
        let track = track(&vertices, path.max_step, path.min_step, |z| {
            self.resonance_values(z)
        })?;
        Ok(BranchFamily::from_track(track))
    }

    pub fn monodromy(&self, path: &PathSpec) -> Result<Permutation> {
        if !path.closed {
            return Err(Error::InvalidPath("monodromy needs a closed path".into()));
        }
        Ok(self.trace(path)?.composed())
    }

    /// Correspondence between the branch orderings at `from` and `to` along
    /// the straight segment.
    pub fn transport(&self, from: Complex64, to: Complex64, max_step: f64) -> Result<Permutation> {
        let path = PathSpec::open(vec![from, to], max_step, max_step * 1e-9);
        Ok(self.trace(&path)?.composed())
    }

    /// Runs coupling consistency on every resonance of every sample.
    pub fn verify(
        &self,
        p: &ResonanceProblem,
        family: &mut BranchFamily,
    ) -> Result<ConsistencyStats> {
        let mut stats = ConsistencyStats {
            worst_eig_distance_rel: 0.0,
            worst_sing_min: 0.0,
            all_pass: true,
        };
        for sample in &family.samples {
            for &r in &sample.values {
                let cc = coupling_consistency_with(p, &self.family, sample.z, r)?;
                let rel = cc.eig_distance / ((1.0 + sample.z.norm()) * (1.0 + cc.operator_norm));
                stats.worst_eig_distance_rel = stats.worst_eig_distance_rel.max(rel);
                stats.worst_sing_min = stats.worst_sing_min.max(cc.sing_min);
                stats.all_pass &= cc.passes(sample.z);
            }
        }
        family.consistency = Some(stats);
        Ok(stats)
    }
}

/// Traces resonance branches along `path` and verifies every sample.
pub fn trace_branches(p: &ResonanceProblem, path: &PathSpec) -> Result<BranchFamily> {
    let tracker = Tracker::new(p)?;
    let mut family = tracker.trace(path)?;
    tracker.verify(p, &mut family)?;
    Ok(family)
}

pub fn monodromy(p: &ResonanceProblem, path: &PathSpec) -> Result<Permutation> {
    Tracker::new(p)?.monodromy(path)
}

/// Axis-aligned rectangle in the complex plane.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rect {
    pub re_min: f64,
    pub re_max: f64,
    pub im_min: f64,
    pub im_max: f64,
}

impl Rect {
    pub fn new(re_min: f64, re_max: f64, im_min: f64, im_max: f64) -> Result<Self> {
        if !(re_min < re_max && im_min < im_max) {
            return Err(Error::InvalidArgument(format!(
                "degenerate rectangle [{re_min}, {re_max}] × [{im_min}, {im_max}]"
            )));
        }
        Ok(Self {
            re_min,
            re_max,
            im_min,
            im_max,
        })
    }

    pub fn width(&self) -> f64 {
        self.re_max - self.re_min
    }

    pub fn height(&self) -> f64 {
        self.im_max - self.im_min
    }

    pub fn diameter(&self) -> f64 {
        self.width().hypot(self.height())
    }

    pub fn center(&self) -> Complex64 {
        c(
            0.5 * (self.re_min + self.re_max),
            0.5 * (self.im_min + self.im_max),
        )
    }

    pub fn contains(&self, z: Complex64) -> bool {
        (self.re_min..=self.re_max).contains(&z.re) && (self.im_min..=self.im_max).contains(&z.im)
    }

    pub fn as_array(&self) -> [f64; 4] {
        [self.re_min, self.re_max, self.im_min, self.im_max]
    }

    pub fn distance_to_real_point(&self, x: f64) -> f64 {
        let dx = (self.re_min - x).max(x - self.re_max).max(0.0);
        let dy = self.im_min.max(-self.im_max).max(0.0);
        dx.hypot(dy)
    }

    /// Boundary loop starting at the lower-left corner, counter-clockwise.
    pub fn boundary(&self, segments_per_side: usize) -> PathSpec {
        let corners = [
            c(self.re_min, self.im_min),
            c(self.re_max, self.im_min),
            c(self.re_max, self.im_max),
            c(self.re_min, self.im_max),
        ];
        let perimeter = 2.0 * (self.width() + self.height());
        let max_step = perimeter / (4 * segments_per_side) as f64;
        PathSpec {
            waypoints: corners.to_vec(),
            max_step,
            min_step: max_step * 1e-9,
            closed: true,
        }
    }

    /// Four children split at fraction `frac` of each side, in the order
    /// lower-left, lower-right, upper-right, upper-left.
    pub fn split(&self, frac: f64) -> [Rect; 4] {
        let xm = self.re_min + frac * self.width();
        let ym = self.im_min + frac * self.height();
        [
            Rect {
                re_max: xm,
                im_max: ym,
                ..*self
            },
            Rect {
                re_min: xm,
                im_max: ym,
                ..*self
            },
            Rect {
                re_min: xm,
                im_min: ym,
                ..*self
            },
            Rect {
                re_max: xm,
                im_min: ym,
                ..*self
            },
        ]
    }
}

/// A localized branching point of the resonance function.
#[derive(Debug, Clone, PartialEq)]
pub struct BranchPoint {
    pub location: Complex64,
    pub radius: f64,
    /// Monodromy of the circle `|z − location| = radius` based at
    /// `location + radius`, counter-clockwise.
    pub monodromy: Permutation,
    /// Nontrivial cycle lengths of `monodromy`.
    pub periods: Vec<usize>,
    /// The quadtree leaf the point was found in.
    pub cell: Rect,
}

impl BranchPoint {
    pub fn base_point(&self) -> Complex64 {
        self.location + self.radius
    }

    pub fn loop_path(&self, radius: f64) -> PathSpec {
        PathSpec::circle(self.location, radius, LOOP_POINTS)
    }

    pub fn to_json(&self) -> Value {
        json!({
            "location": [self.location.re, self.location.im],
            "radius": self.radius,
            "monodromy": self.monodromy.as_slice(),
            "periods": self.periods,
            "cell": self.cell.as_array(),
        })
    }
}

const LOOP_POINTS: usize = 32;
const SPLIT_FRACTIONS: [f64; 5] = [0.5, 0.43, 0.57, 0.37, 0.63];
/// Levels subdivided even when the parent loop has trivial monodromy, so that
/// pairs of branch points with cancelling monodromy are still separated.
const FORCED_DEPTH: u32 = 2;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LocateOptions {
    pub max_depth: u32,
    /// Vertex count per rectangle side for cell boundary loops.
    pub segments_per_side: usize,
}

impl Default for LocateOptions {
    fn default() -> Self {
        Self {
            max_depth: 8,
            segments_per_side: 8,
        }
    }
}

enum CellOutcome {
    Points(Vec<BranchPoint>),
    Unresolved(Vec<Rect>),
}

pub fn locate_branch_points(
    p: &ResonanceProblem,
    region: Rect,
    max_depth: u32,
) -> Result<Vec<BranchPoint>> {
    let tracker = Tracker::new(p)?;
    locate_with(
        &tracker,
        region,
        LocateOptions {
            max_depth,
            ..LocateOptions::default()
        },
    )
}

pub fn locate_with(
    tracker: &Tracker,
    region: Rect,
    opts: LocateOptions,
) -> Result<Vec<BranchPoint>> {
    let boundary = region.boundary(opts.segments_per_side);
    for &l in tracker.family().spectrum() {
        if region.distance_to_real_point(l) < boundary.min_step.max(1e-12 * region.diameter()) {
            return Err(Error::InvalidArgument(format!(
                "region {:?} touches the spectrum at {l}",
                region.as_array()
            )));
        }
    }
    if tracker.family().k() < 2 {
        return Ok(Vec::new());
    }
    let leaf = region.diameter() * 0.5f64.powi(opts.max_depth as i32);
    let mono = tracker.monodromy(&boundary)?;
    let mut points = Vec::new();
    let mut unresolved = Vec::new();
    for outcome in explore(tracker, region, mono, 0, leaf, &opts)? {
        match outcome {
            CellOutcome::Points(p) => points.extend(p),
            CellOutcome::Unresolved(cells) => unresolved.extend(cells),
        }
    }
    if !unresolved.is_empty() {
        return Err(Error::DepthExceeded {
            cells: unresolved.iter().map(Rect::as_array).collect(),
        });
    }
    Ok(points)
}

fn explore(
    tracker: &Tracker,
    cell: Rect,
    mono: Permutation,
    depth: u32,
    leaf: f64,
    opts: &LocateOptions,
) -> Result<Vec<CellOutcome>> {
    if mono.is_identity() && depth >= FORCED_DEPTH {
        return Ok(Vec::new());
    }
    if cell.diameter() < leaf {
        return Ok(vec![finish_leaf(tracker, cell)]);
    }
    let mut last_err = None;
    for frac in SPLIT_FRACTIONS {
        let children = cell.split(frac);
        let monos: Result<Vec<Permutation>> = {
            use rayon::prelude::*;
            children
                .par_iter()
                .map(|child| tracker.monodromy(&child.boundary(opts.segments_per_side)))
                .collect()
        };
        let monos = match monos {
            Ok(m) => m,
            Err(e @ Error::StepCollapse { .. }) => {
                last_err = Some(e);
                continue;
            }
            Err(e) => return Err(e),
        };
        if !mono.is_identity() && monos.iter().all(Permutation::is_identity) {
            continue;
        }
        let results: Vec<Result<Vec<CellOutcome>>> = {
            use rayon::prelude::*;
            children
                .par_iter()
                .zip(monos.into_par_iter())
                .map(|(child, m)| explore(tracker, *child, m, depth + 1, leaf, opts))
                .collect()
        };
        let mut out = Vec::new();
        for r in results {
            out.extend(r?);
        }
        return Ok(out);
    }
    match last_err {
        Some(e) if mono.is_identity() => Err(e),
        _ => Ok(vec![CellOutcome::Unresolved(vec![cell])]),
    }
}

fn finish_leaf(tracker: &Tracker, cell: Rect) -> CellOutcome {
    let radius = 0.5 * cell.diameter();
    let candidates = [
        refine_collision(tracker.family(), cell),
        Some(cell.center()),
    ];
    for location in candidates.into_iter().flatten() {
        let path = PathSpec::circle(location, radius, LOOP_POINTS);
        if let Ok(m) = tracker.monodromy(&path) {
            if !m.is_identity() {
                return CellOutcome::Points(vec![BranchPoint {
                    location,
                    radius,
                    periods: m.periods(),
                    monodromy: m,
                    cell,
                }]);
            }
        }
    }
    CellOutcome::Unresolved(vec![cell])
}

/// `Π_{a<b} (σ_a − σ_b)²` over all eigenvalues of `M(z)`; single-valued and
/// holomorphic, vanishing exactly where eigenvalues collide.
pub fn discriminant(family: &TransferFamily, z: Complex64) -> Result<Complex64> {
    let sig = family.eigenvalues(z)?;
    let mut d = c(1.0, 0.0);
    for a in 0..sig.len() {
        for b in a + 1..sig.len() {
            let diff = sig[a] - sig[b];
            d *= diff * diff;
        }
    }
    Ok(d)
}

/// Newton iteration on the discriminant from the cell center; `None` when it
/// fails or leaves the (enlarged) cell.
fn refine_collision(family: &TransferFamily, cell: Rect) -> Option<Complex64> {
    let h = 1e-6 * cell.diameter();
    let mut z = cell.center();
    for _ in 0..40 {
        let d = discriminant(family, z).ok()?;
        let dp =
            (discriminant(family, z + h).ok()? - discriminant(family, z - h).ok()?) / (2.0 * h);
        if dp.norm() == 0.0 || !dp.re.is_finite() {
            return None;
        }
        let dz = d / dp;
        z -= dz;
        if dz.norm() < 1e-14 * (1.0 + z.norm()) {
            break;
        }
    }
    let grow = 0.25 * cell.width().max(cell.height());
    let enlarged = Rect {
        re_min: cell.re_min - grow,
        re_max: cell.re_max + grow,
        im_min: cell.im_min - grow,
        im_max: cell.im_max + grow,
    };
    enlarged.contains(z).then_some(z)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Classification {
    Regular,
    PoleLike { order: u32 },
    Branching,
    SuspectedAbsorbing,
}

impl std::fmt::Display for Classification {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::Regular => f.write_str("regular"),
            Self::PoleLike { order } => write!(f, "pole_like({order})"),
            Self::Branching => f.write_str("branching"),
            Self::SuspectedAbsorbing => f.write_str("suspected_absorbing"),
        }
    }
}

/// Branch data at one radial sample, indexed by branch label.
#[derive(Debug, Clone, PartialEq)]
pub struct ApproachSample {
    pub t: f64,
    pub z: Complex64,
    pub sigmas: Vec<Complex64>,
}

/// Log-log fit of `|r_j|` against the approach distance for one branch.
#[derive(Debug, Clone, PartialEq)]
pub struct BranchFit {
    pub label: usize,
    pub slope: f64,
    pub intercept: f64,
    pub max_residual: f64,
    /// Branch vanishes identically (no finite resonance).
    pub null: bool,
    pub diverging: bool,
    /// Order of the zero of `σ_j` at the target read off its Taylor
    /// coefficients on a small circle.
    pub zero_order: Option<u32>,
    /// Largest coefficient that must vanish for a holomorphic zero of the
    /// fitted order, relative to `max|σ_j|` on the circle.
    pub holomorphic_residual: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DivergenceReport {
    pub target: Complex64,
    pub direction: Complex64,
    pub samples: Vec<ApproachSample>,
    pub fits: Vec<BranchFit>,
    pub classification: Classification,
    /// Largest log-log residual over non-null branches on the fitted tail.
    pub fit_quality: f64,
    /// Monodromy of the smallest circle around the target.
    pub local_monodromy: Permutation,
    pub note: Option<String>,
}

impl DivergenceReport {
    pub fn to_json(&self) -> Value {
        let cx = |z: Complex64| json!([z.re, z.im]);
        let finite_or_null = |z: Complex64| {
            if z.re.is_finite() && z.im.is_finite() {
                cx(z)
            } else {
                Value::Null
            }
        };
        json!({
            "target": cx(self.target),
            "direction": cx(self.direction),
            "classification": self.classification.to_string(),
            "fit_quality": self.fit_quality,
            "local_monodromy": self.local_monodromy.as_slice(),
            "note": self.note,
            "fits": self.fits.iter().map(|f| json!({
                "label": f.label,
                "slope": f.slope,
                "intercept": f.intercept,
                "max_residual": f.max_residual,
                "null": f.null,
                "diverging": f.diverging,
                "zero_order": f.zero_order,
                "holomorphic_residual": f.holomorphic_residual,
            })).collect::<Vec<_>>(),
            "samples": self.samples.iter().map(|s| json!({
                "t": s.t,
                "z": cx(s.z),
                "sigma": s.sigmas.iter().map(|&x| cx(x)).collect::<Vec<_>>(),
                "r": s.sigmas.iter().map(|&x| finite_or_null(-x.inv())).collect::<Vec<_>>(),
            })).collect::<Vec<_>>(),
        })
    }
}

/// Tolerances of the divergence classifier.
pub const SLOPE_TOL: f64 = 0.05;
pub const FIT_TOL: f64 = 0.05;
pub const HOLOMORPHIC_TOL: f64 = 1e-6;
const NULL_TOL: f64 = 1e-10;
const CIRCLE_POINTS: usize = 64;

pub fn classify_approach(
    p: &ResonanceProblem,
    target: Complex64,
    direction: Complex64,
    decades: u32,
) -> Result<DivergenceReport> {
    classify_with(&TransferFamily::new(p)?, target, direction, decades)
}

pub fn classify_with(
    family: &TransferFamily,
    target: Complex64,
    direction: Complex64,
    decades: u32,
) -> Result<DivergenceReport> {
    if direction.norm() == 0.0 || !direction.norm().is_finite() {
        return Err(Error::InvalidArgument(
            "direction must be a nonzero number".into(),
        ));
    }
    if decades == 0 {
        return Err(Error::InvalidArgument("decades must be at least 1".into()));
    }
    let direction = direction / direction.norm();
    family.resolvent().guard(target)?;
    let separation = family.separation(target);
    let t0 = (0.5 * separation).min(1.0);
    let last = (decades as f64 * std::f64::consts::LOG2_10).ceil() as i32;
    let ts: Vec<f64> = (0..=last).map(|m| t0 * 0.5f64.powi(m)).collect();
    let vertices: Vec<Complex64> = ts.iter().map(|&t| target + direction * t).collect();
    let t_min = *ts.last().expect("nonempty");

    let eval = |z: Complex64| family.eigenvalues(z);
    let ray = track(&vertices, t0 / 4.0, t_min * 1e-4, eval)?;
    let ray_pos = ray.positions();
    let k = ray.samples[0].values.len();
    let samples: Vec<ApproachSample> = ray
        .vertex_samples
        .iter()
        .zip(&ts)
        .map(|(&idx, &t)| ApproachSample {
            t,
            z: ray.samples[idx].z,
            sigmas: (0..k)
                .map(|l| ray.samples[idx].values[ray_pos[idx][l]])
                .collect(),
        })
        .collect();

    // Circles are labelled by the ray's sample at the matching radius.
    let small_idx = last as usize - 2;
    let fit_start = last as usize / 2;
    let small = circle_values(family, target, ts[small_idx], direction.arg())?;
    let local_monodromy = small.monodromy.clone();

    // branches of the ray at the circle's base point, in ray-label order
    let label_at = |idx: usize, circle: &CircleData| -> Vec<usize> {
        let start = &circle.start_values;
        let ray_vals = &samples[idx].sigmas;
        match_multisets(ray_vals, start)
    };

    let norms: Vec<f64> = samples
        .iter()
        .map(|s| s.sigmas.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt())
        .collect();
    let mut fits = Vec::with_capacity(k);
    for label in 0..k {
        let null = samples
            .iter()
            .zip(&norms)
            .all(|(s, &nm)| s.sigmas[label].norm() < NULL_TOL * nm.max(f64::MIN_POSITIVE));
        let xs: Vec<f64> = samples[fit_start..].iter().map(|s| s.t.ln()).collect();
        let ys: Vec<f64> = samples[fit_start..]
            .iter()
            .map(|s| -s.sigmas[label].norm().max(f64::MIN_POSITIVE).ln())
            .collect();
        let (slope, intercept, max_residual) = linear_fit(&xs, &ys);
        fits.push(BranchFit {
            label,
            slope,
            intercept,
            max_residual,
            null,
            diverging: !null && slope < -0.5,
            zero_order: None,
            holomorphic_residual: f64::NAN,
        });
    }
    let fit_quality = fits
        .iter()
        .filter(|f| !f.null)
        .map(|f| f.max_residual)
        .fold(0.0, f64::max);

    let mut note = None;
    let classification = if !local_monodromy.is_identity() {
        Classification::Branching
    } else {
        if fit_quality > FIT_TOL {
            return Err(Error::InsufficientDecades {
                decades,
                quality: fit_quality,
            });
        }
        let any_diverging = fits.iter().any(|f| f.diverging);
        let anomalous = fits
            .iter()
            .any(|f| !f.null && !f.diverging && f.slope.abs() > SLOPE_TOL);
        if !any_diverging && !anomalous {
            Classification::Regular
        } else {
            // Taylor data on the widest circle with trivial monodromy.
            let wide = circle_values(family, target, ts[fit_start], direction.arg())?;
            let (circle, idx) = if wide.monodromy.is_identity() {
                (&wide, fit_start)
            } else {
                (&small, small_idx)
            };
            let to_circle = label_at(idx, circle);
            let mut all_poles = !anomalous;
            let mut max_order = 0;
            for fit in fits.iter_mut().filter(|f| f.diverging) {
                let values: Vec<Complex64> = circle
                    .values
                    .iter()
                    .map(|row| row[to_circle[fit.label]])
                    .collect();
                let order = (-fit.slope).round().max(1.0) as u32;
                let (residual, zero_order) = holomorphic_zero(&values, order);
                fit.holomorphic_residual = residual;
                fit.zero_order = zero_order;
                let pole = (fit.slope + order as f64).abs() <= SLOPE_TOL
                    && fit.max_residual < FIT_TOL
                    && residual < HOLOMORPHIC_TOL
                    && zero_order == Some(order);
                all_poles &= pole;
                max_order = max_order.max(order);
            }
            if all_poles {
                note = Some(
                    "divergence comes from a holomorphic zero of σ_j: r_j has a pole that continues through ∞, not an absorbing point"
                        .to_string(),
                );
                Classification::PoleLike { order: max_order }
            } else {
                Classification::SuspectedAbsorbing
            }
        }
    };
    Ok(DivergenceReport {
        target,
        direction,
        samples,
        fits,
        classification,
        fit_quality,
        local_monodromy,
        note,
    })
}

struct CircleData {
    /// `values[q][label]` at the `q`-th equispaced node, labels from node 0.
    values: Vec<Vec<Complex64>>,
    start_values: Vec<Complex64>,
    monodromy: Permutation,
}

fn circle_values(
    family: &TransferFamily,
    center: Complex64,
    radius: f64,
    start_angle: f64,
) -> Result<CircleData> {
    let path = PathSpec::circle_from(center, radius, CIRCLE_POINTS, start_angle);
    let tr = track(&path.vertices(), path.max_step, path.min_step, |z| {
        family.eigenvalues(z)
    })?;
    let pos = tr.positions();
    let k = tr.samples[0].values.len();
    let values = tr.vertex_samples[..CIRCLE_POINTS]
        .iter()
        .map(|&idx| {
            (0..k)
                .map(|l| tr.samples[idx].values[pos[idx][l]])
                .collect()
        })
        .collect();
    Ok(CircleData {
        values,
        start_values: tr.samples[0].values.clone(),
        monodromy: tr.composed(),
    })
}

/// Fourier coefficients `a_n` of samples on a circle: for a holomorphic
/// function these are the scaled Taylor coefficients `c_n ρⁿ`, and the
/// negative frequencies vanish. Returns the largest coefficient that must
/// vanish for a zero of order `order` (relative to `max|values|`) and the
/// index of the first coefficient above `1e−3` of that maximum.
fn holomorphic_zero(values: &[Complex64], order: u32) -> (f64, Option<u32>) {
    let n = values.len() as i64;
    let scale = values.iter().fold(0.0_f64, |m, v| m.max(v.norm()));
    if scale == 0.0 {
        return (f64::INFINITY, None);
    }
    let coeff = |freq: i64| -> Complex64 {
        values
            .iter()
            .enumerate()
            .map(|(q, v)| {
                v * Complex64::from_polar(
                    1.0,
                    -std::f64::consts::TAU * (freq * q as i64) as f64 / n as f64,
                )
            })
            .sum::<Complex64>()
            / n as f64
    };
    let mut residual = 0.0_f64;
    for freq in (-n / 2 + 1)..(order as i64) {
        residual = residual.max(coeff(freq).norm() / scale);
    }
    let leading = (0..n / 2)
        .find(|&freq| coeff(freq).norm() >= 1e-3 * scale)
        .map(|f| f as u32);
    (residual, leading)
}

/// Least squares `y ≈ a + b x`; returns `(b, a, max |residual|)`.
fn linear_fit(xs: &[f64], ys: &[f64]) -> (f64, f64, f64) {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let intercept = my - slope * mx;
    let max_residual = xs
        .iter()
        .zip(ys)
        .map(|(x, y)| (y - intercept - slope * x).abs())
        .fold(0.0, f64::max);
    (slope, intercept, max_residual)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn set(values: &[Complex64]) -> ResonanceSet {
        ResonanceSet {
            z: c(0.0, 1.0),
            values: values.to_vec(),
        }
    }

    #[test]
    fn identical_sets_match_identically() {
        let a = set(&[c(1.0, 0.0), c(2.0, 1.0), c(-3.0, 0.5)]);
        assert_eq!(
            match_spectra(&a, &a).unwrap(),
            MatchOutcome::Matched(Permutation::identity(3))
        );
    }

    #[test]
    fn forced_swap() {
        let prev = set(&[c(1.0, 0.0), c(5.0, 0.0)]);
        let next = set(&[c(5.1, 0.0), c(1.05, 0.0)]);
        assert_eq!(
            match_spectra(&prev, &next).unwrap(),
            MatchOutcome::Matched(Permutation(vec![1, 0]))
        );
    }

    #[test]
    fn half_gap_violation_is_ambiguous() {
        let prev = set(&[c(1.0, 0.0), c(1.2, 0.0)]);
        let next = set(&[c(1.1, 0.0), c(1.1, 0.2)]);
        assert!(matches!(
            match_spectra(&prev, &next).unwrap(),
            MatchOutcome::Ambiguous { .. }
        ));
    }

    #[test]
    fn cardinality_mismatch() {
        let prev = set(&[c(1.0, 0.0)]);
        let next = set(&[c(1.0, 0.0), c(2.0, 0.0)]);
        assert!(matches!(
            match_spectra(&prev, &next),
            Err(Error::CardinalityMismatch { prev: 1, next: 2 })
        ));
    }

    #[test]
    fn permutation_algebra() {
        let p = Permutation::from_vec(vec![1, 2, 0, 4, 3]).unwrap();
        assert_eq!(p.periods(), vec![3, 2]);
        assert!(p.then(&p.inverse()).is_identity());
        assert!(p.pow(6).is_identity());
        assert!(!p.pow(3).is_identity());
        assert!(Permutation::from_vec(vec![0, 0]).is_err());
    }

    #[test]
    fn path_validation() {
        let spectrum = [0.0, 1.0];
        let bad = PathSpec::open(vec![c(-1.0, 0.0), c(2.0, 0.0)], 0.1, 1e-3);
        assert!(bad.validate(&spectrum).is_err());
        let repeated = PathSpec::open(vec![c(0.0, 1.0), c(0.0, 1.0)], 0.1, 1e-3);
        assert!(repeated.validate(&spectrum).is_err());
        let ok = PathSpec::open(vec![c(-1.0, 1.0), c(2.0, 1.0)], 0.1, 1e-3);
        assert!(ok.validate(&spectrum).is_ok());
    }

    #[test]
    fn reversed_keeps_base_point() {
        let path = PathSpec::circle(c(0.0, 1.0), 0.5, 8);
        let rev = path.reversed();
        assert_eq!(rev.waypoints[0], path.waypoints[0]);
        assert_eq!(rev.waypoints[1], path.waypoints[7]);
    }

    #[test]
    fn fit_recovers_line() {
        let xs = [0.0, 1.0, 2.0, 3.0];
        let ys = [1.0, -1.0, -3.0, -5.0];
        let (b, a, res) = linear_fit(&xs, &ys);
        assert!((b + 2.0).abs() < 1e-14 && (a - 1.0).abs() < 1e-14 && res < 1e-14);
    }

    #[test]
    fn fourier_zero_order() {
        let center = c(0.0, 0.0);
        let vals: Vec<Complex64> = (0..64)
            .map(|q| {
                let z =
                    center + Complex64::from_polar(1e-3, std::f64::consts::TAU * q as f64 / 64.0);
                z * z * (c(1.0, 0.0) + z)
            })
            .collect();
        let (res, order) = holomorphic_zero(&vals, 2);
        assert!(res < 1e-12);
        assert_eq!(order, Some(2));
        // z̄ is not holomorphic
        let conj: Vec<Complex64> = vals.iter().map(|v| v.conj()).collect();
        assert!(holomorphic_zero(&conj, 2).0 > 0.5);
    }
}
