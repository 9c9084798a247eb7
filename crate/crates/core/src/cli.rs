//! Command-line front end: `gen`, `verify`, `scan`, `trace`, `branch-points`,
//! `classify`, `sweep` and `plot`.
//!
//! Exit codes: 0 on success, 1 when an invariant check fails or a suspected
//! absorbing point is reported, 2 for unusable input or usage errors.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use num_complex::Complex64;
use serde_json::{json, Value};

use crate::continuation::{
    classify_approach, locate_branch_points, trace_branches, Classification, PathSpec,
};
use crate::error::{Error, Result};
use crate::numerics::{c, general_eigen, hermitian_eigen, spectral_norm};
use crate::problem::{build_ensemble, EnsembleKind, EnsembleSpec, ResonanceProblem, SeededRng};
use crate::resonance::{
    coupling_consistency_with, weyl_report, ShiftEvaluator, TransferFamily, DEFAULT_ZERO_TOL,
};
use crate::scan::{absorbing_sweep, grid_scan, RayFan, Region};

#[derive(Debug, Parser)]
#[command(
    name = "resatlas",
    version,
    about = "Coupling resonance functions of matrix pairs"
)]
struct Cli {
    /// Worker threads (default: available parallelism).
    #[arg(long, global = true, env = "RESATLAS_THREADS")]
    threads: Option<usize>,
    /// Extra progress output on stderr.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a seeded problem file.
    Gen(GenArgs),
    /// Check the identities at random sample points.
    Verify(VerifyArgs),
    /// Evaluate M(z) and f(z) on a grid.
    Scan(ScanArgs),
    /// Follow the resonance branches along a path.
    Trace(TraceArgs),
    /// Locate branching points inside a rectangle.
    BranchPoints(BranchPointArgs),
    /// Classify the behaviour of the branches along a ray into a point.
    Classify(ClassifyArgs),
    /// Classify fans of rays into many targets.
    Sweep(SweepArgs),
    /// Render one column of a scan CSV as an SVG heatmap.
    Plot(PlotArgs),
}

#[derive(Debug, Args)]
struct GenArgs {
    /// diagonal, jacobi, dense-gaussian or rank-k-perturbation.
    #[arg(long)]
    ensemble: EnsembleKind,
    #[arg(long)]
    n: usize,
    /// Rank of the perturbation (default: min(n, 2)).
    #[arg(long)]
    k: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1.0)]
    scale: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct VerifyArgs {
    #[arg(long)]
    problem: PathBuf,
    #[arg(long, default_value_t = 32)]
    samples: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Relative tolerance of the shift and trace identities.
    #[arg(long, default_value_t = 1e-8)]
    tol: f64,
    /// Also write the residual table as JSON.
    #[arg(long)]
    json: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ScanArgs {
    #[arg(long)]
    problem: PathBuf,
    /// re_min,re_max,im_min,im_max
    #[arg(long, allow_hyphen_values = true)]
    region: String,
    /// NXxNY grid nodes.
    #[arg(long, default_value = "64x64")]
    grid: String,
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    shift: f64,
    /// Exclusion margin around the spectrum (default: 1e-3 × its diameter).
    #[arg(long)]
    margin: Option<f64>,
    /// CSV output.
    #[arg(long)]
    out: PathBuf,
    /// JSON summary (default: the CSV path with a .json extension).
    #[arg(long)]
    summary: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct TraceArgs {
    #[arg(long)]
    problem: PathBuf,
    /// Comma-separated waypoints, e.g. `0.5+1i,1.5+1i,1.5+0.2i`.
    #[arg(long, allow_hyphen_values = true)]
    path: String,
    /// Return to the first waypoint.
    #[arg(long)]
    closed: bool,
    /// Number of traversals of a closed path.
    #[arg(long, default_value_t = 1)]
    loops: usize,
    /// Largest step (default: 1/64 of the path length).
    #[arg(long)]
    max_step: Option<f64>,
    /// Smallest step before giving up (default: 1e-9 × max step).
    #[arg(long)]
    min_step: Option<f64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct BranchPointArgs {
    #[arg(long)]
    problem: PathBuf,
    #[arg(long, allow_hyphen_values = true)]
    region: String,
    #[arg(long, default_value_t = 8)]
    max_depth: u32,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct ClassifyArgs {
    #[arg(long)]
    problem: PathBuf,
    #[arg(long, allow_hyphen_values = true)]
    target: String,
    /// Direction of approach (normalized).
    #[arg(long, default_value = "1", allow_hyphen_values = true)]
    direction: String,
    #[arg(long, default_value_t = 6)]
    decades: u32,
    /// JSON output (default: stdout).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SweepArgs {
    #[arg(long)]
    problem: PathBuf,
    #[arg(long, allow_hyphen_values = true)]
    region: String,
    /// Comma-separated targets (default: interior lattice, see --target-grid).
    #[arg(long, allow_hyphen_values = true)]
    targets: Option<String>,
    /// NXxNY interior lattice of targets when --targets is absent.
    #[arg(long, default_value = "3x3")]
    target_grid: String,
    #[arg(long, default_value_t = 8)]
    directions: usize,
    #[arg(long, default_value_t = 6)]
    decades: u32,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct PlotArgs {
    /// Scan CSV.
    #[arg(long)]
    input: PathBuf,
    /// abs_f, sigma_min, sigma_max or condition.
    #[arg(long, default_value = "abs_f")]
    quantity: String,
    /// Problem file whose spectrum is marked on the real axis.
    #[arg(long)]
    problem: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

/// Parses `argv` (program name first), runs the command and returns the exit
/// code. Diagnostics go to stderr.
pub fn run_cli<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let pool = match rayon::ThreadPoolBuilder::new()
        .num_threads(cli.threads.unwrap_or(0))
        .build()
    {
        Ok(pool) => pool,
        Err(e) => {
            eprintln!("error: thread pool: {e}");
            return 2;
        }
    };
    let verbose = cli.verbose;
    match pool.install(|| dispatch(cli.command, verbose)) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

fn exit_code(e: &Error) -> i32 {
    match e {
        Error::NotHermitian { .. }
        | Error::NonFinite { .. }
        | Error::NotSquare { .. }
        | Error::DimensionMismatch(_)
        | Error::BadSpec(_)
        | Error::Parse { .. }
        | Error::Schema { .. }
        | Error::InvalidPath(_)
        | Error::InvalidArgument(_)
        | Error::SpectrumHit { .. }
        | Error::Io(_) => 2,
        _ => 1,
    }
}

fn dispatch(command: Command, verbose: u8) -> Result<i32> {
    match command {
        Command::Gen(a) => cmd_gen(a, verbose),
        Command::Verify(a) => cmd_verify(a),
        Command::Scan(a) => cmd_scan(a, verbose),
        Command::Trace(a) => cmd_trace(a),
        Command::BranchPoints(a) => cmd_branch_points(a),
        Command::Classify(a) => cmd_classify(a),
        Command::Sweep(a) => cmd_sweep(a, verbose),
        Command::Plot(a) => cmd_plot(a),
    }
}

/// An output file reserved before computing. It is removed on drop unless
/// [`Output::commit`] succeeded.
struct Output {
    path: PathBuf,
    done: bool,
}

impl Output {
    fn reserve(path: &Path) -> Result<Self> {
        fs::File::create(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        Ok(Self {
            path: path.to_path_buf(),
            done: false,
        })
    }

    fn commit(mut self, bytes: &[u8]) -> Result<()> {
        fs::write(&self.path, bytes)
            .map_err(|e| Error::Io(format!("{}: {e}", self.path.display())))?;
        self.done = true;
        Ok(())
    }
}

impl Drop for Output {
    fn drop(&mut self) {
        if !self.done {
            let _ = fs::remove_file(&self.path);
        }
    }
}

fn json_bytes(v: &Value) -> Vec<u8> {
    let mut out = serde_json::to_vec_pretty(v).expect("JSON value serializes");
    out.push(b'\n');
    out
}

fn load_problem(path: &Path) -> Result<ResonanceProblem> {
    let bytes = fs::read(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    let p = ResonanceProblem::from_json(&bytes)?;
    p.validate().into_result()?;
    Ok(p)
}

/// Parses `a+bi`, `a-bi`, `a`, `bi`, `i` and `-i` (with `e` exponents).
pub fn parse_complex(text: &str) -> Result<Complex64> {
    let bad = || Error::InvalidArgument(format!("complex literal `{text}` (expected a+bi)"));
    let s: String = text.chars().filter(|ch| !ch.is_whitespace()).collect();
    if s.is_empty() {
        return Err(bad());
    }
    let num = |t: &str| t.parse::<f64>().map_err(|_| bad());
    let Some(body) = s.strip_suffix('i') else {
        return Ok(c(num(&s)?, 0.0));
    };
    let bytes = body.as_bytes();
    let split = (1..bytes.len())
        .rev()
        .find(|&i| matches!(bytes[i], b'+' | b'-') && !matches!(bytes[i - 1], b'e' | b'E'));
    let imag = |t: &str| match t {
        "" | "+" => Ok(1.0),
        "-" => Ok(-1.0),
        t => num(t),
    };
    match split {
        Some(i) => Ok(c(num(&body[..i])?, imag(&body[i..])?)),
        None => Ok(c(0.0, imag(body)?)),
    }
}

fn parse_complex_list(text: &str) -> Result<Vec<Complex64>> {
    text.split(',').map(parse_complex).collect()
}

/// Parses `NXxNY`.
pub fn parse_grid(text: &str) -> Result<(usize, usize)> {
    let bad = || Error::InvalidArgument(format!("grid `{text}` (expected NXxNY)"));
    let (a, b) = text.split_once(['x', 'X']).ok_or_else(bad)?;
    Ok((
        a.trim().parse().map_err(|_| bad())?,
        b.trim().parse().map_err(|_| bad())?,
    ))
}

fn positive(name: &str, v: f64) -> Result<f64> {
    if v.is_finite() && v > 0.0 {
        Ok(v)
    } else {
        Err(Error::InvalidArgument(format!(
            "--{name} must be positive (got {v})"
        )))
    }
}

fn cmd_gen(a: GenArgs, verbose: u8) -> Result<i32> {
    let out = Output::reserve(&a.out)?;
    let spec = EnsembleSpec {
        kind: a.ensemble,
        n: a.n,
        k: a.k.unwrap_or(a.n.min(2)),
        seed: a.seed,
        scale: a.scale,
    };
    let p = build_ensemble(&spec)?;
    out.commit(&p.to_json())?;
    if verbose > 0 {
        eprintln!(
            "wrote {} ({} n={} k={} seed={})",
            a.out.display(),
            spec.kind,
            spec.n,
            spec.k,
            spec.seed
        );
    }
    Ok(0)
}

/// Largest residual of one identity over the sampled points.
#[derive(Debug, Clone, PartialEq)]
pub struct CheckSummary {
    pub name: &'static str,
    pub evaluated: usize,
    pub max_residual: f64,
    pub tolerance: f64,
    /// Why the check was not run, if it was not.
    pub skipped: Option<String>,
}

impl CheckSummary {
    fn new(name: &'static str, tolerance: f64) -> Self {
        Self {
            name,
            evaluated: 0,
            max_residual: 0.0,
            tolerance,
            skipped: None,
        }
    }

    fn push(&mut self, residual: f64) {
        self.evaluated += 1;
        // NaN residuals must fail the check
        if residual.is_nan() || residual > self.max_residual {
            self.max_residual = if residual.is_nan() {
                f64::INFINITY
            } else {
                residual
            };
        }
    }

    pub fn passed(&self) -> bool {
        self.max_residual <= self.tolerance
    }
}

/// Random-sample identity suite behind `verify`.
///
/// Points `z` are drawn around the spectrum in both half-planes and couplings
/// `s` uniformly from `[−2, 2]`. Residuals are relative:
/// - shift identity: matching distance over `1 + ‖M_s(z)‖₂`, tolerance `tol`;
/// - trace identity: `|f_sum − f_trace|` over `1 + ‖M_s(z)‖₁`, tolerance `tol`;
/// - Weyl: negative slack over `max(1, Σ s_j^p)` for `p ∈ {½, 1, 2}`, tolerance `1e−12`;
/// - coupling consistency: the larger of the relative eigenvalue distance and
///   `σ_min(I + rM)`, tolerance `1e−7`;
/// - Herglotz positivity (only for `J ≥ 0`, `Im z > 0`): `max(0, −Im σ_j)`
///   over `1 + ‖M‖₂`, tolerance `tol`.
pub fn verify_suite(
    p: &ResonanceProblem,
    samples: usize,
    seed: u64,
    tol: f64,
) -> Result<Vec<CheckSummary>> {
    let family = TransferFamily::new(p)?;
    let spectrum = family.spectrum();
    let (lo, hi) = (spectrum[0], spectrum[spectrum.len() - 1]);
    let width = (0.25 * (hi - lo)).max(1.0);
    let j_psd = hermitian_eigen(p.j())?.values.iter().all(|&v| v >= 0.0);

    let mut shift = CheckSummary::new("shift identity", tol);
    let mut trace = CheckSummary::new("trace identity", tol);
    let mut weyl = CheckSummary::new("weyl inequality", 1e-12);
    let mut coupling = CheckSummary::new("coupling consistency", 1e-7);
    let mut herglotz = CheckSummary::new("herglotz positivity", tol);
    if !j_psd {
        herglotz.skipped = Some("J is indefinite".into());
    }

    let mut rng = SeededRng::new(seed);
    for _ in 0..samples {
        let x = rng.uniform_in(lo - width, hi + width);
        let y = rng.uniform_in(0.05, 1.0) * width;
        let z = if rng.uniform() < 0.5 {
            c(x, y)
        } else {
            c(x, -y)
        };
        let mut s = rng.uniform_in(-2.0, 2.0);

        let mut attempt = 0;
        let eval = loop {
            let eval = ShiftEvaluator::new(p, s)?;
            match eval.predicted(z) {
                Err(Error::CouplingCollision { .. }) if attempt < 4 => {
                    s += crate::scan::COLLISION_RETRY_SHIFT;
                    attempt += 1;
                }
                Err(e) => return Err(e),
                Ok(_) => break eval,
            }
        };
        let (dist, ms_norm) = eval.shift_residual(z)?;
        shift.push(dist / (1.0 + ms_norm));
        let h = eval.herglotz(z)?;
        trace.push(h.residual / (1.0 + h.trace_norm_bound));

        let sample = family.sample(z, DEFAULT_ZERO_TOL)?;
        for q in [0.5, 1.0, 2.0] {
            let w = weyl_report(&sample.m, q)?;
            let total = w.prefix_s_sums.last().copied().unwrap_or(0.0);
            weyl.push((-w.min_slack).max(0.0) / total.max(1.0));
        }
        for &sigma in &sample.sigmas {
            let r = -sigma.inv();
            let cc = coupling_consistency_with(p, &family, z, r)?;
            let rel = cc.eig_distance / ((1.0 + z.norm()) * (1.0 + cc.operator_norm));
            coupling.push(rel.max(cc.sing_min));
        }
        if j_psd && z.im > 0.0 {
            let norm = spectral_norm(&sample.m)?;
            let worst = general_eigen(&sample.m)?
                .values
                .iter()
                .map(|v| v.im)
                .fold(f64::INFINITY, f64::min);
            herglotz.push((-worst).max(0.0) / (1.0 + norm));
        }
    }
    Ok(vec![shift, trace, weyl, coupling, herglotz])
}

fn cmd_verify(a: VerifyArgs) -> Result<i32> {
    positive("tol", a.tol)?;
    let json_out = a.json.as_deref().map(Output::reserve).transpose()?;
    let p = load_problem(&a.problem)?;
    let checks = verify_suite(&p, a.samples, a.seed, a.tol)?;
    let mut stdout = std::io::stdout().lock();
    writeln!(
        stdout,
        "{:<22} {:>9} {:>13} {:>10}  status",
        "check", "evaluated", "max_residual", "tolerance"
    )?;
    for ch in &checks {
        let status = match &ch.skipped {
            Some(why) => format!("skipped ({why})"),
            None if ch.passed() => "ok".into(),
            None => "FAIL".into(),
        };
        writeln!(
            stdout,
            "{:<22} {:>9} {:>13.3e} {:>10.1e}  {status}",
            ch.name, ch.evaluated, ch.max_residual, ch.tolerance
        )?;
    }
    let all_pass = checks.iter().all(CheckSummary::passed);
    if let Some(out) = json_out {
        let doc = json!({
            "problem": a.problem.display().to_string(),
            "samples": a.samples,
            "seed": a.seed,
            "tol": a.tol,
            "passed": all_pass,
            "checks": checks.iter().map(|ch| json!({
                "name": ch.name,
                "evaluated": ch.evaluated,
                "max_residual": if ch.max_residual.is_finite() { json!(ch.max_residual) } else { Value::Null },
                "tolerance": ch.tolerance,
                "skipped": ch.skipped,
                "passed": ch.passed(),
            })).collect::<Vec<_>>(),
        });
        out.commit(&json_bytes(&doc))?;
    }
    Ok(if all_pass { 0 } else { 1 })
}

fn cmd_scan(a: ScanArgs, verbose: u8) -> Result<i32> {
    let mut region = Region::parse(&a.region)?;
    if let Some(m) = a.margin {
        region = region.with_margin(positive("margin", m)?);
    }
    let (nx, ny) = parse_grid(&a.grid)?;
    let summary_path = a
        .summary
        .clone()
        .unwrap_or_else(|| a.out.with_extension("json"));
    let csv_out = Output::reserve(&a.out)?;
    let json_out = Output::reserve(&summary_path)?;
    let p = load_problem(&a.problem)?;
    let report = grid_scan(&p, &region, nx, ny, a.shift)?;
    let mut csv = Vec::new();
    report.write_csv(&mut csv)?;
    let mut summary = report.summary_json();
    summary["problem"] = json!(a.problem.display().to_string());
    summary["requested_shift"] = json!(a.shift);
    csv_out.commit(&csv)?;
    json_out.commit(&json_bytes(&summary))?;
    if verbose > 0 {
        eprintln!(
            "{} nodes evaluated, {} skipped, {} zero candidates",
            report.summary.evaluated,
            report.summary.skipped,
            report.summary.zero_candidates.len()
        );
    }
    let isolated = report.summary.zero_candidates.iter().all(|z| z.isolated);
    Ok(if isolated { 0 } else { 1 })
}

fn cmd_trace(a: TraceArgs) -> Result<i32> {
    let waypoints = parse_complex_list(&a.path)?;
    let length: f64 = waypoints
        .windows(2)
        .map(|w| (w[1] - w[0]).norm())
        .sum::<f64>()
        + if a.closed && waypoints.len() > 1 {
            (waypoints[0] - waypoints[waypoints.len() - 1]).norm()
        } else {
            0.0
        };
    let max_step = match a.max_step {
        Some(v) => positive("max-step", v)?,
        None => length / 64.0,
    };
    let min_step = match a.min_step {
        Some(v) => positive("min-step", v)?,
        None => max_step * 1e-9,
    };
    if a.loops == 0 || (a.loops > 1 && !a.closed) {
        return Err(Error::InvalidArgument(
            "--loops > 1 needs --closed and must be positive".into(),
        ));
    }
    let out = Output::reserve(&a.out)?;
    let p = load_problem(&a.problem)?;
    let path = PathSpec {
        waypoints,
        max_step,
        min_step,
        closed: a.closed,
    };
    let mut family = if a.loops > 1 {
        let tracker = crate::continuation::Tracker::new(&p)?;
        let mut fam = tracker.trace_repeated(&path, a.loops)?;
        tracker.verify(&p, &mut fam)?;
        fam
    } else {
        trace_branches(&p, &path)?
    };
    let k = family.labels.len();
    let branches: Vec<Vec<Complex64>> = (0..k).map(|l| family.branch(l)).collect();
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["step".to_string(), "re(z)".into(), "im(z)".into()];
    for l in 0..k {
        header.push(format!("re(r_{l})"));
        header.push(format!("im(r_{l})"));
    }
    let csv_err = |e: csv::Error| Error::Io(e.to_string());
    w.write_record(&header).map_err(csv_err)?;
    for (m, sample) in family.samples.iter().enumerate() {
        let mut row = vec![
            m.to_string(),
            format!("{:?}", sample.z.re),
            format!("{:?}", sample.z.im),
        ];
        for b in &branches {
            row.push(format!("{:?}", b[m].re));
            row.push(format!("{:?}", b[m].im));
        }
        w.write_record(&row).map_err(csv_err)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.to_string()))?;
    out.commit(&bytes)?;
    let perm = family.composed();
    println!("samples: {}", family.samples.len());
    println!("composed permutation: {:?}", perm.as_slice());
    if a.closed {
        println!("periods: {:?}", perm.periods());
    }
    let stats = family.consistency.take();
    if let Some(st) = stats {
        println!(
            "coupling consistency: worst relative eigenvalue distance {:.3e}, worst sigma_min {:.3e}",
            st.worst_eig_distance_rel, st.worst_sing_min
        );
        if !st.all_pass {
            return Ok(1);
        }
    }
    Ok(0)
}

fn cmd_branch_points(a: BranchPointArgs) -> Result<i32> {
    let region = Region::parse(&a.region)?;
    let out = Output::reserve(&a.out)?;
    let p = load_problem(&a.problem)?;
    let points = locate_branch_points(&p, region.rect(), a.max_depth)?;
    let doc = json!({
        "problem": a.problem.display().to_string(),
        "region": region.as_array(),
        "max_depth": a.max_depth,
        "branch_points": points.iter().map(|b| b.to_json()).collect::<Vec<_>>(),
    });
    out.commit(&json_bytes(&doc))?;
    println!("{} branch point(s)", points.len());
    Ok(0)
}

fn cmd_classify(a: ClassifyArgs) -> Result<i32> {
    let target = parse_complex(&a.target)?;
    let direction = parse_complex(&a.direction)?;
    let out = a.out.as_deref().map(Output::reserve).transpose()?;
    let p = load_problem(&a.problem)?;
    let report = classify_approach(&p, target, direction, a.decades)?;
    let mut doc = report.to_json();
    doc["decades"] = json!(a.decades);
    let bytes = json_bytes(&doc);
    match out {
        Some(out) => {
            out.commit(&bytes)?;
            println!("{}", report.classification);
        }
        None => std::io::stdout().lock().write_all(&bytes)?,
    }
    Ok(
        if report.classification == Classification::SuspectedAbsorbing {
            1
        } else {
            0
        },
    )
}

fn cmd_sweep(a: SweepArgs, verbose: u8) -> Result<i32> {
    let region = Region::parse(&a.region)?;
    if a.directions == 0 {
        return Err(Error::InvalidArgument(
            "--directions must be positive".into(),
        ));
    }
    let targets = match &a.targets {
        Some(t) => parse_complex_list(t)?,
        None => {
            let (nx, ny) = parse_grid(&a.target_grid)?;
            let rect = region.rect();
            (1..=ny)
                .flat_map(|row| {
                    (1..=nx).map(move |col| {
                        c(
                            rect.re_min + rect.width() * col as f64 / (nx + 1) as f64,
                            rect.im_min + rect.height() * row as f64 / (ny + 1) as f64,
                        )
                    })
                })
                .collect()
        }
    };
    let out = Output::reserve(&a.out)?;
    let p = load_problem(&a.problem)?;
    let fan = RayFan {
        targets,
        directions_per_target: a.directions,
    };
    let summary = absorbing_sweep(&p, &region, &fan, a.decades)?;
    let mut doc = summary.to_json();
    doc["problem"] = json!(a.problem.display().to_string());
    doc["region"] = json!(region.as_array());
    doc["decades"] = json!(a.decades);
    out.commit(&json_bytes(&doc))?;
    println!(
        "rays {}: regular {}, pole_like {}, branching {}, suspected_absorbing {}, errors {}",
        summary.rays,
        summary.regular,
        summary.pole_like_total(),
        summary.branching,
        summary.suspected_absorbing,
        summary.errors.len()
    );
    if verbose > 0 {
        for e in &summary.errors {
            eprintln!("ray {} → {}: {}", e.target, e.direction, e.message);
        }
    }
    Ok(if summary.suspected_absorbing > 0 {
        1
    } else {
        0
    })
}

fn cmd_plot(a: PlotArgs) -> Result<i32> {
    let out = Output::reserve(&a.out)?;
    let bytes = fs::read(&a.input).map_err(|e| Error::Io(format!("{}: {e}", a.input.display())))?;
    let grid = ScanGrid::from_csv(&bytes, &a.quantity)?;
    let spectrum = match &a.problem {
        Some(path) => TransferFamily::new(&load_problem(path)?)?
            .spectrum()
            .to_vec(),
        None => Vec::new(),
    };
    out.commit(render_svg(&grid, &a.quantity, &spectrum).as_bytes())?;
    Ok(0)
}

/// One quantity of a scan CSV laid out on its grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ScanGrid {
    pub nx: usize,
    pub ny: usize,
    pub re: [f64; 2],
    pub im: [f64; 2],
    /// Row-major values; `None` for skipped nodes.
    pub values: Vec<Option<f64>>,
}

impl ScanGrid {
    /// Reads the scan CSV schema and extracts `quantity`.
    pub fn from_csv(bytes: &[u8], quantity: &str) -> Result<Self> {
        let mut reader = csv::Reader::from_reader(bytes);
        let schema_err = |m: String| Error::Schema {
            field: "csv".into(),
            message: m,
        };
        let headers = reader
            .headers()
            .map_err(|e| schema_err(e.to_string()))?
            .clone();
        let col = |name: &str| {
            headers
                .iter()
                .position(|h| h == name)
                .ok_or_else(|| schema_err(format!("missing column `{name}`")))
        };
        let (c_re, c_im, c_q, c_skip) = (
            col("re(z)")?,
            col("im(z)")?,
            col(quantity)?,
            col("skipped")?,
        );
        if !["abs_f", "sigma_min", "sigma_max", "condition"].contains(&quantity) {
            return Err(Error::InvalidArgument(format!("cannot plot `{quantity}`")));
        }
        let mut zs = Vec::new();
        let mut values = Vec::new();
        for (line, rec) in reader.records().enumerate() {
            let rec = rec.map_err(|e| schema_err(e.to_string()))?;
            let num = |i: usize| {
                rec[i]
                    .parse::<f64>()
                    .map_err(|_| schema_err(format!("row {}: bad number `{}`", line + 2, &rec[i])))
            };
            zs.push((num(c_re)?, num(c_im)?));
            values.push(if rec[c_skip].is_empty() {
                Some(num(c_q)?)
            } else {
                None
            });
        }
        let first_im = zs.first().ok_or_else(|| schema_err("no rows".into()))?.1;
        let nx = zs.iter().take_while(|z| z.1 == first_im).count();
        if nx < 2 || zs.len() % nx != 0 || zs.len() / nx < 2 {
            return Err(schema_err("rows do not form a row-major grid".into()));
        }
        let ny = zs.len() / nx;
        Ok(Self {
            nx,
            ny,
            re: [zs[0].0, zs[nx - 1].0],
            im: [first_im, zs[zs.len() - 1].1],
            values,
        })
    }
}

/// Viridis-like ramp sampled at five stops.
fn colormap(t: f64) -> (u8, u8, u8) {
    const STOPS: [(f64, f64, f64); 5] = [
        (68.0, 1.0, 84.0),
        (59.0, 82.0, 139.0),
        (33.0, 145.0, 140.0),
        (94.0, 201.0, 98.0),
        (253.0, 231.0, 37.0),
    ];
    let t = t.clamp(0.0, 1.0) * (STOPS.len() - 1) as f64;
    let i = (t.floor() as usize).min(STOPS.len() - 2);
    let u = t - i as f64;
    let mix = |a: f64, b: f64| (a + (b - a) * u).round() as u8;
    let (a, b) = (STOPS[i], STOPS[i + 1]);
    (mix(a.0, b.0), mix(a.1, b.1), mix(a.2, b.2))
}

/// Self-contained SVG heatmap of `log10` of the grid values, with the
/// spectrum marked on the real axis (or on the lower edge if the axis is not
/// in view).
pub fn render_svg(grid: &ScanGrid, quantity: &str, spectrum: &[f64]) -> String {
    use std::fmt::Write as _;
    const W: f64 = 640.0;
    const H: f64 = 480.0;
    const PAD: f64 = 60.0;
    const BAR: f64 = 90.0;
    let logs: Vec<Option<f64>> = grid
        .values
        .iter()
        .map(|v| v.filter(|x| *x > 0.0 && x.is_finite()).map(f64::log10))
        .collect();
    let (lo, hi) = logs
        .iter()
        .flatten()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        });
    let span = if hi > lo { hi - lo } else { 1.0 };
    let (pw, ph) = (W - 2.0 * PAD - BAR, H - 2.0 * PAD);
    let (cw, ch) = (pw / grid.nx as f64, ph / grid.ny as f64);
    let x_of = |re: f64| PAD + (re - grid.re[0]) / (grid.re[1] - grid.re[0]) * (pw - cw) + cw / 2.0;
    let y_of =
        |im: f64| PAD + ph - ((im - grid.im[0]) / (grid.im[1] - grid.im[0]) * (ph - ch) + ch / 2.0);

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    for row in 0..grid.ny {
        for col in 0..grid.nx {
            let fill = match logs[row * grid.nx + col] {
                Some(v) => {
                    let (r, g, b) = colormap((v - lo) / span);
                    format!("rgb({r},{g},{b})")
                }
                None => "rgb(200,200,200)".into(),
            };
            let x = PAD + col as f64 * cw;
            let y = PAD + ph - (row + 1) as f64 * ch;
            let _ = writeln!(
                s,
                r#"<rect x="{x:.2}" y="{y:.2}" width="{:.2}" height="{:.2}" fill="{fill}"/>"#,
                cw + 0.05,
                ch + 0.05
            );
        }
    }
    let _ = writeln!(
        s,
        r#"<rect x="{PAD}" y="{PAD}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#
    );
    let axis_y = if grid.im[0] <= 0.0 && grid.im[1] >= 0.0 {
        y_of(0.0)
    } else {
        PAD + ph
    };
    for &l in spectrum
        .iter()
        .filter(|&&l| l >= grid.re[0] && l <= grid.re[1])
    {
        let x = x_of(l);
        let _ = writeln!(
            s,
            r#"<path d="M {x:.2} {:.2} l -5 9 l 10 0 z" fill="red" stroke="black" stroke-width="0.5"><title>eigenvalue {l}</title></path>"#,
            axis_y - 4.0
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">Re z</text>"#,
        PAD + pw / 2.0,
        H - 15.0
    );
    let _ = writeln!(
        s,
        r#"<text x="15" y="{:.1}" text-anchor="middle" transform="rotate(-90 15 {:.1})">Im z</text>"#,
        PAD + ph / 2.0,
        PAD + ph / 2.0
    );
    for (val, x, anchor) in [(grid.re[0], PAD, "start"), (grid.re[1], PAD + pw, "end")] {
        let _ = writeln!(
            s,
            r#"<text x="{x:.1}" y="{:.1}" text-anchor="{anchor}">{val}</text>"#,
            PAD + ph + 16.0
        );
    }
    for (val, y) in [(grid.im[0], PAD + ph), (grid.im[1], PAD + 10.0)] {
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{y:.1}" text-anchor="end">{val}</text>"#,
            PAD - 4.0
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">log10 {quantity}</text>"#,
        PAD + pw / 2.0,
        PAD - 20.0
    );
    let bx = PAD + pw + 25.0;
    let steps = 64;
    for q in 0..steps {
        let (r, g, b) = colormap(q as f64 / (steps - 1) as f64);
        let y = PAD + ph - (q + 1) as f64 * ph / steps as f64;
        let _ = writeln!(
            s,
            r#"<rect x="{bx:.1}" y="{y:.2}" width="18" height="{:.2}" fill="rgb({r},{g},{b})"/>"#,
            ph / steps as f64 + 0.05
        );
    }
    if lo.is_finite() {
        for (val, y) in [(lo, PAD + ph), (hi, PAD + 10.0)] {
            let _ = writeln!(
                s,
                r#"<text x="{:.1}" y="{y:.1}">{val:.2}</text>"#,
                bx + 22.0
            );
        }
    }
    s.push_str("</svg>\n");
    s
}
