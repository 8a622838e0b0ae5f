mod svg;

use bikelab::discrete::{closing_starts, direction_map, discrete_monodromy, transform_polygon};
use bikelab::experiments::{self, CheckParams, CheckReport, CurveSource, Suite};
use bikelab::flows::{evolve, integral_drift, Field, FlowSpec};
use bikelab::invariants::{area_centroid, filament_integrals, integral_cos_alpha, monodromy_spectrum};
use bikelab::smooth::{self, bicycle_partner, rear_track};
use bikelab::{json, make_curve, BikeError, Exec, Polygon, SampledCurve, Shape, Vec3};
use clap::{Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use svg::Plot;

#[derive(Parser)]
#[command(name = "bikelab", version, about = "Bicycle transformation, monodromy and filament flows on closed curves")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample a closed curve at equal arc length.
    Gen(GenArgs),
    /// Apply the discrete bicycle transformation to a polygon.
    DiscreteTransform(DiscreteArgs),
    /// Monodromy of a front track at one bicycle length or over a scan.
    Monodromy(MonodromyArgs),
    /// Partner curve from a closed rear track.
    Partner(PartnerArgs),
    /// Filament integrals, area bivector and centroid vector.
    Invariants(CurveArg),
    /// CSV of lambda, tr^2/det and the integral of cos(alpha).
    ScanLambda(ScanArgs),
    /// Evolve a curve under the filament hierarchy.
    Flow(FlowArgs),
    /// Run a numerical check or a whole suite.
    Verify(VerifyArgs),
    /// SVG of a curve with its rear track, cusps and partner.
    Plot(PlotArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Kind {
    Circle,
    Ellipse,
    TorusKnot,
    Fourier,
}

#[derive(clap::Args)]
#[command(allow_negative_numbers = true)]
struct GenArgs {
    #[arg(long, value_enum)]
    kind: Kind,
    /// Radius of a circle or of the base circle of a Fourier curve.
    #[arg(long, default_value_t = 1.0)]
    r: f64,
    #[arg(long, default_value_t = 2.0)]
    a: f64,
    #[arg(long, default_value_t = 1.0)]
    b: f64,
    #[arg(long, default_value_t = 2)]
    p: u32,
    #[arg(long, default_value_t = 3)]
    q: u32,
    #[arg(long, default_value_t = 2.0)]
    major: f64,
    #[arg(long, default_value_t = 0.5)]
    minor: f64,
    #[arg(long, default_value_t = 0.05)]
    amp: f64,
    #[arg(long, default_value_t = 4)]
    modes: u32,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value_t = 2)]
    dim: usize,
    /// Circle centre as `x,y`.
    #[arg(long, default_value = "0,0", allow_hyphen_values = true)]
    center: String,
    #[arg(long, default_value_t = 512)]
    n: usize,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    plot: Option<PathBuf>,
}

#[derive(clap::Args)]
#[command(allow_negative_numbers = true)]
struct DiscreteArgs {
    #[arg(long, alias = "curve")]
    polygon: PathBuf,
    /// Half the segment length: `|P_k Q_k| = d`.
    #[arg(long)]
    d: f64,
    /// First vertex of the transformed polygon, `x,y[,z]`. Defaults to the
    /// start that closes up, attracting first.
    #[arg(long, allow_hyphen_values = true)]
    q1: Option<String>,
    /// Which closing start to use when `--q1` is absent.
    #[arg(long, default_value_t = 0)]
    start: usize,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    plot: Option<PathBuf>,
}

#[derive(clap::Args)]
#[command(allow_negative_numbers = true)]
struct MonodromyArgs {
    #[arg(long)]
    curve: PathBuf,
    #[arg(long, required_unless_present = "scan")]
    lambda: Option<f64>,
    /// `lo:hi:n`, inclusive.
    #[arg(long, conflicts_with = "lambda")]
    scan: Option<String>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(clap::Args)]
#[command(allow_negative_numbers = true)]
struct PartnerArgs {
    #[arg(long)]
    curve: PathBuf,
    /// Bicycle length; the partner chords have length `2 l`.
    #[arg(long)]
    l: f64,
    #[arg(long, default_value_t = 0)]
    branch: usize,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    plot: Option<PathBuf>,
}

#[derive(clap::Args)]
struct CurveArg {
    #[arg(long)]
    curve: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(clap::Args)]
#[command(allow_negative_numbers = true)]
struct ScanArgs {
    #[arg(long)]
    curve: PathBuf,
    #[arg(long)]
    grid: String,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum FieldName {
    Filament,
    PlanarFilament,
    X0,
    X1,
    X2,
    X3,
    /// Weighted sum given by `--weights`.
    Combination,
}

#[derive(clap::Args)]
#[command(allow_negative_numbers = true)]
struct FlowArgs {
    #[arg(long)]
    curve: PathBuf,
    #[arg(long, value_enum)]
    field: FieldName,
    /// `w0,w1,w2,w3` for `--field combination`.
    #[arg(long, allow_hyphen_values = true)]
    weights: Option<String>,
    #[arg(long)]
    dt: f64,
    #[arg(long)]
    steps: usize,
    /// Resample to equal arc length every this many steps.
    #[arg(long, default_value_t = 0)]
    cadence: usize,
    /// CSV log of the conserved quantities.
    #[arg(long)]
    log: Option<PathBuf>,
    /// Final curve.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    plot: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum SuiteName {
    Theorems,
    Probes,
}

#[derive(clap::Args)]
#[command(allow_negative_numbers = true)]
struct VerifyArgs {
    /// Check name, or `all` for a suite.
    check: String,
    #[arg(long, value_enum, default_value = "theorems")]
    suite: SuiteName,
    #[arg(long)]
    curve: Option<PathBuf>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    l: Option<f64>,
    #[arg(long)]
    lambda: Option<f64>,
    /// `lo:hi:n`, inclusive.
    #[arg(long)]
    grid: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    dt: Option<f64>,
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(clap::Args)]
#[command(allow_negative_numbers = true)]
struct PlotArgs {
    #[arg(long)]
    curve: PathBuf,
    /// Bicycle length for the rear track and partner.
    #[arg(long)]
    l: Option<f64>,
    #[arg(long, default_value_t = 0)]
    branch: usize,
    /// Draw the partner curve as well as the rear track.
    #[arg(long, requires = "l")]
    partner: bool,
    #[arg(long)]
    out: PathBuf,
}

enum Failure {
    Usage(String),
    Check,
    Runtime(String),
}

type Outcome = Result<(), Failure>;

fn usage(flag: &str, msg: impl std::fmt::Display) -> Failure {
    Failure::Usage(format!("invalid value for {flag}: {msg}"))
}

fn runtime(e: BikeError) -> Failure {
    Failure::Runtime(e.to_string())
}

fn positive(flag: &str, v: f64) -> Result<f64, Failure> {
    if v.is_finite() && v > 0.0 {
        Ok(v)
    } else {
        Err(usage(flag, format!("must be a positive number, got {v}")))
    }
}

fn read(flag: &str, path: &Path) -> Result<String, Failure> {
    std::fs::read_to_string(path).map_err(|e| usage(flag, format!("cannot read {}: {e}", path.display())))
}

fn load_curve(flag: &str, path: &Path) -> Result<SampledCurve, Failure> {
    SampledCurve::from_json(&read(flag, path)?).map_err(|e| usage(flag, format!("{}: {e}", path.display())))
}

fn load_polygon(flag: &str, path: &Path) -> Result<Polygon, Failure> {
    Polygon::from_json(&read(flag, path)?).map_err(|e| usage(flag, format!("{}: {e}", path.display())))
}

fn emit(out: Option<&Path>, text: &str) -> Outcome {
    match out {
        Some(p) => std::fs::write(p, text).map_err(|e| Failure::Runtime(format!("cannot write {}: {e}", p.display()))),
        None => {
            let mut out = std::io::stdout().lock();
            match writeln!(out, "{}", text.trim_end()).and_then(|()| out.flush()) {
                Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(Failure::Runtime(e.to_string())),
                _ => Ok(()),
            }
        }
    }
}

fn numbers(flag: &str, s: &str) -> Result<Vec<f64>, Failure> {
    s.split(',')
        .map(|t| t.trim().parse::<f64>().map_err(|e| usage(flag, format!("'{t}': {e}"))))
        .collect()
}

/// `lo:hi:n`, `n` points including both ends.
fn grid(flag: &str, s: &str) -> Result<Vec<f64>, Failure> {
    let parts: Vec<&str> = s.split(':').collect();
    let bad = || usage(flag, format!("expected lo:hi:n, got '{s}'"));
    if parts.len() != 3 {
        return Err(bad());
    }
    let lo: f64 = parts[0].parse().map_err(|_| bad())?;
    let hi: f64 = parts[1].parse().map_err(|_| bad())?;
    let n: usize = parts[2].parse().map_err(|_| bad())?;
    if n == 0 || !lo.is_finite() || !hi.is_finite() || hi < lo {
        return Err(bad());
    }
    Ok(if n == 1 { vec![lo] } else { (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect() })
}

fn save_plot(path: Option<&Path>, plot: &Plot) -> Outcome {
    match path {
        Some(p) => std::fs::write(p, plot.render()).map_err(|e| Failure::Runtime(format!("cannot write {}: {e}", p.display()))),
        None => Ok(()),
    }
}

fn gen(a: GenArgs) -> Outcome {
    let shape = match a.kind {
        Kind::Circle => {
            let c = numbers("--center", &a.center)?;
            if c.len() != 2 {
                return Err(usage("--center", "expected x,y"));
            }
            Shape::Circle { radius: positive("--r", a.r)?, center: [c[0], c[1]] }
        }
        Kind::Ellipse => Shape::Ellipse { a: positive("--a", a.a)?, b: positive("--b", a.b)? },
        Kind::TorusKnot => {
            if a.minor >= a.major {
                return Err(usage("--minor", "must be smaller than --major"));
            }
            if a.p == 0 || a.q == 0 {
                return Err(usage(if a.p == 0 { "--p" } else { "--q" }, "must be at least 1"));
            }
            Shape::TorusKnot { p: a.p, q: a.q, major: positive("--major", a.major)?, minor: positive("--minor", a.minor)? }
        }
        Kind::Fourier => {
            let seed = a.seed.ok_or_else(|| Failure::Usage("--seed is required for --kind fourier".into()))?;
            if !(0.0..0.5).contains(&a.amp) {
                return Err(usage("--amp", "must lie in [0, 0.5)"));
            }
            if a.dim != 2 && a.dim != 3 {
                return Err(usage("--dim", "must be 2 or 3"));
            }
            Shape::Fourier { radius: positive("--r", a.r)?, amp: a.amp, modes: a.modes, seed, dim: a.dim }
        }
    };
    if a.n < bikelab::curve::MIN_SAMPLES {
        return Err(usage("--n", format!("need at least {} samples", bikelab::curve::MIN_SAMPLES)));
    }
    let c = make_curve(&shape, a.n).map_err(runtime)?;
    let mut plot = Plot::new();
    plot.layer(c.points(), "black", "curve");
    save_plot(a.plot.as_deref(), &plot)?;
    emit(a.out.as_deref(), &c.to_json())
}

/// Attracting direction of the lap map by forward iteration, for monodromies
/// too hyperbolic to fit.
fn attracting_start(p: &Polygon, d: f64) -> Result<Vec3, Failure> {
    let mut e = Vec3::x();
    for _ in 0..ATTRACT_ITERATIONS {
        let next = direction_map(p, d, &e).map_err(runtime)?;
        let done = (next - e).norm() < 1e-14;
        e = next;
        if done {
            return Ok(p.vertex(0) + e * d);
        }
    }
    Err(Failure::Runtime("lap map did not converge to an attracting direction; pass --q1".into()))
}

const ATTRACT_ITERATIONS: usize = 200;

fn discrete(a: DiscreteArgs) -> Outcome {
    let p = load_polygon("--polygon", &a.polygon)?;
    let d = positive("--d", a.d)?;
    let m = discrete_monodromy(&p, d, Exec::Parallel);
    let mut warnings = Vec::new();
    let q1 = match (&a.q1, &m) {
        (Some(s), _) => {
            let v = numbers("--q1", s)?;
            if v.len() != p.dim() {
                return Err(usage("--q1", format!("expected {} coordinates", p.dim())));
            }
            Vec3::new(v[0], v[1], if v.len() == 3 { v[2] } else { 0.0 })
        }
        (None, Ok(m)) => {
            let starts = closing_starts(&p, m, d);
            match starts.get(a.start) {
                Some(q) => *q,
                None if starts.is_empty() => {
                    warnings.push("monodromy has no fixed direction; started along +x".to_string());
                    p.vertex(0) + Vec3::x() * d
                }
                None => return Err(usage("--start", format!("only {} closing starts", starts.len()))),
            }
        }
        (None, Err(e)) => {
            if a.start != 0 {
                return Err(usage("--start", "only the attracting start is available without a fitted monodromy"));
            }
            warnings.push(format!("monodromy fit failed ({e}); started from the attracting direction"));
            attracting_start(&p, d)?
        }
    };
    let t = transform_polygon(&p, q1, d).map_err(runtime)?;
    let out = t.polygon(p.dim()).map_err(runtime)?;
    if !t.near_collinear.is_empty() {
        warnings.push(format!("{} near-collinear steps", t.near_collinear.len()));
    }
    let mut plot = Plot::new();
    plot.layer(p.vertices(), "black", "P");
    plot.layer(out.vertices(), "darkorange", "Q");
    save_plot(a.plot.as_deref(), &plot)?;
    let report = json!({
        "d": d,
        "polygon": out.to_file(),
        "closure_defect": t.closure_defect,
        "near_collinear": t.near_collinear,
        "monodromy": match &m {
            Ok(m) => serde_json::to_value(m).unwrap_or(Value::Null),
            Err(e) => json!({ "error": e.to_string() }),
        },
        "warnings": warnings,
    });
    emit(a.out.as_deref(), &json::to_string(&report))
}

fn monodromy_json(m: &smooth::SmoothMonodromy) -> Value {
    json!({
        "lambda": m.lambda,
        "class": m.class(),
        "tr2_over_det": m.classification.tr2_over_det.re,
        "tr2_over_det_im": m.classification.tr2_over_det.im,
        "fixed_points": m.classification.fixed_points,
        "residual": m.residual(),
        "matrix": m.product,
    })
}

fn monodromy(a: MonodromyArgs) -> Outcome {
    let c = load_curve("--curve", &a.curve)?;
    let text = match (&a.scan, a.lambda) {
        (Some(s), _) => {
            let g = grid("--scan", s)?;
            for &l in &g {
                positive("--scan", l)?;
            }
            let rows = Exec::Parallel.map(&g, |&l| match smooth::monodromy(&c, l) {
                Ok(m) => monodromy_json(&m),
                Err(e) => json!({ "lambda": l, "error": e.to_string() }),
            });
            json::to_string(&rows)
        }
        (None, Some(l)) => {
            let m = smooth::monodromy(&c, positive("--lambda", l)?).map_err(runtime)?;
            json::to_string(&monodromy_json(&m))
        }
        (None, None) => return Err(Failure::Usage("one of --lambda or --scan is required".into())),
    };
    emit(a.out.as_deref(), &text)
}

fn pair_plot(c: &SampledCurve, l: f64, branch: usize, with_partner: bool) -> Result<Plot, Failure> {
    let rt = rear_track(c, l, branch).map_err(runtime)?;
    let mut plot = Plot::new();
    plot.layer(c.points(), "black", "front");
    plot.layer(rt.curve.points(), "steelblue", format!("rear, l = {l}"));
    let n = rt.curve.len();
    for cusp in &rt.cusps {
        let f = (cusp.index - cusp.lo as f64).rem_euclid(n as f64).clamp(0.0, 1.0);
        let p = rt.curve.point(cusp.lo) * (1.0 - f) + rt.curve.point(cusp.hi) * f;
        plot.markers.push((p, "crimson"));
    }
    if with_partner {
        let q = bicycle_partner(c, l, branch).map_err(runtime)?;
        plot.layer(q.points(), "darkorange", "partner");
    }
    Ok(plot)
}

fn partner(a: PartnerArgs) -> Outcome {
    let c = load_curve("--curve", &a.curve)?;
    let l = positive("--l", a.l)?;
    if a.branch > 1 {
        return Err(usage("--branch", "must be 0 or 1"));
    }
    let q = bicycle_partner(&c, l, a.branch).map_err(runtime)?;
    if a.plot.is_some() {
        save_plot(a.plot.as_deref(), &pair_plot(&c, l, a.branch, true)?)?;
    }
    emit(a.out.as_deref(), &q.to_json())
}

fn invariants(a: CurveArg) -> Outcome {
    let c = load_curve("--curve", &a.curve)?;
    let f = filament_integrals(&c);
    let ac = area_centroid(&c);
    let report = json!({
        "F1": f.f1, "F2": f.f2, "F3": f.f3, "F4": f.f4, "F5": f.f5,
        "flagged_samples": f.flagged,
        "A": ac.a,
        "J": ac.j,
        "center_of_mass": ac.center_of_mass,
    });
    emit(a.out.as_deref(), &json::to_string(&report))
}

fn csv_text(header: &[String], rows: &[Vec<String>]) -> Result<String, Failure> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let io = |e: csv::Error| Failure::Runtime(e.to_string());
    w.write_record(header).map_err(io)?;
    for r in rows {
        w.write_record(r).map_err(io)?;
    }
    let bytes = w.into_inner().map_err(|e| Failure::Runtime(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| Failure::Runtime(e.to_string()))
}

fn num(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else {
        String::new()
    }
}

fn scan_lambda(a: ScanArgs) -> Outcome {
    let c = load_curve("--curve", &a.curve)?;
    let g = grid("--grid", &a.grid)?;
    for &l in &g {
        positive("--grid", l)?;
    }
    let spectrum = monodromy_spectrum(&c, &g, Exec::Parallel);
    let integrals = Exec::Parallel.map(&g, |&l| integral_cos_alpha(&c, l).ok());
    let rows: Vec<Vec<String>> = spectrum
        .iter()
        .zip(&integrals)
        .map(|(r, i)| {
            vec![
                num(r.lambda),
                r.tr2_over_det.map(|t| num(t[0])).unwrap_or_default(),
                i.map(num).unwrap_or_default(),
            ]
        })
        .collect();
    let header = ["lambda", "tr2_over_det", "I"].map(String::from);
    emit(a.out.as_deref(), &csv_text(&header, &rows)?)
}

fn flow(a: FlowArgs) -> Outcome {
    let c = load_curve("--curve", &a.curve)?;
    let field = match a.field {
        FieldName::Filament => Field::Filament,
        FieldName::PlanarFilament => Field::PlanarFilament,
        FieldName::X0 => Field::Hierarchy { n: 0 },
        FieldName::X1 => Field::Hierarchy { n: 1 },
        FieldName::X2 => Field::Hierarchy { n: 2 },
        FieldName::X3 => Field::Hierarchy { n: 3 },
        FieldName::Combination => {
            let w = numbers("--weights", a.weights.as_deref().ok_or_else(|| Failure::Usage("--weights is required for --field combination".into()))?)?;
            let weights: [f64; 4] = w.try_into().map_err(|_| usage("--weights", "expected four numbers"))?;
            Field::Combination { weights }
        }
    };
    if c.dim() == 2 && matches!(a.field, FieldName::Filament | FieldName::X1 | FieldName::X3) {
        return Err(usage("--field", "this field leaves the plane; use planar-filament, x0 or x2 for planar curves"));
    }
    let mut spec = FlowSpec::new(field, positive("--dt", a.dt)?, a.steps);
    spec.cadence = a.cadence;
    let ev = evolve(&c, &spec).map_err(runtime)?;
    if let Some(path) = &a.log {
        let d = c.dim();
        let mut header: Vec<String> = ["step", "t", "F1", "F2", "F3", "F4", "F5"].map(String::from).to_vec();
        for r in 0..d {
            for s in (r + 1)..d {
                header.push(format!("A{}{}", r + 1, s + 1));
            }
        }
        header.extend((1..=d).map(|k| format!("J{k}")));
        let rows: Vec<Vec<String>> = ev
            .log
            .iter()
            .map(|row| {
                let mut v = vec![row.step.to_string(), num(row.t)];
                v.extend(row.integrals.as_array().iter().map(|&x| num(x)));
                v.extend(row.area.iter().map(|&x| num(x)));
                v.extend(row.j.iter().take(d).map(|&x| num(x)));
                v
            })
            .collect();
        emit(Some(path), &csv_text(&header, &rows)?)?;
    }
    let mut plot = Plot::new();
    plot.layer(c.points(), "gray", "t = 0");
    plot.layer(ev.curve.points(), "black", format!("t = {}", a.dt * a.steps as f64));
    save_plot(a.plot.as_deref(), &plot)?;
    let last = ev.log.last().expect("the log always has the initial row");
    let summary = json!({
        "steps": a.steps,
        "t": last.t,
        "substeps": ev.substeps,
        "relative_drift": integral_drift(&ev.log, 1e-12),
        "final": last,
    });
    match &a.out {
        Some(p) => {
            emit(Some(p), &ev.curve.to_json())?;
            emit(None, &json::to_string(&summary))
        }
        None => emit(None, &json::to_string(&summary)),
    }
}

/// Checks that draw random data even when a curve is supplied.
const ALWAYS_RANDOM: &[&str] = &["discrete-exactness", "bisymp", "lemma-proj", "probe-depend"];
/// Checks whose default curve is a seeded random perturbation.
const RANDOM_DEFAULT_CURVE: &[&str] =
    &["monodromy-fit", "mono-conjugacy", "theorem-int", "other-integrals", "bianchi", "sigma", "probe-commute"];

fn needs_seed(check: &str, has_curve: bool) -> bool {
    ALWAYS_RANDOM.contains(&check) || (!has_curve && RANDOM_DEFAULT_CURVE.contains(&check))
}

fn verify(a: VerifyArgs) -> Outcome {
    let curve = match &a.curve {
        Some(p) => Some(CurveSource::Samples { label: p.display().to_string(), curve: load_curve("--curve", p)? }),
        None => None,
    };
    let lambda_grid = a.grid.as_deref().map(|g| grid("--grid", g)).transpose()?;
    for (flag, v) in [("--l", a.l), ("--lambda", a.lambda), ("--dt", a.dt)] {
        if let Some(v) = v {
            positive(flag, v)?;
        }
    }
    let params = CheckParams {
        curve,
        n: a.n,
        l: a.l,
        lambda: a.lambda,
        lambda_grid,
        seed: a.seed,
        trials: a.trials,
        dt: a.dt,
        steps: a.steps,
    };
    let has_curve = params.curve.is_some();
    if a.check == "all" {
        let suite = match a.suite {
            SuiteName::Theorems => Suite::Theorems,
            SuiteName::Probes => Suite::Probes,
        };
        if a.seed.is_none() && suite.checks().iter().any(|c| needs_seed(c, has_curve)) {
            return Err(Failure::Usage("--seed is required: the suite contains randomized checks".into()));
        }
        let results = experiments::run_suite(suite, &params);
        let mut ok = true;
        let reports: Vec<Value> = results
            .iter()
            .map(|(name, r)| match r {
                Ok(rep) => {
                    ok &= rep.pass != Some(false);
                    serde_json::from_str(&rep.to_json()).unwrap_or(Value::Null)
                }
                Err(e) => {
                    ok = false;
                    json!({ "check": name, "error": e.to_string() })
                }
            })
            .collect();
        for (name, r) in &results {
            eprintln!("{name}: {}", verdict(r));
        }
        emit(a.out.as_deref(), &json::to_string(&reports))?;
        return if ok { Ok(()) } else { Err(Failure::Check) };
    }
    let known = experiments::THEOREM_CHECKS.iter().chain(experiments::PROBES).any(|c| *c == a.check);
    if !known {
        let all: Vec<&str> = experiments::THEOREM_CHECKS.iter().chain(experiments::PROBES).copied().collect();
        return Err(Failure::Usage(format!("unknown check '{}' (known: {}, all)", a.check, all.join(", "))));
    }
    if a.seed.is_none() && needs_seed(&a.check, has_curve) {
        return Err(Failure::Usage(format!("--seed is required for the randomized check '{}'", a.check)));
    }
    let r = experiments::run(&a.check, &params);
    eprintln!("{}: {}", a.check, verdict(&r));
    let rep = r.map_err(runtime)?;
    emit(a.out.as_deref(), &rep.to_json())?;
    if rep.pass == Some(false) {
        Err(Failure::Check)
    } else {
        Ok(())
    }
}

fn verdict(r: &bikelab::Result<CheckReport>) -> String {
    match r {
        Ok(rep) => match rep.pass {
            Some(true) => "pass".into(),
            Some(false) => format!("FAIL ({})", rep.failures().join(", ")),
            None => "reported".into(),
        },
        Err(e) => format!("error: {e}"),
    }
}

fn plot(a: PlotArgs) -> Outcome {
    let c = load_curve("--curve", &a.curve)?;
    let plot = match a.l {
        Some(l) => {
            let l = positive("--l", l)?;
            if a.branch > 1 {
                return Err(usage("--branch", "must be 0 or 1"));
            }
            pair_plot(&c, l, a.branch, a.partner)?
        }
        None => {
            let mut p = Plot::new();
            p.layer(c.points(), "black", "curve");
            p
        }
    };
    save_plot(Some(&a.out), &plot)
}

fn init_threads() -> Outcome {
    let Ok(v) = std::env::var("BIKELAB_THREADS") else { return Ok(()) };
    let n: usize = v
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| Failure::Usage(format!("invalid value for BIKELAB_THREADS: expected a positive integer, got '{v}'")))?;
    rayon::ThreadPoolBuilder::new().num_threads(n).build_global().map_err(|e| Failure::Runtime(e.to_string()))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = init_threads().and_then(|()| match cli.command {
        Command::Gen(a) => gen(a),
        Command::DiscreteTransform(a) => discrete(a),
        Command::Monodromy(a) => monodromy(a),
        Command::Partner(a) => partner(a),
        Command::Invariants(a) => invariants(a),
        Command::ScanLambda(a) => scan_lambda(a),
        Command::Flow(a) => flow(a),
        Command::Verify(a) => verify(a),
        Command::Plot(a) => plot(a),
    });
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Check) => ExitCode::from(1),
        Err(Failure::Runtime(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
        Err(Failure::Usage(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
    }
}
