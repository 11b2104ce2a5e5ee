//! The `dwn` command: argument parsing, dispatch and output formats.
//!
//! Every subcommand writes one JSON document (or CSV for `texture` and
//! `sweep`) to `--out` or stdout. Exit codes: 0 for a resolved result, 2 for
//! a result that was computed but is unresolved or invalid, 1 for misuse.

use std::fs::{self, File};
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use dwn_core::chern::{self, ChernMethod, ChernOptions, ChernResult, SingularityPoint};
use dwn_core::dynamics::{self, DynamicsConfig, InitialState, TextureKind};
use dwn_core::model::{builtin, parse_model, Family, ModelSpec, Momentum};
use dwn_core::spectral::{eigensystem, Axis, Plane};
use dwn_core::sweep::{
    self, AxisSpec, BoundarySet, Budget, Invariant, SweepGrid, SweepOptions, SweepPlan,
};
use dwn_core::winding::{self, Band, Diagnostics, Field, InvariantResult, Method, Source, Status};
use dwn_core::Error;
use serde::Serialize;

pub const VERSION: &str = concat!("dwn ", env!("CARGO_PKG_VERSION"));

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_UNRESOLVED: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "dwn", version, about = "Dynamic winding numbers and Chern numbers of two-band models")]
pub struct Cli {
    /// Output file; stdout when absent. For `sweep` this is the CSV, with
    /// diagnostics in the `.jsonl` file next to it.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,

    /// Worker threads; defaults to all cores.
    #[arg(long, global = true, env = "DWN_THREADS")]
    pub parallelism: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Winding number of a 1D model.
    Winding(WindingArgs),
    /// `w₊ + w₋` of a 1D model by quadrature.
    Wtotal(WtotalArgs),
    /// Chern number of a 2D model.
    Chern(ChernArgs),
    /// Singularity points of a 2D model.
    FindSp(FindSpArgs),
    /// Spin texture time series at one momentum, as CSV.
    Texture(TextureArgs),
    /// Invariant over a two-parameter grid, as CSV.
    Sweep(SweepArgs),
    /// Checks a finished sweep against closed-form phase boundaries.
    Audit(AuditArgs),
}

#[derive(Debug, Args)]
pub struct ModelArgs {
    /// Model document (JSON).
    #[arg(long, conflicts_with = "builtin", required_unless_present = "builtin")]
    pub model: Option<PathBuf>,
    /// chiral1d, nonchiral1d, qah2d or largechern2d.
    #[arg(long)]
    pub builtin: Option<String>,
    #[arg(long, requires = "builtin", value_delimiter = ',', allow_negative_numbers = true)]
    pub params: Vec<f64>,
}

#[derive(Debug, Args)]
pub struct DynamicsArgs {
    #[arg(long, value_enum, default_value_t = SourceArg::Analytic)]
    pub source: SourceArg,
    /// Averaging horizon T.
    #[arg(long)]
    pub time: Option<f64>,
    #[arg(long)]
    pub dt: Option<f64>,
    /// Seed of the initial-state phases.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SourceArg {
    Analytic,
    Dynamic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum WindingMethod {
    /// LR for Hermitian models or the analytic source, RR+LL otherwise.
    Dwn,
    DwnLr,
    DwnRr,
    DwnLl,
    DwnCombined,
    /// Quadrature of one band's winding.
    Conventional,
    Wtotal,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum BandArg {
    Plus,
    Minus,
}

#[derive(Debug, Args)]
pub struct WindingArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long, value_parser = parse_plane, default_value = "yx")]
    pub plane: Plane,
    #[arg(long, value_enum, default_value_t = WindingMethod::Dwn)]
    pub method: WindingMethod,
    #[arg(long, value_enum, default_value_t = BandArg::Plus)]
    pub band: BandArg,
    /// Loop samples, or quadrature nodes for `conventional` and `wtotal`.
    #[arg(long)]
    pub samples: Option<usize>,
    #[command(flatten)]
    pub dynamics: DynamicsArgs,
}

#[derive(Debug, Args)]
pub struct WtotalArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long, default_value_t = winding::DEFAULT_QUADRATURE)]
    pub samples: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ChernMethodArg {
    Dwn,
    Oracle,
    Both,
}

#[derive(Debug, Args)]
pub struct ChernArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long, value_parser = parse_axis, default_value = "y")]
    pub axis: Axis,
    #[arg(long, value_enum, default_value_t = ChernMethodArg::Dwn)]
    pub method: ChernMethodArg,
    /// Coarse grid of the singularity search, `NxM` or `N`.
    #[arg(long, value_parser = parse_grid, default_value = "64x64")]
    pub grid: [usize; 2],
    /// Plaquette grid of the lattice oracle.
    #[arg(long, value_parser = parse_grid, default_value = "128x128")]
    pub oracle_grid: [usize; 2],
    /// Loop radius around each singularity.
    #[arg(long, default_value_t = chern::DEFAULT_RADIUS)]
    pub radius: f64,
    /// Samples per loop.
    #[arg(long, default_value_t = winding::DEFAULT_SAMPLES)]
    pub samples: usize,
    #[command(flatten)]
    pub dynamics: DynamicsArgs,
}

#[derive(Debug, Args)]
pub struct FindSpArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long, value_parser = parse_axis, default_value = "y")]
    pub axis: Axis,
    #[arg(long, value_parser = parse_grid, default_value = "64x64")]
    pub grid: [usize; 2],
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum KindArg {
    Lr,
    Rr,
    Ll,
}

#[derive(Debug, Args)]
pub struct TextureArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    /// Momentum, `k` or `kx,ky`.
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true, required = true)]
    pub k: Vec<f64>,
    #[arg(long, value_enum, default_value_t = KindArg::Lr)]
    pub kind: KindArg,
    #[arg(long, default_value_t = dynamics::DEFAULT_T)]
    pub time: f64,
    #[arg(long, default_value_t = dynamics::DEFAULT_DT)]
    pub dt: f64,
    #[arg(long, default_value_t = dynamics::DEFAULT_SEED)]
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum InvariantArg {
    #[value(name = "dwn-1d")]
    Dwn1d,
    Wtotal,
    ChernDwn,
    ChernOracle,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FieldArg {
    Auto,
    Lr,
    Rr,
    Ll,
    Combined,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    /// JSON sweep plan; excludes the inline plan flags.
    #[arg(long, conflicts_with_all = ["family", "params", "axis1", "axis2", "invariant"])]
    pub plan: Option<PathBuf>,
    #[arg(long, required_unless_present = "plan")]
    pub family: Option<String>,
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true, required_unless_present = "plan")]
    pub params: Vec<f64>,
    /// `name:min:max:count`.
    #[arg(long, value_parser = parse_axis_spec, allow_hyphen_values = true, required_unless_present = "plan")]
    pub axis1: Option<AxisSpec>,
    #[arg(long, value_parser = parse_axis_spec, allow_hyphen_values = true, required_unless_present = "plan")]
    pub axis2: Option<AxisSpec>,
    #[arg(long, value_enum, required_unless_present = "plan")]
    pub invariant: Option<InvariantArg>,
    #[arg(long, value_enum)]
    pub field: Option<FieldArg>,
    #[arg(long)]
    pub samples: Option<usize>,
    #[arg(long)]
    pub quadrature: Option<usize>,
    #[arg(long, value_parser = parse_axis)]
    pub axis: Option<Axis>,
    /// Coarse singularity-search grid per side.
    #[arg(long)]
    pub coarse: Option<usize>,
    #[arg(long)]
    pub radius: Option<f64>,
    #[arg(long)]
    pub oracle_grid: Option<usize>,
    #[command(flatten)]
    pub dynamics: DynamicsArgs,
    /// Stop after this many newly computed cells.
    #[arg(long)]
    pub limit: Option<usize>,
    /// Print the resolved plan as JSON and exit.
    #[arg(long)]
    pub emit_plan: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum BoundaryArg {
    Chain1d,
    Qah2dLine,
    Qah2dExact,
}

#[derive(Debug, Args)]
pub struct AuditArgs {
    /// CSV written by `sweep --out`.
    #[arg(long)]
    pub input: PathBuf,
    /// Defaults to `chain1d` for 1D families and `qah2d-exact` for qah2d.
    #[arg(long, value_enum)]
    pub boundary: Option<BoundaryArg>,
}

fn parse_plane(s: &str) -> Result<Plane, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_axis(s: &str) -> Result<Axis, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_grid(s: &str) -> Result<[usize; 2], String> {
    let parts: Vec<&str> = s.split(['x', 'X']).collect();
    let n = |p: &str| match p.trim().parse::<usize>() {
        Ok(v) if v >= 2 => Ok(v),
        _ => Err(format!("grid `{s}`: expected NxM with N, M >= 2")),
    };
    match parts.as_slice() {
        [a] => {
            let v = n(a)?;
            Ok([v, v])
        }
        [a, b] => Ok([n(a)?, n(b)?]),
        _ => Err(format!("grid `{s}`: expected NxM")),
    }
}

fn parse_axis_spec(s: &str) -> Result<AxisSpec, String> {
    let parts: Vec<&str> = s.split(':').collect();
    let [param, min, max, count] = parts.as_slice() else {
        return Err(format!("axis `{s}`: expected name:min:max:count"));
    };
    let f = |v: &str| v.parse::<f64>().map_err(|_| format!("axis `{s}`: bad number `{v}`"));
    Ok(AxisSpec {
        param: param.to_string(),
        min: f(min)?,
        max: f(max)?,
        count: count.parse().map_err(|_| format!("axis `{s}`: bad count `{count}`"))?,
    })
}

#[derive(Debug)]
enum Failure {
    Usage(String),
    /// Computation could not produce a value; reported as an invalid result.
    Numerical(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        if is_numerical(&e) {
            Failure::Numerical(e)
        } else {
            Failure::Usage(e.to_string())
        }
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::Usage(e.to_string())
    }
}

fn is_numerical(e: &Error) -> bool {
    matches!(
        e,
        Error::ExceptionalPoint { .. }
            | Error::SingularPlane { .. }
            | Error::VanishingDenominator { .. }
            | Error::SingularAngle
            | Error::ProfileInvalid { .. }
            | Error::SingularOnLoop { .. }
            | Error::NewtonFailed { .. }
            | Error::Classification { .. }
            | Error::DegenerateAxis(_)
            | Error::InseparableCluster { .. }
            | Error::NotSeparable(_)
    )
}

type Outcome = Result<(Vec<u8>, i32), Failure>;

#[derive(Serialize)]
struct Envelope<'a, T: Serialize> {
    version: &'static str,
    command: &'a str,
    #[serde(flatten)]
    body: T,
}

fn json_doc<T: Serialize>(command: &str, body: T) -> Vec<u8> {
    let mut v = serde_json::to_vec_pretty(&Envelope {
        version: VERSION,
        command,
        body,
    })
    .expect("outputs always serialize");
    v.push(b'\n');
    v
}

fn code(resolved: bool) -> i32 {
    if resolved {
        EXIT_OK
    } else {
        EXIT_UNRESOLVED
    }
}

#[derive(Serialize)]
struct InvariantOut<'a> {
    status: Status,
    raw: f64,
    snapped: [i64; 2],
    residual: f64,
    method: Method,
    model: &'a str,
    diagnostics: &'a Diagnostics,
}

impl<'a> InvariantOut<'a> {
    fn new(r: &'a InvariantResult, model: &'a ModelSpec) -> Self {
        InvariantOut {
            status: r.status,
            raw: r.raw,
            snapped: [r.snapped.num, r.snapped.den],
            residual: r.residual,
            method: r.method,
            model: model.label(),
            diagnostics: &r.diagnostics,
        }
    }
}

#[derive(Serialize)]
struct SpOut {
    k0: [f64; 2],
    pole: i8,
    /// Loop winding as `[num, den]`; absent when not computed or unresolved.
    w: Option<[i64; 2]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    w_raw: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    w_status: Option<Status>,
    factor: Vec<i8>,
    residual_h: f64,
}

impl From<&SingularityPoint> for SpOut {
    fn from(s: &SingularityPoint) -> Self {
        SpOut {
            k0: s.k0,
            pole: s.pole,
            w: s.w_loop.as_ref().filter(|w| w.is_resolved()).map(|w| [w.snapped.num, w.snapped.den]),
            w_raw: s.w_loop.as_ref().map(|w| w.raw),
            w_status: s.w_loop.as_ref().map(|w| w.status),
            factor: s.factor.clone(),
            residual_h: s.residual_h,
        }
    }
}

#[derive(Serialize)]
struct ChernOut<'a> {
    #[serde(rename = "C")]
    c: Option<i64>,
    status: Status,
    raw: f64,
    method: ChernMethod,
    axis: Option<Axis>,
    sps: Vec<SpOut>,
    diagnostics: &'a chern::ChernDiagnostics,
}

impl<'a> From<&'a ChernResult> for ChernOut<'a> {
    fn from(r: &'a ChernResult) -> Self {
        ChernOut {
            c: r.is_resolved().then_some(r.value),
            status: r.status,
            raw: r.raw,
            method: r.method,
            axis: r.axis,
            sps: r.sps.iter().map(SpOut::from).collect(),
            diagnostics: &r.diagnostics,
        }
    }
}

#[derive(Serialize)]
struct BothOut<'a> {
    #[serde(rename = "C")]
    c: Option<i64>,
    status: Status,
    agree: bool,
    dwn: ChernOut<'a>,
    oracle: ChernOut<'a>,
}

#[derive(Serialize)]
struct InvalidOut {
    status: Status,
    error: String,
}

fn load_model(m: &ModelArgs) -> Result<ModelSpec, Failure> {
    match (&m.model, &m.builtin) {
        (Some(path), _) => {
            let text = fs::read_to_string(path)
                .map_err(|e| Failure::Usage(format!("cannot read {}: {e}", path.display())))?;
            Ok(parse_model(&text)?)
        }
        (None, Some(name)) => Ok(builtin(name, &m.params)?),
        (None, None) => Err(Failure::Usage("one of --model or --builtin is required".into())),
    }
}

fn check_positive(name: &str, v: f64) -> Result<(), Failure> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(Failure::Usage(format!("--{name} must be positive and finite, got {v}")))
    }
}

fn check_count(name: &str, v: usize, min: usize) -> Result<(), Failure> {
    if v >= min {
        Ok(())
    } else {
        Err(Failure::Usage(format!("--{name} must be at least {min}, got {v}")))
    }
}

fn source_of(d: &DynamicsArgs) -> Result<Source, Failure> {
    match d.source {
        SourceArg::Analytic => {
            if d.time.is_some() || d.dt.is_some() || d.seed.is_some() {
                return Err(Failure::Usage("--time, --dt and --seed need --source dynamic".into()));
            }
            Ok(Source::Analytic)
        }
        SourceArg::Dynamic => {
            let horizon = d.time.unwrap_or(dynamics::DEFAULT_T);
            let dt = d.dt.unwrap_or(dynamics::DEFAULT_DT);
            check_positive("time", horizon)?;
            check_positive("dt", dt)?;
            if dt > horizon {
                return Err(Failure::Usage(format!("--dt {dt} exceeds --time {horizon}")));
            }
            Ok(Source::Dynamic(DynamicsConfig {
                horizon,
                dt,
                init: InitialState::seeded(d.seed.unwrap_or(dynamics::DEFAULT_SEED)),
            }))
        }
    }
}

fn require_dim(model: &ModelSpec, dim: usize) -> Result<(), Failure> {
    if model.dimension() == dim {
        Ok(())
    } else {
        Err(Failure::Usage(format!("this subcommand needs a {dim}D model, got {}D", model.dimension())))
    }
}

fn cmd_winding(a: &WindingArgs) -> Outcome {
    let model = load_model(&a.model)?;
    require_dim(&model, 1)?;
    let source = source_of(&a.dynamics)?;
    let quadrature = matches!(a.method, WindingMethod::Conventional | WindingMethod::Wtotal);
    let samples = a.samples.unwrap_or(if quadrature {
        winding::DEFAULT_QUADRATURE
    } else {
        winding::DEFAULT_SAMPLES
    });
    check_count("samples", samples, 8)?;
    if quadrature && source != Source::Analytic {
        return Err(Failure::Usage("--source applies only to the dwn methods".into()));
    }
    let r = match a.method {
        WindingMethod::Conventional => {
            let band = match a.band {
                BandArg::Plus => Band::Plus,
                BandArg::Minus => Band::Minus,
            };
            winding::conventional_result(&model, band, samples)?
        }
        WindingMethod::Wtotal => winding::w_total(&model, samples)?,
        m => {
            let field = match m {
                WindingMethod::DwnLr => Field::Lr,
                WindingMethod::DwnRr => Field::Rr,
                WindingMethod::DwnLl => Field::Ll,
                WindingMethod::DwnCombined => Field::Combined,
                _ => Field::Auto,
            };
            winding::dwn(&model, a.plane, source, field, samples)?
        }
    };
    Ok((json_doc("winding", InvariantOut::new(&r, &model)), code(r.is_resolved())))
}

fn cmd_wtotal(a: &WtotalArgs) -> Outcome {
    let model = load_model(&a.model)?;
    require_dim(&model, 1)?;
    check_count("samples", a.samples, 8)?;
    let r = winding::w_total(&model, a.samples)?;
    Ok((json_doc("wtotal", InvariantOut::new(&r, &model)), code(r.is_resolved())))
}

fn cmd_chern(a: &ChernArgs) -> Outcome {
    let model = load_model(&a.model)?;
    require_dim(&model, 2)?;
    let source = source_of(&a.dynamics)?;
    check_positive("radius", a.radius)?;
    check_count("samples", a.samples, 8)?;
    let opts = ChernOptions {
        coarse: a.grid,
        radius: a.radius,
        loop_samples: a.samples,
    };
    let dwn = || chern::chern_dwn(&model, a.axis, source, &opts);
    let oracle = || chern::chern_lattice_oracle(&model, a.oracle_grid);
    Ok(match a.method {
        ChernMethodArg::Dwn => {
            let r = dwn();
            (json_doc("chern", ChernOut::from(&r)), code(r.is_resolved()))
        }
        ChernMethodArg::Oracle => {
            let r = oracle();
            (json_doc("chern", ChernOut::from(&r)), code(r.is_resolved()))
        }
        ChernMethodArg::Both => {
            let (d, o) = (dwn(), oracle());
            let agree = d.is_resolved() && o.is_resolved() && d.value == o.value;
            let status = if agree {
                Status::Resolved
            } else if d.status == Status::Invalid || o.status == Status::Invalid {
                Status::Invalid
            } else {
                Status::Unresolved
            };
            let out = BothOut {
                c: agree.then_some(d.value),
                status,
                agree,
                dwn: ChernOut::from(&d),
                oracle: ChernOut::from(&o),
            };
            (json_doc("chern", out), code(agree))
        }
    })
}

fn cmd_find_sp(a: &FindSpArgs) -> Outcome {
    let model = load_model(&a.model)?;
    require_dim(&model, 2)?;
    let sps = chern::find_sps(&model, a.axis, a.grid)?;
    #[derive(Serialize)]
    struct Out {
        status: Status,
        axis: Axis,
        sps: Vec<SpOut>,
    }
    let out = Out {
        status: Status::Resolved,
        axis: a.axis,
        sps: sps.iter().map(SpOut::from).collect(),
    };
    Ok((json_doc("find-sp", out), EXIT_OK))
}

fn cmd_texture(a: &TextureArgs) -> Outcome {
    let model = load_model(&a.model)?;
    let k = Momentum::from_slice(&a.k)?;
    check_positive("time", a.time)?;
    check_positive("dt", a.dt)?;
    let kind = match a.kind {
        KindArg::Lr => TextureKind::LR,
        KindArg::Rr => TextureKind::RR,
        KindArg::Ll => TextureKind::LL,
    };
    let init = InitialState::seeded(a.seed);
    let eig = eigensystem(&model.evaluate_h(&k)?)?;
    let series = dynamics::texture_series(&eig, &init, kind, a.time, a.dt)?;
    let mut w = csv::Writer::from_writer(Vec::new());
    let io = |e: csv::Error| Failure::Usage(e.to_string());
    if kind == TextureKind::LR {
        w.write_record(["t", "sx_re", "sx_im", "sy_re", "sy_im", "sz_re", "sz_im"]).map_err(io)?;
        for (t, v) in series.times.iter().zip(&series.values) {
            w.serialize((t, v[0].re, v[0].im, v[1].re, v[1].im, v[2].re, v[2].im)).map_err(io)?;
        }
    } else {
        w.write_record(["t", "sx", "sy", "sz"]).map_err(io)?;
        for (t, v) in series.times.iter().zip(&series.values) {
            w.serialize((t, v[0].re, v[1].re, v[2].re)).map_err(io)?;
        }
    }
    let bytes = w.into_inner().map_err(|e| Failure::Usage(e.to_string()))?;
    Ok((bytes, EXIT_OK))
}

fn build_plan(a: &SweepArgs) -> Result<SweepPlan, Failure> {
    let mut plan = match &a.plan {
        Some(path) => {
            let text = fs::read_to_string(path)
                .map_err(|e| Failure::Usage(format!("cannot read {}: {e}", path.display())))?;
            serde_json::from_str::<SweepPlan>(&text)
                .map_err(|e| Failure::Usage(format!("invalid sweep plan {}: {e}", path.display())))?
        }
        None => SweepPlan {
            family: a.family.clone().unwrap_or_default(),
            params: a.params.clone(),
            axis1: a.axis1.clone().expect("required by clap"),
            axis2: a.axis2.clone().expect("required by clap"),
            invariant: match a.invariant.expect("required by clap") {
                InvariantArg::Dwn1d => Invariant::Dwn1d,
                InvariantArg::Wtotal => Invariant::Wtotal,
                InvariantArg::ChernDwn => Invariant::ChernDwn,
                InvariantArg::ChernOracle => Invariant::ChernOracle,
            },
            budget: Budget::default(),
        },
    };
    let b = &mut plan.budget;
    if let Some(f) = a.field {
        b.field = match f {
            FieldArg::Auto => Field::Auto,
            FieldArg::Lr => Field::Lr,
            FieldArg::Rr => Field::Rr,
            FieldArg::Ll => Field::Ll,
            FieldArg::Combined => Field::Combined,
        };
    }
    if let Some(v) = a.samples {
        check_count("samples", v, 8)?;
        b.samples = v;
    }
    if let Some(v) = a.quadrature {
        check_count("quadrature", v, 8)?;
        b.quadrature = v;
    }
    if let Some(v) = a.axis {
        b.axis = v;
    }
    if let Some(v) = a.coarse {
        check_count("coarse", v, 2)?;
        b.coarse = v;
    }
    if let Some(v) = a.radius {
        check_positive("radius", v)?;
        b.radius = v;
    }
    if let Some(v) = a.oracle_grid {
        check_count("oracle-grid", v, 2)?;
        b.oracle_grid = v;
    }
    let d = &a.dynamics;
    if d.source == SourceArg::Dynamic || d.time.is_some() || d.dt.is_some() {
        let seedless = DynamicsArgs {
            source: SourceArg::Dynamic,
            time: d.time,
            dt: d.dt,
            seed: None,
        };
        b.source = source_of(&seedless)?;
    }
    if let Some(s) = d.seed {
        b.seed = s;
    }
    plan.validate()?;
    Ok(plan)
}

fn cmd_sweep(a: &SweepArgs, out: Option<&Path>, workers: Option<usize>) -> Outcome {
    let plan = build_plan(a)?;
    if a.emit_plan {
        let mut v = serde_json::to_vec_pretty(&plan).map_err(|e| Failure::Usage(e.to_string()))?;
        v.push(b'\n');
        return Ok((v, EXIT_OK));
    }
    let opts = SweepOptions {
        workers,
        output: out.map(Path::to_path_buf),
        limit: a.limit,
    };
    let grid = sweep::run_sweep(&plan, &opts)?;
    let status = code(grid.is_complete());
    if out.is_some() {
        // rows are already on disk
        return Ok((Vec::new(), status));
    }
    let mut buf = Vec::new();
    sweep::write_csv(&grid, &mut buf)?;
    Ok((buf, status))
}

fn default_boundary(grid: &SweepGrid) -> Result<BoundarySet, Failure> {
    match Family::from_name(&grid.plan.family)? {
        Family::Qah2d => Ok(BoundarySet::Qah2dExact),
        f if f.dimension() == 1 => Ok(BoundarySet::Chain1d),
        f => Err(Failure::Usage(format!("no boundary set for `{}`; pass --boundary", f.name()))),
    }
}

fn cmd_audit(a: &AuditArgs) -> Outcome {
    let grid = sweep::load_grid(&a.input)?;
    if !grid.is_complete() {
        return Err(Failure::Usage(format!(
            "{} holds {} of {} cells; finish the sweep first",
            a.input.display(),
            grid.cells.len(),
            grid.plan.cells()
        )));
    }
    let set = match a.boundary {
        Some(BoundaryArg::Chain1d) => BoundarySet::Chain1d,
        Some(BoundaryArg::Qah2dLine) => BoundarySet::Qah2dLine,
        Some(BoundaryArg::Qah2dExact) => BoundarySet::Qah2dExact,
        None => default_boundary(&grid)?,
    };
    let report = sweep::boundary_audit(&grid, set)?;
    let clean = report.violations.is_empty();
    #[derive(Serialize)]
    struct Out<'a> {
        status: Status,
        #[serde(flatten)]
        report: &'a sweep::AuditReport,
    }
    let out = Out {
        status: if clean { Status::Resolved } else { Status::Unresolved },
        report: &report,
    };
    Ok((json_doc("audit", out), code(clean)))
}

fn command_name(c: &Command) -> &'static str {
    match c {
        Command::Winding(_) => "winding",
        Command::Wtotal(_) => "wtotal",
        Command::Chern(_) => "chern",
        Command::FindSp(_) => "find-sp",
        Command::Texture(_) => "texture",
        Command::Sweep(_) => "sweep",
        Command::Audit(_) => "audit",
    }
}

fn execute(cli: &Cli) -> Outcome {
    match &cli.command {
        Command::Winding(a) => cmd_winding(a),
        Command::Wtotal(a) => cmd_wtotal(a),
        Command::Chern(a) => cmd_chern(a),
        Command::FindSp(a) => cmd_find_sp(a),
        Command::Texture(a) => cmd_texture(a),
        Command::Sweep(a) => cmd_sweep(a, cli.out.as_deref(), cli.parallelism),
        Command::Audit(a) => cmd_audit(a),
    }
}

fn write_result(out: Option<&Path>, stdout: &mut dyn Write, bytes: &[u8]) -> io::Result<()> {
    match out {
        Some(path) => File::create(path)?.write_all(bytes),
        None => stdout.write_all(bytes),
    }
}

/// Parses `args` (program name first), runs the subcommand and returns the
/// exit code.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let text = e.render().to_string();
            return if e.use_stderr() {
                let _ = write!(stderr, "{text}");
                EXIT_USAGE
            } else {
                let _ = write!(stdout, "{text}");
                EXIT_OK
            };
        }
    };
    if cli.parallelism == Some(0) {
        let _ = writeln!(stderr, "error: --parallelism must be at least 1");
        return EXIT_USAGE;
    }
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = cli.parallelism {
        builder = builder.num_threads(n);
    }
    let pool = match builder.build() {
        Ok(p) => p,
        Err(e) => {
            let _ = writeln!(stderr, "error: cannot start worker pool: {e}");
            return EXIT_USAGE;
        }
    };
    let is_sweep = matches!(cli.command, Command::Sweep(_));
    let (bytes, status) = match pool.install(|| execute(&cli)) {
        Ok(r) => r,
        Err(Failure::Usage(msg)) => {
            let _ = writeln!(stderr, "error: {msg}");
            return EXIT_USAGE;
        }
        Err(Failure::Numerical(e)) => {
            let body = InvalidOut {
                status: Status::Invalid,
                error: e.to_string(),
            };
            (json_doc(command_name(&cli.command), body), EXIT_UNRESOLVED)
        }
    };
    let target = if is_sweep { None } else { cli.out.as_deref() };
    if let Err(e) = write_result(target, stdout, &bytes) {
        if e.kind() == io::ErrorKind::BrokenPipe {
            return status;
        }
        let _ = writeln!(stderr, "error: cannot write output: {e}");
        return EXIT_USAGE;
    }
    status
}
