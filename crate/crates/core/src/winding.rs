//! Mod-π angle profiles on closed momentum loops, dynamic winding numbers
//! and the quadrature windings they are compared against.

use std::f64::consts::PI;
use std::fmt;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::{self, DynamicsConfig, TextureKind};
use crate::error::{Error, Result};
use crate::model::{ModelSpec, Momentum};
use crate::spectral::{mod_pi, mod_pi_diff, principal_energy, Plane, EP_TOL, PLANE_TOL};

pub const DEFAULT_SAMPLES: usize = 256;
pub const DEFAULT_QUADRATURE: usize = 2048;
pub const MAX_REFINEMENTS: usize = 6;
pub const MAX_STEP: f64 = PI / 4.0;
pub const SNAP_TOL: f64 = 0.05;

/// A value with denominator 1 or 2.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rational {
    pub num: i64,
    pub den: i64,
}

impl Rational {
    pub fn new(num: i64, den: i64) -> Self {
        if den == 2 && num % 2 == 0 {
            Rational { num: num / 2, den: 1 }
        } else {
            Rational { num, den }
        }
    }

    pub fn integer(n: i64) -> Self {
        Rational { num: n, den: 1 }
    }

    pub fn value(&self) -> f64 {
        self.num as f64 / self.den as f64
    }

    /// Nearest multiple of `1/den`.
    pub fn snap(raw: f64, den: i64) -> Self {
        Rational::new((raw * den as f64).round() as i64, den)
    }
}

impl fmt::Display for Rational {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.den == 1 {
            write!(f, "{}", self.num)
        } else {
            write!(f, "{}/{}", self.num, self.den)
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Resolved,
    Unresolved,
    Invalid,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    DwnLr,
    DwnRr,
    DwnLl,
    DwnCombined,
    Quadrature,
}

/// Where per-momentum angles come from.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "lowercase")]
pub enum Source {
    /// Long-time limits computed from the spectrum.
    Analytic,
    /// Finite-time trapezoid averages of evolved textures.
    Dynamic(DynamicsConfig),
}

impl Source {
    pub fn name(&self) -> &'static str {
        match self {
            Source::Analytic => "analytic",
            Source::Dynamic(_) => "dynamic",
        }
    }
}

/// Which angle field to wind.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Field {
    /// LR for Hermitian models or the analytic source, the RR+LL sum otherwise.
    Auto,
    Lr,
    Rr,
    Ll,
    Combined,
}

impl Field {
    pub fn resolve(self, model: &ModelSpec, source: &Source) -> Field {
        match self {
            Field::Auto => {
                if model.is_hermitian() || matches!(source, Source::Analytic) {
                    Field::Lr
                } else {
                    Field::Combined
                }
            }
            f => f,
        }
    }

    fn method(self) -> Method {
        match self {
            Field::Auto | Field::Lr => Method::DwnLr,
            Field::Rr => Method::DwnRr,
            Field::Ll => Method::DwnLl,
            Field::Combined => Method::DwnCombined,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub samples: usize,
    pub refinements: usize,
    pub max_step: Option<f64>,
    pub source: Option<String>,
    pub plane: Option<String>,
    pub horizon: Option<f64>,
    pub dt: Option<f64>,
    pub seed: Option<u64>,
    /// Samples that fell back to the analytic angle at near-real spectra.
    pub slow_points: usize,
    /// Square-root branch used for ε₊.
    pub branch: String,
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InvariantResult {
    pub raw: f64,
    pub snapped: Rational,
    pub residual: f64,
    pub status: Status,
    pub method: Method,
    pub diagnostics: Diagnostics,
}

impl InvariantResult {
    pub fn from_raw(raw: f64, den: i64, method: Method, diagnostics: Diagnostics) -> Self {
        let snapped = Rational::snap(raw, den);
        let residual = (raw - snapped.value()).abs();
        let status = if residual.is_finite() && residual < SNAP_TOL {
            Status::Resolved
        } else {
            Status::Unresolved
        };
        InvariantResult {
            raw,
            snapped,
            residual,
            status,
            method,
            diagnostics,
        }
    }

    pub fn invalid(method: Method, mut diagnostics: Diagnostics, err: &Error) -> Self {
        diagnostics.error = Some(err.to_string());
        InvariantResult {
            raw: f64::NAN,
            snapped: Rational::integer(0),
            residual: f64::NAN,
            status: Status::Invalid,
            method,
            diagnostics,
        }
    }

    pub fn is_resolved(&self) -> bool {
        self.status == Status::Resolved
    }
}

/// Samples a mod-π angle field at momenta.
#[derive(Clone, Copy, Debug)]
pub struct AngleField<'a> {
    pub model: &'a ModelSpec,
    pub plane: Plane,
    pub source: Source,
    pub field: Field,
}

impl<'a> AngleField<'a> {
    pub fn new(model: &'a ModelSpec, plane: Plane, source: Source, field: Field) -> Self {
        AngleField {
            model,
            plane,
            field: field.resolve(model, &source),
            source,
        }
    }

    /// Angles of the combined field count twice per winding.
    pub fn multiplicity(&self) -> f64 {
        if self.field == Field::Combined {
            2.0
        } else {
            1.0
        }
    }

    fn one(&self, k: &Momentum, kind: TextureKind) -> Result<(f64, bool)> {
        // singular loci are judged against the model scale, not the local |h|
        let h = self.model.h_at(k);
        let scale = self.model.scale();
        let (hj, hi) = self.plane.pick(&h.as_array());
        let residual = (hi * hi + hj * hj).norm();
        if residual <= PLANE_TOL * scale * scale {
            return Err(Error::SingularPlane { residual });
        }
        let eps = principal_energy(&h).norm();
        if (kind != TextureKind::LR || matches!(self.source, Source::Dynamic(_))) && eps <= EP_TOL * scale {
            return Err(Error::ExceptionalPoint { eps, scale });
        }
        match &self.source {
            Source::Analytic => Ok((dynamics::analytic_angle(&h, self.plane, kind)?, false)),
            Source::Dynamic(cfg) => {
                let s = dynamics::averaged_azimuth_h(&h, self.plane, kind, cfg)?;
                Ok((s.angle, s.slow_convergence))
            }
        }
    }

    /// Mod-π angle at `k` plus a slow-convergence flag.
    pub fn sample(&self, k: &Momentum) -> Result<(f64, bool)> {
        match self.field {
            Field::Auto | Field::Lr => self.one(k, TextureKind::LR),
            Field::Rr => self.one(k, TextureKind::RR),
            Field::Ll => self.one(k, TextureKind::LL),
            Field::Combined => {
                let (a, sa) = self.one(k, TextureKind::RR)?;
                let (b, sb) = self.one(k, TextureKind::LL)?;
                Ok((mod_pi(a + b), sa || sb))
            }
        }
    }

    fn diagnostics(&self) -> Diagnostics {
        let mut d = Diagnostics {
            source: Some(self.source.name().to_string()),
            plane: Some(self.plane.name()),
            branch: "principal".into(),
            ..Default::default()
        };
        if let Source::Dynamic(cfg) = &self.source {
            d.horizon = Some(cfg.horizon);
            d.dt = Some(cfg.dt);
            d.seed = cfg.init.seed;
        }
        d
    }
}

/// A closed loop `s ∈ [0, 1] ↦ k(s)` with `k(0) ≡ k(1)`.
pub trait LoopPath: Sync {
    fn point(&self, s: f64) -> Momentum;
}

/// The 1D zone `k = −π + 2πs`.
#[derive(Clone, Copy, Debug)]
pub struct ZoneLoop;

impl LoopPath for ZoneLoop {
    fn point(&self, s: f64) -> Momentum {
        Momentum::k1(-PI + 2.0 * PI * s)
    }
}

/// A clockwise circle of radius `r` about `center` in `(k_x, k_y)`.
#[derive(Clone, Copy, Debug)]
pub struct Circle {
    pub center: [f64; 2],
    pub radius: f64,
}

impl LoopPath for Circle {
    fn point(&self, s: f64) -> Momentum {
        let t = 2.0 * PI * s;
        Momentum::k2(
            self.center[0] + self.radius * t.cos(),
            self.center[1] - self.radius * t.sin(),
        )
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AngleProfile {
    /// `N + 1` samples; the last repeats the first point of the loop.
    pub path: Vec<Momentum>,
    pub raw: Vec<f64>,
    pub unwrapped: Vec<f64>,
    pub max_step: f64,
    pub refinements: usize,
    pub slow_points: usize,
}

impl AngleProfile {
    pub fn closure(&self) -> f64 {
        self.unwrapped[self.unwrapped.len() - 1] - self.unwrapped[0]
    }

    pub fn samples(&self) -> usize {
        self.raw.len() - 1
    }
}

/// Continues mod-π samples by the nearest branch; returns the continuation,
/// the largest step and its index.
pub fn unwrap_mod_pi(raw: &[f64]) -> (Vec<f64>, f64, usize) {
    let mut out = Vec::with_capacity(raw.len());
    let mut worst = (0.0, 0);
    for (n, &a) in raw.iter().enumerate() {
        if n == 0 {
            out.push(a);
            continue;
        }
        let d = mod_pi_diff(a, raw[n - 1]);
        if d.abs() > worst.0 {
            worst = (d.abs(), n);
        }
        out.push(out[n - 1] + d);
    }
    (out, worst.0, worst.1)
}

fn sample_many(
    field: &AngleField,
    path: &dyn LoopPath,
    ss: &[f64],
) -> Result<Vec<(Momentum, f64, bool)>> {
    let run = |s: &f64| {
        let k = path.point(*s);
        field.sample(&k).map(|(a, slow)| (k, a, slow))
    };
    if matches!(field.source, Source::Dynamic(_)) {
        ss.par_iter().map(run).collect()
    } else {
        ss.iter().map(run).collect()
    }
}

pub fn angle_profile(field: &AngleField, path: &dyn LoopPath, samples: usize) -> Result<AngleProfile> {
    if samples < 64 {
        return Err(Error::InvalidArgument(format!(
            "need at least 64 samples, got {samples}"
        )));
    }
    let mut n = samples;
    let ss: Vec<f64> = (0..n).map(|i| i as f64 / n as f64).collect();
    let mut pts = sample_many(field, path, &ss)?;
    let mut refinements = 0;
    loop {
        let mut raw: Vec<f64> = pts.iter().map(|p| p.1).collect();
        raw.push(raw[0]);
        let (unwrapped, max_step, at) = unwrap_mod_pi(&raw);
        if max_step < MAX_STEP {
            let mut path_pts: Vec<Momentum> = pts.iter().map(|p| p.0).collect();
            path_pts.push(path.point(1.0));
            return Ok(AngleProfile {
                path: path_pts,
                raw,
                unwrapped,
                max_step,
                refinements,
                slow_points: pts.iter().filter(|p| p.2).count(),
            });
        }
        if refinements == MAX_REFINEMENTS {
            let k = path.point(at as f64 / n as f64);
            return Err(Error::ProfileInvalid {
                k: k.components().to_vec(),
                max_step,
                refinements,
            });
        }
        // interleave midpoints, reusing existing samples
        let mids: Vec<f64> = (0..n).map(|i| (2 * i + 1) as f64 / (2 * n) as f64).collect();
        let new = sample_many(field, path, &mids)?;
        let mut merged = Vec::with_capacity(2 * n);
        for (a, b) in pts.into_iter().zip(new) {
            merged.push(a);
            merged.push(b);
        }
        pts = merged;
        n *= 2;
        refinements += 1;
    }
}

/// Winding of a field around a loop, snapped to a half-integer.
pub fn loop_winding(field: &AngleField, path: &dyn LoopPath, samples: usize) -> InvariantResult {
    let mut diag = field.diagnostics();
    let method = field.field.method();
    match angle_profile(field, path, samples) {
        Ok(p) => {
            diag.samples = p.samples();
            diag.refinements = p.refinements;
            diag.max_step = Some(p.max_step);
            diag.slow_points = p.slow_points;
            let raw = p.closure() / (2.0 * PI * field.multiplicity());
            InvariantResult::from_raw(raw, 2, method, diag)
        }
        Err(e) => {
            diag.samples = samples;
            InvariantResult::invalid(method, diag, &e)
        }
    }
}

/// Dynamic winding number of a 1D model over the zone.
pub fn dwn(model: &ModelSpec, plane: Plane, source: Source, field: Field, samples: usize) -> Result<InvariantResult> {
    if model.dimension() != 1 {
        return Err(Error::WrongDimension {
            expected: 1,
            got: model.dimension(),
        });
    }
    let f = AngleField::new(model, plane, source, field);
    Ok(loop_winding(&f, &ZoneLoop, samples))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Band {
    Plus,
    Minus,
}

/// Trapezoid quadrature of `(h_x ∂h_y − h_y ∂h_x) / (ε(ε − h_z))` over the
/// zone, with `ε` followed by continuity from the principal value at `k = −π`.
pub fn conventional_winding(model: &ModelSpec, band: Band, samples: usize) -> Result<Complex64> {
    if model.dimension() != 1 {
        return Err(Error::WrongDimension {
            expected: 1,
            got: model.dimension(),
        });
    }
    let scale = model.scale();
    let mut prev: Option<Complex64> = None;
    let mut acc = Complex64::new(0.0, 0.0);
    for n in 0..samples {
        let k = -PI + 2.0 * PI * n as f64 / samples as f64;
        let (h, g) = model.h_with_grad(&Momentum::k1(k));
        let d = g[0];
        let mut e = principal_energy(&h);
        if e.norm() <= EP_TOL * scale {
            return Err(Error::SingularOnLoop { k });
        }
        match prev {
            None => {
                if band == Band::Minus {
                    e = -e;
                }
            }
            Some(p) => {
                if (e - p).norm() > (e + p).norm() {
                    e = -e;
                }
            }
        }
        prev = Some(e);
        let den = e * (e - h.hz);
        if den.norm() <= 1e-12 * scale * scale {
            return Err(Error::SingularOnLoop { k });
        }
        acc += (h.hx * d.hy - h.hy * d.hx) / den;
    }
    Ok(acc / samples as f64)
}

/// `w₊ + w₋` through the `h_z`-free integrand, snapped to an integer.
pub fn w_total(model: &ModelSpec, samples: usize) -> Result<InvariantResult> {
    if model.dimension() != 1 {
        return Err(Error::WrongDimension {
            expected: 1,
            got: model.dimension(),
        });
    }
    let scale = model.scale();
    let mut acc = Complex64::new(0.0, 0.0);
    for n in 0..samples {
        let k = -PI + 2.0 * PI * n as f64 / samples as f64;
        let (h, g) = model.h_with_grad(&Momentum::k1(k));
        let d = g[0];
        let den = h.hx * h.hx + h.hy * h.hy;
        if den.norm() <= 1e-12 * scale * scale {
            return Err(Error::SingularOnLoop { k });
        }
        acc += (h.hx * d.hy - h.hy * d.hx) / den;
    }
    let w = 2.0 * acc / samples as f64;
    let diag = Diagnostics {
        samples,
        branch: "principal".into(),
        ..Default::default()
    };
    let mut r = InvariantResult::from_raw(w.re, 1, Method::Quadrature, diag);
    if w.im.abs() >= SNAP_TOL {
        r.status = Status::Unresolved;
    }
    Ok(r)
}

/// [`conventional_winding`] wrapped as a half-integer result.
pub fn conventional_result(model: &ModelSpec, band: Band, samples: usize) -> Result<InvariantResult> {
    let w = conventional_winding(model, band, samples)?;
    let diag = Diagnostics {
        samples,
        branch: "principal".into(),
        ..Default::default()
    };
    let mut r = InvariantResult::from_raw(w.re, 2, Method::Quadrature, diag);
    r.residual = r.residual.max(w.im.abs());
    if r.residual >= SNAP_TOL {
        r.status = Status::Unresolved;
    }
    Ok(r)
}
