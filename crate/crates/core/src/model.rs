//! Two-band Bloch Hamiltonians `H(k) = h_x σ_x + h_y σ_y + h_z σ_z` whose
//! components are finite Fourier series on the Brillouin-zone torus.
//!
//! Coefficients live in the complex-exponential basis `c_m e^{i m·k}`; the
//! `cos`/`sin` constructors expand into it. Derivatives are exact.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };

/// A point of the Brillouin zone in one or two dimensions.
///
/// Components are stored as given; [`Momentum::reduced`] maps them into
/// `[-π, π)` for comparisons.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Momentum {
    comps: [f64; 2],
    dim: usize,
}

impl Momentum {
    pub fn k1(k: f64) -> Self {
        Momentum { comps: [k, 0.0], dim: 1 }
    }

    pub fn k2(kx: f64, ky: f64) -> Self {
        Momentum { comps: [kx, ky], dim: 2 }
    }

    pub fn from_slice(k: &[f64]) -> Result<Self> {
        match k {
            [k] => Ok(Self::k1(*k)),
            [kx, ky] => Ok(Self::k2(*kx, *ky)),
            _ => Err(Error::InvalidArgument(format!(
                "momentum must have 1 or 2 components, got {}",
                k.len()
            ))),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn components(&self) -> &[f64] {
        &self.comps[..self.dim]
    }

    /// Component `j`; zero past the dimension.
    pub fn get(&self, j: usize) -> f64 {
        if j < self.dim {
            self.comps[j]
        } else {
            0.0
        }
    }

    pub fn xy(&self) -> [f64; 2] {
        self.comps
    }

    pub fn shifted(&self, j: usize, delta: f64) -> Self {
        let mut out = *self;
        out.comps[j] += delta;
        out
    }

    pub fn reduced(&self) -> Self {
        let mut out = *self;
        for c in out.comps.iter_mut().take(self.dim) {
            *c = reduce_angle(*c);
        }
        out
    }

    /// Euclidean distance on the torus.
    pub fn torus_distance(&self, other: &Momentum) -> f64 {
        (0..self.dim.max(other.dim))
            .map(|j| reduce_angle(self.get(j) - other.get(j)).powi(2))
            .sum::<f64>()
            .sqrt()
    }
}

/// Maps an angle into `[-π, π)`.
pub fn reduce_angle(x: f64) -> f64 {
    let two_pi = 2.0 * PI;
    let mut r = x - two_pi * ((x + PI) / two_pi).floor();
    if r >= PI {
        r -= two_pi;
    }
    if r < -PI {
        r += two_pi;
    }
    r
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FourierTerm {
    pub m: [i32; 2],
    pub c: Complex64,
}

/// `f(k) = Σ c_m e^{i m·k}` with integer frequency vectors.
#[derive(Clone, Debug, PartialEq)]
pub struct FourierSeries {
    dim: usize,
    terms: Vec<FourierTerm>,
}

impl FourierSeries {
    pub fn zero(dim: usize) -> Self {
        FourierSeries { dim, terms: Vec::new() }
    }

    pub fn constant(dim: usize, c: Complex64) -> Self {
        Self::zero(dim).with_term([0, 0], c)
    }

    /// `amp · cos(m·k)`.
    pub fn cos(dim: usize, m: [i32; 2], amp: f64) -> Self {
        let m_neg = [-m[0], -m[1]];
        Self::zero(dim)
            .with_term(m, Complex64::new(0.5 * amp, 0.0))
            .with_term(m_neg, Complex64::new(0.5 * amp, 0.0))
    }

    /// `amp · sin(m·k)`.
    pub fn sin(dim: usize, m: [i32; 2], amp: f64) -> Self {
        let m_neg = [-m[0], -m[1]];
        Self::zero(dim)
            .with_term(m, Complex64::new(0.0, -0.5 * amp))
            .with_term(m_neg, Complex64::new(0.0, 0.5 * amp))
    }

    /// Builds a series from raw terms without merging or dropping any.
    pub fn from_terms(dim: usize, terms: Vec<FourierTerm>) -> Self {
        FourierSeries { dim, terms }
    }

    /// Adds `c e^{i m·k}`, merging with an existing term of the same frequency
    /// and dropping exact zeros.
    pub fn with_term(mut self, m: [i32; 2], c: Complex64) -> Self {
        if let Some(t) = self.terms.iter_mut().find(|t| t.m == m) {
            t.c += c;
        } else {
            self.terms.push(FourierTerm { m, c });
        }
        self.terms.retain(|t| t.c != Complex64::new(0.0, 0.0));
        self
    }

    pub fn plus(mut self, other: &FourierSeries) -> Self {
        for t in &other.terms {
            self = self.with_term(t.m, t.c);
        }
        self
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn terms(&self) -> &[FourierTerm] {
        &self.terms
    }

    pub fn eval(&self, k: &Momentum) -> Complex64 {
        let [kx, ky] = k.xy();
        self.terms
            .iter()
            .map(|t| t.c * Complex64::cis(t.m[0] as f64 * kx + t.m[1] as f64 * ky))
            .sum()
    }

    /// Value and exact partial derivatives `(f, ∂_x f, ∂_y f)`.
    pub fn eval_with_grad(&self, k: &Momentum) -> (Complex64, [Complex64; 2]) {
        let [kx, ky] = k.xy();
        let mut f = Complex64::new(0.0, 0.0);
        let mut g = [Complex64::new(0.0, 0.0); 2];
        for t in &self.terms {
            let e = t.c * Complex64::cis(t.m[0] as f64 * kx + t.m[1] as f64 * ky);
            f += e;
            g[0] += I * t.m[0] as f64 * e;
            g[1] += I * t.m[1] as f64 * e;
        }
        (f, g)
    }

    /// True iff `c_{-m} = conj(c_m)` for every frequency, i.e. the series is
    /// real-valued everywhere.
    pub fn is_real_valued(&self) -> bool {
        let mut merged: BTreeMap<[i32; 2], Complex64> = BTreeMap::new();
        for t in &self.terms {
            *merged.entry(t.m).or_default() += t.c;
        }
        let scale = merged.values().map(|c| c.norm()).fold(1.0, f64::max);
        merged.iter().all(|(m, c)| {
            let partner = merged
                .get(&[-m[0], -m[1]])
                .copied()
                .unwrap_or_default();
            (partner - c.conj()).norm() <= 1e-14 * scale
        })
    }

    /// Largest coefficient magnitude sum, a bound on `|f(k)|`.
    pub fn l1_norm(&self) -> f64 {
        self.terms.iter().map(|t| t.c.norm()).sum()
    }
}

/// Cartesian component of the h-vector.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Component {
    X,
    Y,
    Z,
}

impl Component {
    pub fn index(self) -> usize {
        match self {
            Component::X => 0,
            Component::Y => 1,
            Component::Z => 2,
        }
    }
}

/// The complex coefficients of the Pauli expansion at one momentum.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HVector {
    pub hx: Complex64,
    pub hy: Complex64,
    pub hz: Complex64,
}

impl HVector {
    pub fn new(hx: Complex64, hy: Complex64, hz: Complex64) -> Self {
        HVector { hx, hy, hz }
    }

    pub fn real(hx: f64, hy: f64, hz: f64) -> Self {
        HVector::new(hx.into(), hy.into(), hz.into())
    }

    pub fn get(&self, c: Component) -> Complex64 {
        match c {
            Component::X => self.hx,
            Component::Y => self.hy,
            Component::Z => self.hz,
        }
    }

    pub fn as_array(&self) -> [Complex64; 3] {
        [self.hx, self.hy, self.hz]
    }

    /// `h_x² + h_y² + h_z²` (no conjugation).
    pub fn square_sum(&self) -> Complex64 {
        self.hx * self.hx + self.hy * self.hy + self.hz * self.hz
    }

    /// `sqrt(|h_x|² + |h_y|² + |h_z|²)`.
    pub fn scale(&self) -> f64 {
        (self.hx.norm_sqr() + self.hy.norm_sqr() + self.hz.norm_sqr()).sqrt()
    }

    pub fn is_real(&self, tol: f64) -> bool {
        let s = self.scale().max(1.0);
        self.as_array().iter().all(|c| c.im.abs() <= tol * s)
    }
}

/// A two-band model in `dimension` ∈ {1, 2}.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelSpec {
    dimension: usize,
    hx: FourierSeries,
    hy: FourierSeries,
    hz: FourierSeries,
    label: String,
}

impl ModelSpec {
    pub fn new(
        dimension: usize,
        hx: FourierSeries,
        hy: FourierSeries,
        hz: FourierSeries,
        label: impl Into<String>,
    ) -> Result<Self> {
        if !(1..=2).contains(&dimension) {
            return Err(Error::MalformedModel(format!(
                "dimension must be 1 or 2, got {dimension}"
            )));
        }
        for (name, s) in [("hx", &hx), ("hy", &hy), ("hz", &hz)] {
            if s.dim != dimension {
                return Err(Error::MalformedModel(format!(
                    "{name} series has dimension {}, model has {dimension}",
                    s.dim
                )));
            }
            if dimension == 1 && s.terms.iter().any(|t| t.m[1] != 0) {
                return Err(Error::MalformedModel(format!(
                    "{name} has a second frequency component in a 1D model"
                )));
            }
        }
        Ok(ModelSpec {
            dimension,
            hx,
            hy,
            hz,
            label: label.into(),
        })
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn series(&self, c: Component) -> &FourierSeries {
        match c {
            Component::X => &self.hx,
            Component::Y => &self.hy,
            Component::Z => &self.hz,
        }
    }

    pub fn is_hermitian(&self) -> bool {
        self.hx.is_real_valued() && self.hy.is_real_valued() && self.hz.is_real_valued()
    }

    /// Upper bound on `|h(k)|` from the coefficients.
    pub fn scale(&self) -> f64 {
        let s = (self.hx.l1_norm().powi(2) + self.hy.l1_norm().powi(2) + self.hz.l1_norm().powi(2))
            .sqrt();
        if s > 0.0 {
            s
        } else {
            1.0
        }
    }

    pub fn evaluate_h(&self, k: &Momentum) -> Result<HVector> {
        if k.dim() != self.dimension {
            return Err(Error::DimensionMismatch {
                expected: self.dimension,
                got: k.dim(),
            });
        }
        Ok(self.h_at(k))
    }

    /// Evaluation without the dimension check; extra components are ignored.
    pub fn h_at(&self, k: &Momentum) -> HVector {
        HVector::new(self.hx.eval(k), self.hy.eval(k), self.hz.eval(k))
    }

    /// `h(k)` and the exact partials `∂_x h`, `∂_y h`.
    pub fn h_with_grad(&self, k: &Momentum) -> (HVector, [HVector; 2]) {
        let (x, gx) = self.hx.eval_with_grad(k);
        let (y, gy) = self.hy.eval_with_grad(k);
        let (z, gz) = self.hz.eval_with_grad(k);
        (
            HVector::new(x, y, z),
            [HVector::new(gx[0], gy[0], gz[0]), HVector::new(gx[1], gy[1], gz[1])],
        )
    }
}

/// Builtin model families.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    /// `h_x = J0 + J1 cos k + J2 cos 2k`, `h_y = J1 sin k + J2 sin 2k − iδ`, `h_z = 0`.
    Chiral1d,
    /// As `Chiral1d` with a constant `h_z`.
    Nonchiral1d,
    /// `h = (J sin kx, J sin ky, m_z − J cos kx − J cos ky − iδ)`.
    Qah2d,
    /// `h = (Jx sin 2kx, Jy sin 2ky, m_z − Jz cos kx − Jz cos ky − iδ)`.
    Largechern2d,
}

impl Family {
    pub const ALL: [Family; 4] = [
        Family::Chiral1d,
        Family::Nonchiral1d,
        Family::Qah2d,
        Family::Largechern2d,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Family::Chiral1d => "chiral1d",
            Family::Nonchiral1d => "nonchiral1d",
            Family::Qah2d => "qah2d",
            Family::Largechern2d => "largechern2d",
        }
    }

    pub fn from_name(name: &str) -> Result<Self> {
        Family::ALL
            .into_iter()
            .find(|f| f.name() == name)
            .ok_or_else(|| Error::UnknownFamily(name.to_string()))
    }

    pub fn param_names(self) -> &'static [&'static str] {
        match self {
            Family::Chiral1d => &["J0", "J1", "J2", "delta"],
            Family::Nonchiral1d => &["J0", "J1", "J2", "delta", "hz"],
            Family::Qah2d => &["J", "mz", "delta"],
            Family::Largechern2d => &["Jx", "Jy", "Jz", "mz", "delta"],
        }
    }

    pub fn dimension(self) -> usize {
        match self {
            Family::Chiral1d | Family::Nonchiral1d => 1,
            Family::Qah2d | Family::Largechern2d => 2,
        }
    }

    pub fn param_index(self, name: &str) -> Result<usize> {
        self.param_names()
            .iter()
            .position(|n| *n == name)
            .ok_or_else(|| Error::UnknownParameter {
                family: self.name().to_string(),
                name: name.to_string(),
            })
    }

    pub fn build(self, params: &[f64]) -> Result<ModelSpec> {
        let names = self.param_names();
        if params.len() != names.len() {
            return Err(Error::ParameterCount {
                family: self.name().to_string(),
                names: names.join(","),
                expected: names.len(),
                got: params.len(),
            });
        }
        let label = format!(
            "{}({})",
            self.name(),
            params.iter().map(|p| p.to_string()).collect::<Vec<_>>().join(",")
        );
        let c = |re: f64, im: f64| Complex64::new(re, im);
        match self {
            Family::Chiral1d | Family::Nonchiral1d => {
                let (j0, j1, j2, delta) = (params[0], params[1], params[2], params[3]);
                let hx = FourierSeries::constant(1, c(j0, 0.0))
                    .plus(&FourierSeries::cos(1, [1, 0], j1))
                    .plus(&FourierSeries::cos(1, [2, 0], j2));
                let hy = FourierSeries::sin(1, [1, 0], j1)
                    .plus(&FourierSeries::sin(1, [2, 0], j2))
                    .plus(&FourierSeries::constant(1, c(0.0, -delta)));
                let hz = if self == Family::Nonchiral1d {
                    FourierSeries::constant(1, c(params[4], 0.0))
                } else {
                    FourierSeries::zero(1)
                };
                ModelSpec::new(1, hx, hy, hz, label)
            }
            Family::Qah2d => {
                let (j, mz, delta) = (params[0], params[1], params[2]);
                let hx = FourierSeries::sin(2, [1, 0], j);
                let hy = FourierSeries::sin(2, [0, 1], j);
                let hz = FourierSeries::constant(2, c(mz, -delta))
                    .plus(&FourierSeries::cos(2, [1, 0], -j))
                    .plus(&FourierSeries::cos(2, [0, 1], -j));
                ModelSpec::new(2, hx, hy, hz, label)
            }
            Family::Largechern2d => {
                let (jx, jy, jz, mz, delta) = (params[0], params[1], params[2], params[3], params[4]);
                let hx = FourierSeries::sin(2, [2, 0], jx);
                let hy = FourierSeries::sin(2, [0, 2], jy);
                let hz = FourierSeries::constant(2, c(mz, -delta))
                    .plus(&FourierSeries::cos(2, [1, 0], -jz))
                    .plus(&FourierSeries::cos(2, [0, 1], -jz));
                ModelSpec::new(2, hx, hy, hz, label)
            }
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

pub fn builtin(family: &str, params: &[f64]) -> Result<ModelSpec> {
    Family::from_name(family)?.build(params)
}

// --- model documents -------------------------------------------------------

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TermDoc {
    m: Vec<serde_json::Number>,
    c: [f64; 2],
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelDoc {
    dimension: usize,
    #[serde(default)]
    label: String,
    #[serde(default)]
    hx: Vec<TermDoc>,
    #[serde(default)]
    hy: Vec<TermDoc>,
    #[serde(default)]
    hz: Vec<TermDoc>,
}

fn series_from_doc(name: &str, dim: usize, terms: &[TermDoc]) -> Result<FourierSeries> {
    let mut out = Vec::with_capacity(terms.len());
    for (n, t) in terms.iter().enumerate() {
        if t.m.len() != dim {
            return Err(Error::MalformedModel(format!(
                "{name}[{n}]: frequency vector has length {}, model dimension is {dim}",
                t.m.len()
            )));
        }
        let mut m = [0i32; 2];
        for (slot, v) in m.iter_mut().zip(&t.m) {
            *slot = v
                .as_i64()
                .and_then(|x| i32::try_from(x).ok())
                .ok_or_else(|| {
                    Error::MalformedModel(format!("{name}[{n}]: non-integer frequency {v}"))
                })?;
        }
        out.push(FourierTerm {
            m,
            c: Complex64::new(t.c[0], t.c[1]),
        });
    }
    Ok(FourierSeries::from_terms(dim, out))
}

fn series_to_doc(s: &FourierSeries) -> Vec<TermDoc> {
    s.terms
        .iter()
        .map(|t| TermDoc {
            m: t.m[..s.dim].iter().map(|&x| serde_json::Number::from(x)).collect(),
            c: [t.c.re, t.c.im],
        })
        .collect()
}

pub fn parse_model(text: &str) -> Result<ModelSpec> {
    let doc: ModelDoc =
        serde_json::from_str(text).map_err(|e| Error::MalformedModel(e.to_string()))?;
    if !(1..=2).contains(&doc.dimension) {
        return Err(Error::MalformedModel(format!(
            "dimension must be 1 or 2, got {}",
            doc.dimension
        )));
    }
    let hx = series_from_doc("hx", doc.dimension, &doc.hx)?;
    let hy = series_from_doc("hy", doc.dimension, &doc.hy)?;
    let hz = series_from_doc("hz", doc.dimension, &doc.hz)?;
    ModelSpec::new(doc.dimension, hx, hy, hz, doc.label)
}

pub fn serialize_model(model: &ModelSpec) -> String {
    let doc = ModelDoc {
        dimension: model.dimension,
        label: model.label.clone(),
        hx: series_to_doc(&model.hx),
        hy: series_to_doc(&model.hy),
        hz: series_to_doc(&model.hz),
    };
    serde_json::to_string_pretty(&doc).expect("model documents always serialize")
}
