//! Biorthogonal time evolution at one momentum, spin textures and their
//! long-time averages.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::model::{HVector, ModelSpec, Momentum};
use crate::spectral::{self, complex_azimuth, eigensystem, mod_pi, mod_pi_diff, EigenSystem, Plane};

const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };
const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };

/// Margin on `|c₊|² − |c₋|²` for Hermitian admissibility.
pub const ADMISSIBLE_MARGIN: f64 = 1e-6;
/// Below this `|B|` a non-Hermitian point falls back to the analytic angle.
pub const SLOW_B: f64 = 1e-4;
/// Both averaged components below this magnitude leave the angle undefined.
pub const SINGULAR_ANGLE_TOL: f64 = 1e-9;
/// Largest accepted change of the averaged angle between `T/2` and `T`.
pub const ANGLE_DRIFT_TOL: f64 = 0.05;
/// Horizon doublings tried before a point is declared slowly convergent.
pub const MAX_EXTENSIONS: usize = 3;
/// Smallest accepted `|B|·T` at non-Hermitian points.
pub const MIN_BT: f64 = 10.0;

pub const DEFAULT_T: f64 = 80.0;
pub const DEFAULT_DT: f64 = 0.02;
pub const DEFAULT_SEED: u64 = 2024;

/// Amplitudes on the eigenbasis, `|ψ(0)⟩ = c₊|φ₊⟩ + c₋|φ₋⟩`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct InitialState {
    pub c_plus: Complex64,
    pub c_minus: Complex64,
    pub seed: Option<u64>,
}

impl InitialState {
    pub fn new(c_plus: Complex64, c_minus: Complex64) -> Self {
        InitialState { c_plus, c_minus, seed: None }
    }

    pub fn from_populations(p_plus: f64, phase_plus: f64, phase_minus: f64) -> Self {
        InitialState::new(
            Complex64::from_polar(p_plus.sqrt(), phase_plus),
            Complex64::from_polar((1.0 - p_plus).sqrt(), phase_minus),
        )
    }

    /// `|c₊|² = 0.7`, `|c₋|² = 0.3` with phases drawn from `seed`.
    pub fn seeded(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = rng.gen_range(0.0..2.0 * PI);
        let b = rng.gen_range(0.0..2.0 * PI);
        InitialState {
            seed: Some(seed),
            ..Self::from_populations(0.7, a, b)
        }
    }

    /// Random populations bounded away from both admissibility edges.
    pub fn random_admissible(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let u: f64 = rng.gen_range(0.05..0.45);
        let p = if rng.gen_bool(0.5) { u } else { 1.0 - u };
        let a = rng.gen_range(0.0..2.0 * PI);
        let b = rng.gen_range(0.0..2.0 * PI);
        InitialState {
            seed: Some(seed),
            ..Self::from_populations(p, a, b)
        }
    }

    pub fn populations(&self) -> (f64, f64) {
        (self.c_plus.norm_sqr(), self.c_minus.norm_sqr())
    }

    pub fn check_admissible(&self, hermitian: bool) -> Result<()> {
        let (pp, pm) = self.populations();
        if hermitian {
            if (pp - pm).abs() <= ADMISSIBLE_MARGIN * (pp + pm).max(f64::MIN_POSITIVE) {
                return Err(Error::InadmissibleInitialState(format!(
                    "|c+|^2 = {pp} and |c-|^2 = {pm} must differ for a Hermitian point"
                )));
            }
        } else if pp <= ADMISSIBLE_MARGIN || pm <= ADMISSIBLE_MARGIN {
            return Err(Error::InadmissibleInitialState(format!(
                "|c+|^2 = {pp} and |c-|^2 = {pm} must both be nonzero for a non-Hermitian point"
            )));
        }
        Ok(())
    }
}

impl Default for InitialState {
    fn default() -> Self {
        Self::seeded(DEFAULT_SEED)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum TextureKind {
    /// `⟨ψ̃|σ|ψ⟩ / ⟨ψ̃|ψ⟩`.
    LR,
    /// `⟨ψ|σ|ψ⟩ / ⟨ψ|ψ⟩`.
    RR,
    /// `⟨ψ̃|σ|ψ̃⟩ / ⟨ψ̃|ψ̃⟩`.
    LL,
}

impl fmt::Display for TextureKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TextureKind::LR => "lr",
            TextureKind::RR => "rr",
            TextureKind::LL => "ll",
        })
    }
}

impl FromStr for TextureKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "lr" => Ok(TextureKind::LR),
            "rr" => Ok(TextureKind::RR),
            "ll" => Ok(TextureKind::LL),
            _ => Err(Error::InvalidArgument(format!("unknown texture kind `{s}`"))),
        }
    }
}

/// `(row·σ_x·col, row·σ_y·col, row·σ_z·col)`.
fn pauli_sandwich(row: &[Complex64; 2], col: &[Complex64; 2]) -> [Complex64; 3] {
    [
        row[0] * col[1] + row[1] * col[0],
        -I * row[0] * col[1] + I * row[1] * col[0],
        row[0] * col[0] - row[1] * col[1],
    ]
}

fn conj2(v: &[Complex64; 2]) -> [Complex64; 2] {
    [v[0].conj(), v[1].conj()]
}

/// Evolved ket and associated bra (row data), both scaled by `e^{−|B|t}`.
pub fn evolve(eig: &EigenSystem, init: &InitialState, t: f64) -> ([Complex64; 2], [Complex64; 2]) {
    let (a, b) = (eig.a(), eig.b());
    let damp = b.abs();
    let kp = init.c_plus * Complex64::new((b - damp) * t, -a * t).exp();
    let km = init.c_minus * Complex64::new((-b - damp) * t, a * t).exp();
    let bp = init.c_plus.conj() * Complex64::new((b - damp) * t, a * t).exp();
    let bm = init.c_minus.conj() * Complex64::new((-b - damp) * t, -a * t).exp();
    let (rp, rm) = (eig.right_plus, eig.right_minus);
    let (lp, lm) = (eig.left_plus, eig.left_minus);
    let ket = [kp * rp[0] + km * rm[0], kp * rp[1] + km * rm[1]];
    let bra = [bp * lp[0] + bm * lm[0], bp * lp[1] + bm * lm[1]];
    (ket, bra)
}

const DENOM_TOL: f64 = 1e-12;

pub fn texture_at(
    eig: &EigenSystem,
    init: &InitialState,
    t: f64,
    kind: TextureKind,
) -> Result<[Complex64; 3]> {
    let (ket, bra) = evolve(eig, init, t);
    let (row, col) = match kind {
        TextureKind::LR => (bra, ket),
        TextureKind::RR => (conj2(&ket), ket),
        TextureKind::LL => (bra, conj2(&bra)),
    };
    let den = spectral::dot(&row, &col);
    if den.norm() <= DENOM_TOL {
        return Err(Error::VanishingDenominator { t });
    }
    let s = pauli_sandwich(&row, &col);
    let mut out = [s[0] / den, s[1] / den, s[2] / den];
    if kind != TextureKind::LR {
        // real by construction
        for v in out.iter_mut() {
            v.im = 0.0;
        }
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq)]
pub struct TextureSeries {
    pub kind: TextureKind,
    pub times: Vec<f64>,
    pub values: Vec<[Complex64; 3]>,
    /// Times whose denominator vanished.
    pub skipped: Vec<f64>,
}

pub fn texture_series(
    eig: &EigenSystem,
    init: &InitialState,
    kind: TextureKind,
    horizon: f64,
    dt: f64,
) -> Result<TextureSeries> {
    if !(horizon >= 0.0 && dt > 0.0 && horizon.is_finite()) {
        return Err(Error::InvalidArgument("need T >= 0 and dt > 0".into()));
    }
    let n = (horizon / dt).round() as usize;
    let mut out = TextureSeries {
        kind,
        times: Vec::with_capacity(n + 1),
        values: Vec::with_capacity(n + 1),
        skipped: Vec::new(),
    };
    for s in 0..=n {
        let t = s as f64 * dt;
        match texture_at(eig, init, t, kind) {
            Ok(v) => {
                out.times.push(t);
                out.values.push(v);
            }
            Err(Error::VanishingDenominator { t }) => out.skipped.push(t),
            Err(e) => return Err(e),
        }
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct AverageReport {
    pub mean: [Complex64; 3],
    /// Mean over `[0, T/2]`.
    pub mean_half: [Complex64; 3],
    pub horizon: f64,
    /// Step actually used.
    pub dt: f64,
    /// `max_j |mean_j(T) − mean_j(T/2)|`.
    pub drift: f64,
    pub skipped: usize,
}

/// Step used for horizon `T`: at most `dt`, `0.05/|ε₊|` and `T/400`, with an
/// even number of intervals.
pub fn effective_step(eps: Complex64, horizon: f64, dt: f64) -> (f64, usize) {
    let cap = dt.min(0.05 / eps.norm()).min(horizon / 400.0);
    let mut n = (horizon / cap).ceil() as usize;
    n = n.max(2);
    if n % 2 == 1 {
        n += 1;
    }
    (horizon / n as f64, n)
}

pub fn time_average(
    eig: &EigenSystem,
    init: &InitialState,
    kind: TextureKind,
    horizon: f64,
    dt: f64,
) -> Result<AverageReport> {
    if !(horizon > 0.0 && horizon.is_finite() && dt > 0.0) {
        return Err(Error::InvalidArgument("need T > 0 and dt > 0".into()));
    }
    init.check_admissible(eig.h.is_real(1e-14))?;
    let (step, n) = effective_step(eig.eps_plus, horizon, dt);
    let half = n / 2;
    // trapezoid over the usable samples; a skipped sample drops its weight
    let mut acc = [ZERO; 3];
    let mut acc_half = [ZERO; 3];
    let mut w_total = 0.0;
    let mut w_half = 0.0;
    let mut skipped = 0;
    for s in 0..=n {
        let t = s as f64 * step;
        let v = match texture_at(eig, init, t, kind) {
            Ok(v) => v,
            Err(Error::VanishingDenominator { .. }) => {
                skipped += 1;
                continue;
            }
            Err(e) => return Err(e),
        };
        let w = if s == 0 || s == n { 0.5 } else { 1.0 };
        for j in 0..3 {
            acc[j] += v[j] * w;
        }
        w_total += w;
        if s <= half {
            let wh = if s == 0 || s == half { 0.5 } else { 1.0 };
            for j in 0..3 {
                acc_half[j] += v[j] * wh;
            }
            w_half += wh;
        }
    }
    if w_total == 0.0 || w_half == 0.0 {
        return Err(Error::VanishingDenominator { t: 0.0 });
    }
    let mean = acc.map(|a| a / w_total);
    let mean_half = acc_half.map(|a| a / w_half);
    let drift = (0..3)
        .map(|j| (mean[j] - mean_half[j]).norm())
        .fold(0.0, f64::max);
    Ok(AverageReport {
        mean,
        mean_half,
        horizon,
        dt: step,
        drift,
        skipped,
    })
}

/// Long-time limit of a texture kind built from the dominant eigenvector.
///
/// For `B > 0` the `+` band dominates, for `B < 0` the `−` band; a real
/// spectrum uses `+`.
pub fn dominant_texture(eig: &EigenSystem, kind: TextureKind) -> [Complex64; 3] {
    band_texture(eig, eig.b() >= 0.0, kind)
}

/// Stationary texture of one band.
pub fn band_texture(eig: &EigenSystem, plus: bool, kind: TextureKind) -> [Complex64; 3] {
    let (r, l) = (eig.right(plus), eig.left(plus));
    let (row, col) = match kind {
        TextureKind::LR => (l, r),
        TextureKind::RR => (conj2(&r), r),
        TextureKind::LL => (l, conj2(&l)),
    };
    let den = spectral::dot(&row, &col);
    let s = pauli_sandwich(&row, &col);
    [s[0] / den, s[1] / den, s[2] / den]
}

/// Mod-π angle of a texture triple in a plane.
pub fn texture_angle(v: &[Complex64; 3], plane: Plane, kind: TextureKind) -> Result<f64> {
    let (sj, si) = plane.pick(v);
    if sj.norm() < SINGULAR_ANGLE_TOL && si.norm() < SINGULAR_ANGLE_TOL {
        return Err(Error::SingularAngle);
    }
    match kind {
        TextureKind::LR => Ok(mod_pi(
            complex_azimuth(sj, si).map_err(|_| Error::SingularAngle)?.re,
        )),
        TextureKind::RR | TextureKind::LL => Ok(mod_pi(sj.re.atan2(si.re))),
    }
}

/// Mod-π angle predicted by the spectrum alone.
pub fn analytic_angle(h: &HVector, plane: Plane, kind: TextureKind) -> Result<f64> {
    match kind {
        TextureKind::LR => Ok(mod_pi(spectral::equilibrium_azimuth(h, plane)?.value.re)),
        _ => {
            let eig = eigensystem(h)?;
            texture_angle(&dominant_texture(&eig, kind), plane, kind)
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct AzimuthSample {
    /// In `[0, π)`.
    pub angle: f64,
    pub slow_convergence: bool,
    /// `|angle(T) − angle(T/2)|` mod π.
    pub drift: f64,
    /// Horizon of the accepted average.
    pub horizon: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DynamicsConfig {
    pub horizon: f64,
    pub dt: f64,
    pub init: InitialState,
}

impl Default for DynamicsConfig {
    fn default() -> Self {
        DynamicsConfig {
            horizon: DEFAULT_T,
            dt: DEFAULT_DT,
            init: InitialState::default(),
        }
    }
}

/// Dynamic angle at one `h`.
///
/// The horizon is doubled up to [`MAX_EXTENSIONS`] times while the angle still
/// moves between `T/2` and `T`, or while `|B|·T` is below [`MIN_BT`] at a
/// non-Hermitian point. Non-Hermitian points that never settle take the
/// analytic angle and are flagged.
pub fn averaged_azimuth_h(
    h: &HVector,
    plane: Plane,
    kind: TextureKind,
    cfg: &DynamicsConfig,
) -> Result<AzimuthSample> {
    let eig = eigensystem(h)?;
    let hermitian = h.is_real(1e-14);
    cfg.init.check_admissible(hermitian)?;
    let fallback = || -> Result<AzimuthSample> {
        Ok(AzimuthSample {
            angle: analytic_angle(h, plane, kind)?,
            slow_convergence: true,
            drift: f64::NAN,
            horizon: f64::INFINITY,
        })
    };
    let mut horizon = cfg.horizon;
    let mut extensions = 0;
    if !hermitian {
        let b = eig.b().abs();
        while b * horizon < MIN_BT && extensions < MAX_EXTENSIONS {
            horizon *= 2.0;
            extensions += 1;
        }
        if b < SLOW_B || b * horizon < MIN_BT {
            return fallback();
        }
    }
    let mut last = None;
    for _ in extensions..=MAX_EXTENSIONS {
        let rep = time_average(&eig, &cfg.init, kind, horizon, cfg.dt)?;
        let angle = texture_angle(&rep.mean, plane, kind);
        let half = texture_angle(&rep.mean_half, plane, kind);
        let drift = match (&angle, half) {
            (Ok(a), Ok(b)) => mod_pi_diff(*a, b).abs(),
            _ => f64::INFINITY,
        };
        if let Ok(a) = angle {
            if drift < ANGLE_DRIFT_TOL {
                return Ok(AzimuthSample {
                    angle: a,
                    slow_convergence: false,
                    drift,
                    horizon,
                });
            }
        }
        last = Some((angle, drift, horizon));
        horizon *= 2.0;
    }
    match last {
        Some((Ok(a), drift, horizon)) if hermitian => Ok(AzimuthSample {
            angle: a,
            slow_convergence: true,
            drift,
            horizon,
        }),
        Some((Err(e), _, _)) if hermitian => Err(e),
        _ => fallback(),
    }
}

pub fn averaged_azimuth(
    model: &ModelSpec,
    k: &Momentum,
    plane: Plane,
    kind: TextureKind,
    cfg: &DynamicsConfig,
) -> Result<AzimuthSample> {
    averaged_azimuth_h(&model.evaluate_h(k)?, plane, kind, cfg)
}
