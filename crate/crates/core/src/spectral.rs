//! Closed-form biorthogonal eigensystems of `h·σ` and the azimuthal angles
//! built from pairs of h-components.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Component, HVector};

const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };

/// Energies with `|ε| ≤ EP_TOL · |h|` are treated as coalesced.
pub const EP_TOL: f64 = 1e-9;
/// `|h_i² + h_j²| ≤ PLANE_TOL · |h|²` marks a singular plane.
pub const PLANE_TOL: f64 = 1e-24;

/// Row-vector times column-vector, no conjugation.
pub fn dot(row: &[Complex64; 2], col: &[Complex64; 2]) -> Complex64 {
    row[0] * col[0] + row[1] * col[1]
}

/// Reference axis `i` for pole classification.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    X,
    Y,
    Z,
}

impl Axis {
    pub const ALL: [Axis; 3] = [Axis::X, Axis::Y, Axis::Z];

    pub fn component(self) -> Component {
        match self {
            Axis::X => Component::X,
            Axis::Y => Component::Y,
            Axis::Z => Component::Z,
        }
    }

    /// The complementary plane: x → (z, y), y → (x, z), z → (y, x).
    pub fn plane(self) -> Plane {
        match self {
            Axis::X => Plane::new(Component::Z, Component::Y),
            Axis::Y => Plane::new(Component::X, Component::Z),
            Axis::Z => Plane::new(Component::Y, Component::X),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Axis::X => "x",
            Axis::Y => "y",
            Axis::Z => "z",
        }
    }
}

impl fmt::Display for Axis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Axis {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "x" => Ok(Axis::X),
            "y" => Ok(Axis::Y),
            "z" => Ok(Axis::Z),
            _ => Err(Error::InvalidArgument(format!("unknown axis `{s}`"))),
        }
    }
}

/// An ordered pair `(j, i)`: angles in this plane have `tan φ = h_j / h_i`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Plane {
    pub num: Component,
    pub den: Component,
}

impl Plane {
    pub fn new(num: Component, den: Component) -> Self {
        Plane { num, den }
    }

    pub const YX: Plane = Plane { num: Component::Y, den: Component::X };
    pub const XZ: Plane = Plane { num: Component::X, den: Component::Z };
    pub const ZY: Plane = Plane { num: Component::Z, den: Component::Y };

    /// `(h_j, h_i)`.
    pub fn pick<T: Copy>(&self, v: &[T; 3]) -> (T, T) {
        (v[self.num.index()], v[self.den.index()])
    }

    pub fn name(&self) -> String {
        let c = |c: Component| match c {
            Component::X => 'x',
            Component::Y => 'y',
            Component::Z => 'z',
        };
        format!("{}{}", c(self.num), c(self.den))
    }
}

impl fmt::Display for Plane {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name())
    }
}

impl FromStr for Plane {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let comp = |ch: char| match ch {
            'x' => Ok(Component::X),
            'y' => Ok(Component::Y),
            'z' => Ok(Component::Z),
            _ => Err(Error::InvalidArgument(format!("unknown plane `{s}`"))),
        };
        let chars: Vec<char> = s.chars().collect();
        if chars.len() != 2 || chars[0] == chars[1] {
            return Err(Error::InvalidArgument(format!("unknown plane `{s}`")));
        }
        Ok(Plane::new(comp(chars[0])?, comp(chars[1])?))
    }
}

/// Which analytic formula produced an eigenvector.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Gauge {
    /// `(h_x − i h_y, ε − h_z)`.
    EpsMinusHz,
    /// `(ε + h_z, h_x + i h_y)`.
    EpsPlusHz,
}

/// Biorthonormal eigensystem of `h·σ` with energies `±ε₊`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EigenSystem {
    pub h: HVector,
    pub eps_plus: Complex64,
    pub right_plus: [Complex64; 2],
    pub right_minus: [Complex64; 2],
    /// `⟨χ₊|` as row data.
    pub left_plus: [Complex64; 2],
    pub left_minus: [Complex64; 2],
    pub norm_plus: Complex64,
    pub norm_minus: Complex64,
    pub gauge_plus: Gauge,
    pub gauge_minus: Gauge,
}

impl EigenSystem {
    pub fn a(&self) -> f64 {
        self.eps_plus.re
    }

    pub fn b(&self) -> f64 {
        self.eps_plus.im
    }

    pub fn eps(&self, plus: bool) -> Complex64 {
        if plus {
            self.eps_plus
        } else {
            -self.eps_plus
        }
    }

    pub fn right(&self, plus: bool) -> [Complex64; 2] {
        if plus {
            self.right_plus
        } else {
            self.right_minus
        }
    }

    pub fn left(&self, plus: bool) -> [Complex64; 2] {
        if plus {
            self.left_plus
        } else {
            self.left_minus
        }
    }
}

/// Principal square root with the `Re = 0 ⇒ Im ≥ 0` convention enforced.
pub fn principal_energy(h: &HVector) -> Complex64 {
    let mut e = h.square_sum().sqrt();
    if e.re == 0.0 {
        e = Complex64::new(0.0, e.im.abs());
    } else if e.re < 0.0 {
        e = -e;
    }
    e
}

pub fn hamiltonian(h: &HVector) -> [[Complex64; 2]; 2] {
    [[h.hz, h.hx - I * h.hy], [h.hx + I * h.hy, -h.hz]]
}

/// Returns `(right, left, gauge)` for energy `e`, unnormalized.
fn band_vectors(h: &HVector, e: Complex64) -> ([Complex64; 2], [Complex64; 2], Gauge) {
    let minus = e - h.hz;
    let plus = e + h.hz;
    if minus.norm() >= plus.norm() {
        (
            [h.hx - I * h.hy, minus],
            [h.hx + I * h.hy, minus],
            Gauge::EpsMinusHz,
        )
    } else {
        (
            [plus, h.hx + I * h.hy],
            [plus, h.hx - I * h.hy],
            Gauge::EpsPlusHz,
        )
    }
}

pub fn eigensystem(h: &HVector) -> Result<EigenSystem> {
    let scale = h.scale();
    let eps = principal_energy(h);
    if scale == 0.0 || eps.norm() <= EP_TOL * scale {
        return Err(Error::ExceptionalPoint { eps: eps.norm(), scale });
    }
    let (rp, lp, gp) = band_vectors(h, eps);
    let (rm, lm, gm) = band_vectors(h, -eps);
    let np = dot(&lp, &rp).sqrt();
    let nm = dot(&lm, &rm).sqrt();
    let div = |v: [Complex64; 2], n: Complex64| [v[0] / n, v[1] / n];
    Ok(EigenSystem {
        h: *h,
        eps_plus: eps,
        right_plus: div(rp, np),
        right_minus: div(rm, nm),
        left_plus: div(lp, np),
        left_minus: div(lm, nm),
        norm_plus: np,
        norm_minus: nm,
        gauge_plus: gp,
        gauge_minus: gm,
    })
}

/// A complex angle in a given plane.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ComplexAngle {
    pub value: Complex64,
    pub plane: Plane,
}

/// Reduces into `[0, π)`.
pub fn mod_pi(x: f64) -> f64 {
    let r = x.rem_euclid(PI);
    if r >= PI {
        0.0
    } else {
        r
    }
}

/// Signed distance between two mod-π classes, in `[−π/2, π/2)`.
pub fn mod_pi_diff(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(PI);
    if d >= PI / 2.0 {
        d - PI
    } else {
        d
    }
}

/// `(h_i + i h_j) / (h_i − i h_j)`; its half-log is `i·arctan(h_j/h_i)`.
fn azimuth_ratio(hj: Complex64, hi: Complex64) -> Result<Complex64> {
    let scale = (hj.norm_sqr() + hi.norm_sqr()).max(f64::MIN_POSITIVE);
    let residual = (hi * hi + hj * hj).norm();
    if residual <= PLANE_TOL * scale || scale <= f64::MIN_POSITIVE {
        return Err(Error::SingularPlane { residual });
    }
    Ok((hi + I * hj) / (hi - I * hj))
}

/// Principal complex `arctan(num/den)`, stable when `den` vanishes.
pub fn complex_azimuth(num: Complex64, den: Complex64) -> Result<Complex64> {
    let z = azimuth_ratio(num, den)?;
    Ok(-0.5 * I * z.ln())
}

pub fn equilibrium_azimuth(h: &HVector, plane: Plane) -> Result<ComplexAngle> {
    let (hj, hi) = plane.pick(&h.as_array());
    Ok(ComplexAngle {
        value: complex_azimuth(hj, hi)?,
        plane,
    })
}

/// Real and imaginary parts of the equilibrium azimuth together with the
/// two observable angles for a gauge constant `₤`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AzimuthDecomposition {
    /// `Re φ_ji` reduced into `[0, π)`.
    pub re_phi: f64,
    pub im_phi: f64,
    pub phi_rr: f64,
    pub phi_ll: f64,
}

impl AzimuthDecomposition {
    /// `½(φ^RR + φ^LL)` reduced into `[0, π/2)`.
    pub fn half_sum(&self) -> f64 {
        (0.5 * (self.phi_rr + self.phi_ll)).rem_euclid(PI / 2.0)
    }
}

pub fn real_azimuth_decomposition(
    h: &HVector,
    plane: Plane,
    gauge_constant: Complex64,
) -> Result<AzimuthDecomposition> {
    if gauge_constant.norm() == 0.0 {
        return Err(Error::InvalidArgument("gauge constant must be nonzero".into()));
    }
    let (hj, hi) = plane.pick(&h.as_array());
    let z = azimuth_ratio(hj, hi)?;
    let a = gauge_constant * hi;
    let b = gauge_constant * hj;
    let phi_rr = mod_pi((b.re + a.im).atan2(a.re - b.im));
    let phi_ll = mod_pi((b.re - a.im).atan2(a.re + b.im));
    Ok(AzimuthDecomposition {
        re_phi: mod_pi(0.5 * z.arg()),
        im_phi: -0.5 * z.norm().ln(),
        phi_rr,
        phi_ll,
    })
}

/// Polar and azimuthal angles of `h/ε₊` about a reference axis.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BlochAngles {
    pub theta: Complex64,
    pub phi: ComplexAngle,
}

/// `cos θ_i = h_i / ε₊`; defined even where the azimuth is not.
pub fn cos_theta(h: &HVector, axis: Axis) -> Result<Complex64> {
    let scale = h.scale();
    let eps = principal_energy(h);
    if scale == 0.0 || eps.norm() <= EP_TOL * scale {
        return Err(Error::ExceptionalPoint { eps: eps.norm(), scale });
    }
    Ok(h.get(axis.component()) / eps)
}

pub fn bloch_angles(h: &HVector, axis: Axis) -> Result<BlochAngles> {
    let cos = cos_theta(h, axis)?;
    let plane = axis.plane();
    let (hj, hl) = plane.pick(&h.as_array());
    let eps = principal_energy(h);
    let theta = cos.acos();
    let mut phi = complex_azimuth(hj, hl)?;
    // arctan fixes φ only mod π; choose the representative whose cosine has
    // the sign of h_l.
    let target = hl / eps;
    if (theta.sin() * phi.cos() - target).norm() > (theta.sin() * (phi + PI).cos() - target).norm()
    {
        phi += PI;
    }
    Ok(BlochAngles {
        theta,
        phi: ComplexAngle { value: phi, plane },
    })
}
