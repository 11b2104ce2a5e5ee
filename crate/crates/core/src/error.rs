use thiserror::Error;

use crate::spectral::Axis;

#[derive(Debug, Error)]
pub enum Error {
    #[error("momentum has dimension {got}, model expects {expected}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("unknown model family `{0}`")]
    UnknownFamily(String),

    #[error("family `{family}` takes {expected} parameters ({names}), got {got}")]
    ParameterCount {
        family: String,
        names: String,
        expected: usize,
        got: usize,
    },

    #[error("unknown parameter `{name}` for family `{family}`")]
    UnknownParameter { family: String, name: String },

    #[error("malformed model document: {0}")]
    MalformedModel(String),

    #[error("exceptional point: |eps| = {eps:.3e} (scale {scale:.3e})")]
    ExceptionalPoint { eps: f64, scale: f64 },

    #[error("singular plane: h_j^2 + h_i^2 = {residual:.3e}")]
    SingularPlane { residual: f64 },

    #[error("inadmissible initial state: {0}")]
    InadmissibleInitialState(String),

    #[error("vanishing texture denominator at t = {t}")]
    VanishingDenominator { t: f64 },

    #[error("averaged texture components vanish; momentum is at or near a phase singularity")]
    SingularAngle,

    #[error("invalid angle profile: max step {max_step:.3} near k = {k:?} after {refinements} refinements")]
    ProfileInvalid {
        k: Vec<f64>,
        max_step: f64,
        refinements: usize,
    },

    #[error("integrand singular on the loop near k = {k}")]
    SingularOnLoop { k: f64 },

    #[error("Newton refinement did not converge: last iterate {last:?}, |G| = {residual:.3e}")]
    NewtonFailed { last: [f64; 2], residual: f64 },

    #[error("cannot classify singularity at {k0:?}: |Re h_i| = {re_hi:.3e}; try another axis")]
    Classification { k0: [f64; 2], re_hi: f64 },

    #[error("axis {0:?} is degenerate for this model: h_j^2 + h_l^2 vanishes identically")]
    DegenerateAxis(Axis),

    #[error("singularity at {k0:?} cannot be isolated (nearest neighbour {separation:.3e})")]
    InseparableCluster { k0: [f64; 2], separation: f64 },

    #[error("bands are not separable: {0}")]
    NotSeparable(String),

    #[error("requires a {expected}D model, got {got}D")]
    WrongDimension { expected: usize, got: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid sweep plan: {0}")]
    InvalidPlan(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
