use thiserror::Error;

/// Errors raised by the numerical routines.
///
/// Messages name the failing mathematical precondition so they can be shown
/// to users verbatim.
#[derive(Debug, Error)]
pub enum Error {
    #[error("control {control:?} outside the admissible control range")]
    ControlOutOfRange { control: Vec<f64> },

    #[error("control index {0} outside the defined window")]
    ControlIndex(i64),

    #[error("index out of range: {0}")]
    IndexOutOfRange(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("no hyperbolic splitting detected")]
    NoHyperbolicSplitting,

    #[error("not uniformly hyperbolic at this horizon")]
    NotUniformlyHyperbolic,

    #[error("no invariant set at this resolution")]
    EmptyInvariantSet,

    #[error("shadowing failed (pseudo-orbit too far from hyperbolic set)")]
    ShadowingFailed,

    #[error("no periodic orbit found from seed")]
    NoPeriodicOrbit,

    #[error("conjugacy undefined (control too large?)")]
    ConjugacyUndefined,

    #[error("not chain-connected at this ε/resolution")]
    NotChainConnected,

    #[error("pair (K,Q) not admissible under codebook")]
    NotAdmissible,

    #[error("orbit not hyperbolic")]
    OrbitNotHyperbolic,

    #[error("linearization not controllable")]
    NotControllable,

    #[error("region does not isolate an invariant set")]
    TotalEscape,

    #[error("empty separated set")]
    EmptySeparatedSet,

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
