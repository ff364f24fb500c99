use thiserror::Error;

/// Broad failure class, used by front ends to map errors onto exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    /// Bad input: out-of-range parameters, malformed files, inconsistent shapes.
    Input,
    /// The numerics failed: singular systems, blow-up, non-finite objectives.
    Numerical,
    /// A recovery assumption does not hold at the requested points.
    Assumption,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("parameter `{name}` = {value} violates its bound ({bound})")]
    ParamBound {
        name: &'static str,
        value: f64,
        bound: &'static str,
    },

    #[error("invalid grid: {0}")]
    Grid(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("diffusivity is singular at M = {value} (a = {a} > 0 requires M < 1)")]
    Singularity { value: f64, a: f64 },

    #[error("singular tridiagonal system: pivot {pivot:e} at row {row}")]
    SingularSystem { row: usize, pivot: f64 },

    #[error("solution blew up at time level {level}: max |value| = {value:e}")]
    BlowUp { level: usize, value: f64 },

    #[error("incompatible data: {0}")]
    Compatibility(String),

    #[error("tabulated data has no node at (x, t) = ({x}, {t})")]
    OffGrid { x: f64, t: f64 },

    #[error("precondition failed: {0}")]
    Precondition(String),

    #[error("assumption ({clause}) violated: {detail}")]
    Assumption { clause: &'static str, detail: String },

    #[error("determinant too small in {stage}: {value:e}")]
    Determinant { stage: &'static str, value: f64 },

    #[error("no valid evaluation points: {0}")]
    NoValidPoints(String),

    #[error("residual evaluation failed at X = {x:?}: {source}")]
    Residual {
        x: Vec<f64>,
        #[source]
        source: Box<Error>,
    },

    #[error("objective is not finite at the initial guess")]
    NonFiniteObjective,

    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("invalid measurements: {0}")]
    Measurement(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::ParamBound { .. }
            | Error::Grid(_)
            | Error::Domain(_)
            | Error::Compatibility(_)
            | Error::OffGrid { .. }
            | Error::Precondition(_)
            | Error::Parse { .. }
            | Error::Measurement(_)
            | Error::Io(_) => ErrorKind::Input,
            Error::Singularity { .. }
            | Error::SingularSystem { .. }
            | Error::BlowUp { .. }
            | Error::NonFiniteObjective => ErrorKind::Numerical,
            Error::Residual { source, .. } => source.kind(),
            Error::Assumption { .. } | Error::Determinant { .. } | Error::NoValidPoints(_) => {
                ErrorKind::Assumption
            }
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
