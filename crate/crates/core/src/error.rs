use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter `{field}`: {reason}")]
    InvalidParam { field: &'static str, reason: String },

    #[error("cannot place {requested} small cells among {groups} user groups")]
    TooManySmallCells { requested: usize, groups: usize },

    #[error("group at distance {distance} m lies inside its own scattering ring (radius {ring} m)")]
    InsideScatteringRing { distance: f64, ring: f64 },

    #[error("one-ring quadrature did not converge (residual {residual:e})")]
    QuadratureNoConvergence { residual: f64 },

    #[error("matrix is not Hermitian (asymmetry {asymmetry:e})")]
    NotHermitian { asymmetry: f64 },

    #[error("degenerate loading: {streams} streams on {rank} significant eigenmodes")]
    DegenerateLoading { streams: usize, rank: usize },

    #[error("fixed point did not converge after {iterations} iterations (last iterate {last})")]
    FixedPointNoConvergence { iterations: usize, last: f64 },

    #[error("invalid loading: F = {0} is not below 1")]
    InvalidLoading(f64),

    #[error("empty macro schedule")]
    EmptySchedule,

    #[error("small cell of group {0} is not active")]
    InactiveSmallCell(usize),

    #[error("no candidate groups")]
    NoCandidates,

    #[error("rank-deficient effective channel, resample users")]
    ResampleUsers,

    #[error("nothing to aggregate")]
    EmptyAggregate,
}

pub type Result<T> = std::result::Result<T, Error>;
