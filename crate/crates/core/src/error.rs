use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, Error)]
pub enum Error {
    #[error("degenerate lattice: basis vectors are linearly dependent (|det| = {det:e})")]
    DegenerateLattice { det: f64 },
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("realness violated at G = {n:?}: V(-G) = {partner} differs from conj(V(G)) = {expected}")]
    RealnessViolation {
        n: Vec<i32>,
        partner: String,
        expected: String,
    },
    #[error("time {t} outside path range [0, {period}]")]
    TimeOutOfRange { t: f64, period: f64 },
    #[error("non-finite quasimomentum {0:?}")]
    NonFinite(Vec<f64>),
    #[error("eigensolver failed at k = {k:?} (matrix size {size})")]
    Eigensolver { k: Vec<f64>, size: usize },
    #[error("band window [{lo}, {hi}] needs band {hi}+1 but only {computed} bands were computed")]
    WindowOutOfRange { lo: usize, hi: usize, computed: usize },
    #[error("gap closes for window [{lo}, {hi}]: minimal gap {gap:e} at k = {k:?}")]
    Gapless {
        lo: usize,
        hi: usize,
        gap: f64,
        k: Vec<f64>,
    },
    #[error("incommensurate grids: {0}")]
    Incommensurate(String),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("frame is in raw gauge; fix the gauge before differentiating")]
    RawGauge,
    #[error("grid too coarse: link overlap {overlap:e} at node {node}")]
    GridTooCoarse { node: usize, overlap: f64 },
    #[error("plaquette sum not quantized: {value} (residual {residual:e})")]
    NonQuantized { value: f64, residual: f64 },
    #[error("near degeneracy between bands {n} and {m} at k = {k:?} (|dE| = {gap:e})")]
    NearDegeneracy {
        n: usize,
        m: usize,
        gap: f64,
        k: Vec<f64>,
    },
    #[error("gap closes at node (k = {k:?}, t = {t}): gap {gap:e}")]
    GapClosure { k: Vec<f64>, t: f64, gap: f64 },
    #[error("norm drift {drift:e} at time {t}")]
    NormDrift { t: f64, drift: f64 },
    #[error("wave packet reached the box boundary at time {t} (edge weight {weight:e})")]
    BoundaryContact { t: f64, weight: f64 },
    #[error("missing data: {0}")]
    MissingData(String),
    #[error("unsupported: {0}")]
    Unsupported(String),
}

impl Error {
    /// True for failures of the numerics (gaps, convergence, quantization)
    /// as opposed to malformed input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::Eigensolver { .. }
                | Error::Gapless { .. }
                | Error::GridTooCoarse { .. }
                | Error::NonQuantized { .. }
                | Error::NearDegeneracy { .. }
                | Error::GapClosure { .. }
                | Error::NormDrift { .. }
                | Error::BoundaryContact { .. }
        )
    }
}
