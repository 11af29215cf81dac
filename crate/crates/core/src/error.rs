use alloc::string::String;
use alloc::vec::Vec;

/// Errors produced by the simulator.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid parameters: {0}")]
    InvalidParameters(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("level {level} out of range for a {dim}-level system")]
    LevelOutOfRange { level: usize, dim: usize },

    #[error("frequency {freq_ghz} GHz aliases at sample rate {rate_gsps} GS/s")]
    Aliasing { freq_ghz: f64, rate_gsps: f64 },

    #[error("empty waveform")]
    EmptyWaveform,

    #[error("eigen-solver did not converge after {sweeps} sweeps")]
    EigenNonConvergence { sweeps: usize },

    #[error("integration drift: trace error {drift:e} exceeds tolerance, reduce dt below {dt} ns")]
    StepSize { drift: f64, dt: f64 },

    #[error("deconvolution is ill-conditioned: response {response:e} below floor {floor:e} at {freq_ghz} GHz")]
    IllConditioned { response: f64, floor: f64, freq_ghz: f64 },

    #[error("calibration did not converge at {f_sb_mhz} MHz (best residual {residual:e})")]
    Calibration { f_sb_mhz: f64, residual: f64 },

    #[error("search failed: {0}")]
    Search(String),

    #[error("readout cannot isolate level 2: {0}")]
    Selectivity(String),

    #[error("invalid populations: {0}")]
    InvalidPopulations(String),

    /// The raw scan is kept so a caller can still report it.
    #[error("fit quality too low: relative residual {residual:e} over {} points", x.len())]
    FitQuality { residual: f64, x: Vec<f64>, y: Vec<f64> },
}

pub type Result<T> = core::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidParameters(msg.into())
}
