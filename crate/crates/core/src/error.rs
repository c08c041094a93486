use thiserror::Error;

pub type Result<T> = std::result::Result<T, MuskatError>;

#[derive(Debug, Error)]
pub enum MuskatError {
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error(
        "partial-wetting violation: Young's law cos(omega) = [gamma]/sigma needs |[gamma]| < sigma \
         (got [gamma] = {gamma_jump}, sigma = {sigma})"
    )]
    PartialWetting { gamma_jump: f64, sigma: f64 },
    #[error("geometry error: {0}")]
    Geometry(String),
    #[error("diffeomorphism breakdown: detJ in [{min:.6}, {max:.6}], admissible [{lo}, {hi}]")]
    DetJ { min: f64, max: f64, lo: f64, hi: f64 },
    #[error("solver failure: {0}")]
    Solver(String),
    #[error("inconsistent Neumann data: relative compatibility defect {0:.3e}")]
    Compatibility(f64),
    #[error("configuration rejected:\n  - {}", .0.join("\n  - "))]
    Config(Vec<String>),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl MuskatError {
    /// Process exit code: 1 for rejected input, 2 for breakdown during compute.
    pub fn exit_code(&self) -> i32 {
        match self {
            MuskatError::Invalid(_)
            | MuskatError::PartialWetting { .. }
            | MuskatError::Config(_)
            | MuskatError::Json(_)
            | MuskatError::Compatibility(_) => 1,
            MuskatError::Geometry(_)
            | MuskatError::DetJ { .. }
            | MuskatError::Solver(_)
            | MuskatError::Io(_) => 2,
        }
    }
}
