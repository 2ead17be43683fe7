use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("pole: singular Möbius denominator at alpha = {alpha}")]
    Pole { alpha: String },
    #[error("degenerate width: {0}")]
    DegenerateWidth(String),
    #[error("inadmissible width parameter: {0}")]
    InadmissibleWidth(String),
    #[error("invalid matrix: {0}")]
    InvalidMatrix(String),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("grid mismatch")]
    GridMismatch,
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("insufficient support: {0} nodes above threshold")]
    InsufficientSupport(usize),
    #[error("fit failed: {0}")]
    FitFailed(String),
    #[error("grid underresolved: {0}")]
    Underresolved(String),
    #[error("no admissible alpha found in region")]
    NoAdmissibleAlpha,
    #[error("decay condition violated: {0}")]
    DecayCondition(String),
    #[error("singular map: {0}")]
    SingularMap(String),
    #[error("vanishing overlap at node {node}: |overlap| = {value:e}")]
    VanishingOverlap { node: usize, value: f64 },
    #[error("representation mismatch: best residual {best:e}")]
    RepresentationMismatch {
        best: f64,
        residuals: Vec<(String, f64)>,
    },
    #[error("chart mismatch: {0}")]
    ChartMismatch(String),
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("both kernel charts singular")]
    SingularCharts,
    #[error("format: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
