use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("time {t} s outside spline domain [{start}, {end})")]
    OutOfDomain { t: f64, start: f64, end: f64 },
    #[error("point behind camera (camera-frame z = {0})")]
    BehindCamera(f64),
    #[error("invalid depth {0}")]
    InvalidDepth(f64),
    #[error("viewing ray does not intersect the plane")]
    NoIntersection,
    #[error("singular homography")]
    SingularHomography,
    #[error("render: {0}")]
    Render(String),
    #[error("point left the field of view")]
    OutOfView,
    #[error("invalid speed scale {0}")]
    InvalidScale(f64),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("time order: {0}")]
    TimeOrder(String),
    #[error("config: {0}")]
    Config(String),
    #[error("stream has zero duration")]
    ZeroDuration,
    #[error("resolution: {0}")]
    Resolution(String),
    #[error("insufficient events: {0}")]
    InsufficientEvents(String),
    #[error("insufficient constraints: {0}")]
    InsufficientConstraints(String),
    #[error("optimizer diverged (non-finite objective)")]
    Diverged,
    #[error("format: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Stable machine-readable identifier, used in result records.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::OutOfDomain { .. } => "out_of_domain",
            Error::BehindCamera(_) => "behind_camera",
            Error::InvalidDepth(_) => "invalid_depth",
            Error::NoIntersection => "no_intersection",
            Error::SingularHomography => "singular_homography",
            Error::Render(_) => "render",
            Error::OutOfView => "out_of_view",
            Error::InvalidScale(_) => "invalid_scale",
            Error::Dimension(_) => "dimension",
            Error::Domain(_) => "domain",
            Error::InsufficientData(_) => "insufficient_data",
            Error::TimeOrder(_) => "time_order",
            Error::Config(_) => "config",
            Error::ZeroDuration => "zero_duration",
            Error::Resolution(_) => "resolution",
            Error::InsufficientEvents(_) => "insufficient_events",
            Error::InsufficientConstraints(_) => "insufficient_constraints",
            Error::Diverged => "diverged",
            Error::Format(_) => "format",
            Error::Io(_) => "io",
            Error::Json(_) => "json",
        }
    }
}
