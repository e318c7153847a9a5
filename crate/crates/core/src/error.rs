use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("parse error: {0}")]
    Parse(String),
    #[error("unsupported format: {0}")]
    UnsupportedFormat(String),
    #[error("scene is empty")]
    EmptyScene,
    #[error("invalid spec: {0}")]
    InvalidSpec(String),
    #[error("invalid mesh: {0}")]
    InvalidMesh(String),
    #[error("invalid camera: {0}")]
    InvalidCamera(String),
    #[error("invalid depth {0}")]
    InvalidDepth(f64),
    #[error("invalid grid density {0} (expected 1..=32)")]
    InvalidDensity(u32),
    #[error("grid point ({0}, {1}) is outside the lattice")]
    OutOfGrid(i64, i64),
    #[error("overlay does not fit: {0}")]
    StyleOverflow(String),
    #[error("no unused (grid point, orientation) pairs remain")]
    LatticeExhausted,
    #[error("http error: {0}")]
    Http(String),
    #[error("no transcript rule matched the request")]
    NoRuleMatched,
    #[error("cache entry {0} is corrupt")]
    CacheCorrupt(String),
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("planning failed: {0}")]
    Planning(String),
    #[error("could not parse answers: {0}")]
    AnswerParse(String),
    #[error("mask indices are not consecutive: {0}")]
    NonConsecutiveIndices(String),
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("candidate is empty")]
    EmptyCandidate,
    #[error("corpus needs at least 2 items, got {0}")]
    CorpusTooSmall(usize),
    #[error("manifest error at {field}: {message}")]
    Manifest { field: String, message: String },
    #[error("image error: {0}")]
    Image(String),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn manifest(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Manifest {
            field: field.into(),
            message: message.into(),
        }
    }
}

impl From<image::ImageError> for Error {
    fn from(e: image::ImageError) -> Self {
        Error::Image(e.to_string())
    }
}
