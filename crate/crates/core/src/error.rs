use thiserror::Error;

/// Errors produced by the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("profiling error: {0}")]
    Profile(String),
    #[error("split error: {0}")]
    Split(String),
    #[error("invalid parameter: {0}")]
    Parameter(String),
    #[error("glyph unavailable: {ch:?} in font `{font}`")]
    GlyphUnavailable { ch: char, font: String },
    #[error("render error: {0}")]
    Render(String),
    #[error("font error: {0}")]
    Font(String),
    #[error("contract violation: {0}")]
    Contract(String),
    #[error("build error: {0}")]
    Build(String),
    #[error("incompatible file: {0}")]
    Incompatible(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("OCR engine unavailable: {0}")]
    EngineUnavailable(String),
    #[error("OCR failed: {0}")]
    OcrFailed(String),
    #[error("metric error: {0}")]
    Metric(String),
    #[error("error model: {0}")]
    Model(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Image(#[from] image::ImageError),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
