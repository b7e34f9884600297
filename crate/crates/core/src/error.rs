use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("empty input")]
    EmptyInput,

    #[error("length mismatch: {left} vs {right} samples")]
    LengthMismatch { left: usize, right: usize },

    #[error("sample rate mismatch: {left} Hz vs {right} Hz")]
    RateMismatch { left: u32, right: u32 },

    #[error("segment [{start}, {start}+{length}) out of range for {len} samples")]
    SegmentOutOfRange {
        start: usize,
        length: usize,
        len: usize,
    },

    #[error("degenerate frame: autocorrelation r0 = {0}")]
    DegenerateFrame(f64),

    #[error("distribution has no probability mass")]
    EmptyDistribution,

    #[error(
        "corpus must contain both clean and collapsed items ({clean} clean, {collapsed} collapsed)"
    )]
    SingleClass { clean: usize, collapsed: usize },

    #[error("unsupported wav file: {0}")]
    UnsupportedWav(String),

    #[error(transparent)]
    Wav(#[from] hound::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
