use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("state ({x}, {y}) is a wall cell")]
    WallState { x: i32, y: i32 },
    #[error("state ({x}, {y}) lies outside the {width}x{height} grid")]
    OutOfGrid {
        x: i32,
        y: i32,
        width: i32,
        height: i32,
    },
    #[error("invalid layout: {0}")]
    Layout(String),
    #[error("input width mismatch: expected {expected}, got {got}")]
    WidthMismatch { expected: usize, got: usize },
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("output head {head} is out of range or pinned (outputs: {outputs})")]
    InvalidHead { head: usize, outputs: usize },
    #[error("non-finite target {value} at batch index {index}")]
    NonFiniteTarget { index: usize, value: f64 },
    #[error("empty batch")]
    EmptyBatch,
    #[error("replay buffer holds {len} transitions but sampling needs {warmup}")]
    BufferNotReady { len: usize, warmup: usize },
    #[error("operation requires the learned dynamics model, got {0}")]
    NotLearned(String),
    #[error("the {0} model has no enumerable transition distribution")]
    NotEnumerable(String),
    #[error("reference policy {kind} needs the {expected} error form")]
    FormMismatch {
        kind: &'static str,
        expected: &'static str,
    },
    #[error("horizon {h} outside 0..={max}")]
    HorizonOutOfRange { h: usize, max: usize },
    #[error("temperature must be positive, got {0}")]
    Temperature(f64),
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("the greedy reference policy needs a target Q function")]
    MissingQ,
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("checkpoint {}: {reason}", path.display())]
    Checkpoint { path: PathBuf, reason: String },
    #[error("config: {0}")]
    Config(String),
    #[error("transfer: {0}")]
    Transfer(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
