//! Crate-wide error type and exit-code mapping for the CLI.

/// Errors produced by any part of the pipeline.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("layer {layer}: input shape mismatch: expected {expected:?}, got {got:?}")]
    ShapeMismatch {
        layer: usize,
        expected: Vec<usize>,
        got: Vec<usize>,
    },

    #[error("layer {layer}: {msg}")]
    LayerConfig { layer: usize, msg: String },

    #[error("layer {layer}: forward cache does not match a {kind} layer")]
    CacheMismatch { layer: usize, kind: &'static str },

    #[error("tensor shape {shape:?} implies {expected} elements, got {got}")]
    TensorSize {
        shape: Vec<usize>,
        expected: usize,
        got: usize,
    },

    #[error("probability row {row} sums to {sum}, expected 1")]
    UnnormalizedProbs { row: usize, sum: f64 },

    #[error("training set is empty")]
    EmptyTrainingSet,

    #[error("validation set is empty")]
    EmptyValidationSet,

    #[error("model descriptor: {0}")]
    ModelFormat(String),

    #[error("model descriptor version {found:?} is not supported (expected {expected:?})")]
    ModelVersion { found: String, expected: String },

    #[error("weights blob does not match descriptor: {0}")]
    WeightsMismatch(String),

    #[error("manifest {path}, line {line}: {msg}")]
    Manifest {
        path: String,
        line: usize,
        msg: String,
    },

    #[error("face box {index} has zero area after clamping to the image")]
    EmptyBox { index: usize },

    #[error("cannot read image {path}: {msg}")]
    ImageRead { path: String, msg: String },

    #[error("manifest record {index} has no label")]
    UnlabeledRecord { index: usize },

    #[error("manifest produced no face crops")]
    NoFaces,

    #[error("ensemble needs at least one model")]
    EmptyEnsemble,

    #[error("class {class} has no training images")]
    EmptyClass { class: String },

    #[error("evidence has zero likelihood under every class")]
    ZeroLikelihoodEvidence,

    #[error("vocabulary of {size} descriptors is too large for exact enumeration (max {max})")]
    VocabularyTooLarge { size: usize, max: usize },

    #[error("redirection fusion requires a calibrated cnn_cpt in the scene model")]
    MissingCnnCpt,

    #[error("confusion row {row} is empty and alpha is zero")]
    EmptyConfusionRow { row: usize },

    #[error("scene model file {path}: {msg}")]
    BnFormat { path: String, msg: String },

    #[error("no predictions to evaluate")]
    EmptyEvaluation,

    #[error("search space: {0}")]
    SearchSpace(String),

    #[error("invalid argument: {0}")]
    InvalidArg(String),

    #[error("{path}: {msg}")]
    Io { path: String, msg: String },

    #[error("internal invariant violation: {0}")]
    Internal(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// CLI exit code: 1 for internal invariant violations, 2 for bad input.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Internal(_) => 1,
            _ => 2,
        }
    }

    /// Attach the owning layer index to a layer-level error.
    pub(crate) fn with_layer(mut self, index: usize) -> Self {
        match &mut self {
            Error::ShapeMismatch { layer, .. }
            | Error::LayerConfig { layer, .. }
            | Error::CacheMismatch { layer, .. } => *layer = index,
            _ => {}
        }
        self
    }

    pub(crate) fn io(path: &std::path::Path, err: std::io::Error) -> Self {
        Error::Io {
            path: path.display().to_string(),
            msg: err.to_string(),
        }
    }
}
