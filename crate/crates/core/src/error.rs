use std::path::PathBuf;

use thiserror::Error;

use crate::rubric::{CategoryId, Modality};

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// Malformed input. `line` is 1-based when known.
    #[error("{}{message}", fmt_location(.source_name, *.line))]
    Parse {
        source_name: String,
        line: Option<usize>,
        message: String,
    },

    #[error("duplicate category id {0}")]
    DuplicateCategoryId(CategoryId),

    #[error("unknown category id {0}")]
    UnknownCategoryId(CategoryId),

    #[error("category {0} has no polarity")]
    MissingPolarity(CategoryId),

    #[error("invalid rubric: {0}")]
    InvalidRubric(String),

    #[error("non-binary value {value} for {context}")]
    NonBinaryValue { context: String, value: String },

    #[error("{modality} scores are partially present: category {missing} has no score")]
    IncompleteModality { modality: Modality, missing: CategoryId },

    #[error("explanation marked absent but category {0} is scored 1")]
    ConflictingAbsence(CategoryId),

    #[error("unknown placeholder {{{0}}} in feedback rule {1}")]
    UnknownPlaceholder(String, String),

    #[error("template pack does not cover {modality} level {level}; witness vector {witness}")]
    NonTotalPack {
        modality: Modality,
        level: u8,
        witness: String,
    },

    #[error("invalid template pack: {0}")]
    InvalidPack(String),

    #[error("no feedback rule or default matches the {0} scores")]
    NoMatchingRule(Modality),

    #[error("no unit has two or more ratings")]
    NoPairableUnits,

    #[error("threshold {0} must lie in (0, 1]")]
    InvalidThreshold(f64),

    #[error("sequence lengths differ: {0} vs {1}")]
    LengthMismatch(usize, usize),

    #[error("table has no data rows")]
    EmptyTable,

    #[error("schema mismatch: {0}")]
    SchemaMismatch(String),

    #[error("statistic undefined in {undefined} of {resamples} bootstrap resamples")]
    DegenerateStatistic { undefined: usize, resamples: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dataset contains a single class")]
    SingleClassDataset,

    #[error("minority class has {minority} rows, needs more than k = {k}")]
    TooFewMinoritySamples { minority: usize, k: usize },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("non-finite feature value in row {0}")]
    NonFiniteFeature(usize),

    #[error("corpus has no documents")]
    EmptyCorpus,

    #[error("no token reaches min_df = {0}")]
    EmptyVocabulary(usize),

    #[error("need at least {needed} training examples, got {found}")]
    TooFewExamples { needed: usize, found: usize },

    #[error("label {value} for example {example} is not binary")]
    NonBinaryLabel { example: String, value: u8 },

    #[error("model version mismatch: {0}")]
    VersionMismatch(String),
}

fn fmt_location(source_name: &str, line: Option<usize>) -> String {
    match (source_name.is_empty(), line) {
        (true, None) => String::new(),
        (true, Some(l)) => format!("line {l}: "),
        (false, None) => format!("{source_name}: "),
        (false, Some(l)) => format!("{source_name}:{l}: "),
    }
}

impl Error {
    pub(crate) fn parse(source_name: impl Into<String>, line: Option<usize>, message: impl Into<String>) -> Self {
        Error::Parse {
            source_name: source_name.into(),
            line,
            message: message.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

/// 1-based line of a CSV error, when the reader knows it.
pub(crate) fn csv_line(e: &csv::Error) -> Option<usize> {
    e.position().map(|p| p.line() as usize)
}
