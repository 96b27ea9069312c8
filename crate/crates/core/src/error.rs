use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("line {line}: syntax error: {msg}")]
    Syntax { line: usize, msg: String },
    #[error("line {line}: duplicate rule {rule}")]
    DuplicateRule { line: usize, rule: String },
    #[error("unknown start symbol `{0}`")]
    UnknownStart(String),
    #[error("improper unary cycle: {0}")]
    ImproperUnaryCycle(String),
    #[error("improper left recursion: {0}")]
    ImproperLeftRecursion(String),
    #[error("start symbol `{0}` is non-productive after pruning")]
    StartNonProductive(String),
    #[error("invalid threshold {0}: must lie in (0, 1)")]
    InvalidThreshold(f64),
    #[error("empty treebank")]
    EmptyTreebank,
    #[error("treebank line {line}: {msg}")]
    Treebank { line: usize, msg: String },
    #[error("grammar failed validation: {0}")]
    ValidationFailed(String),
    #[error("grammar is not in binary normal form: {0}")]
    NotBinarized(String),
    #[error("unknown terminal `{0}`")]
    UnknownTerminal(String),
    #[error("unparseable sentence")]
    UnparseableSentence,
    #[error("context unparseable at position {0}")]
    ContextUnparseable(usize),
    #[error("position {position} out of range for sentence of length {len}")]
    PositionOutOfRange { position: usize, len: usize },
    #[error("dead prefix: prefix of length {0} has zero probability")]
    DeadPrefix(usize),
    #[error("no scored tokens")]
    NoScoredTokens,
    #[error("invalid sampler config: {0}")]
    InvalidConfig(String),
    #[error("split exhaustion: {0}")]
    SplitExhaustion(String),
    #[error("vocabulary: {0}")]
    Vocabulary(String),
    #[error("zipf fit: {0}")]
    ZipfFit(String),
    #[error("n-gram correlation: {0}")]
    Ngram(String),
    #[error("{file} line {line}: {msg}")]
    Records { file: String, line: usize, msg: String },
    #[error("duplicate record for sentence {sentence_id} position {position}")]
    DuplicateRecord { sentence_id: usize, position: usize },
    #[error("records disagree at sentence {sentence_id} position {position}: `{left}` vs `{right}`")]
    TokenMismatch { sentence_id: usize, position: usize, left: String, right: String },
    #[error("no tag for sentence {sentence_id} position {position}")]
    MissingTag { sentence_id: usize, position: usize },
    #[error("tag `{0}` has no class in the class map")]
    UnmappedTag(String),
    #[error("language too large: more than {0} strings")]
    LanguageTooLarge(usize),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
