use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("syntax error: {0}")]
    Syntax(String),
    #[error("relation `{0}` appears more than once")]
    SelfJoin(String),
    #[error("query has head variables: {0}")]
    HeadVar(String),
    #[error("query is disconnected: {0}")]
    Disconnected(String),
    #[error("unknown variable `{0}`")]
    UnknownVariable(String),
    #[error("query has {found} variables, limit is {limit}")]
    TooManyVariables { found: usize, limit: usize },
    #[error("variable `{0}` is not bound by the witness")]
    UnboundVariable(String),
    #[error("invalid ordering: {0}")]
    InvalidPermutation(String),
    #[error("database format error: {0}")]
    Format(String),
    #[error("relation `{relation}` has arity {found}, query expects {expected}")]
    ArityMismatch {
        relation: String,
        expected: usize,
        found: usize,
    },
    #[error("illegal assignment: {0}")]
    IllegalAssignment(String),
    #[error("expansion exceeds {0} terms")]
    ExpansionTooLarge(usize),
    #[error("brute-force space of {0} assignments exceeds the limit")]
    SearchTooLarge(u64),
    #[error("search budget of {0} nodes exhausted before a decision")]
    BudgetExhausted(u64),
    #[error("witness set is empty")]
    EmptyWitnessSet,
    #[error("ordering is not running-prefix")]
    NonRpOrdering,
    #[error("no valid plan in the cut for witness {0}")]
    ExtractionFailure(String),
    #[error("query does not have the {0} shape")]
    ShapeMismatch(&'static str),
    #[error("query has no triad")]
    NoTriad,
    #[error("unknown method `{0}`")]
    UnknownMethod(String),
    #[error("config error: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
