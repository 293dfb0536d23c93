use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Tags the error with the pipeline step it came from.
    pub fn at(self, step: &'static str) -> Self {
        Error::Step {
            step,
            source: Box::new(self),
        }
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error(
        "unknown map `{0}` (expected pure_twist, perturbed_twist, drift_twist or custom_sampled)"
    )]
    UnknownMap(String),

    #[error("missing parameter `{0}`")]
    MissingParameter(&'static str),

    #[error("parameter `{name}` = {value} is out of range: {reason}")]
    ParameterOutOfRange {
        name: &'static str,
        value: f64,
        reason: &'static str,
    },

    #[error("sampled map data rejected: {0}")]
    InvalidSamples(String),

    #[error("map `{name}` violates {invariant} (worst residual {residual:e})")]
    InvariantViolated {
        name: String,
        invariant: &'static str,
        residual: f64,
    },

    #[error("curve rejected: {0}")]
    InvalidCurve(String),

    #[error(
        "curve resolution too coarse: adjacent samples {step:.3e} apart exceed tolerance {tol:.3e}"
    )]
    ResolutionTooCoarse { step: f64, tol: f64 },

    #[error("degenerate box cover {nx}x{ny} (need nx >= 4, ny >= 2 and a non-empty y-range)")]
    DegenerateCover { nx: usize, ny: usize },

    #[error("image of box {node} spans {columns} columns, more than twice the {nx} columns of the cover; refine the cover or reduce padding")]
    ImageTooWide {
        node: usize,
        columns: usize,
        nx: usize,
    },

    #[error("invalid graph options: {0}")]
    InvalidGraphOptions(String),

    #[error("boundary row {row} has no recurrent boxes")]
    BoundaryNotRecurrent { row: usize },

    #[error("boundaries are linked; no separating curve exists")]
    BoundariesLinked,

    #[error("boundaries are not linked")]
    NotLinked,

    #[error("no separating band found at this resolution (inconclusive, refine): {0}")]
    NoSeparatingBand(String),

    #[error("no path from node {from} to node {to}")]
    Unreachable { from: usize, to: usize },

    #[error("winding window exhausted at W = {window}; no zero-winding boundary cycle found")]
    WindingWindowExhausted { window: i64 },

    #[error("disk chain verification failed: {0}")]
    DiskChainInvalid(String),

    #[error("{step}: {source}")]
    Step {
        step: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("edge list parse error at line {line}: {reason}")]
    EdgeListParse { line: usize, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
