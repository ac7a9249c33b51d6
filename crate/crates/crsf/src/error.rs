use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("homotopy words belong to different groups ({0} vs {1})")]
    GroupMismatch(String, String),

    #[error("edge sequence is not a closed loop")]
    NotClosed,

    #[error("unsupported surface: {0}")]
    UnsupportedSurface(String),

    #[error("closed surfaces of genus >= 2 are not supported")]
    ClosedHigherGenus,

    #[error("invalid graph: {0}")]
    InvalidGraph(String),

    #[error("cannot step from boundary vertex {0}")]
    StepFromBoundary(u32),

    #[error("walk exceeded step cap of {cap} steps (start vertex {start})")]
    StepCapExceeded { cap: u64, start: u32 },

    #[error("state cap exceeded: instance needs at least {needed} states (cap {cap})")]
    StateCapExceeded { needed: usize, cap: usize },

    #[error("enumeration cap exceeded: instance has more than {cap} configurations")]
    EnumerationCapExceeded { cap: usize },

    #[error("rejection sampler exhausted budget of {budget} attempts (acceptance rate so far {rate:.3e})")]
    RejectionBudgetExceeded { budget: usize, rate: f64 },

    #[error("excursion rejection budget {budget} exceeded at vertex {vertex} (return probability {f:.3e})")]
    ExcursionBudget { budget: usize, vertex: u32, f: f64 },

    #[error("vertex {0} is not in the requested domain")]
    VertexOutsideDomain(u32),

    #[error("paths must be disjoint for this quantity")]
    PathsNotDisjoint,

    #[error("incompatible path family: {0}")]
    IncompatiblePaths(String),

    #[error("empty sample set")]
    EmptySamples,

    #[error("no graph vertex inside the {0} ball")]
    EmptyBall(&'static str),

    #[error("region contains no vertices")]
    EmptyRegion,

    #[error("zero denominator in {0}")]
    ZeroDenominator(&'static str),

    #[error("pair never exits the requested ball")]
    NeverExits,

    #[error("skeleton edge {0} is not an edge of the graph")]
    UnknownSkeletonEdge(u32),

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("dual complement left a contractible cycle; the peel construction does not apply to this sample")]
    ContractibleDualResidue,
}

pub type Result<T> = std::result::Result<T, Error>;
