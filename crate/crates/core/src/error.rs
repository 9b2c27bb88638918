use thiserror::Error;

/// Every failure the engine can report.
///
/// Structural problems of a wire graph are not errors: they are returned as
/// data by [`crate::circuit::validate`].
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("label `{0}` appears more than once")]
    LabelCollision(String),
    #[error("unknown label `{0}`")]
    UnknownLabel(String),
    #[error("basis for `{label}` has dimension {got}, expected {expected}")]
    BasisDimensionMismatch { label: String, expected: usize, got: usize },
    #[error("new factor order is not a permutation of the existing labels")]
    NotAPermutation,
    #[error("matrix is not Hermitian (deviation {deviation:e})")]
    NotHermitian { deviation: f64 },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimMismatch { expected: usize, got: usize },
    #[error("eigenvalue solver did not converge")]
    ConvergenceFailure,

    #[error("type mismatch on `{label}`: `{left}` vs `{right}`")]
    TypeMismatch { label: String, left: String, right: String },
    #[error("`{0}` is not an output/input pair")]
    PortDirection(String),
    #[error("wiring would create a closed loop")]
    CycleCreated,
    #[error("circuit has open ports: {0}")]
    OpenPorts(String),
    #[error("invalid graph: {0}")]
    InvalidGraph(String),
    #[error("graph contains a closed loop")]
    CyclicGraph,
    #[error("unknown wire {0}")]
    UnknownWire(String),
    #[error("node `{0}` has no operator payload")]
    MissingPayload(String),
    #[error("duplicate node `{0}`")]
    DuplicateNode(String),

    #[error("shared label `{0}` does not match between the two Choi forms")]
    LabelMismatch(String),
    #[error("map is not completely positive (Choi eigenvalue {0:e})")]
    NotCP(f64),
    #[error("Kraus operator {index} has shape {rows}x{cols}, expected {expected_rows}x{expected_cols}")]
    ShapeMismatch { index: usize, rows: usize, cols: usize, expected_rows: usize, expected_cols: usize },

    #[error("hopping metric is singular (condition number {0:e})")]
    SingularMetric(f64),
    #[error("fiducial transform is singular")]
    SingularTransform,
    #[error("leg {0} does not exist")]
    NoSuchLeg(usize),
    #[error("legs {0} and {1} cannot be linked: colours must be black against white")]
    ColorMismatch(usize, usize),
    #[error("imaginary residue {0:e} in a quantity that must be real")]
    ImaginaryResidue(f64),

    #[error("fragments do not share a port structure")]
    StructureMismatch,
    #[error("denominator operator is zero")]
    ZeroDenominator,

    #[error("vector is not normalised (norm² = {0})")]
    NotNormalized(f64),
    #[error("basis vectors are not orthonormal")]
    NotOrthonormal,
    #[error("assembly failed: {0}")]
    AssemblyError(String),
    #[error("target operators do not form a complete set")]
    NotComplete,
    #[error("isometry columns are not orthonormal (deviation {0:e})")]
    OrthonormalityFailure(f64),

    #[error("state set is empty")]
    EmptySet,
    #[error("range {0} is too small (need at least 4)")]
    RangeTooSmall(u64),
    #[error("range {0} exceeds the search cap")]
    RangeTooLarge(u64),
    #[error("K(N) overflowed for N = {0}")]
    Overflow(u64),

    #[error("{line}:{col}: {msg}")]
    Syntax { line: usize, col: usize, msg: String },
    #[error("{line}: unresolved name `{name}`")]
    UnresolvedName { line: usize, name: String },
    #[error("{line}: {msg}")]
    Type { line: usize, msg: String },
    #[error("I/O failure on {path}: {msg}")]
    Io { path: String, msg: String },
    #[error("{line}: {msg}")]
    Format { line: usize, msg: String },
    #[error("entry `{name}` is not Hermitian at ({row}, {col})")]
    HermiticityViolation { name: String, row: usize, col: usize },
}

pub type Result<T> = std::result::Result<T, Error>;
