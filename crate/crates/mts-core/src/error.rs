use std::fmt;

/// Workspace-wide error type. Variants carry enough context to name the
/// offending node, edge, or budget in diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// Edge list references a child twice.
    DuplicateChild { child: u64 },
    /// Root id appears as a child of some edge.
    RootIsChild { root: u64 },
    /// Edge weight is not strictly positive and finite.
    BadWeight { parent: u64, child: u64, weight: f64 },
    /// Some edge is not reachable from the root (cycle or disconnected part).
    Unreachable { node: u64 },
    /// Tree has no nodes or no leaves.
    EmptyTree,
    /// Node id was not found in the tree.
    UnknownNode { id: u64 },
    /// Id is not a leaf.
    NotALeaf { id: u64 },
    /// Subtree separation fails for every separation factor above one.
    NotHst { node: u64, diameter: f64, weight: f64 },
    /// Power-of-eight requantization exceeded the allowed distortion.
    QuantizeDistortion { a: u64, b: u64, ratio: f64 },
    /// Leaf depths differ where uniform depth is required.
    NonuniformDepth { shallow: u64, deep: u64 },
    /// Mass vector has the wrong arity for the tree.
    MassArity { expected: usize, got: usize },
    /// Mass vector does not sum to one within tolerance.
    MassSum { sum: f64 },
    /// Mass entry is below the numerical floor.
    NegativeMass { leaf: u64, value: f64 },
    /// Instance size exceeds the desk-scale dynamic-programming budget.
    OracleBudget { points: usize, steps: usize },
    /// Step size underflowed during integration.
    StepUnderflow { t: f64, h: f64 },
    /// A solver reached a state it cannot certify.
    Numeric { context: String },
    /// Parameter vector fails a structural requirement.
    BadParams { context: String },
    /// Instance or tree file failed to parse.
    Parse { context: String },
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::DuplicateChild { child } => {
                write!(f, "node {child} appears as a child of two edges")
            }
            Error::RootIsChild { root } => write!(f, "root {root} appears as a child"),
            Error::BadWeight { parent, child, weight } => {
                write!(f, "edge {parent}->{child} has non-positive weight {weight}")
            }
            Error::Unreachable { node } => {
                write!(f, "node {node} is not reachable from the root")
            }
            Error::EmptyTree => write!(f, "tree has no leaves"),
            Error::UnknownNode { id } => write!(f, "unknown node id {id}"),
            Error::NotALeaf { id } => write!(f, "node {id} is not a leaf"),
            Error::NotHst { node, diameter, weight } => write!(
                f,
                "subtree at {node} has diameter {diameter} on an edge of weight {weight}; \
                 no separation above one holds"
            ),
            Error::QuantizeDistortion { a, b, ratio } => write!(
                f,
                "requantized distance between {a} and {b} is {ratio} times the original, \
                 outside [1, 8]"
            ),
            Error::NonuniformDepth { shallow, deep } => write!(
                f,
                "leaf {shallow} is shallower than leaf {deep}; pad the tree first"
            ),
            Error::MassArity { expected, got } => {
                write!(f, "expected {expected} leaf masses, got {got}")
            }
            Error::MassSum { sum } => write!(f, "leaf masses sum to {sum}, not 1"),
            Error::NegativeMass { leaf, value } => {
                write!(f, "mass at leaf {leaf} is {value}, below the floor")
            }
            Error::OracleBudget { points, steps } => write!(
                f,
                "offline oracle refused: {points} points x {steps} steps exceeds the desk budget"
            ),
            Error::StepUnderflow { t, h } => {
                write!(f, "integration step underflowed at t={t} (h={h})")
            }
            Error::Numeric { context } => write!(f, "numeric failure: {context}"),
            Error::BadParams { context } => write!(f, "bad parameters: {context}"),
            Error::Parse { context } => write!(f, "parse error: {context}"),
        }
    }
}

impl std::error::Error for Error {}

pub type Result<T> = std::result::Result<T, Error>;
