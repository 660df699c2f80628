use thiserror::Error;

/// Errors raised by the map constructors, solvers and verifiers.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("endpoint difference {value} is not an integer degree")]
    NonIntegerDegree { value: f64 },
    #[error("degree {degree} has absolute value at most one")]
    DegreeTooSmall { degree: i64 },
    #[error("need at least 16 grid cells, got {cells}")]
    TooFewSamples { cells: usize },
    #[error("sample {index} is not finite")]
    NonFiniteSample { index: usize },
    #[error("map is not a covering (samples are not strictly monotone)")]
    NotACovering,
    #[error("degree mismatch: {left} vs {right}")]
    DegreeMismatch { left: i64, right: i64 },
    #[error("no convergence after {iterations} iterations (last change {change:e})")]
    MaxIterExceeded { iterations: usize, change: f64 },
    #[error("no self-conjugacy relates the two fields (best distance {best:e})")]
    NoRelator { best: f64 },
    #[error("interval [{a}, {b}] is not invariant under the {period}-th iterate")]
    NotInvariant { a: f64, b: f64, period: usize },
    #[error("inserted mass {total} leaves no room on the circle")]
    Overfull { total: f64 },
    #[error("grand orbits collide near angle {angle}")]
    Clash { angle: f64 },
    #[error("degree {degree} is not supported by this construction")]
    UnsupportedDegree { degree: i64 },
    #[error("fiber map is not strictly monotone over x = {x}")]
    FiberNotMonotone { x: f64 },
    #[error("base map sends x = {x} outside (0,1)")]
    BaseEscapes { x: f64 },
    #[error("point x = {x} is outside the map domain")]
    OutOfDomain { x: f64 },
    #[error("base map cannot be inverted at {target}")]
    BaseNotInvertible { target: f64 },
    #[error("orbit leaves (0,1) at step {step}")]
    OrbitEscapes { step: usize },
    #[error("band is not invariant: x = {x} maps to {image}")]
    BandNotInvariant { x: f64, image: f64 },
    #[error("fiber displacement |y1 - d y0| grows without bound")]
    DisplacementDiverges,
    #[error("point ({x}, {y}) is not fixed (defect {defect:e})")]
    NotFixed { x: f64, y: f64, defect: f64 },
    #[error("image of the connector is not a graph over x")]
    ImageNotGraph,
    #[error("base coordinate does not increase along the orbit of the arc")]
    NotMonotoneBase,
    #[error("connector meets its image (min distance {distance:e})")]
    NotFree { distance: f64 },
    #[error("fiber slope {slope} does not exceed one")]
    NoExpansion { slope: f64 },
    #[error("preimage branches collide over x = {x}")]
    BranchCollision { x: f64 },
    #[error("path lift is ambiguous for n = {n}, j = {j}")]
    BranchAmbiguity { n: u32, j: u64 },
    #[error("lift endpoint x = {x} lies outside the compact band")]
    EndpointOutsideK { x: f64 },
    #[error("invalid parameters: {0}")]
    BadParams(String),
}

pub type Result<T> = std::result::Result<T, Error>;
