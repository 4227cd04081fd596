use thiserror::Error;

/// Errors shared across the whole pipeline, from root solving up to the
/// finite-difference verification suite.
#[derive(Debug, Clone, Error)]
pub enum Error {
    #[error("leading coefficient is degenerate: |c4| = {magnitude:.3e} below floor {floor:.3e}")]
    DegenerateLeadingCoefficient { magnitude: f64, floor: f64 },

    #[error("polynomial is identically zero")]
    ZeroPolynomial,

    #[error("curve is invalid: {0}")]
    InvalidCurve(String),

    #[error("point ({x}, {y}) does not lie on the curve: |y^2 - P(x)| = {defect:.3e}")]
    PointNotOnCurve {
        x: num_complex::Complex64,
        y: num_complex::Complex64,
        defect: f64,
    },

    #[error("x = {0} is within tolerance of a branch point")]
    AtBranchPoint(num_complex::Complex64),

    #[error("path endpoint {0} violates clearance {1:.3e}")]
    PathBlocked(num_complex::Complex64, f64),

    #[error("analytic continuation stalled: step size underflowed {0:.3e} of path length")]
    ContinuationStalled(f64),

    #[error("quadrature did not converge within {0} panels")]
    QuadratureNotConverged(u64),

    #[error("unsupported root-system family: {0}")]
    UnsupportedFamily(String),

    #[error("Hamiltonian block shapes do not match (family, genus): {0}")]
    ShapeMismatch(String),

    #[error("two fiber roots approached within {gap:.3e} near x = {x}")]
    SheetCollision { x: num_complex::Complex64, gap: f64 },

    #[error("degenerate divisor: {0}")]
    DegenerateDivisor(String),

    #[error("no candidate passed the residual filter (best residual {best:.3e})")]
    NoSolution { best: f64 },

    #[error("Newton did not converge: {0}")]
    NewtonDiverged(String),

    #[error("evaluation point is too close to the discriminant locus: |R'_lambda| = {0:.3e}")]
    NearDiscriminant(f64),

    #[error("no unique lambda continuation lands on the divisor value {target}: {found} matched")]
    SheetMatchFailed {
        target: num_complex::Complex64,
        found: usize,
    },

    #[error("finite differences unstable: defect changed by factor {0:.2} under step halving")]
    FDUnstable(f64),

    #[error("degenerate spectral model: {0}")]
    DegenerateModel(String),

    #[error("numerical failure: {0}")]
    Numerical(String),
}

pub type Result<T> = std::result::Result<T, Error>;
