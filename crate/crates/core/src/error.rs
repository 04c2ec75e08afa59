use crate::V4;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum GeomError {
    #[error("point {0:?} is singular or excluded for this model")]
    SingularPoint(V4),
    #[error("point {0:?} lies outside the chart domain")]
    OutsideChart(V4),
    #[error("integration left the chart domain at s = {s} (point {exit:?})")]
    LeftChartDomain { s: f64, exit: V4 },
    #[error("adaptive step size underflow at s = {s}")]
    StepSizeUnderflow { s: f64 },
    #[error("step budget exhausted at s = {s}")]
    TooManySteps { s: f64 },
    #[error("no convergence, best residual {best_residual:e}")]
    NoConvergence { best_residual: f64 },
    #[error("target is on the cut locus")]
    AtCutLocus,
    #[error("scale too large: Lambda * rho = {lambda_rho}")]
    ScaleTooLarge { lambda_rho: f64 },
    #[error("deck window too small: minimum attained at |k| = {k}")]
    WindowTooSmall { k: i64 },
    #[error("k_max = {k_max} is below the certified bound {needed}")]
    KMaxTooSmall { k_max: u64, needed: f64 },
    #[error("no lifts of the point in the lifted ball")]
    NoLifts,
    #[error("quadrature error estimate {rel_err:e} exceeds tolerance")]
    QuadratureFailure { rel_err: f64 },
    #[error("fiber did not close after length {traced}")]
    OpenFiber { traced: f64 },
    #[error("not a regular value: smallest singular value {sigma_min:e}")]
    NonRegularValue { sigma_min: f64 },
    #[error("fit is ill conditioned: {0}")]
    IllConditionedFit(&'static str),
    #[error("fit window holds {n} points, at least 5 are needed")]
    EmptyWindow { n: usize },
    #[error("non-positive value at t = {t}")]
    NonPositiveValue { t: f64 },
    #[error("invalid input: {0}")]
    InvalidInput(&'static str),
}
