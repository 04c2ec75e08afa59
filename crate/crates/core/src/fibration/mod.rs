//! From the local pseudo-group to a circle fibration.
//!
//! [`gh`] builds the center-of-mass Gromov–Hausdorff chart `h`, [`smooth`] convolves
//! it into the fibration `f` and differentiates it, [`fiber`] traces level sets, and
//! [`average`] averages the metric along fibers and evaluates the base curvature.

pub mod average;
pub mod fiber;
pub mod gh;
pub mod smooth;

pub use average::{
    fiber_average_metric, oneill_base_curvature, vertical_derivative_norm, AveragedMetric,
    CircleFlow, CircleVertical, FiberFlow, OneillReport, UnitVerticalFlow, VerticalField,
};
pub use fiber::{fiber_extract, FiberRecord};
pub use gh::{gh_chart, gh_chart_with_axis, gh_defect, GhChart, GhDefect, HVec};
pub use smooth::{
    smooth_fibration, submersion_diagnostics, transition_fit, FibrationChart, SubmersionSample,
    TransitionFit,
};

/// Cutoff profile: `1` on `[0, 1/3]`, `0` beyond `2/3`, quintic smoothstep between.
pub fn chi(s: f64) -> f64 {
    if s <= 1.0 / 3.0 {
        1.0
    } else if s >= 2.0 / 3.0 {
        0.0
    } else {
        let u = 3.0 * s - 1.0;
        1.0 - u * u * u * (10.0 + u * (-15.0 + 6.0 * u))
    }
}

/// `χ_ε(t) = χ(2t / ε²)`.
pub fn chi_eps(t: f64, eps: f64) -> f64 {
    chi(2.0 * t / (eps * eps))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn chi_profile() {
        assert_eq!(chi(0.0), 1.0);
        assert_eq!(chi(1.0 / 3.0), 1.0);
        assert_eq!(chi(0.7), 0.0);
        assert!((chi(0.5) - 0.5).abs() < 1e-15);
        // nonincreasing, continuous at the junctions
        let mut prev = 1.0;
        for i in 0..=1000 {
            let v = chi(i as f64 / 1000.0);
            assert!(v <= prev + 1e-15);
            prev = v;
        }
        assert!((chi(1.0 / 3.0 + 1e-9) - 1.0).abs() < 1e-12);
        assert!(chi(2.0 / 3.0 - 1e-9) < 1e-12);
    }
}
