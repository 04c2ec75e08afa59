//! Level sets of the fibration, traced by predictor–corrector continuation.

use super::gh::HVec;
use super::smooth::{kernel_direction, FibrationChart};
use crate::{GeomError, Model, Result, M4, V4};
use alloc::vec::Vec;
use nalgebra::DMatrix;
use num_traits::Float;

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct FiberRecord {
    pub b: [f64; 3],
    /// Curve samples in frame coordinates of `T_x M`, from the seed to its image under
    /// the fundamental element.
    pub points: Vec<[f64; 4]>,
    pub length: f64,
    /// Distance between the end of the trace and the image of its start.
    pub closure_gap: f64,
    /// `max |f̂ − b|` over the samples.
    pub level_error: f64,
    /// Largest turning rate of the unit tangent, a bound on the second fundamental form.
    pub curvature_max: f64,
}

impl FiberRecord {
    /// The samples as points of the model.
    pub fn chart_points<M: Model + ?Sized>(
        &self,
        fc: &FibrationChart<'_, '_, M>,
    ) -> Result<Vec<V4>> {
        self.points
            .iter()
            .map(|p| fc.gh.ball.exp(&fc.gh.from_frame(&V4::from_column_slice(p))))
            .collect()
    }
}

fn pinv_step(jac: &DMatrix<f64>, h: usize, r: &HVec) -> Result<V4> {
    let a = jac.rows(0, h).into_owned();
    let rhs = DMatrix::from_fn(h, 1, |i, _| r[i]);
    let sol = a
        .svd(true, true)
        .solve(&rhs, 1e-12)
        .map_err(|_| GeomError::IllConditionedFit("level-set correction"))?;
    let mut dz = V4::zeros();
    for i in 0..sol.nrows() {
        dz[i] = sol[(i, 0)];
    }
    Ok(dz)
}

fn gnorm(g: &M4, v: &V4) -> f64 {
    Float::sqrt((v.transpose() * g * v)[(0, 0)].max(0.0))
}

/// Trace `f̂ = b` from the seed with frame coordinates `(0, b)` until the curve reaches
/// the image of its starting point under the fundamental element.
///
/// Steps are `1e-2` of the fundamental-loop length; each is corrected by Newton
/// projection onto the level set with the Jacobian of the step's base point.
pub fn fiber_extract<M: Model + ?Sized>(
    fc: &FibrationChart<'_, '_, M>,
    b: &HVec,
) -> Result<FiberRecord> {
    let d = fc.dim();
    let hdim = d - 1;
    let gh = fc.gh;
    let expected = gh.ball.norm(&gh.vx);
    let step = 1e-2 * expected;
    let tol = 1e-10 * fc.eps.max(1.0);
    let hj = 1e-3 * fc.eps;
    let correct = |z: &mut V4, jac: &DMatrix<f64>| -> Result<f64> {
        let mut res = fc.f_hat(z)? - b;
        for _ in 0..8 {
            if res.norm() <= tol {
                break;
            }
            *z -= pinv_step(jac, hdim, &res)?;
            res = fc.f_hat(z)? - b;
        }
        Ok(res.norm())
    };
    let mut z = V4::zeros();
    for i in 1..d {
        z[i] = b[i - 1];
    }
    let jac0 = fc.jacobian(&z, hj)?;
    let mut level_error: f64 = correct(&mut z, &jac0)?;
    let e = gh.ball.fundamental().ok_or(GeomError::NoLifts)?;
    let target = gh.to_frame(&gh.ball.tau_apply(e, &gh.from_frame(&z))?);
    let mut points = alloc::vec![[z[0], z[1], z[2], z[3]]];
    let (mut length, mut curvature_max) = (0.0, 0.0f64);
    let mut prev_t: Option<V4> = None;
    loop {
        let jac = fc.jacobian(&z, hj)?;
        let (g, _) = fc.metric_hat(&z)?;
        let mut t = kernel_direction(&jac, &g, d)?;
        if let Some(p) = prev_t {
            if (t.transpose() * g * p)[(0, 0)] < 0.0 {
                t = -t;
            }
            curvature_max = curvature_max.max(gnorm(&g, &(t - p)) / step);
        }
        prev_t = Some(t);
        let ahead = ((target - z).transpose() * g * t)[(0, 0)];
        let last = ahead <= step;
        let mut zn = z + t * if last { ahead } else { step };
        level_error = level_error.max(correct(&mut zn, &jac)?);
        let (gm, _) = fc.metric_hat(&(0.5 * (z + zn)))?;
        length += gnorm(&gm, &(zn - z));
        z = zn;
        points.push([z[0], z[1], z[2], z[3]]);
        if last {
            let (gt, _) = fc.metric_hat(&target)?;
            let closure_gap = gnorm(&gt, &(target - z));
            return Ok(FiberRecord {
                b: [b[0], b[1], b[2]],
                points,
                length,
                closure_gap,
                level_error,
                curvature_max,
            });
        }
        if length > 2.0 * expected {
            return Err(GeomError::OpenFiber { traced: length });
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fibration::{gh_chart, smooth_fibration};
    use crate::geodesics::LoopOptions;
    use crate::models::FlatScrew;
    use crate::zoo::Angle;

    #[test]
    fn flat_fiber_is_the_closed_geodesic() {
        let m = FlatScrew::new(Angle::rational(2, 5).unwrap());
        let x = m.point_at_radius(80.0);
        let gh = gh_chart(&m, &x, 0.3, &LoopOptions::default()).unwrap();
        let fc = smooth_fibration(&gh, 2.4).unwrap();
        let f = fiber_extract(&fc, &HVec::new(0.5, -0.3, 0.0)).unwrap();
        assert!((f.length - 5.0).abs() < 1e-9, "{f:?}");
        assert!(f.closure_gap < 1e-9 && f.level_error < 1e-9);
        assert!(f.curvature_max < 1e-6);
    }
}
