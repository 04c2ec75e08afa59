use super::{fill, new_report, row_seed, Row, Setup};
use crate::config::{FdVolumeParams, ModelKind, PseudoGroupParams, TranslationDefectParams};
use crate::error::LabError;
use crate::report::{Cell, Report, Table, Verdict};
use collapse_core::asymptotics::{ball_volume, VolumeMethod};
use collapse_core::exec::{block_rng, monte_carlo, Executor};
use collapse_core::geodesics::{holonomy_defect, LoopOptions};
use collapse_core::linalg::orthonormal_frame;
use collapse_core::pseudo_group::{build_pseudo_group, DomainMembership, LiftedBall};
use collapse_core::zoo::loop_length;
use collapse_core::{GeomError, Model, V4};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use std::f64::consts::PI;

/// Uniform point of the `g_x`-ball of radius `radius` in `T_x M`.
pub(crate) fn sample_tangent_ball(
    rng: &mut ChaCha8Rng,
    frame: &collapse_core::M4,
    d: usize,
    radius: f64,
) -> V4 {
    loop {
        let mut z = V4::zeros();
        for i in 0..d {
            z[i] = 2.0 * rng.random::<f64>() - 1.0;
        }
        if z.norm_squared() <= 1.0 {
            return frame * z * radius;
        }
    }
}

fn unit_ball_volume(d: usize) -> f64 {
    if d == 3 {
        4.0 / 3.0 * PI
    } else {
        0.5 * PI * PI
    }
}

/// Tables: `balls` (`ball, r, rho, elements, incomplete, lambda`) and `elements`
/// (`ball, k, length, v0..v3, holonomy_defect`); optionally `fd_volume` and
/// `translation_defect`. The element dump with holonomy matrices goes to `extra`.
pub fn pseudo_group<E: Executor>(
    s: &Setup<'_, E>,
    p: &PseudoGroupParams,
) -> Result<Report, LabError> {
    let mut report = new_report("pseudo-group", s, p);
    let mut balls = Table::new(
        "balls",
        &["ball", "r", "rho", "elements", "incomplete", "lambda"],
    );
    let mut elements = Table::new(
        "elements",
        &[
            "ball",
            "k",
            "length",
            "v0",
            "v1",
            "v2",
            "v3",
            "holonomy_defect",
        ],
    );
    let mut dump = Vec::new();
    let flat_angle = if s.spec.kind == ModelKind::FlatScrew {
        Some(s.spec.angle("model")?)
    } else {
        None
    };
    let (mut mismatched, mut worst_len) = (0usize, 0.0f64);
    for (bi, b) in p.balls.iter().enumerate() {
        let x = s.model.point_at_radius(b.r);
        let key = vec![bi.into(), b.r.into(), b.rho.into()];
        let lb = match build_pseudo_group(s.model, &x, b.rho, &LoopOptions::default()) {
            Ok(lb) => lb,
            Err(e) => {
                balls.push_error(key, e.to_string());
                continue;
            }
        };
        balls.push(
            [
                key,
                vec![
                    lb.elements.len().into(),
                    lb.incomplete.into(),
                    lb.lambda.into(),
                ],
            ]
            .concat(),
        );
        let mut items = Vec::new();
        for e in &lb.elements {
            let hd = holonomy_defect(s.model, &x, &e.holonomy).unwrap_or(f64::NAN);
            elements.push(vec![
                bi.into(),
                e.k.into(),
                e.length.into(),
                e.v[0].into(),
                e.v[1].into(),
                e.v[2].into(),
                e.v[3].into(),
                hd.into(),
            ]);
            let h: Vec<Vec<f64>> = (0..4)
                .map(|i| (0..4).map(|j| e.holonomy[(i, j)]).collect())
                .collect();
            items.push(serde_json::json!({"k": e.k, "length": e.length, "v": [e.v[0], e.v[1], e.v[2], e.v[3]], "holonomy": h}));
        }
        dump.push(serde_json::json!({"ball": bi, "x": [x[0], x[1], x[2], x[3]], "rho": b.rho, "elements": items}));
        if let Some(a) = &flat_angle {
            // closed form: τ^k belongs iff l_k < ρ
            let bound = (b.rho.ceil() as i64) + 1;
            let mut want: Vec<i64> = (-bound..=bound)
                .filter(|&k| k == 0 || loop_length(a, k, b.r) < b.rho)
                .collect();
            let mut got: Vec<i64> = lb.elements.iter().map(|e| e.k).collect();
            want.sort_unstable();
            got.sort_unstable();
            if want != got {
                mismatched += 1;
            }
            for e in &lb.elements {
                let l = loop_length(a, e.k, b.r);
                if e.k != 0 {
                    worst_len = worst_len.max((e.length - l).abs() / l);
                }
            }
        }
    }
    if flat_angle.is_some() {
        report.verdicts.push(Verdict::le(
            "element_set_mismatches",
            Some(mismatched as f64),
            0.0,
            "closed form {k : l_k < rho}",
        ));
        report.verdicts.push(Verdict::le(
            "length_rel_error",
            Some(worst_len),
            p.length_rel_tol,
            "params.length_rel_tol",
        ));
    }
    report.verdicts.push(Verdict::le(
        "failed_balls",
        Some(balls.failed_rows() as f64),
        0.0,
        "every ball must build",
    ));
    report.tables.push(balls);
    report.tables.push(elements);
    report.extra = serde_json::json!({ "pseudo_groups": dump });

    if let Some(f) = &p.fd_volume {
        fd_volume(s, f, &mut report);
    }
    if let Some(t) = &p.translation_defect {
        translation_defect(s, t, &mut report);
    }
    Ok(report)
}

/// Monte-Carlo volume of the fundamental domain `F(x, ρ, 2ρ)` against `vol B(x, ρ)`.
/// Columns: `r, rho, fd_volume, fd_std_error, ball_volume, ball_std_error, rel_diff`.
pub fn fd_volume<E: Executor>(s: &Setup<'_, E>, f: &FdVolumeParams, report: &mut Report) {
    let mut t = Table::new(
        "fd_volume",
        &[
            "r",
            "rho",
            "fd_volume",
            "fd_std_error",
            "ball_volume",
            "ball_std_error",
            "rel_diff",
        ],
    );
    let key = vec![f.r.into(), f.rho.into()];
    let res = fd_volume_row(s, f);
    let rel = res.as_ref().ok().map(|v| v[4].as_f64().unwrap_or(f64::NAN));
    fill(&mut t, vec![(key, res)]);
    report.verdicts.push(Verdict::le(
        "fd_volume_rel_diff",
        rel,
        f.rel_tol,
        "params.fd_volume.rel_tol",
    ));
    report.tables.push(t);
}

fn fd_volume_row<E: Executor>(s: &Setup<'_, E>, f: &FdVolumeParams) -> Result<Vec<Cell>, LabError> {
    let m = s.model;
    let d = m.dim();
    let x = m.point_at_radius(f.r);
    // every translate that can beat |w| < ρ has |τ(0)| < 2ρ
    let lb = build_pseudo_group(m, &x, 2.0 * f.rho, &LoopOptions::default())?;
    let frame =
        orthonormal_frame(&lb.gx).ok_or(GeomError::InvalidInput("metric not positive definite"))?;
    let vol_ball = unit_ball_volume(d) * f.rho.powi(d as i32);
    let seed = row_seed(s.seed, 0);
    let sums = monte_carlo(s.exec, seed, f.samples, |rng| {
        let w = sample_tangent_ball(rng, &frame, d, f.rho);
        Ok(match lb.fundamental_domain(None, &w)? {
            DomainMembership::Inside => vol_ball,
            _ => 0.0,
        })
    })?;
    let ball = ball_volume(
        m,
        &x,
        f.rho,
        VolumeMethod::MonteCarlo,
        f.samples,
        row_seed(s.seed, 1),
        s.exec,
    )?;
    let rel = (sums.mean() - ball.value).abs() / ball.value;
    Ok(vec![
        sums.mean().into(),
        sums.std_error().into(),
        ball.value.into(),
        ball.std_error.into(),
        rel.into(),
    ])
}

/// `translation_defect` against `Λ²|v||w|(|v|+|w|)` at sampled `(τ, w)`, `w ∈ B̂(0, ρ − |v|)`.
/// Columns: `sample, k, v_norm, w_norm, defect, bound`.
pub fn translation_defect<E: Executor>(
    s: &Setup<'_, E>,
    t: &TranslationDefectParams,
    report: &mut Report,
) {
    let mut table = Table::new(
        "translation_defect",
        &["sample", "k", "v_norm", "w_norm", "defect", "bound"],
    );
    let res = (|| -> Result<(f64, Vec<Row>), LabError> {
        let m = s.model;
        let lb = build_pseudo_group(m, &m.point_at_radius(t.r), t.rho, &LoopOptions::default())?;
        let lam2 = lb.lambda * lb.lambda;
        let frame = orthonormal_frame(&lb.gx)
            .ok_or(GeomError::InvalidInput("metric not positive definite"))?;
        let nontrivial: Vec<usize> = (0..lb.elements.len())
            .filter(|&i| lb.elements[i].k != 0)
            .collect();
        if nontrivial.is_empty() {
            return Err(GeomError::NoLifts.into());
        }
        let rows = s.exec.map(t.samples, |j| {
            (
                vec![j.into()],
                defect_row(&lb, &frame, &nontrivial, lam2, row_seed(s.seed, j)),
            )
        });
        Ok((lam2, rows))
    })();
    let lam2 = match res {
        Ok((lam2, rows)) => {
            fill(&mut table, rows);
            Some(lam2)
        }
        Err(e) => {
            table.push_error(Vec::new(), e.to_string());
            None
        }
    };
    let violations = table
        .rows
        .iter()
        .filter(|r| match (r[4].as_f64(), r[5].as_f64()) {
            (Some(d), Some(b)) => d > b,
            _ => false,
        })
        .count();
    let bound_src = "Lambda^2 |v||w|(|v|+|w|), Lambda^2 = max sampled |Rm|";
    let v = Verdict::le(
        "translation_defect_violations",
        lam2.map(|_| violations as f64),
        0.0,
        bound_src,
    );
    report
        .verdicts
        .push(v.with_note(lam2.map_or(String::new(), |l| format!("Lambda^2 = {l:.6e}"))));
    report.verdicts.push(Verdict::le(
        "translation_defect_failed_rows",
        Some(table.failed_rows() as f64),
        0.0,
        "every row must compute",
    ));
    report.tables.push(table);
}

fn defect_row<M: Model + ?Sized>(
    lb: &LiftedBall<'_, M>,
    frame: &collapse_core::M4,
    nontrivial: &[usize],
    lam2: f64,
    seed: u64,
) -> Result<Vec<Cell>, LabError> {
    let mut rng = block_rng(seed, 0);
    let e = &lb.elements[nontrivial[rng.random_range(0..nontrivial.len())]];
    let vn = lb.norm(&e.v);
    let w = sample_tangent_ball(&mut rng, frame, lb.model.dim(), lb.rho - vn);
    let wn = lb.norm(&w);
    let defect = lb.translation_defect(e, &w)?;
    Ok(vec![
        e.k.into(),
        vn.into(),
        wn.into(),
        defect.into(),
        (lam2 * vn * wn * (vn + wn)).into(),
    ])
}
