use super::{fill, fit_or_verdict, new_report, row_seed, Row, Setup};
use crate::config::{AveragingParams, FibrationParams, GhChartParams, ModelKind};
use crate::error::LabError;
use crate::report::{Cell, Report, Table, Verdict};
use collapse_core::exec::Executor;
use collapse_core::fibration::{
    fiber_average_metric, fiber_extract, gh_chart as core_gh_chart, gh_defect, smooth_fibration,
    submersion_diagnostics, CircleFlow, HVec,
};
use collapse_core::geodesics::LoopOptions;
use collapse_core::V4;

/// Columns: `r, scale, elements, max_defect, mean_defect, target_radius`.
pub fn gh_chart<E: Executor>(s: &Setup<'_, E>, p: &GhChartParams) -> Result<Report, LabError> {
    let mut report = new_report("gh-chart", s, p);
    let mut table = Table::new(
        "gh_defect",
        &[
            "r",
            "scale",
            "elements",
            "max_defect",
            "mean_defect",
            "target_radius",
        ],
    );
    let rows = s.exec.map(p.radii.len(), |i| {
        let r = p.radii[i];
        let res = (|| -> Result<Vec<Cell>, LabError> {
            let x = s.model.point_at_radius(r);
            let chart = core_gh_chart(s.model, &x, p.kappa, &LoopOptions::default())?;
            let d = gh_defect(&chart, p.pairs, row_seed(s.seed, i))?;
            Ok(vec![
                chart.scale.into(),
                chart.ball.elements.len().into(),
                d.max.into(),
                d.mean.into(),
                d.target_radius.into(),
            ])
        })();
        (vec![r.into()], res)
    });
    fill(&mut table, rows);
    if let Some(f) = fit_or_verdict(&mut report, "max_defect", &table.pairs("r", "max_defect")) {
        let [lo, hi] = p.slope_range;
        report.verdicts.push(Verdict::within(
            "slope",
            Some(f.exponent),
            lo,
            hi,
            "params.slope_range",
        ));
    }
    report.verdicts.push(Verdict::le(
        "failed_rows",
        Some(table.failed_rows() as f64),
        0.0,
        "every row must compute",
    ));
    report.tables.push(table);
    Ok(report)
}

/// Fiber sample points `((i/n − ½)|v_x|, 0, 0, 0)` in frame coordinates.
pub fn fiber_sample_points(vx_norm: f64, n: usize) -> Vec<V4> {
    (0..n)
        .map(|i| V4::new((i as f64 / n as f64 - 0.5) * vx_norm, 0.0, 0.0, 0.0))
        .collect()
}

/// Tables: `submersion` (`r, sample, z0, sigma_max, sigma_min, log_distortion,
/// hessian_norm`), `fibration` (`r, eps, max_log_distortion, max_hessian`), `fibers`
/// (`r, b0, b1, b2, length, expected, rel_error, closure_gap, level_error`) and, with
/// `averaging`, `averaging` (`r, deviation`).
pub fn fibration<E: Executor>(s: &Setup<'_, E>, p: &FibrationParams) -> Result<Report, LabError> {
    let mut report = new_report("fibration", s, p);
    let mut sub = Table::new(
        "submersion",
        &[
            "r",
            "sample",
            "z0",
            "sigma_max",
            "sigma_min",
            "log_distortion",
            "hessian_norm",
        ],
    );
    let mut summary = Table::new(
        "fibration",
        &["r", "eps", "max_log_distortion", "max_hessian"],
    );
    let mut fibers = Table::new(
        "fibers",
        &[
            "r",
            "b0",
            "b1",
            "b2",
            "length",
            "expected",
            "rel_error",
            "closure_gap",
            "level_error",
        ],
    );

    struct RadiusOut {
        samples: Vec<Row>,
        summary: Result<Vec<Cell>, LabError>,
        fibers: Vec<Row>,
    }
    let per_radius = s.exec.map(p.radii.len(), |i| {
        let r = p.radii[i];
        let mut out = RadiusOut {
            samples: Vec::new(),
            summary: Err(LabError::Geom(collapse_core::GeomError::NoLifts)),
            fibers: Vec::new(),
        };
        let x = s.model.point_at_radius(r);
        let chart = match core_gh_chart(s.model, &x, p.kappa, &LoopOptions::default()) {
            Ok(c) => c,
            Err(e) => {
                out.summary = Err(e.into());
                return out;
            }
        };
        let eps = p.eps_factor * chart.scale;
        let fc = match smooth_fibration(&chart, eps) {
            Ok(f) => f,
            Err(e) => {
                out.summary = Err(e.into());
                return out;
            }
        };
        let pts = fiber_sample_points(chart.ball.norm(&chart.vx), p.fiber_samples);
        let (mut dmax, mut hmax, mut ok) = (0.0f64, 0.0f64, true);
        for (j, z) in pts.iter().enumerate() {
            let key = vec![r.into(), j.into(), z[0].into()];
            match submersion_diagnostics(&fc, std::slice::from_ref(z)) {
                Ok(v) => {
                    let smp = &v[0];
                    let h = chart.dim() - 1;
                    dmax = dmax.max(smp.log_distortion);
                    hmax = hmax.max(smp.hessian_norm);
                    let cells = vec![
                        smp.singular_values[0].into(),
                        smp.singular_values[h - 1].into(),
                        smp.log_distortion.into(),
                        smp.hessian_norm.into(),
                    ];
                    out.samples.push((key, Ok(cells)));
                }
                Err(e) => {
                    ok = false;
                    out.samples.push((key, Err(e.into())));
                }
            }
        }
        out.summary = if ok {
            Ok(vec![eps.into(), dmax.into(), hmax.into()])
        } else {
            Err(LabError::config("fibration", "a submersion sample failed"))
        };
        for b in &p.levels {
            let key = vec![r.into(), b[0].into(), b[1].into(), b[2].into()];
            let res = (|| -> Result<Vec<Cell>, LabError> {
                let f = fiber_extract(&fc, &HVec::new(b[0], b[1], b[2]))?;
                let start = chart
                    .ball
                    .exp(&chart.from_frame(&V4::from_column_slice(&f.points[0])))?;
                let expected = s.model.generator_length_hint(&start).ok_or(
                    collapse_core::GeomError::InvalidInput("no generator length"),
                )?;
                let rel = (f.length - expected).abs() / expected;
                Ok(vec![
                    f.length.into(),
                    expected.into(),
                    rel.into(),
                    f.closure_gap.into(),
                    f.level_error.into(),
                ])
            })();
            out.fibers.push((key, res));
        }
        out
    });
    for (i, o) in per_radius.into_iter().enumerate() {
        fill(&mut sub, o.samples);
        fill(&mut summary, vec![(vec![p.radii[i].into()], o.summary)]);
        fill(&mut fibers, o.fibers);
    }

    if p.fiber_samples > 0 {
        let d_src = (
            "distortion_slope",
            p.max_distortion_slope,
            "params.max_distortion_slope",
        );
        judge_decay(
            &mut report,
            "max_log_distortion",
            &summary.pairs("r", "max_log_distortion"),
            p.noise_floor,
            d_src,
        );
        let h_src = (
            "hessian_slope",
            p.max_hessian_slope,
            "params.max_hessian_slope",
        );
        judge_decay(
            &mut report,
            "max_hessian",
            &summary.pairs("r", "max_hessian"),
            p.noise_floor,
            h_src,
        );
    }
    let worst = fibers
        .column("rel_error")
        .unwrap_or_default()
        .into_iter()
        .flatten()
        .fold(0.0, f64::max);
    if !p.levels.is_empty() {
        report.verdicts.push(Verdict::le(
            "fiber_length_rel_error",
            Some(worst),
            p.length_rel_tol,
            "params.length_rel_tol",
        ));
    }
    let failed = sub.failed_rows() + summary.failed_rows() + fibers.failed_rows();
    report.verdicts.push(Verdict::le(
        "failed_rows",
        Some(failed as f64),
        0.0,
        "every row must compute",
    ));
    report.tables.push(sub);
    report.tables.push(summary);
    report.tables.push(fibers);
    if let Some(a) = &p.averaging {
        averaging(s, a, &mut report);
    }
    Ok(report)
}

/// Slope verdict on `pairs`, or a plain bound when every value sits below the noise
/// floor (exact fibrations of flat quotients have no decay to fit).
fn judge_decay(
    report: &mut Report,
    key: &str,
    pairs: &[(f64, f64)],
    floor: f64,
    slope: (&str, f64, &str),
) {
    if pairs.is_empty() {
        return;
    }
    let top = pairs.iter().map(|q| q.1).fold(0.0, f64::max);
    if top <= floor {
        report
            .verdicts
            .push(Verdict::le(key, Some(top), floor, "params.noise_floor"));
    } else if let Some(f) = fit_or_verdict(report, key, pairs) {
        report
            .verdicts
            .push(Verdict::le(slope.0, Some(f.exponent), slope.1, slope.2));
    }
}

/// Whether the model's circle action is isometric.
fn invariant(kind: ModelKind, delta: Option<f64>) -> bool {
    kind != ModelKind::PerturbedTaubNut || delta == Some(0.0)
}

/// `‖h − g‖` (Frobenius, chart components) where `h` averages `g` over the circle action.
pub fn averaging<E: Executor>(s: &Setup<'_, E>, a: &AveragingParams, report: &mut Report) {
    let mut t = Table::new("averaging", &["r", "deviation"]);
    let rows = s.exec.map(a.radii.len(), |i| {
        let r = a.radii[i];
        let res = (|| -> Result<Vec<Cell>, LabError> {
            let p = s.model.point_at_radius(r);
            let h = fiber_average_metric(s.model, &CircleFlow { model: s.model }, &p, a.nodes)?;
            let g = s.model.metric(&p)?;
            Ok(vec![(h - g).norm().into()])
        })();
        (vec![r.into()], res)
    });
    fill(&mut t, rows);
    let pairs = t.pairs("r", "deviation");
    if invariant(s.spec.kind, s.spec.delta) {
        let worst = pairs.iter().map(|q| q.1).fold(0.0, f64::max);
        report.verdicts.push(Verdict::le(
            "invariant_average",
            Some(worst),
            a.invariant_tol,
            "params.averaging.invariant_tol",
        ));
    } else if let Some(f) = fit_or_verdict(report, "averaging_deviation", &pairs) {
        report.verdicts.push(Verdict::le(
            "averaging_slope",
            Some(f.exponent),
            a.max_slope,
            "params.averaging.max_slope",
        ));
    }
    report.verdicts.push(Verdict::le(
        "averaging_failed_rows",
        Some(t.failed_rows() as f64),
        0.0,
        "every row must compute",
    ));
    report.tables.push(t);
}
