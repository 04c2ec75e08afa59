use super::{fill, fit_or_verdict, new_report, row_seed, Setup};
use crate::config::{
    CurvatureDecayParams, DiophantineParams, HolonomyDecayParams, InjProfileParams, ModelKind,
    VolumeGrowthParams,
};
use crate::error::LabError;
use crate::report::{Cell, Report, Table, Verdict};
use collapse_core::asymptotics::{
    ball_volume, continued_fraction_of_angle, inj_power_ratio, inj_profile as core_inj_profile,
    liouville_plateau_sequence, pigeonhole_k, weighted_curvature_integral,
};
use collapse_core::exec::Executor;
use collapse_core::geodesics::{geodesic_loops, LoopOptions};
use collapse_core::manifold::curvature_norm;
use collapse_core::zoo::{flat_inj_auto, rational_plateau_start, Turns};
use std::f64::consts::PI;

/// `√(1 + 4π²) / 2`, the constant of the `√t` bound on flat quotients.
pub fn sqrt_bound_constant() -> f64 {
    (1.0 + 4.0 * PI * PI).sqrt() / 2.0
}

/// Columns: `r, inj, k, incomplete` (`inj` blank when infinite; `k` blank on curved
/// models without a loop).
pub fn inj_profile<E: Executor>(
    s: &Setup<'_, E>,
    p: &InjProfileParams,
) -> Result<Report, LabError> {
    let mut report = new_report("inj-profile", s, p);
    let mut table = Table::new("inj_profile", &["r", "inj", "k", "incomplete"]);
    let flat = s.spec.kind == ModelKind::FlatScrew;
    let angle = if flat {
        Some(s.spec.angle("model")?)
    } else {
        None
    };
    let rows = s.exec.map(p.radii.len(), |i| {
        let r = p.radii[i];
        let res = (|| -> Result<Vec<Cell>, LabError> {
            if let Some(a) = &angle {
                let (inj, k) = flat_inj_auto(a, r);
                return Ok(vec![inj.into(), (k as i64).into(), false.into()]);
            }
            let x = s.model.point_at_radius(r);
            let smp = core_inj_profile(s.model, &[x], p.l_max, &LoopOptions::default())?[0];
            let k = if smp.inj.is_some() {
                let search = geodesic_loops(s.model, &x, p.l_max, &LoopOptions::default())?;
                search.shortest().map_or(Cell::Missing, |l| l.k.into())
            } else {
                Cell::Missing
            };
            Ok(vec![smp.inj.into(), k, smp.incomplete.into()])
        })();
        (vec![r.into()], res)
    });
    fill(&mut table, rows);
    let pairs = table.pairs("r", "inj");
    if let Some(a) = &angle {
        if let Turns::Rational { q, .. } = a.turns {
            let start = rational_plateau_start(q);
            let dev = pairs
                .iter()
                .filter(|(r, _)| *r >= start)
                .map(|(_, v)| (v - 0.5 * q as f64).abs())
                .fold(0.0, f64::max);
            report.verdicts.push(
                Verdict::le(
                    "plateau",
                    Some(dev),
                    0.0,
                    "exact: inj = q/2 past q/sin(pi/q)",
                )
                .with_note(format!("q = {q}, plateau from r = {start:.6}")),
            );
        }
        let worst = pairs
            .iter()
            .filter(|(r, _)| *r > 0.0)
            .map(|(r, v)| v / r.sqrt())
            .fold(0.0, f64::max);
        report.verdicts.push(Verdict::le(
            "sqrt_bound",
            Some(worst),
            sqrt_bound_constant(),
            "closed form sqrt(1+4pi^2)/2",
        ));
    } else if !pairs.is_empty() {
        let (lo, hi) = pairs.iter().fold((f64::INFINITY, 0.0f64), |(a, b), q| {
            (a.min(q.1), b.max(q.1))
        });
        report.verdicts.push(Verdict::le(
            "pinching",
            Some(hi / lo),
            p.pinch_max,
            "params.pinch_max",
        ));
    }
    let failed = table.failed_rows();
    report.verdicts.push(Verdict::le(
        "failed_rows",
        Some(failed as f64),
        0.0,
        "every row must compute",
    ));
    report.tables.push(table);
    Ok(report)
}

/// Collapsed growth exponent of the model's ends.
fn default_exponent<E: Executor>(s: &Setup<'_, E>) -> f64 {
    match s.spec.kind {
        ModelKind::Euclidean => (s.model.dim() - s.spec.period.map_or(0, |_| 1)) as f64,
        ModelKind::FlatScrew => 2.0,
        _ => 3.0,
    }
}

/// Columns: `t, volume, std_error, rel_std_error, ratio` with `ratio = volume / t^ν`.
pub fn volume_growth<E: Executor>(
    s: &Setup<'_, E>,
    p: &VolumeGrowthParams,
) -> Result<Report, LabError> {
    let nu = p.exponent.unwrap_or_else(|| default_exponent(s));
    let mut echo = p.clone();
    echo.exponent = Some(nu);
    let mut report = new_report("volume-growth", s, &echo);
    let mut table = Table::new(
        "volume_growth",
        &["t", "volume", "std_error", "rel_std_error", "ratio"],
    );
    let x = s.model.base_point();
    let rows = (0..p.radii.len())
        .map(|i| {
            let t = p.radii[i];
            let res = ball_volume(
                s.model,
                &x,
                t,
                p.method,
                p.samples,
                row_seed(s.seed, i),
                s.exec,
            )
            .map(|v| {
                vec![
                    v.value.into(),
                    v.std_error.into(),
                    v.relative_error().into(),
                    (v.value / t.powf(nu)).into(),
                ]
            })
            .map_err(LabError::from);
            (vec![t.into()], res)
        })
        .collect();
    fill(&mut table, rows);
    let ratios: Vec<f64> = table
        .column("ratio")
        .unwrap_or_default()
        .into_iter()
        .flatten()
        .collect();
    if ratios.len() >= 2 {
        let band = ratios.iter().cloned().fold(0.0, f64::max)
            / ratios.iter().cloned().fold(f64::INFINITY, f64::min);
        report.verdicts.push(Verdict::le(
            "band",
            Some(band),
            p.band_max,
            "params.band_max",
        ));
    }
    let rel = table
        .column("rel_std_error")
        .unwrap_or_default()
        .into_iter()
        .flatten()
        .fold(0.0, f64::max);
    report.verdicts.push(Verdict::le(
        "rel_std_error",
        Some(rel),
        p.max_rel_std_error,
        "params.max_rel_std_error",
    ));
    if s.spec.kind == ModelKind::Euclidean && s.spec.period.is_none() {
        let d = s.model.dim() as i32;
        let unit = if d == 3 {
            4.0 / 3.0 * PI
        } else {
            0.5 * PI * PI
        };
        let mut worst = 0.0f64;
        for (row, (t, v)) in table.pairs("t", "volume").into_iter().enumerate() {
            let se = table.column("std_error").unwrap()[row].unwrap_or(f64::INFINITY);
            worst = worst.max((v - unit * t.powi(d)).abs() / se.max(1e-300));
        }
        report.verdicts.push(Verdict::le(
            "closed_form_sigmas",
            Some(worst),
            p.exact_sigmas,
            "params.exact_sigmas",
        ));
    }
    if p.radii.len() >= 5 {
        fit_or_verdict(&mut report, "volume", &table.pairs("t", "volume"));
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

/// Columns: `r, rm` (`|Rm|` at the model's point of radius `r`). With
/// `weighted_integral`, a second table `weighted_integral` with columns
/// `r_min, r_max, value, std_error` over doubling annuli.
pub fn curvature_decay<E: Executor>(
    s: &Setup<'_, E>,
    p: &CurvatureDecayParams,
) -> Result<Report, LabError> {
    let mut report = new_report("curvature-decay", s, p);
    let mut table = Table::new("curvature", &["r", "rm"]);
    let rows = s.exec.map(p.radii.len(), |i| {
        let r = p.radii[i];
        let res = curvature_norm(s.model, &s.model.point_at_radius(r))
            .map(|v| vec![v.into()])
            .map_err(LabError::from);
        (vec![r.into()], res)
    });
    fill(&mut table, rows);
    if let Some(f) = fit_or_verdict(&mut report, "rm", &table.pairs("r", "rm")) {
        let (e, tol) = (p.expected_exponent, p.exponent_tol);
        report.verdicts.push(Verdict::within(
            "exponent",
            Some(f.exponent),
            e - tol,
            e + tol,
            "params.expected_exponent ± params.exponent_tol",
        ));
        report.verdicts.push(Verdict::le(
            "residual",
            Some(f.residual),
            p.max_residual,
            "params.max_residual",
        ));
    }
    report.verdicts.push(Verdict::le(
        "failed_rows",
        Some(table.failed_rows() as f64),
        0.0,
        "every row must compute",
    ));
    report.tables.push(table);
    if let Some(w) = &p.weighted_integral {
        let mut wt = Table::new(
            "weighted_integral",
            &["r_min", "r_max", "value", "std_error"],
        );
        let rows = (0..w.doublings)
            .map(|i| {
                let (a, b) = (
                    w.r_min * 2f64.powi(i as i32),
                    w.r_min * 2f64.powi(i as i32 + 1),
                );
                let res = weighted_curvature_integral(
                    s.model,
                    a,
                    b,
                    w.samples,
                    row_seed(s.seed, i),
                    s.exec,
                )
                .map(|v| vec![v.value.into(), v.std_error.into()])
                .map_err(LabError::from);
                (vec![a.into(), b.into()], res)
            })
            .collect();
        fill(&mut wt, rows);
        let vals: Vec<f64> = wt
            .column("value")
            .unwrap_or_default()
            .into_iter()
            .flatten()
            .collect();
        let worst = vals.windows(2).map(|v| v[1] / v[0]).fold(0.0, f64::max);
        if vals.len() >= 2 {
            report.verdicts.push(Verdict::le(
                "annulus_ratio",
                Some(worst),
                w.max_ratio,
                "params.weighted_integral.max_ratio",
            ));
        }
        report.tables.push(wt);
    }
    Ok(report)
}

/// Columns: `r, k, length, generator_length, holonomy_defect, incomplete` for the
/// shortest loop at the point of radius `r`.
pub fn holonomy_decay<E: Executor>(
    s: &Setup<'_, E>,
    p: &HolonomyDecayParams,
) -> Result<Report, LabError> {
    let mut report = new_report("holonomy-decay", s, p);
    let mut table = Table::new(
        "holonomy",
        &[
            "r",
            "k",
            "length",
            "generator_length",
            "holonomy_defect",
            "incomplete",
        ],
    );
    let rows = s.exec.map(p.radii.len(), |i| {
        let r = p.radii[i];
        let res = (|| -> Result<Vec<Cell>, LabError> {
            let x = s.model.point_at_radius(r);
            let hint = s
                .model
                .generator_length_hint(&x)
                .ok_or_else(|| LabError::config("model", "model has no loop-length scale"))?;
            let search =
                geodesic_loops(s.model, &x, p.l_max_factor * hint, &LoopOptions::default())?;
            let l = search
                .loops
                .iter()
                .filter(|l| l.k != 0)
                .min_by(|a, b| a.length.total_cmp(&b.length))
                .ok_or(collapse_core::GeomError::NoLifts)?;
            let defect = l.holonomy_defect(s.model, &x)?;
            Ok(vec![
                l.k.into(),
                l.length.into(),
                hint.into(),
                defect.into(),
                search.incomplete.into(),
            ])
        })();
        (vec![r.into()], res)
    });
    fill(&mut table, rows);
    if let Some(f) = fit_or_verdict(
        &mut report,
        "holonomy_defect",
        &table.pairs("r", "holonomy_defect"),
    ) {
        report.verdicts.push(Verdict::le(
            "slope",
            Some(f.exponent),
            p.max_slope,
            "params.max_slope",
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

/// Tables: `continued_fraction` (`i, a, p, q, bound_holds`), `pigeonhole`
/// (`t, k, distance, bound, inj, sqrt_bound`) and, for Liouville angles,
/// `liouville` (`t, inj, ratio`).
pub fn diophantine<E: Executor>(
    s: &Setup<'_, E>,
    p: &DiophantineParams,
) -> Result<Report, LabError> {
    if s.spec.kind != ModelKind::FlatScrew {
        return Err(LabError::config(
            "model.type",
            "diophantine needs a flat_screw model",
        ));
    }
    let angle = s.spec.angle("model")?;
    let mut report = new_report("diophantine", s, p);

    let cf = continued_fraction_of_angle(&angle, p.depth)?;
    let mut ct = Table::new("continued_fraction", &["i", "a", "p", "q", "bound_holds"]);
    let mut broken = 0usize;
    for (i, (a, &(pp, qq))) in cf.coefficients.iter().zip(&cf.convergents).enumerate() {
        let b = cf.convergent_bound_holds(i);
        if b == Some(false) {
            broken += 1;
        }
        // i128 entries go out as text so no digits are lost
        let bcell = b.map_or(Cell::Missing, |v| v.into());
        ct.push(vec![
            i.into(),
            a.to_string().into(),
            pp.to_string().into(),
            qq.to_string().into(),
            bcell,
        ]);
    }
    report.verdicts.push(Verdict::le(
        "convergent_bound_failures",
        Some(broken as f64),
        0.0,
        "|x - p/q| <= 1/(q q')",
    ));
    report.verdicts.push(Verdict::ge(
        "recurrence",
        Some(cf.recurrence_holds() as i64 as f64),
        1.0,
        "p_i = a_i p_(i-1) + p_(i-2)",
    ));
    report.tables.push(ct);

    let mut pt = Table::new(
        "pigeonhole",
        &["t", "k", "distance", "bound", "inj", "sqrt_bound"],
    );
    let c = sqrt_bound_constant();
    let (mut ph_worst, mut sq_worst) = (0.0f64, 0.0f64);
    for &t in &p.t_values {
        match pigeonhole_k(&angle, t) {
            Ok((k, d)) => {
                let bound = 2.0 * PI / t.sqrt();
                let inj = flat_inj_auto(&angle, t).0;
                ph_worst = ph_worst.max(d / bound);
                sq_worst = sq_worst.max(inj / (c * t.sqrt()));
                pt.push(vec![
                    t.into(),
                    (k as i64).into(),
                    d.into(),
                    bound.into(),
                    inj.into(),
                    (c * t.sqrt()).into(),
                ]);
            }
            Err(e) => pt.push_error(vec![t.into()], e.to_string()),
        }
    }
    report.verdicts.push(Verdict::le(
        "pigeonhole_ratio",
        Some(ph_worst),
        1.0,
        "distance <= 2pi/sqrt(t)",
    ));
    report.verdicts.push(Verdict::le(
        "sqrt_bound_ratio",
        Some(sq_worst),
        1.0,
        "inj <= sqrt(1+4pi^2)/2 sqrt(t)",
    ));
    report.tables.push(pt);

    if let Turns::Liouville { .. } = angle.turns {
        let ts = liouville_plateau_sequence(p.liouville_terms, p.liouville_len);
        let seq = inj_power_ratio(&angle, &ts, p.liouville_power);
        let mut lt = Table::new("liouville", &["t", "inj", "ratio"]);
        let mut rises = 0usize;
        for (i, &(t, inj, ratio)) in seq.iter().enumerate() {
            if i > 0 && ratio >= seq[i - 1].2 {
                rises += 1;
            }
            lt.push(vec![t.into(), inj.into(), ratio.into()]);
        }
        report.verdicts.push(Verdict::le(
            "liouville_non_decreasing_steps",
            Some(rises as f64),
            0.0,
            "params.liouville_power",
        ));
        report.verdicts.push(Verdict::ge(
            "liouville_terms",
            Some(seq.len() as f64),
            4.0,
            "params.liouville_len",
        ));
        report.tables.push(lt);
    }
    Ok(report)
}
