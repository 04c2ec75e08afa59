//! One function per subcommand. Each resolves its parameters, computes rows (in
//! parallel where rows are independent), fits, and judges the result against the
//! bounds declared in the config.

mod charts;
mod groups;
mod profiles;

use crate::config::{parse_params, ExperimentConfig, ModelKind, ModelSpec, EXPERIMENTS};
use crate::error::LabError;
use crate::report::{Cell, Report, Table, Verdict};
use collapse_core::asymptotics::{decay_fit, DecayFit};
use collapse_core::exec::Executor;
use collapse_core::Model;
use serde::Serialize;
use std::time::Instant;

pub use charts::{fibration, gh_chart};
pub use groups::pseudo_group;
pub use profiles::{curvature_decay, diophantine, holonomy_decay, inj_profile, volume_growth};

pub type SyncModel = dyn Model + Send + Sync;

/// Key cells of a row and either its remaining cells or the reason it failed.
pub(crate) type Row = (Vec<Cell>, Result<Vec<Cell>, LabError>);

/// Model used when neither the section nor the config names one.
pub fn default_model(experiment: &str) -> ModelSpec {
    match experiment {
        "pseudo-group" => ModelSpec::flat_rational(1, 5),
        "gh-chart" => ModelSpec::flat_rational(1, 3),
        "diophantine" => ModelSpec {
            liouville_terms: Some(6),
            ..ModelSpec::of(ModelKind::FlatScrew)
        },
        _ => ModelSpec::taub_nut(),
    }
}

/// Everything an experiment needs besides its parameters.
pub struct Setup<'a, E: Executor> {
    pub spec: ModelSpec,
    pub model: &'a SyncModel,
    pub seed: u64,
    pub exec: &'a E,
}

/// Per-row seed; rows stay reproducible whatever subset of the grid is run.
pub fn row_seed(seed: u64, row: usize) -> u64 {
    seed ^ (row as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

/// Run one subcommand. `seed_override` takes precedence over the config's seed.
pub fn run<E: Executor>(
    name: &str,
    cfg: &ExperimentConfig,
    seed_override: Option<u64>,
    exec: &E,
) -> Result<Report, LabError> {
    if name == "all" {
        return run_all(cfg, seed_override, exec);
    }
    if !EXPERIMENTS.contains(&name) {
        return Err(LabError::config(
            "<subcommand>",
            format!("unknown experiment `{name}`"),
        ));
    }
    let seed = seed_override
        .or(cfg.seed)
        .ok_or_else(|| LabError::config("seed", "missing (set it in the config or pass --seed)"))?;
    let (model, params, prefix) = cfg.section(name);
    let spec = model.unwrap_or_else(|| default_model(name));
    let mpath = if prefix.is_empty() {
        "model".to_string()
    } else {
        format!("{prefix}.model")
    };
    let model = spec.build(&mpath)?;
    let setup = Setup {
        spec,
        model: model.as_ref(),
        seed,
        exec,
    };
    let start = Instant::now();
    let mut report = match name {
        "inj-profile" => inj_profile(&setup, &parse_params(&params, &prefix)?),
        "volume-growth" => volume_growth(&setup, &parse_params(&params, &prefix)?),
        "curvature-decay" => curvature_decay(&setup, &parse_params(&params, &prefix)?),
        "pseudo-group" => pseudo_group(&setup, &parse_params(&params, &prefix)?),
        "holonomy-decay" => holonomy_decay(&setup, &parse_params(&params, &prefix)?),
        "gh-chart" => gh_chart(&setup, &parse_params(&params, &prefix)?),
        "fibration" => fibration(&setup, &parse_params(&params, &prefix)?),
        _ => diophantine(&setup, &parse_params(&params, &prefix)?),
    }?;
    report.wall_time_s = start.elapsed().as_secs_f64();
    Ok(report)
}

/// Every experiment listed under `experiments` (all eight when none are), gathered into
/// one report whose tables carry the experiment name as a prefix.
fn run_all<E: Executor>(
    cfg: &ExperimentConfig,
    seed_override: Option<u64>,
    exec: &E,
) -> Result<Report, LabError> {
    let names: Vec<&str> = if cfg.experiments.is_empty() {
        EXPERIMENTS.to_vec()
    } else {
        for k in cfg.experiments.keys() {
            if !EXPERIMENTS.contains(&k.as_str()) {
                return Err(LabError::config(
                    format!("experiments.{k}"),
                    "unknown experiment",
                ));
            }
        }
        EXPERIMENTS
            .iter()
            .copied()
            .filter(|n| cfg.experiments.contains_key(*n))
            .collect()
    };
    let seed = seed_override
        .or(cfg.seed)
        .ok_or_else(|| LabError::config("seed", "missing (set it in the config or pass --seed)"))?;
    let start = Instant::now();
    let mut all = Report::new("all", seed, None, serde_json::Value::Null);
    let mut parts = serde_json::Map::new();
    for n in names {
        // a section without params must not inherit the single-run params block
        let mut c = cfg.clone();
        c.params = serde_json::Value::Null;
        let r = run(n, &c, seed_override, exec)?;
        for mut t in r.tables.clone() {
            t.name = format!("{n}.{}", t.name);
            all.tables.push(t);
        }
        for (k, f) in &r.fits {
            all.fits.insert(format!("{n}.{k}"), *f);
        }
        for mut v in r.verdicts.clone() {
            v.name = format!("{n}.{}", v.name);
            all.verdicts.push(v);
        }
        parts.insert(
            n.to_string(),
            serde_json::json!({"model": r.model, "params": r.params, "extra": r.extra}),
        );
    }
    all.params = serde_json::Value::Object(parts);
    all.wall_time_s = start.elapsed().as_secs_f64();
    Ok(all)
}

pub(crate) fn echo<P: Serialize>(p: &P) -> serde_json::Value {
    serde_json::to_value(p).expect("parameters serialize")
}

pub(crate) fn new_report<E: Executor, P: Serialize>(name: &str, s: &Setup<'_, E>, p: &P) -> Report {
    Report::new(name, s.seed, Some(s.spec.clone()), echo(p))
}

/// Fill `table` from per-row results, keeping failed rows as error records.
pub(crate) fn fill(table: &mut Table, rows: Vec<Row>) {
    for (key, r) in rows {
        match r {
            Ok(mut cells) => {
                let mut all = key;
                all.append(&mut cells);
                table.push(all);
            }
            Err(e) => table.push_error(key, e.to_string()),
        }
    }
}

/// Fit over all pairs; a failed fit becomes a failing verdict instead of an error.
pub(crate) fn fit_or_verdict(
    report: &mut Report,
    key: &str,
    pairs: &[(f64, f64)],
) -> Option<DecayFit> {
    let (lo, hi) = pairs
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), p| {
            (a.min(p.0), b.max(p.0))
        });
    match decay_fit(pairs, (lo, hi)) {
        Ok(f) => {
            report.fits.insert(key.into(), f);
            Some(f)
        }
        Err(e) => {
            report.verdicts.push(
                Verdict::le(&format!("{key}_fit"), None, 0.0, "decay_fit").with_note(e.to_string()),
            );
            None
        }
    }
}
