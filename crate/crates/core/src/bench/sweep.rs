use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::{ExperimentConfig, SweepAxis};
use super::experiment::{evaluate_attack, prepare_trial, TrialData};
use super::BenchError;
use crate::attacks::AttackKind;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub axis: String,
    pub value: f64,
    pub attack: String,
    pub roc_auc: f64,
    pub accuracy: f64,
    pub mean_perturbation: f64,
}

/// ROC-AUC and accuracy for every (grid value, attack) pair, averaged over
/// the trials in `trials`. Each attack starts from its `[[attacks]]` entry.
pub fn sweep_prepared(
    cfg: &ExperimentConfig,
    trials: &[TrialData],
    axis: SweepAxis,
    values: &[f64],
    attacks: &[AttackKind],
) -> Result<Vec<SweepPoint>, BenchError> {
    if values.is_empty() || attacks.is_empty() || trials.is_empty() {
        return Err(BenchError::Config("sweep needs grid values, attacks and trials".into()));
    }
    let mut out = Vec::with_capacity(values.len() * attacks.len());
    for &kind in attacks {
        let base = cfg
            .attack(kind)
            .ok_or_else(|| BenchError::Config(format!("no [[attacks]] entry for {}", kind.name())))?;
        for &value in values {
            let acfg = axis.apply(&base.config, value);
            acfg.validate()?;
            let (mut auc, mut acc, mut pert) = (0.0, 0.0, 0.0);
            for t in trials {
                let n = cfg.attack_samples.unwrap_or(t.test.len()).min(t.test.len());
                let s = evaluate_attack(&t.net, &t.test[..n], kind, &acfg, None)
                    .map_err(|e| e.in_stage(format!("sweep {} = {value}, {}", axis.name(), kind.name())))?;
                auc += s.roc_auc;
                acc += s.accuracy;
                pert += s.mean_perturbation;
            }
            let n = trials.len() as f64;
            out.push(SweepPoint {
                axis: axis.name().into(),
                value,
                attack: kind.name().into(),
                roc_auc: auc / n,
                accuracy: acc / n,
                mean_perturbation: pert / n,
            });
        }
    }
    Ok(out)
}

/// Prepares every trial of `cfg` and sweeps `axis` over `values`.
pub fn sweep(
    cfg: &ExperimentConfig,
    axis: SweepAxis,
    values: &[f64],
    attacks: &[AttackKind],
) -> Result<Vec<SweepPoint>, BenchError> {
    cfg.validate()?;
    let trials = (0..cfg.trials)
        .map(|t| prepare_trial(cfg, t))
        .collect::<Result<Vec<_>, _>>()?;
    sweep_prepared(cfg, &trials, axis, values, attacks)
}

pub fn write_sweep_csv(points: &[SweepPoint], path: &Path) -> Result<(), BenchError> {
    if points.is_empty() {
        return Err(BenchError::EmptyReport);
    }
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    for p in points {
        w.serialize(p).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

pub(crate) fn csv_err(e: csv::Error) -> BenchError {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => BenchError::Io(io),
        other => BenchError::Config(format!("csv: {other:?}")),
    }
}

/// Sample Pearson correlation; `None` when either side is constant.
pub fn pearson(xs: &[f64], ys: &[f64]) -> Option<f64> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return None;
    }
    let n = xs.len() as f64;
    let (mx, my) = (xs.iter().sum::<f64>() / n, ys.iter().sum::<f64>() / n);
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx) * (x - mx);
        syy += (y - my) * (y - my);
    }
    (sxx > 0.0 && syy > 0.0).then(|| sxy / (sxx * syy).sqrt())
}
