use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::config::{AttackEntry, DataSource, ExperimentConfig};
use super::{load_dataset, synth_dataset, BenchError};
use crate::attacks::{run_attack, AttackConfig, AttackError, AttackKind};
use crate::defences::{
    adversarial_train, distill, pixel_deflect, saliency_map, DeflectConfig, DefenceConfig, DefenceKind,
};
use crate::gradnet::{train, Network, Sample, Target, TrainConfig};
use crate::imagekit::Image;
use crate::metrics::{accuracy, roc_auc, ScoredSample};

/// Data and trained network for one trial.
pub struct TrialData {
    pub seed: u64,
    pub net: Network,
    pub train: Vec<Sample>,
    pub test: Vec<Sample>,
}

fn label(s: &Sample) -> usize {
    match s.target {
        Target::Class(k) => k,
        Target::Soft(ref p) => (p.get(1).copied().unwrap_or(0.0) >= 0.5) as usize,
    }
}

pub fn train_network(cfg: &ExperimentConfig, data: &[Sample], seed: u64) -> Result<Network, BenchError> {
    let first = data.first().ok_or(crate::gradnet::NetError::EmptyDataset)?;
    let (h, w, c) = first.image.dims();
    let mut net = Network::build(&cfg.network.specs(), [h, w, c], seed)?;
    let tc = TrainConfig {
        seed,
        ..cfg.train.clone()
    };
    train(&mut net, data, &tc)?;
    Ok(net)
}

/// Builds the trial's data (synthetic sets are regenerated from the trial
/// seed) and trains the undefended network.
pub fn prepare_trial(cfg: &ExperimentConfig, trial: usize) -> Result<TrialData, BenchError> {
    let seed = cfg.seed.wrapping_add(trial as u64);
    let (train_set, test_set) = match &cfg.data {
        DataSource::Synthetic { train, test, size } => {
            let mut all = synth_dataset(train + test, *size, seed)?.samples;
            let test_set = all.split_off(*train);
            (all, test_set)
        }
        DataSource::Manifest { path } => {
            let ds = load_dataset(path)?;
            (ds.subset(&ds.train), ds.subset(&ds.test))
        }
    };
    if test_set.is_empty() {
        return Err(BenchError::Config("test split is empty".into()));
    }
    let net = train_network(cfg, &train_set, seed).map_err(|e| e.in_stage(format!("trial {trial}: training")))?;
    Ok(TrialData {
        seed,
        net,
        train: train_set,
        test: test_set,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackStats {
    pub clean_accuracy: f64,
    pub accuracy: f64,
    pub clean_roc_auc: f64,
    pub roc_auc: f64,
    /// Mean and largest L2 perturbation in percent of the clean image norm.
    pub mean_perturbation: f64,
    pub worst_perturbation: f64,
    pub max_linf: f64,
    pub mean_seconds: f64,
    /// Samples whose gradient vanished; they are scored unperturbed.
    pub zero_gradient: usize,
}

/// Optional input transformation applied before classification.
pub type Preprocess<'a> = dyn Fn(&Image, usize) -> Result<Image, BenchError> + 'a;

fn auc_or_half(scores: &[f64], labels: &[u8]) -> Result<f64, BenchError> {
    let samples: Vec<ScoredSample> = scores
        .iter()
        .zip(labels)
        .map(|(&score, &label)| ScoredSample { score, label })
        .collect();
    match roc_auc(&samples) {
        Ok(a) => Ok(a),
        Err(crate::metrics::MetricError::SingleClass) => Ok(0.5),
        Err(e) => Err(e.into()),
    }
}

/// Attacks every sample of `test` with its true label and scores the
/// network on the results. `pre` transforms both clean and adversarial
/// inputs before they reach the classifier.
pub fn evaluate_attack(
    net: &Network,
    test: &[Sample],
    kind: AttackKind,
    cfg: &AttackConfig,
    pre: Option<&Preprocess>,
) -> Result<AttackStats, BenchError> {
    let labels: Vec<u8> = test.iter().map(|s| label(s) as u8).collect();
    let mut clean_scores = Vec::with_capacity(test.len());
    let mut adv_scores = Vec::with_capacity(test.len());
    let mut perts = Vec::with_capacity(test.len());
    let mut max_linf = 0.0f64;
    let mut seconds = 0.0;
    let mut zero_gradient = 0;

    for (i, s) in test.iter().enumerate() {
        let y = label(s);
        let sample_cfg = AttackConfig {
            seed: cfg.seed.wrapping_add(i as u64),
            ..cfg.clone()
        };
        let started = Instant::now();
        let adv = match run_attack(kind, net, &s.image, y, None, &sample_cfg) {
            Ok(r) => {
                seconds += r.elapsed;
                max_linf = max_linf.max(r.linf);
                perts.push(r.l2_percent.unwrap_or(0.0));
                r.adversarial.expect("attack returns an image")
            }
            Err(AttackError::ZeroGradient(_)) => {
                seconds += started.elapsed().as_secs_f64();
                zero_gradient += 1;
                perts.push(0.0);
                s.image.clone()
            }
            Err(e) => return Err(e.into()),
        };
        let (clean_in, adv_in) = match pre {
            Some(f) => (f(&s.image, i)?, f(&adv, i)?),
            None => (s.image.clone(), adv),
        };
        clean_scores.push(net.score(&clean_in)?);
        adv_scores.push(net.score(&adv_in)?);
    }
    let n = test.len() as f64;
    Ok(AttackStats {
        clean_accuracy: accuracy(&clean_scores, &labels, 0.5)?,
        accuracy: accuracy(&adv_scores, &labels, 0.5)?,
        clean_roc_auc: auc_or_half(&clean_scores, &labels)?,
        roc_auc: auc_or_half(&adv_scores, &labels)?,
        mean_perturbation: perts.iter().sum::<f64>() / n,
        worst_perturbation: perts.iter().cloned().fold(0.0, f64::max),
        max_linf,
        mean_seconds: seconds / n,
        zero_gradient,
    })
}

/// One line of a results table. `trial` is `None` on rows that average
/// every trial.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub experiment: String,
    pub attack: String,
    pub defence: String,
    pub network: String,
    pub trial: Option<usize>,
    pub epsilon: f64,
    pub clean_accuracy: f64,
    pub accuracy_under_attack: f64,
    pub clean_roc_auc: f64,
    pub roc_auc: f64,
    pub mean_perturbation: f64,
    pub worst_perturbation: f64,
    pub max_linf: f64,
    pub mean_seconds: f64,
    pub zero_gradient: usize,
}

impl ReportRow {
    fn new(cfg: &ExperimentConfig, entry: &AttackEntry, defence: &str, trial: usize, s: &AttackStats) -> Self {
        ReportRow {
            experiment: cfg.name.clone(),
            attack: entry.kind.name().into(),
            defence: defence.into(),
            network: cfg.network.id(),
            trial: Some(trial),
            epsilon: entry.config.epsilon,
            clean_accuracy: s.clean_accuracy,
            accuracy_under_attack: s.accuracy,
            clean_roc_auc: s.clean_roc_auc,
            roc_auc: s.roc_auc,
            mean_perturbation: s.mean_perturbation,
            worst_perturbation: s.worst_perturbation,
            max_linf: s.max_linf,
            mean_seconds: s.mean_seconds,
            zero_gradient: s.zero_gradient,
        }
    }

    /// Averages rows of one (attack, defence) pair over trials; worst-case
    /// fields take the maximum.
    pub fn mean_of(rows: &[ReportRow]) -> ReportRow {
        let n = rows.len() as f64;
        let avg = |f: fn(&ReportRow) -> f64| rows.iter().map(f).sum::<f64>() / n;
        let max = |f: fn(&ReportRow) -> f64| rows.iter().map(f).fold(0.0, f64::max);
        ReportRow {
            trial: None,
            clean_accuracy: avg(|r| r.clean_accuracy),
            accuracy_under_attack: avg(|r| r.accuracy_under_attack),
            clean_roc_auc: avg(|r| r.clean_roc_auc),
            roc_auc: avg(|r| r.roc_auc),
            mean_perturbation: avg(|r| r.mean_perturbation),
            worst_perturbation: max(|r| r.worst_perturbation),
            max_linf: max(|r| r.max_linf),
            mean_seconds: avg(|r| r.mean_seconds),
            zero_gradient: rows.iter().map(|r| r.zero_gradient).sum(),
            ..rows[0].clone()
        }
    }
}

fn test_slice<'a>(cfg: &ExperimentConfig, test: &'a [Sample]) -> &'a [Sample] {
    &test[..cfg.attack_samples.unwrap_or(test.len()).min(test.len())]
}

/// Defended network (or input transform) for one defence config.
enum Defended {
    Net(Network),
    Deflect(DeflectConfig),
}

fn build_defence(cfg: &ExperimentConfig, data: &TrialData, d: &DefenceConfig) -> Result<Defended, BenchError> {
    let d = DefenceConfig {
        seed: d.seed.wrapping_add(data.seed),
        ..d.clone()
    };
    let (h, w, c) = data.train[0].image.dims();
    let tc = TrainConfig {
        seed: data.seed,
        ..cfg.train.clone()
    };
    Ok(match d.kind {
        DefenceKind::AdvTrain => {
            let fresh = Network::build(&cfg.network.specs(), [h, w, c], data.seed)?;
            Defended::Net(adversarial_train(fresh, &data.net, &data.train, &tc, &d)?.0)
        }
        DefenceKind::Distill => Defended::Net(distill(&cfg.network.specs(), [h, w, c], &data.train, &tc, &d)?.student),
        DefenceKind::PixelDeflect => Defended::Deflect(DeflectConfig::from(&d)),
    })
}

/// Trains, attacks and defends for every trial and returns the per-trial
/// rows followed by one averaged row per (attack, defence) pair.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Vec<ReportRow>, BenchError> {
    cfg.validate()?;
    let mut per_trial: Vec<ReportRow> = Vec::new();
    for trial in 0..cfg.trials {
        let data = prepare_trial(cfg, trial)?;
        let test = test_slice(cfg, &data.test);
        for entry in &cfg.attacks {
            let stats = evaluate_attack(&data.net, test, entry.kind, &entry.config, None)
                .map_err(|e| e.in_stage(format!("trial {trial}: attack {}", entry.kind.name())))?;
            per_trial.push(ReportRow::new(cfg, entry, "none", trial, &stats));
        }
        for d in &cfg.defences {
            let stage = |e: BenchError| e.in_stage(format!("trial {trial}: defence {}", d.label()));
            let defended = build_defence(cfg, &data, d).map_err(stage)?;
            for entry in &cfg.attacks {
                let stats = match &defended {
                    Defended::Net(net) => evaluate_attack(net, test, entry.kind, &entry.config, None),
                    Defended::Deflect(dc) => {
                        let net = &data.net;
                        let f = |x: &Image, i: usize| -> Result<Image, BenchError> {
                            let sal = saliency_map(net, x)?;
                            let c = DeflectConfig {
                                seed: dc.seed.wrapping_add(i as u64),
                                ..*dc
                            };
                            Ok(pixel_deflect(x, &sal, &c)?)
                        };
                        evaluate_attack(net, test, entry.kind, &entry.config, Some(&f))
                    }
                }
                .map_err(stage)?;
                per_trial.push(ReportRow::new(cfg, entry, &d.label(), trial, &stats));
            }
        }
    }
    let mut rows = per_trial.clone();
    let mut keys: Vec<(String, String)> = Vec::new();
    for r in &per_trial {
        let k = (r.attack.clone(), r.defence.clone());
        if !keys.contains(&k) {
            keys.push(k);
        }
    }
    for (a, d) in keys {
        let group: Vec<ReportRow> = per_trial
            .iter()
            .filter(|r| r.attack == a && r.defence == d)
            .cloned()
            .collect();
        rows.push(ReportRow::mean_of(&group));
    }
    Ok(rows)
}
