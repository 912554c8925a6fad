//! Adversarial training, pixel deflection and defensive distillation.

use rand::distributions::WeightedIndex;
use rand::prelude::Distribution;
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::attacks::{run_attack, AttackConfig, AttackError, AttackKind};
use crate::gradnet::{
    promote_to_softmax, softmax_with_temperature, EpochStats, Head, LayerSpec, LossKind, NetError, Network,
    Sample, Target, TrainConfig, Trainer,
};
use crate::imagekit::Image;

#[derive(Debug, Error)]
pub enum DefenceError {
    #[error(transparent)]
    Net(#[from] NetError),
    #[error(transparent)]
    Attack(#[from] AttackError),
    #[error("invalid defence config: {0}")]
    BadConfig(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DefenceKind {
    AdvTrain,
    PixelDeflect,
    Distill,
}

impl DefenceKind {
    pub fn name(self) -> &'static str {
        match self {
            DefenceKind::AdvTrain => "adv_train",
            DefenceKind::PixelDeflect => "pixel_deflect",
            DefenceKind::Distill => "distill",
        }
    }
}

/// When training adversaries are crafted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regenerate {
    /// Against the supplied reference network, once.
    Once,
    /// Against the reference network for the first epoch, then against the
    /// network being trained at the start of every later epoch.
    PerEpoch,
}

impl Regenerate {
    pub fn name(self) -> &'static str {
        match self {
            Regenerate::Once => "once",
            Regenerate::PerEpoch => "per_epoch",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DefenceConfig {
    pub kind: DefenceKind,
    /// Share of the training set replaced by adversarial versions.
    pub adversarial_fraction: f64,
    pub regenerate: Regenerate,
    pub deflections: usize,
    /// Deflection neighborhood radius in pixels.
    pub window: usize,
    /// Median-filter after deflecting.
    pub denoise: bool,
    pub temperature: f64,
    pub seed: u64,
    /// Attack that crafts training adversaries.
    pub attack: AttackKind,
    pub attack_config: AttackConfig,
}

impl Default for DefenceConfig {
    fn default() -> Self {
        DefenceConfig {
            kind: DefenceKind::AdvTrain,
            adversarial_fraction: 0.65,
            regenerate: Regenerate::PerEpoch,
            deflections: 80,
            window: 2,
            denoise: true,
            temperature: 20.0,
            seed: 0,
            attack: AttackKind::Fgsm,
            attack_config: AttackConfig {
                epsilon: 0.1,
                iterations: 1,
                ..Default::default()
            },
        }
    }
}

impl DefenceConfig {
    /// Report label; adversarial training carries its schedule.
    pub fn label(&self) -> String {
        match self.kind {
            DefenceKind::AdvTrain => format!("adv_train_{}", self.regenerate.name()),
            k => k.name().into(),
        }
    }

    pub fn validate(&self) -> Result<(), DefenceError> {
        if !(0.0..=1.0).contains(&self.adversarial_fraction) {
            return Err(DefenceError::BadConfig(format!(
                "adversarial fraction {} outside [0, 1]",
                self.adversarial_fraction
            )));
        }
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return Err(DefenceError::BadConfig(format!("temperature {} must be positive", self.temperature)));
        }
        if self.window == 0 {
            return Err(DefenceError::BadConfig("deflection window must be at least 1".into()));
        }
        self.attack_config.validate()?;
        Ok(())
    }
}

/// Accuracy pair reported as `under_attack/clean`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DefenceScore {
    pub under_attack: f64,
    pub clean: f64,
}

impl std::fmt::Display for DefenceScore {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{:.3}/{:.3}", self.under_attack, self.clean)
    }
}

fn class_of(t: &Target) -> usize {
    match t {
        Target::Class(k) => *k,
        Target::Soft(v) => {
            let mut best = 0;
            for (i, p) in v.iter().enumerate() {
                if *p > v[best] {
                    best = i;
                }
            }
            best
        }
    }
}

/// Replaces `fraction` of `data` (a seeded subset) with adversarial versions
/// crafted against `against`. Samples whose gradient vanishes stay clean.
fn mix(
    against: &Network,
    data: &[Sample],
    chosen: &[usize],
    cfg: &DefenceConfig,
) -> Result<Vec<Sample>, DefenceError> {
    let mut out = data.to_vec();
    for &i in chosen {
        let s = &data[i];
        match run_attack(cfg.attack, against, &s.image, class_of(&s.target), None, &cfg.attack_config) {
            Ok(r) => out[i].image = r.adversarial.expect("attack returns an image"),
            Err(AttackError::ZeroGradient(_)) => {}
            Err(e) => return Err(e.into()),
        }
    }
    Ok(out)
}

/// Trains `fresh` on a mix of clean and adversarial samples. With fraction 0
/// this is exactly `gradnet::train` with the same configuration.
pub fn adversarial_train(
    mut fresh: Network,
    reference: &Network,
    data: &[Sample],
    train: &TrainConfig,
    cfg: &DefenceConfig,
) -> Result<(Network, Vec<EpochStats>), DefenceError> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(NetError::EmptyDataset.into());
    }
    let count = (cfg.adversarial_fraction * data.len() as f64).round() as usize;
    let mut pick = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut trainer = Trainer::new(train.clone());
    let mut history = Vec::with_capacity(train.epochs);
    let mut mixed: Option<Vec<Sample>> = None;

    for epoch in 0..train.epochs {
        if count > 0 && (mixed.is_none() || cfg.regenerate == Regenerate::PerEpoch) {
            let mut chosen = sample(&mut pick, data.len(), count).into_vec();
            chosen.sort_unstable();
            let against = if epoch == 0 { reference } else { &fresh };
            mixed = Some(mix(against, data, &chosen, cfg)?);
        }
        let set = mixed.as_deref().unwrap_or(data);
        history.push(trainer.run_epoch(&mut fresh, set)?);
    }
    Ok((fresh, history))
}

/// Per-pixel `|∇ₓJ|` summed over channels and rescaled to `[0, 1]`, taken
/// at the network's own prediction.
pub fn saliency_map(net: &Network, x: &Image) -> Result<Image, DefenceError> {
    let y = net.predict(x)?;
    let g = net.input_gradient(x, &Target::Class(y))?;
    let c = x.channels();
    let raw: Vec<f64> = g.data().chunks(c).map(|p| p.iter().map(|v| v.abs()).sum()).collect();
    Ok(normalize(x.height(), x.width(), &raw))
}

fn normalize(h: usize, w: usize, raw: &[f64]) -> Image {
    let lo = raw.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = raw.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let data = if hi > lo {
        raw.iter().map(|v| (v - lo) / (hi - lo)).collect()
    } else {
        vec![0.0; raw.len()]
    };
    Image::from_clamped(h, w, 1, data).expect("saliency shape")
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeflectConfig {
    pub deflections: usize,
    pub window: usize,
    pub denoise: bool,
    pub seed: u64,
}

impl From<&DefenceConfig> for DeflectConfig {
    fn from(c: &DefenceConfig) -> Self {
        DeflectConfig {
            deflections: c.deflections,
            window: c.window,
            denoise: c.denoise,
            seed: c.seed,
        }
    }
}

/// Replaces `deflections` pixels, drawn with probability proportional to
/// `1 - saliency`, by a uniformly chosen pixel within `window` of them, then
/// median-filters when `denoise` is set. `saliency` is `h x w x 1`.
pub fn pixel_deflect(x: &Image, saliency: &Image, cfg: &DeflectConfig) -> Result<Image, DefenceError> {
    let (h, w, c) = x.dims();
    if (saliency.height(), saliency.width(), saliency.channels()) != (h, w, 1) {
        return Err(DefenceError::BadConfig(format!(
            "saliency {:?} does not match image {h}x{w}",
            saliency.dims()
        )));
    }
    if cfg.window == 0 {
        return Err(DefenceError::BadConfig("deflection window must be at least 1".into()));
    }
    let mut data = x.data().to_vec();
    if cfg.deflections > 0 {
        let sal = normalize(h, w, saliency.data());
        let weights: Vec<f64> = sal.data().iter().map(|s| 1.0 - s).collect();
        let pick = WeightedIndex::new(&weights).expect("minimum saliency has weight 1");
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let r = cfg.window;
        for _ in 0..cfg.deflections {
            let t = pick.sample(&mut rng);
            let (ty, tx) = (t / w, t % w);
            let sy = rng.gen_range(ty.saturating_sub(r)..=(ty + r).min(h - 1));
            let sx = rng.gen_range(tx.saturating_sub(r)..=(tx + r).min(w - 1));
            let s = sy * w + sx;
            for ch in 0..c {
                data[t * c + ch] = data[s * c + ch];
            }
        }
    }
    if cfg.denoise {
        data = median3(&data, h, w, c);
    }
    Ok(Image::new(h, w, c, data).expect("values stay in range"))
}

/// 3x3 median per channel over the in-bounds neighborhood; even counts at
/// the border average the two middle values.
fn median3(data: &[f64], h: usize, w: usize, c: usize) -> Vec<f64> {
    let mut out = vec![0.0; data.len()];
    let mut buf = Vec::with_capacity(9);
    for y in 0..h {
        for x in 0..w {
            for ch in 0..c {
                buf.clear();
                for ny in y.saturating_sub(1)..=(y + 1).min(h - 1) {
                    for nx in x.saturating_sub(1)..=(x + 1).min(w - 1) {
                        buf.push(data[(ny * w + nx) * c + ch]);
                    }
                }
                buf.sort_by(f64::total_cmp);
                let n = buf.len();
                out[(y * w + x) * c + ch] = if n % 2 == 1 {
                    buf[n / 2]
                } else {
                    0.5 * (buf[n / 2 - 1] + buf[n / 2])
                };
            }
        }
    }
    out
}

/// `softmax(z / T)` of the teacher's logits for every sample.
pub fn soft_labels(teacher: &Network, data: &[Sample], temperature: f64) -> Result<Vec<Vec<f64>>, DefenceError> {
    data.iter()
        .map(|s| Ok(softmax_with_temperature(&teacher.logits(&s.image)?, temperature)?))
        .collect()
}

pub struct Distilled {
    pub teacher: Network,
    pub student: Network,
    pub soft_labels: Vec<Vec<f64>>,
}

/// Trains a teacher at temperature `T` on hard labels, relabels the data
/// with its softened outputs, trains a same-shaped student on those at `T`,
/// and returns the student set back to `T = 1`. Both nets train with the
/// learning rate multiplied by `sqrt(T)`. Sigmoid heads are first widened to a
/// two-way softmax.
pub fn distill(
    specs: &[LayerSpec],
    input: [usize; 3],
    data: &[Sample],
    train: &TrainConfig,
    cfg: &DefenceConfig,
) -> Result<Distilled, DefenceError> {
    cfg.validate()?;
    let t = cfg.temperature;
    let specs = match specs.last() {
        Some(LayerSpec::Softmax { .. }) => {
            let mut s = specs.to_vec();
            *s.last_mut().unwrap() = LayerSpec::Softmax { temperature: t };
            s
        }
        _ => promote_to_softmax(specs, t)?,
    };
    // The logit gradient at temperature T carries a 1/T factor. Undoing it in
    // full (lr * T) diverges once the logits have grown; sqrt(T) trains
    // reliably.
    let train = TrainConfig {
        loss: LossKind::CrossEntropy,
        learning_rate: train.learning_rate * t.sqrt(),
        ..train.clone()
    };
    let mut teacher = Network::build(&specs, input, cfg.seed)?;
    crate::gradnet::train(&mut teacher, data, &train)?;

    let soft = soft_labels(&teacher, data, t)?;
    let relabeled: Vec<Sample> = data
        .iter()
        .zip(&soft)
        .map(|(s, p)| Sample {
            image: s.image.clone(),
            target: Target::Soft(p.clone()),
        })
        .collect();
    let mut student = Network::build(&specs, input, cfg.seed.wrapping_add(1))?;
    crate::gradnet::train(&mut student, &relabeled, &train)?;
    student.set_temperature(1.0)?;
    debug_assert!(matches!(student.head(), Head::Softmax { .. }));
    Ok(Distilled {
        teacher,
        student,
        soft_labels: soft,
    })
}

/// Shannon entropy in nats.
pub fn entropy(p: &[f64]) -> f64 {
    -p.iter().filter(|&&v| v > 0.0).map(|v| v * v.ln()).sum::<f64>()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gradnet::train;

    fn blobs(n: usize, seed: u64) -> Vec<Sample> {
        // Class 1 has a bright left half.
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|i| {
                let label = i % 2;
                let data = (0..16)
                    .map(|p| {
                        let bright = label == 1 && p % 4 < 2;
                        let base = if bright { 0.7 } else { 0.3 };
                        base + rng.gen_range(-0.15..0.15)
                    })
                    .collect();
                Sample::new(Image::new(4, 4, 1, data).unwrap(), label)
            })
            .collect()
    }

    fn specs() -> Vec<LayerSpec> {
        vec![LayerSpec::dense(6), LayerSpec::Relu, LayerSpec::dense(1), LayerSpec::Sigmoid]
    }

    fn tcfg() -> TrainConfig {
        TrainConfig {
            epochs: 15,
            batch_size: 8,
            learning_rate: 0.3,
            seed: 5,
            loss: LossKind::Bce,
        }
    }

    #[test]
    fn zero_fraction_matches_plain_training() {
        let data = blobs(40, 1);
        let fresh = Network::build(&specs(), [4, 4, 1], 3).unwrap();
        let mut plain = fresh.clone();
        let plain_hist = train(&mut plain, &data, &tcfg()).unwrap();
        let cfg = DefenceConfig {
            adversarial_fraction: 0.0,
            ..Default::default()
        };
        let (hardened, hist) = adversarial_train(fresh, &plain, &data, &tcfg(), &cfg).unwrap();
        assert_eq!(hardened, plain);
        assert_eq!(hist, plain_hist);
    }

    #[test]
    fn adversarial_training_is_deterministic() {
        let data = blobs(30, 2);
        let fresh = Network::build(&specs(), [4, 4, 1], 3).unwrap();
        let mut reference = fresh.clone();
        train(&mut reference, &data, &tcfg()).unwrap();
        for regenerate in [Regenerate::Once, Regenerate::PerEpoch] {
            let cfg = DefenceConfig {
                regenerate,
                ..Default::default()
            };
            let a = adversarial_train(fresh.clone(), &reference, &data, &tcfg(), &cfg).unwrap();
            let b = adversarial_train(fresh.clone(), &reference, &data, &tcfg(), &cfg).unwrap();
            assert_eq!(a.0, b.0);
            assert_ne!(a.0, reference);
        }
    }

    #[test]
    fn deflect_identity_and_fixed_point() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let x = Image::new(5, 6, 3, (0..90).map(|_| rng.gen()).collect()).unwrap();
        let sal = Image::new(5, 6, 1, (0..30).map(|_| rng.gen()).collect()).unwrap();
        let off = DeflectConfig {
            deflections: 0,
            window: 2,
            denoise: false,
            seed: 1,
        };
        assert_eq!(pixel_deflect(&x, &sal, &off).unwrap(), x);

        let flat = Image::filled(5, 6, 3, 0.42);
        let on = DeflectConfig {
            deflections: 50,
            denoise: true,
            ..off
        };
        assert_eq!(pixel_deflect(&flat, &sal, &on).unwrap(), flat);
    }

    #[test]
    fn deflect_is_seeded_and_in_range() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let x = Image::new(16, 16, 1, (0..256).map(|_| rng.gen()).collect()).unwrap();
        let sal = Image::new(16, 16, 1, (0..256).map(|_| rng.gen()).collect()).unwrap();
        let cfg = DeflectConfig {
            deflections: 120,
            window: 3,
            denoise: false,
            seed: 11,
        };
        let a = pixel_deflect(&x, &sal, &cfg).unwrap();
        assert_eq!(a, pixel_deflect(&x, &sal, &cfg).unwrap());
        assert_ne!(a, x);
        assert_eq!(a.dims(), x.dims());
        let changed = a.data().iter().zip(x.data()).filter(|(p, q)| p != q).count();
        assert!(changed <= 120);
        let denoised = pixel_deflect(&x, &sal, &DeflectConfig { denoise: true, ..cfg }).unwrap();
        assert!(denoised.data().iter().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn deflection_avoids_salient_pixels() {
        // Only pixel 0 has zero saliency; every other pixel has weight 0.
        let mut s = vec![1.0; 16];
        s[0] = 0.0;
        let sal = Image::new(4, 4, 1, s).unwrap();
        let x = Image::new(4, 4, 1, (0..16).map(|i| i as f64 / 15.0).collect()).unwrap();
        let cfg = DeflectConfig {
            deflections: 30,
            window: 1,
            denoise: false,
            seed: 0,
        };
        let out = pixel_deflect(&x, &sal, &cfg).unwrap();
        assert_eq!(&out.data()[1..], &x.data()[1..]);
        assert!([0.0, 1.0 / 15.0, 4.0 / 15.0, 5.0 / 15.0].contains(&out.data()[0]));
    }

    #[test]
    fn median_filter_removes_impulse() {
        let mut d = vec![0.2; 25];
        d[12] = 1.0;
        let out = median3(&d, 5, 5, 1);
        assert!(out.iter().all(|v| (v - 0.2).abs() < 1e-15));
    }

    #[test]
    fn saliency_is_normalized() {
        let net = Network::build(&specs(), [4, 4, 1], 9).unwrap();
        let x = blobs(1, 3).remove(0).image;
        let s = saliency_map(&net, &x).unwrap();
        assert_eq!(s.dims(), (4, 4, 1));
        let max = s.data().iter().cloned().fold(0.0, f64::max);
        assert!((max - 1.0).abs() < 1e-12);
        assert!(s.data().iter().any(|&v| v == 0.0));
    }

    #[test]
    fn soft_labels_flatten_with_temperature() {
        let data = blobs(20, 6);
        let cfg = DefenceConfig {
            temperature: 1.0,
            ..Default::default()
        };
        let d = distill(&specs(), [4, 4, 1], &data, &tcfg(), &cfg).unwrap();
        for p in &d.soft_labels {
            assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
        assert_eq!(d.student.head(), Head::Softmax { temperature: 1.0, classes: 2 });
        let cold = soft_labels(&d.teacher, &data, 1.0).unwrap();
        let hot = soft_labels(&d.teacher, &data, 20.0).unwrap();
        let uniform = [0.5, 0.5];
        let kl = |p: &[f64]| p.iter().zip(&uniform).map(|(a, b)| a * (a / b).ln()).sum::<f64>();
        for (c, h) in cold.iter().zip(&hot) {
            assert!(entropy(h) >= entropy(c));
            assert!(kl(h) <= kl(c));
        }
    }

    #[test]
    fn distilled_student_learns() {
        let data = blobs(40, 7);
        let cfg = DefenceConfig {
            temperature: 20.0,
            ..Default::default()
        };
        let train_cfg = TrainConfig {
            epochs: 40,
            ..tcfg()
        };
        let d = distill(&specs(), [4, 4, 1], &data, &train_cfg, &cfg).unwrap();
        let correct = data
            .iter()
            .filter(|s| Target::Class(d.student.predict(&s.image).unwrap()) == s.target)
            .count();
        assert!(correct as f64 / data.len() as f64 > 0.8, "{correct}");
    }

    #[test]
    fn config_checks() {
        for bad in [
            DefenceConfig { adversarial_fraction: 1.5, ..Default::default() },
            DefenceConfig { temperature: 0.0, ..Default::default() },
            DefenceConfig { window: 0, ..Default::default() },
        ] {
            assert!(matches!(bad.validate(), Err(DefenceError::BadConfig(_))));
        }
        let s = DefenceScore { under_attack: 0.5, clean: 0.9 };
        assert_eq!(s.to_string(), "0.500/0.900");
    }
}
