//! White-box, untargeted L∞ attacks: FGSM, I-FGSM, PGD, MI-FGSM, DeepFool
//! and Kryptonite, whose momentum decay is driven by how far each step moves
//! the pixels inside a fixed region of interest.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gradnet::{NetError, Network, Target};
use crate::imagekit::{roi_mask, Image, ImageError, Kernel, RoiMask, RoiOptions};
use crate::metrics::{lp_norm, perturbation_percent, Norm};

/// Lower bound on the progress term so the decay factor stays finite.
pub const PROGRESS_FLOOR: f64 = 1e-8;

/// Smallest margin DeepFool steps over, so a point sitting exactly on the
/// boundary still moves.
const MIN_MARGIN: f64 = 1e-6;

/// Accumulated gradients above this are rescaled; only their sign matters
/// once they dwarf a single normalized gradient.
const RESCALE_ABOVE: f64 = 1e250;

#[derive(Debug, Error)]
pub enum AttackError {
    #[error(transparent)]
    Net(#[from] NetError),
    #[error(transparent)]
    Image(#[from] ImageError),
    #[error("input gradient vanished at iteration {0}")]
    ZeroGradient(usize),
    #[error("region of interest is empty")]
    EmptyRoi,
    #[error("invalid attack config: {0}")]
    BadConfig(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttackKind {
    Fgsm,
    Ifgsm,
    Pgd,
    Mifgsm,
    Deepfool,
    Kryptonite,
    KryptoniteMasked,
}

impl AttackKind {
    pub const ALL: [AttackKind; 7] = [
        AttackKind::Fgsm,
        AttackKind::Ifgsm,
        AttackKind::Pgd,
        AttackKind::Mifgsm,
        AttackKind::Deepfool,
        AttackKind::Kryptonite,
        AttackKind::KryptoniteMasked,
    ];

    pub fn name(self) -> &'static str {
        match self {
            AttackKind::Fgsm => "fgsm",
            AttackKind::Ifgsm => "ifgsm",
            AttackKind::Pgd => "pgd",
            AttackKind::Mifgsm => "mifgsm",
            AttackKind::Deepfool => "deepfool",
            AttackKind::Kryptonite => "kryptonite",
            AttackKind::KryptoniteMasked => "kryptonite_masked",
        }
    }

    pub fn uses_roi(self) -> bool {
        matches!(self, AttackKind::Kryptonite | AttackKind::KryptoniteMasked)
    }
}

impl std::str::FromStr for AttackKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        AttackKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| format!("unknown attack '{s}'"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AttackConfig {
    pub epsilon: f64,
    pub iterations: usize,
    /// Step size; `epsilon / iterations` when absent.
    pub alpha: Option<f64>,
    /// ω, scales the progress-driven decay factor.
    pub decay_weight: f64,
    /// μ₀ for Kryptonite, the fixed μ for MI-FGSM.
    pub initial_decay: f64,
    /// DeepFool overshoot η.
    pub overshoot: f64,
    /// Side of the square RoI dilation kernel.
    pub kernel: usize,
    pub seed: u64,
    /// Re-extract the RoI from every iterate instead of reusing the clean one.
    pub reextract: bool,
}

impl Default for AttackConfig {
    fn default() -> Self {
        AttackConfig {
            epsilon: 0.02,
            iterations: 16,
            alpha: None,
            decay_weight: 0.5,
            initial_decay: 0.5,
            overshoot: 0.06,
            kernel: 5,
            seed: 0,
            reextract: false,
        }
    }
}

impl AttackConfig {
    pub fn validate(&self) -> Result<(), AttackError> {
        let bad = |m: String| Err(AttackError::BadConfig(m));
        if !(0.0..=1.0).contains(&self.epsilon) {
            return bad(format!("epsilon {} outside [0, 1]", self.epsilon));
        }
        if self.iterations == 0 {
            return bad("iterations must be at least 1".into());
        }
        if let Some(a) = self.alpha {
            if !(a > 0.0 && a.is_finite()) {
                return bad(format!("alpha {a} must be positive"));
            }
        }
        for (name, v) in [
            ("decay_weight", self.decay_weight),
            ("initial_decay", self.initial_decay),
            ("overshoot", self.overshoot),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return bad(format!("{name} {v} must be finite and non-negative"));
            }
        }
        if self.kernel == 0 || self.kernel % 2 == 0 {
            return bad(format!("kernel size {} must be odd", self.kernel));
        }
        Ok(())
    }

    pub fn step(&self) -> f64 {
        self.alpha.unwrap_or(self.epsilon / self.iterations as f64)
    }

    pub fn roi_options(&self) -> Result<RoiOptions, AttackError> {
        Ok(RoiOptions::with_kernel(Kernel::square(self.kernel)?))
    }
}

/// Kryptonite's running state between iterations.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentumState {
    pub g: Vec<f64>,
    pub mu: f64,
    pub progress: f64,
}

/// One Kryptonite iteration: the progress it made and the decay factor it
/// produced for the next step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecayStep {
    pub progress: f64,
    pub mu: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackResult {
    #[serde(skip)]
    pub adversarial: Option<Image>,
    pub linf: f64,
    pub l2: f64,
    /// `None` when the clean image is all zeros.
    pub l2_percent: Option<f64>,
    pub iterations_used: usize,
    /// Prediction on the adversarial image differs from the reference label.
    pub success: bool,
    /// Wall-clock seconds spent generating the sample.
    pub elapsed: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub decay_trace: Vec<DecayStep>,
}

impl AttackResult {
    pub fn image(&self) -> &Image {
        self.adversarial.as_ref().expect("adversarial image present")
    }

    fn finish(
        net: &Network,
        x: &Image,
        adv: Vec<f64>,
        reference: usize,
        iterations_used: usize,
        started: Instant,
        decay_trace: Vec<DecayStep>,
    ) -> Result<Self, AttackError> {
        let elapsed = started.elapsed().as_secs_f64();
        let (h, w, c) = x.dims();
        let adv = Image::new(h, w, c, adv)?;
        let linf = lp_norm(x, &adv, Norm::Inf).expect("same dims");
        let l2 = lp_norm(x, &adv, Norm::L2).expect("same dims");
        let l2_percent = perturbation_percent(x, &adv).ok();
        let success = net.predict(&adv)? != reference;
        Ok(AttackResult {
            adversarial: Some(adv),
            linf,
            l2,
            l2_percent,
            iterations_used,
            success,
            elapsed,
            decay_trace,
        })
    }
}

#[inline]
fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// `Clip_{x,ε}`: projection into `[x - ε, x + ε] ∩ [0, 1]`.
#[inline]
pub fn clip(v: f64, x: f64, eps: f64) -> f64 {
    v.clamp((x - eps).max(0.0), (x + eps).min(1.0))
}

fn image_like(x: &Image, data: Vec<f64>) -> Result<Image, AttackError> {
    let (h, w, c) = x.dims();
    Ok(Image::new(h, w, c, data)?)
}

fn loss_gradient(net: &Network, x: &Image, cur: &[f64], y: usize) -> Result<Vec<f64>, AttackError> {
    let img = image_like(x, cur.to_vec())?;
    Ok(net.input_gradient(&img, &Target::Class(y))?.data().to_vec())
}

/// `x* = clamp01(x + ε·sign(∇ₓJ(x, y)))`.
pub fn fgsm(net: &Network, x: &Image, y: usize, cfg: &AttackConfig) -> Result<AttackResult, AttackError> {
    cfg.validate()?;
    let started = Instant::now();
    let g = loss_gradient(net, x, x.data(), y)?;
    let adv = x
        .data()
        .iter()
        .zip(&g)
        .map(|(&xi, &gi)| clip(xi + cfg.epsilon * sign(gi), xi, cfg.epsilon))
        .collect();
    AttackResult::finish(net, x, adv, y, 1, started, Vec::new())
}

/// How the sign direction is formed each step.
enum Direction<'a> {
    Raw,
    Momentum(f64),
    Roi {
        roi: &'a RoiMask,
        weight: f64,
        masked: bool,
        reextract: Option<RoiOptions>,
    },
}

fn l1(v: &[f64]) -> f64 {
    v.iter().map(|g| g.abs()).sum()
}

/// The shared sign-step loop behind I-FGSM, PGD, MI-FGSM and Kryptonite.
#[allow(clippy::too_many_arguments)]
fn iterate(
    net: &Network,
    x: &Image,
    y: usize,
    start: Vec<f64>,
    cfg: &AttackConfig,
    dir: Direction,
    started: Instant,
) -> Result<AttackResult, AttackError> {
    let eps = cfg.epsilon;
    let alpha = cfg.step();
    let c = x.channels();
    let mut cur = start;
    let mut state = MomentumState {
        g: vec![0.0; x.len()],
        mu: cfg.initial_decay,
        progress: 0.0,
    };
    let mut trace = Vec::new();
    let mut region: Option<RoiMask> = None;

    for t in 0..cfg.iterations {
        let grad = loss_gradient(net, x, &cur, y)?;
        let step_dir: Vec<f64> = match dir {
            Direction::Raw => grad.iter().map(|&v| sign(v)).collect(),
            Direction::Momentum(_) | Direction::Roi { .. } => {
                let mu = if let Direction::Momentum(mu) = dir { mu } else { state.mu };
                let norm = l1(&grad);
                if norm == 0.0 || !norm.is_finite() {
                    return Err(AttackError::ZeroGradient(t));
                }
                for (gi, di) in state.g.iter_mut().zip(&grad) {
                    *gi = mu * *gi + di / norm;
                }
                if state.g.iter().any(|v| v.abs() > RESCALE_ABOVE) {
                    state.g.iter_mut().for_each(|v| *v *= 1.0 / RESCALE_ABOVE);
                }
                state.g.iter().map(|&v| sign(v)).collect()
            }
        };

        let mut next = Vec::with_capacity(cur.len());
        for (i, ((&ci, &xi), &s)) in cur.iter().zip(x.data()).zip(&step_dir).enumerate() {
            let moves = match dir {
                Direction::Roi { roi, masked: true, .. } => roi.data()[i / c],
                _ => true,
            };
            next.push(if moves { clip(ci + alpha * s, xi, eps) } else { ci });
        }

        if let Direction::Roi { roi, weight, reextract, .. } = &dir {
            let progress = match reextract {
                None => masked_distance(&cur, &next, roi.data(), c),
                Some(opts) => {
                    let prev = region.take().unwrap_or_else(|| (*roi).clone());
                    let fresh = roi_mask(&image_like(x, next.clone())?, opts).unwrap_or_else(|_| prev.clone());
                    let p = two_mask_distance(&cur, prev.data(), &next, fresh.data(), c);
                    region = Some(fresh);
                    p
                }
            };
            state.progress = progress;
            state.mu = weight / progress.max(PROGRESS_FLOOR);
            trace.push(DecayStep {
                progress,
                mu: state.mu,
            });
        }
        cur = next;
    }
    AttackResult::finish(net, x, cur, y, cfg.iterations, started, trace)
}

fn masked_distance(a: &[f64], b: &[f64], mask: &[bool], c: usize) -> f64 {
    a.iter()
        .zip(b)
        .enumerate()
        .filter(|(i, _)| mask[i / c])
        .map(|(_, (p, q))| (q - p) * (q - p))
        .sum::<f64>()
        .sqrt()
}

fn two_mask_distance(a: &[f64], ma: &[bool], b: &[f64], mb: &[bool], c: usize) -> f64 {
    a.iter()
        .zip(b)
        .enumerate()
        .map(|(i, (p, q))| {
            let p = if ma[i / c] { *p } else { 0.0 };
            let q = if mb[i / c] { *q } else { 0.0 };
            (q - p) * (q - p)
        })
        .sum::<f64>()
        .sqrt()
}

/// Iterated sign steps of size α, each clipped to the ε-ball.
pub fn ifgsm(net: &Network, x: &Image, y: usize, cfg: &AttackConfig) -> Result<AttackResult, AttackError> {
    cfg.validate()?;
    let started = Instant::now();
    iterate(net, x, y, x.data().to_vec(), cfg, Direction::Raw, started)
}

/// I-FGSM from a seeded uniform start inside the ε-ball.
pub fn pgd(net: &Network, x: &Image, y: usize, cfg: &AttackConfig) -> Result<AttackResult, AttackError> {
    cfg.validate()?;
    let started = Instant::now();
    let eps = cfg.epsilon;
    let start = if eps > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        x.data()
            .iter()
            .map(|&xi| clip(xi + rng.gen_range(-eps..=eps), xi, eps))
            .collect()
    } else {
        x.data().to_vec()
    };
    iterate(net, x, y, start, cfg, Direction::Raw, started)
}

/// Momentum iterative FGSM with fixed decay `cfg.initial_decay`.
pub fn mifgsm(net: &Network, x: &Image, y: usize, cfg: &AttackConfig) -> Result<AttackResult, AttackError> {
    cfg.validate()?;
    let started = Instant::now();
    iterate(net, x, y, x.data().to_vec(), cfg, Direction::Momentum(cfg.initial_decay), started)
}

fn check_roi(x: &Image, roi: &RoiMask) -> Result<(), AttackError> {
    if (roi.height(), roi.width()) != (x.height(), x.width()) {
        return Err(ImageError::DimensionMismatch {
            left: x.dims(),
            right: (roi.height(), roi.width(), x.channels()),
        }
        .into());
    }
    if roi.area() == 0 {
        return Err(AttackError::EmptyRoi);
    }
    Ok(())
}

fn kryptonite_impl(
    net: &Network,
    x: &Image,
    y: usize,
    roi: &RoiMask,
    cfg: &AttackConfig,
    masked: bool,
    started: Instant,
) -> Result<AttackResult, AttackError> {
    cfg.validate()?;
    check_roi(x, roi)?;
    let reextract = if cfg.reextract { Some(cfg.roi_options()?) } else { None };
    let dir = Direction::Roi {
        roi,
        weight: cfg.decay_weight,
        masked,
        reextract,
    };
    iterate(net, x, y, x.data().to_vec(), cfg, dir, started)
}

/// MI-FGSM whose decay factor after each step is `ω / P`, with `P` the
/// Euclidean distance the step moved the RoI-masked image.
pub fn kryptonite(
    net: &Network,
    x: &Image,
    y: usize,
    roi: &RoiMask,
    cfg: &AttackConfig,
) -> Result<AttackResult, AttackError> {
    kryptonite_impl(net, x, y, roi, cfg, false, Instant::now())
}

/// Kryptonite with every pixel outside the RoI held fixed.
pub fn kryptonite_masked(
    net: &Network,
    x: &Image,
    y: usize,
    roi: &RoiMask,
    cfg: &AttackConfig,
) -> Result<AttackResult, AttackError> {
    kryptonite_impl(net, x, y, roi, cfg, true, Instant::now())
}

/// `P = ‖ρ_next − ρ_prev‖₂` between two RoI-masked images.
pub fn roi_progress(rho_prev: &Image, rho_next: &Image) -> Result<f64, AttackError> {
    Ok(lp_norm(rho_prev, rho_next, Norm::L2).map_err(|_| ImageError::DimensionMismatch {
        left: rho_prev.dims(),
        right: rho_next.dims(),
    })?)
}

/// L∞ DeepFool for a binary head. Linearizes the decision margin `f` and
/// steps `-(|f| / ‖∇f‖₁)·sign(f)·sign(∇f)` until the label changes or the
/// iteration budget runs out. The accumulated step is applied with overshoot
/// `1 + η` and projected into the ε-ball.
pub fn deepfool_linf(net: &Network, x: &Image, cfg: &AttackConfig) -> Result<AttackResult, AttackError> {
    cfg.validate()?;
    let started = Instant::now();
    let eps = cfg.epsilon;
    let scale = 1.0 + cfg.overshoot;
    let original = net.predict(x)?;
    let side = if original == 1 { 1.0 } else { -1.0 };
    let mut total = vec![0.0; x.len()];
    let mut cur = x.clone();
    let mut used = 0;

    for t in 0..cfg.iterations {
        if t > 0 && net.predict(&cur)? != original {
            break;
        }
        let (f, grad) = net.margin_and_gradient(&cur)?;
        let norm = l1(grad.data());
        if norm == 0.0 || !norm.is_finite() {
            return Err(AttackError::ZeroGradient(t));
        }
        let size = f.abs().max(MIN_MARGIN) / norm;
        for (r, g) in total.iter_mut().zip(grad.data()) {
            *r -= side * size * sign(*g);
        }
        let data = x
            .data()
            .iter()
            .zip(&total)
            .map(|(&xi, &r)| clip(xi + scale * r, xi, eps))
            .collect();
        cur = image_like(x, data)?;
        used = t + 1;
    }
    AttackResult::finish(net, x, cur.into_data(), original, used, started, Vec::new())
}

/// RoI of the clean image, or the whole frame when extraction finds no
/// region (flat or featureless images).
pub fn clean_roi(x: &Image, cfg: &AttackConfig) -> Result<RoiMask, AttackError> {
    match roi_mask(x, &cfg.roi_options()?) {
        Ok(m) => Ok(m),
        Err(ImageError::NoContour | ImageError::DegenerateImage) => Ok(RoiMask::full(x.height(), x.width())),
        Err(e) => Err(e.into()),
    }
}

/// Runs `kind` on one sample. RoI attacks extract the clean RoI when none is
/// supplied, and that extraction counts toward the elapsed time.
pub fn run_attack(
    kind: AttackKind,
    net: &Network,
    x: &Image,
    y: usize,
    roi: Option<&RoiMask>,
    cfg: &AttackConfig,
) -> Result<AttackResult, AttackError> {
    match kind {
        AttackKind::Fgsm => fgsm(net, x, y, cfg),
        AttackKind::Ifgsm => ifgsm(net, x, y, cfg),
        AttackKind::Pgd => pgd(net, x, y, cfg),
        AttackKind::Mifgsm => mifgsm(net, x, y, cfg),
        AttackKind::Deepfool => deepfool_linf(net, x, cfg),
        AttackKind::Kryptonite | AttackKind::KryptoniteMasked => {
            let started = Instant::now();
            let owned;
            let roi = match roi {
                Some(r) => r,
                None => {
                    owned = clean_roi(x, cfg)?;
                    &owned
                }
            };
            kryptonite_impl(net, x, y, roi, cfg, kind == AttackKind::KryptoniteMasked, started)
        }
    }
}
