//! Synthetic "lesion" images: a bright ellipse on a textured dark
//! background. Label 1 images carry a dark core inside the ellipse.

use std::f64::consts::PI;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::dataset::{DatasetManifest, ManifestEntry, Split};
use super::BenchError;
use crate::gradnet::Sample;
use crate::imagekit::{netpbm, BinaryMask, Image};

pub struct SynthSet {
    pub samples: Vec<Sample>,
    /// Exact blob pixels, core included.
    pub truths: Vec<BinaryMask>,
}

impl SynthSet {
    pub fn labels(&self) -> Vec<usize> {
        self.samples.iter().map(|s| match s.target {
            crate::gradnet::Target::Class(k) => k,
            _ => unreachable!("synthetic labels are hard"),
        })
        .collect()
    }
}

struct Ellipse {
    cy: f64,
    cx: f64,
    a: f64,
    b: f64,
    theta: f64,
}

impl Ellipse {
    fn contains(&self, y: f64, x: f64) -> bool {
        let (s, c) = self.theta.sin_cos();
        let (dy, dx) = (y - self.cy, x - self.cx);
        let u = dx * c + dy * s;
        let v = -dx * s + dy * c;
        (u / self.a).powi(2) + (v / self.b).powi(2) <= 1.0
    }
}

fn quantize(v: f64) -> f64 {
    (v.clamp(0.0, 1.0) * 255.0).round() / 255.0
}

fn one(size: usize, label: usize, rng: &mut ChaCha8Rng) -> (Image, BinaryMask) {
    let s = size as f64;
    let a = rng.gen_range(0.25..0.36) * s;
    let b = rng.gen_range(0.25..0.36) * s;
    let reach = a.max(b) + 2.0;
    let blob = Ellipse {
        cy: rng.gen_range(reach..s - 1.0 - reach),
        cx: rng.gen_range(reach..s - 1.0 - reach),
        a,
        b,
        theta: rng.gen_range(0.0..PI),
    };
    let core = (label == 1).then(|| {
        let r = 0.3 * a.min(b);
        Ellipse {
            cy: blob.cy + rng.gen_range(-r..r),
            cx: blob.cx + rng.gen_range(-r..r),
            a: rng.gen_range(0.12..0.16) * s,
            b: rng.gen_range(0.12..0.16) * s,
            theta: rng.gen_range(0.0..PI),
        }
    });
    let background = rng.gen_range(0.15..0.3);
    let bright = rng.gen_range(0.65..0.85);
    let dark = bright - rng.gen_range(0.3..0.4);
    let (fy, fx, phase) = (rng.gen_range(0.2..0.6), rng.gen_range(0.2..0.6), rng.gen_range(0.0..2.0 * PI));

    let mut data = Vec::with_capacity(size * size);
    let mut truth = Vec::with_capacity(size * size);
    for y in 0..size {
        for x in 0..size {
            let (yf, xf) = (y as f64, x as f64);
            let inside = blob.contains(yf, xf);
            let texture = 0.03 * (fy * yf + fx * xf + phase).sin() + rng.gen_range(-0.04..0.04);
            let v = match (&core, inside) {
                (Some(c), true) if c.contains(yf, xf) => dark + rng.gen_range(-0.03..0.03),
                (_, true) => bright + rng.gen_range(-0.03..0.03),
                (_, false) => background + texture,
            };
            data.push(quantize(v));
            truth.push(inside);
        }
    }
    (
        Image::new(size, size, 1, data).expect("quantized values are in range"),
        BinaryMask::new(size, size, truth).expect("sizes agree"),
    )
}

/// `n` images of `size x size` with labels alternating 0, 1, 0, ...
/// Pixel values are multiples of 1/255 so PGM round trips are exact.
pub fn synth_dataset(n: usize, size: usize, seed: u64) -> Result<SynthSet, BenchError> {
    if n < 4 || size < 32 {
        return Err(BenchError::Config(format!("synthetic set needs n >= 4 and size >= 32, got {n} and {size}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut samples = Vec::with_capacity(n);
    let mut truths = Vec::with_capacity(n);
    for i in 0..n {
        let label = i % 2;
        let (img, truth) = one(size, label, &mut rng);
        samples.push(Sample::new(img, label));
        truths.push(truth);
    }
    Ok(SynthSet { samples, truths })
}

/// Writes images, ground-truth masks and `manifest.json` under `dir`.
pub fn write_synth(set: &SynthSet, dir: &Path, split: Split, seed: u64) -> Result<DatasetManifest, BenchError> {
    std::fs::create_dir_all(dir)?;
    let labels = set.labels();
    let mut entries = Vec::with_capacity(set.samples.len());
    for (i, (s, truth)) in set.samples.iter().zip(&set.truths).enumerate() {
        let file = format!("img_{i:05}.pgm");
        let roi = format!("roi_{i:05}.pgm");
        netpbm::save(&s.image, dir.join(&file)).map_err(|e| BenchError::Io(to_io(e)))?;
        netpbm::save_mask(truth, dir.join(&roi)).map_err(|e| BenchError::Io(to_io(e)))?;
        entries.push(ManifestEntry {
            file,
            label: labels[i] as i64,
            roi: Some(roi),
        });
    }
    let manifest = DatasetManifest {
        root: ".".into(),
        entries,
        split,
        seed,
    };
    manifest.save(&dir.join("manifest.json"))?;
    Ok(manifest)
}

fn to_io(e: netpbm::NetpbmError) -> std::io::Error {
    match e {
        netpbm::NetpbmError::Io(e) => e,
        other => std::io::Error::new(std::io::ErrorKind::InvalidData, other.to_string()),
    }
}
