use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::BenchError;
use crate::gradnet::Sample;
use crate::imagekit::netpbm::{self, NetpbmError};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Split {
    pub train: f64,
    pub val: f64,
    pub test: f64,
}

impl Default for Split {
    fn default() -> Self {
        Split {
            train: 0.7,
            val: 0.1,
            test: 0.2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub file: String,
    pub label: i64,
    /// Optional ground-truth RoI mask.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub roi: Option<String>,
}

/// Image list with labels. A relative `root` resolves against the directory
/// holding the manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub root: PathBuf,
    pub entries: Vec<ManifestEntry>,
    #[serde(default)]
    pub split: Split,
    #[serde(default)]
    pub seed: u64,
}

impl DatasetManifest {
    pub fn save(&self, path: &Path) -> Result<(), BenchError> {
        let json = serde_json::to_vec_pretty(self).expect("manifest serializes");
        std::fs::write(path, json)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, BenchError> {
        let bytes = std::fs::read(path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => BenchError::MissingFile(path.to_path_buf()),
            _ => BenchError::Io(e),
        })?;
        serde_json::from_slice(&bytes).map_err(|e| BenchError::BadFormat {
            path: path.to_path_buf(),
            msg: e.to_string(),
        })
    }

    /// Deterministic partition of entry indices into train, val and test.
    pub fn partition(&self) -> Result<[Vec<usize>; 3], BenchError> {
        let Split { train, val, test } = self.split;
        if [train, val, test].iter().any(|f| !(0.0..=1.0).contains(f)) || (train + val + test - 1.0).abs() > 1e-9 {
            return Err(BenchError::Config(format!("split {train}/{val}/{test} must be fractions summing to 1")));
        }
        let n = self.entries.len();
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(self.seed));
        let n_train = ((train * n as f64).round() as usize).min(n);
        let n_val = ((val * n as f64).round() as usize).min(n - n_train);
        let test_idx = order.split_off(n_train + n_val);
        let val_idx = order.split_off(n_train);
        Ok([order, val_idx, test_idx])
    }
}

pub struct Dataset {
    /// Every entry, in manifest order.
    pub samples: Vec<Sample>,
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

impl Dataset {
    pub fn subset(&self, idx: &[usize]) -> Vec<Sample> {
        idx.iter().map(|&i| self.samples[i].clone()).collect()
    }
}

fn read_image(path: &Path) -> Result<crate::imagekit::Image, BenchError> {
    netpbm::load(path).map_err(|e| match e {
        NetpbmError::Io(io) if io.kind() == std::io::ErrorKind::NotFound => BenchError::MissingFile(path.to_path_buf()),
        NetpbmError::Io(io) => BenchError::Io(io),
        NetpbmError::BadFormat(msg) => BenchError::BadFormat {
            path: path.to_path_buf(),
            msg,
        },
    })
}

/// Loads every image named by the manifest at `path`, normalized to
/// `[0, 1]`, and splits them by the manifest seed.
pub fn load_dataset(path: &Path) -> Result<Dataset, BenchError> {
    let manifest = DatasetManifest::load(path)?;
    let base = path.parent().unwrap_or(Path::new("."));
    let root = if manifest.root.is_absolute() {
        manifest.root.clone()
    } else {
        base.join(&manifest.root)
    };
    let mut samples = Vec::with_capacity(manifest.entries.len());
    for e in &manifest.entries {
        let file = root.join(&e.file);
        if !(0..=1).contains(&e.label) {
            return Err(BenchError::BadLabel {
                path: file,
                label: e.label,
            });
        }
        samples.push(Sample::new(read_image(&file)?, e.label as usize));
    }
    let [train, val, test] = manifest.partition()?;
    Ok(Dataset {
        samples,
        train,
        val,
        test,
    })
}
