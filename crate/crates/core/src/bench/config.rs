use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::BenchError;
use crate::attacks::{AttackConfig, AttackKind};
use crate::defences::DefenceConfig;
use crate::gradnet::{scaled_custom_cnn_specs, LayerSpec, TrainConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case")]
pub enum DataSource {
    /// Freshly generated blob images, regenerated for every trial seed.
    Synthetic { train: usize, test: usize, size: usize },
    /// Images listed in a manifest; the manifest seed fixes the split.
    Manifest { path: PathBuf },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NetworkPreset {
    /// conv4-pool-conv8-pool-dense16-dense1.
    ReducedCnn,
    /// The custom radiology CNN stack with configurable widths.
    CustomCnn,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NetworkConfig {
    pub preset: NetworkPreset,
    pub conv: [usize; 3],
    pub dense: [usize; 2],
}

impl Default for NetworkConfig {
    fn default() -> Self {
        NetworkConfig {
            preset: NetworkPreset::ReducedCnn,
            conv: [50, 75, 125],
            dense: [500, 250],
        }
    }
}

impl NetworkConfig {
    pub fn id(&self) -> String {
        match self.preset {
            NetworkPreset::ReducedCnn => "reduced_cnn".into(),
            NetworkPreset::CustomCnn => format!(
                "custom_cnn_{}_{}_{}_{}_{}",
                self.conv[0], self.conv[1], self.conv[2], self.dense[0], self.dense[1]
            ),
        }
    }

    pub fn specs(&self) -> Vec<LayerSpec> {
        match self.preset {
            NetworkPreset::ReducedCnn => vec![
                LayerSpec::conv(4, 3),
                LayerSpec::Relu,
                LayerSpec::max_pool(2),
                LayerSpec::conv(8, 3),
                LayerSpec::Relu,
                LayerSpec::max_pool(2),
                LayerSpec::Flatten,
                LayerSpec::dense(16),
                LayerSpec::Relu,
                LayerSpec::dense(1),
                LayerSpec::Sigmoid,
            ],
            NetworkPreset::CustomCnn => scaled_custom_cnn_specs(self.conv, self.dense),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackEntry {
    pub kind: AttackKind,
    #[serde(flatten)]
    pub config: AttackConfig,
}

impl AttackEntry {
    /// Operating points for the custom CNN on the MRI data.
    pub fn radiology_cnn(kind: AttackKind) -> Self {
        let base = AttackConfig::default();
        let config = match kind {
            AttackKind::Fgsm => AttackConfig {
                epsilon: 0.1,
                iterations: 1,
                ..base
            },
            AttackKind::Deepfool => AttackConfig {
                iterations: 50,
                overshoot: 0.06,
                ..base
            },
            AttackKind::Pgd => AttackConfig {
                epsilon: 0.03,
                iterations: 20,
                ..base
            },
            AttackKind::Ifgsm => AttackConfig {
                epsilon: 0.02,
                iterations: 12,
                ..base
            },
            AttackKind::Mifgsm => AttackConfig {
                epsilon: 0.02,
                iterations: 12,
                initial_decay: 0.5,
                ..base
            },
            AttackKind::Kryptonite | AttackKind::KryptoniteMasked => AttackConfig {
                epsilon: 0.02,
                iterations: 16,
                initial_decay: 0.5,
                ..base
            },
        };
        AttackEntry { kind, config }
    }

    /// Kryptonite on EfficientNet for the dermatology data.
    pub fn dermatology_effnet_kryptonite() -> Self {
        AttackEntry {
            kind: AttackKind::Kryptonite,
            config: AttackConfig {
                epsilon: 0.01,
                iterations: 15,
                initial_decay: 0.5,
                ..Default::default()
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    Epsilon,
    DecayWeight,
    Overshoot,
}

impl SweepAxis {
    pub fn name(self) -> &'static str {
        match self {
            SweepAxis::Epsilon => "epsilon",
            SweepAxis::DecayWeight => "decay_weight",
            SweepAxis::Overshoot => "overshoot",
        }
    }

    pub fn apply(self, cfg: &AttackConfig, value: f64) -> AttackConfig {
        let mut c = cfg.clone();
        match self {
            SweepAxis::Epsilon => c.epsilon = value,
            SweepAxis::DecayWeight => c.decay_weight = value,
            SweepAxis::Overshoot => c.overshoot = value,
        }
        c
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub axis: SweepAxis,
    pub values: Vec<f64>,
    /// Attacks to sweep; each uses its entry in `attacks` as the base config.
    pub attacks: Vec<AttackKind>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub name: String,
    pub seed: u64,
    pub trials: usize,
    pub data: DataSource,
    pub network: NetworkConfig,
    pub train: TrainConfig,
    pub attacks: Vec<AttackEntry>,
    pub defences: Vec<DefenceConfig>,
    /// Test samples attacked per trial; all when absent.
    pub attack_samples: Option<usize>,
    pub sweep: Option<SweepConfig>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            name: "experiment".into(),
            seed: 0,
            trials: 1,
            data: DataSource::Synthetic {
                train: 2000,
                test: 500,
                size: 32,
            },
            network: NetworkConfig::default(),
            train: TrainConfig::default(),
            attacks: Vec::new(),
            defences: Vec::new(),
            attack_samples: None,
            sweep: None,
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, BenchError> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| BenchError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, BenchError> {
        let text = std::fs::read_to_string(path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => BenchError::MissingFile(path.to_path_buf()),
            _ => BenchError::Io(e),
        })?;
        let mut cfg = Self::from_toml(&text).map_err(|e| e.in_stage(path.display().to_string()))?;
        // Relative manifest paths resolve against the config file.
        if let DataSource::Manifest { path: m } = &mut cfg.data {
            if m.is_relative() {
                *m = path.parent().unwrap_or(Path::new(".")).join(&*m);
            }
        }
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), BenchError> {
        if self.trials == 0 {
            return Err(BenchError::Config("trials must be at least 1".into()));
        }
        if let DataSource::Synthetic { train, test, size } = self.data {
            if train < 4 || test < 4 || size < 32 {
                return Err(BenchError::Config("synthetic data needs >= 4 images per split and size >= 32".into()));
            }
        }
        for a in &self.attacks {
            a.config
                .validate()
                .map_err(|e| BenchError::Config(format!("attack {}: {e}", a.kind.name())))?;
        }
        for d in &self.defences {
            d.validate()
                .map_err(|e| BenchError::Config(format!("defence {}: {e}", d.kind.name())))?;
        }
        if let Some(s) = &self.sweep {
            if s.values.is_empty() || s.attacks.is_empty() {
                return Err(BenchError::Config("sweep needs a nonempty grid and attack list".into()));
            }
            for k in &s.attacks {
                if !self.attacks.iter().any(|a| a.kind == *k) {
                    return Err(BenchError::Config(format!("sweep attack {} has no [[attacks]] entry", k.name())));
                }
            }
        }
        Ok(())
    }

    pub fn attack(&self, kind: AttackKind) -> Option<&AttackEntry> {
        self.attacks.iter().find(|a| a.kind == kind)
    }
}
