use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Head, NetError, Network, Sample};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    Bce,
    CrossEntropy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
    pub loss: LossKind,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 20,
            batch_size: 16,
            learning_rate: 0.05,
            seed: 0,
            loss: LossKind::Bce,
        }
    }
}

impl TrainConfig {
    fn validate(&self, net: &Network) -> Result<(), NetError> {
        if !(self.learning_rate >= 0.0) || !self.learning_rate.is_finite() {
            return Err(NetError::BadConfig(format!(
                "learning rate {} must be finite and non-negative",
                self.learning_rate
            )));
        }
        if self.batch_size == 0 {
            return Err(NetError::BadConfig("batch size must be positive".into()));
        }
        match (self.loss, net.head()) {
            (LossKind::Bce, Head::Sigmoid) | (LossKind::CrossEntropy, Head::Softmax { .. }) => Ok(()),
            (loss, head) => Err(NetError::BadConfig(format!("loss {loss:?} does not match head {head:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    /// Mean training-mode loss over the epoch.
    pub loss: f64,
    /// Training-mode accuracy over the epoch.
    pub accuracy: f64,
}

/// Minibatch SGD whose shuffling and dropout draw from one seeded stream,
/// so a fixed seed reproduces the whole trajectory.
pub struct Trainer {
    cfg: TrainConfig,
    rng: ChaCha8Rng,
    epoch: usize,
}

impl Trainer {
    pub fn new(cfg: TrainConfig) -> Self {
        let rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        Trainer { cfg, rng, epoch: 0 }
    }

    pub fn config(&self) -> &TrainConfig {
        &self.cfg
    }

    pub fn run_epoch(&mut self, net: &mut Network, data: &[Sample]) -> Result<EpochStats, NetError> {
        if data.is_empty() {
            return Err(NetError::EmptyDataset);
        }
        self.cfg.validate(net)?;
        let mut order: Vec<usize> = (0..data.len()).collect();
        order.shuffle(&mut self.rng);

        let mut loss_sum = 0.0;
        let mut correct = 0;
        for chunk in order.chunks(self.cfg.batch_size) {
            let batch: Vec<&Sample> = chunk.iter().map(|&i| &data[i]).collect();
            let bg = net.batch_gradients(&batch, Some(&mut self.rng))?;
            loss_sum += bg.loss * batch.len() as f64;
            correct += bg.correct;
            let lr = self.cfg.learning_rate;
            for (p, g) in net.params.iter_mut().zip(&bg.grads) {
                if let (Some(p), Some(g)) = (p.as_mut(), g) {
                    for (w, d) in p.weight.data.iter_mut().zip(&g.weight.data) {
                        *w -= lr * d;
                    }
                    for (b, d) in p.bias.data.iter_mut().zip(&g.bias.data) {
                        *b -= lr * d;
                    }
                }
            }
        }
        let stats = EpochStats {
            epoch: self.epoch,
            loss: loss_sum / data.len() as f64,
            accuracy: correct as f64 / data.len() as f64,
        };
        self.epoch += 1;
        Ok(stats)
    }
}

/// Trains `net` in place for `cfg.epochs` epochs and returns the per-epoch
/// history.
pub fn train(net: &mut Network, data: &[Sample], cfg: &TrainConfig) -> Result<Vec<EpochStats>, NetError> {
    if data.is_empty() {
        return Err(NetError::EmptyDataset);
    }
    let mut trainer = Trainer::new(cfg.clone());
    (0..cfg.epochs).map(|_| trainer.run_epoch(net, data)).collect()
}
