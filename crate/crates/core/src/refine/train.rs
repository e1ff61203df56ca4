use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::grad::{gradients, BatchInput, TripletInput};
use super::head::{ProjectionHead, DEFAULT_OUT_DIM};
use super::sample::{sample_pair_batches, sample_triplets};
use crate::corpus::{Corpus, PostId, SplitSpec};
use crate::embedding::EmbeddingStore;
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::util;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LossKind {
    Triplet,
    Mnr,
}

impl std::fmt::Display for LossKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            LossKind::Triplet => "triplet",
            LossKind::Mnr => "mnr",
        })
    }
}

impl std::str::FromStr for LossKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "triplet" => Ok(LossKind::Triplet),
            "mnr" => Ok(LossKind::Mnr),
            other => Err(Error::Argument(format!("unknown loss {other:?} (expected triplet or mnr)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingConfig {
    pub loss: LossKind,
    /// Triplet margin in cosine-distance units.
    pub margin: f64,
    /// Multiplier on cosine scores before the MNR softmax.
    pub scale: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub out_dim: usize,
    pub seed: u64,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self {
            loss: LossKind::Mnr,
            margin: 0.5,
            scale: 20.0,
            batch_size: 64,
            epochs: 10,
            learning_rate: super::DEFAULT_LEARNING_RATE,
            out_dim: DEFAULT_OUT_DIM,
            seed: 0,
        }
    }
}

impl TrainingConfig {
    pub fn validate(&self) -> Result<()> {
        let min_batch = if self.loss == LossKind::Mnr { 2 } else { 1 };
        if self.batch_size < min_batch {
            return Err(Error::Argument(format!("batch size must be at least {min_batch} for {}", self.loss)));
        }
        if !(self.margin >= 0.0 && self.margin.is_finite()) {
            return Err(Error::Argument("margin must be a finite value ≥ 0".into()));
        }
        if !(self.scale > 0.0 && self.scale.is_finite()) {
            return Err(Error::Argument("scale must be positive".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Argument("learning rate must be positive".into()));
        }
        if self.out_dim == 0 {
            return Err(Error::Argument("out_dim must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingLog {
    pub config: TrainingConfig,
    pub epoch_losses: Vec<f64>,
    pub steps: usize,
    pub train_pairs_used: usize,
    /// Training pairs skipped because an endpoint has no embedding.
    pub skipped_pairs: usize,
    pub threads: usize,
    pub corpus_hash: String,
    pub wall_time_secs: f64,
}

impl TrainingLog {
    pub fn first_loss(&self) -> Option<f64> {
        self.epoch_losses.first().copied()
    }

    pub fn last_loss(&self) -> Option<f64> {
        self.epoch_losses.last().copied()
    }
}

/// Trains a projection head with mini-batch SGD on the split's training
/// pairs. Accumulation happens in `F`; use `f64` for training.
pub fn train<F: Scalar>(
    corpus: &Corpus,
    split: &SplitSpec,
    store: &EmbeddingStore,
    config: &TrainingConfig,
) -> Result<(ProjectionHead<F>, TrainingLog)> {
    config.validate()?;
    let started = Instant::now();
    let mut head = ProjectionHead::<F>::init(store.dim(), config.out_dim, config.seed)?;

    let usable: Vec<_> =
        split.train_pairs.iter().copied().filter(|p| store.contains(p.dup_id) && store.contains(p.orig_id)).collect();
    let skipped_pairs = split.train_pairs.len() - usable.len();
    if skipped_pairs > 0 {
        log::warn!("{skipped_pairs} training pairs lack embeddings and are skipped");
    }
    let usable_split = SplitSpec { train_pairs: usable, test_pairs: Vec::new(), seed: split.seed };

    let mut log = TrainingLog {
        config: config.clone(),
        epoch_losses: Vec::with_capacity(config.epochs),
        steps: 0,
        train_pairs_used: usable_split.train_pairs.len(),
        skipped_pairs,
        threads: 1,
        corpus_hash: corpus.content_hash(),
        wall_time_secs: 0.0,
    };
    if config.epochs > 0 && usable_split.train_pairs.is_empty() {
        return Err(Error::Argument("no usable training pairs".into()));
    }

    let mut inputs: std::collections::HashMap<PostId, Vec<F>> = std::collections::HashMap::new();
    for (id, v) in store.iter() {
        inputs.insert(id, v.iter().map(|&x| F::of_f32(x)).collect());
    }
    let get = |id: PostId| -> &[F] { &inputs[&id] };
    let lr = F::of(config.learning_rate);

    for epoch in 0..config.epochs {
        let epoch_seed = util::derive_seed(config.seed, epoch as u64 + 1);
        let mut weighted = 0.0f64;
        let mut count = 0usize;
        match config.loss {
            LossKind::Triplet => {
                let triplets = sample_triplets(corpus, &usable_split, store, epoch_seed)?;
                for chunk in triplets.chunks(config.batch_size) {
                    let batch = BatchInput::Triplets(
                        chunk
                            .iter()
                            .map(|t| TripletInput { anchor: get(t.anchor), positive: get(t.positive), negative: get(t.negative) })
                            .collect(),
                    );
                    let g = gradients(&batch, &head, config)?;
                    head.sgd_step(&g.weights, &g.bias, lr);
                    weighted += g.loss.to_f64_lossy() * chunk.len() as f64;
                    count += chunk.len();
                    log.steps += 1;
                }
            }
            LossKind::Mnr => {
                for b in sample_pair_batches(&usable_split.train_pairs, config.batch_size, epoch_seed)? {
                    let batch = BatchInput::Pairs {
                        anchors: b.anchors.iter().map(|&id| get(id)).collect(),
                        positives: b.positives.iter().map(|&id| get(id)).collect(),
                    };
                    let g = gradients(&batch, &head, config)?;
                    head.sgd_step(&g.weights, &g.bias, lr);
                    weighted += g.loss.to_f64_lossy() * b.len() as f64;
                    count += b.len();
                    log.steps += 1;
                }
            }
        }
        let mean = weighted / count.max(1) as f64;
        log::info!("epoch {}: mean loss {mean:.6}", epoch + 1);
        log.epoch_losses.push(mean);
    }
    if !crate::scalar::all_finite(head.weights()) || !crate::scalar::all_finite(head.bias()) {
        return Err(Error::Domain("training diverged to non-finite parameters".into()));
    }
    log.wall_time_secs = started.elapsed().as_secs_f64();
    Ok((head, log))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::fixtures::post;
    use crate::corpus::DuplicatePair;

    fn tiny() -> (Corpus, SplitSpec, EmbeddingStore) {
        let posts = (1..=8).map(|i| post(i, "t", &[])).collect();
        let pairs: Vec<_> = (0..4).map(|k| DuplicatePair::new(2 * k + 2, 2 * k + 1)).collect();
        let corpus = Corpus::new(posts, pairs.clone()).unwrap();
        let mut store = EmbeddingStore::new(4, "t");
        for i in 1..=8u64 {
            let c = ((i - 1) / 2) as usize;
            let mut v = [0.1f32; 4];
            v[c] = 1.0 + 0.05 * i as f32;
            store.insert(i, &v).unwrap();
        }
        (corpus, SplitSpec { train_pairs: pairs, test_pairs: vec![], seed: 0 }, store)
    }

    #[test]
    fn zero_epochs_returns_initialization() {
        let (c, s, st) = tiny();
        let cfg = TrainingConfig { epochs: 0, out_dim: 3, batch_size: 2, ..Default::default() };
        let (head, log) = train::<f64>(&c, &s, &st, &cfg).unwrap();
        assert_eq!(head, ProjectionHead::init(4, 3, 0).unwrap());
        assert!(log.epoch_losses.is_empty());
    }

    #[test]
    fn deterministic_and_improving() {
        let (c, s, st) = tiny();
        for loss in [LossKind::Mnr, LossKind::Triplet] {
            let cfg = TrainingConfig { loss, epochs: 30, out_dim: 3, batch_size: 2, scale: 1.0, learning_rate: 0.1, ..Default::default() };
            let (h1, l1) = train::<f64>(&c, &s, &st, &cfg).unwrap();
            let (h2, l2) = train::<f64>(&c, &s, &st, &cfg).unwrap();
            assert_eq!(h1, h2);
            assert_eq!(l1.epoch_losses, l2.epoch_losses);
            assert!(l1.last_loss().unwrap() < l1.first_loss().unwrap(), "{loss:?}: {:?}", l1.epoch_losses);
        }
    }

    #[test]
    fn invalid_configs() {
        let (c, s, st) = tiny();
        let bad = [
            TrainingConfig { batch_size: 0, ..Default::default() },
            TrainingConfig { batch_size: 1, loss: LossKind::Mnr, ..Default::default() },
            TrainingConfig { margin: -1.0, ..Default::default() },
            TrainingConfig { scale: 0.0, ..Default::default() },
            TrainingConfig { learning_rate: f64::NAN, ..Default::default() },
        ];
        for cfg in bad {
            assert!(matches!(train::<f64>(&c, &s, &st, &cfg), Err(Error::Argument(_))), "{cfg:?}");
        }
    }

    #[test]
    fn loss_kind_parses() {
        assert_eq!("MNR".parse::<LossKind>().unwrap(), LossKind::Mnr);
        assert!("hinge".parse::<LossKind>().is_err());
    }
}
