use std::io::Write;

use serde::{Deserialize, Serialize};

use super::{evaluate_index, MetricsReport, DEFAULT_NEG_RATIO, DEFAULT_NS};
use crate::corpus::{Corpus, SplitSpec};
use crate::embedding::EmbeddingStore;
use crate::error::{Error, Result};
use crate::rank::{project, LatentIndex};
use crate::refine::{train, LossKind, TrainingConfig, TrainingLog};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalOptions {
    pub ns: Vec<usize>,
    pub neg_ratio: usize,
    /// Seed for AUC negative sampling.
    pub seed: u64,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self { ns: DEFAULT_NS.to_vec(), neg_ratio: DEFAULT_NEG_RATIO, seed: 0 }
    }
}

/// One column of a comparison: raw input embeddings or a trained head.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Setting {
    Raw,
    Trained { name: String, config: TrainingConfig },
}

impl Setting {
    pub fn trained(loss: LossKind, config: TrainingConfig) -> Self {
        let name = match loss {
            LossKind::Triplet => "triplet",
            LossKind::Mnr => "mnr",
        };
        Setting::Trained { name: name.into(), config: TrainingConfig { loss, ..config } }
    }

    pub fn name(&self) -> &str {
        match self {
            Setting::Raw => "raw",
            Setting::Trained { name, .. } => name,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub name: String,
    pub report: MetricsReport,
    pub training: Option<TrainingSummary>,
}

/// Deterministic part of a [`TrainingLog`] (wall time left out).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingSummary {
    pub epoch_losses: Vec<f64>,
    pub steps: usize,
    pub train_pairs_used: usize,
}

impl From<&TrainingLog> for TrainingSummary {
    fn from(log: &TrainingLog) -> Self {
        Self { epoch_losses: log.epoch_losses.clone(), steps: log.steps, train_pairs_used: log.train_pairs_used }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonTable {
    pub rows: Vec<ComparisonRow>,
}

impl ComparisonTable {
    pub fn get(&self, name: &str) -> Option<&MetricsReport> {
        self.rows.iter().find(|r| r.name == name).map(|r| &r.report)
    }

    /// One line per cut-off `N`, one column per setting, then an `auc` line.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let names: Vec<&str> = self.rows.iter().map(|r| r.name.as_str()).collect();
        writeln!(w, "top_n,{}", names.join(","))?;
        let ns: Vec<usize> = self.rows.first().map(|r| r.report.top_n.keys().copied().collect()).unwrap_or_default();
        for n in ns {
            let cells: Vec<String> = self.rows.iter().map(|r| format!("{:.6}", r.report.top(n))).collect();
            writeln!(w, "{n},{}", cells.join(","))?;
        }
        let aucs: Vec<String> = self.rows.iter().map(|r| format!("{:.6}", r.report.auc)).collect();
        writeln!(w, "auc,{}", aucs.join(","))?;
        Ok(())
    }
}

fn evaluate_setting(
    corpus: &Corpus,
    split: &SplitSpec,
    store: &EmbeddingStore,
    setting: &Setting,
    opts: &EvalOptions,
) -> Result<ComparisonRow> {
    let (index, training, echo): (LatentIndex, _, String) = match setting {
        Setting::Raw => (LatentIndex::from_store(store).index, None, "raw input embeddings".into()),
        Setting::Trained { config, .. } => {
            let (head, log) = train::<f64>(corpus, split, store, config)?;
            let echo = serde_json::to_string(config)?;
            (project(store, &head)?.index, Some(TrainingSummary::from(&log)), echo)
        }
    };
    let report = evaluate_index(&index, &split.test_pairs, corpus.pairs(), opts, echo)?;
    Ok(ComparisonRow { name: setting.name().to_string(), report, training })
}

/// Evaluates every setting on the same split and candidate pool.
pub fn compare_settings(
    corpus: &Corpus,
    split: &SplitSpec,
    store: &EmbeddingStore,
    settings: &[Setting],
    opts: &EvalOptions,
) -> Result<ComparisonTable> {
    if settings.is_empty() {
        return Err(Error::Argument("no settings to compare".into()));
    }
    let rows = settings.iter().map(|s| evaluate_setting(corpus, split, store, s, opts)).collect::<Result<_>>()?;
    Ok(ComparisonTable { rows })
}

/// MNR trained once per batch size, one row per size (named `batch_<n>`).
pub fn batch_size_sweep(
    corpus: &Corpus,
    split: &SplitSpec,
    store: &EmbeddingStore,
    base: &TrainingConfig,
    sizes: &[usize],
    opts: &EvalOptions,
) -> Result<ComparisonTable> {
    let settings: Vec<Setting> = sizes
        .iter()
        .map(|&b| Setting::Trained {
            name: format!("batch_{b}"),
            config: TrainingConfig { loss: LossKind::Mnr, batch_size: b, ..base.clone() },
        })
        .collect();
    compare_settings(corpus, split, store, &settings, opts)
}
