use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use softcrowd_core::trainer::{train_with_report, Architecture, LabelMode, TrainConfig, TrainReport, TrainSample};
use softcrowd_core::{LabelCountVector, Manifest};

use crate::config::{default_version, versioned};
use crate::error::{CliError, Result};
use crate::io::{self, Corpus};
use crate::run_manifest::Outcome;

pub const MODEL_FILE: &str = "model.json";
pub const TRAIN_REPORT_FILE: &str = "train_report.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainFile {
    pub version: u32,
    #[serde(default)]
    pub train: TrainConfig,
}

impl Default for TrainFile {
    fn default() -> Self {
        Self { version: default_version(), train: TrainConfig::default() }
    }
}

versioned!(TrainFile);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainSummary {
    pub label_mode: LabelMode,
    pub architecture: Architecture,
    pub seed: u64,
    pub n_train: usize,
    /// Hex digest of the shuffling and augmentation stream.
    pub augmentation_digest: String,
    pub epoch_losses: Vec<f64>,
}

/// Training samples for the items of `manifest`, in manifest order.
pub fn samples(
    corpus: &Corpus,
    manifest: &Manifest,
    counts: &BTreeMap<String, LabelCountVector>,
) -> Result<Vec<TrainSample<f64>>> {
    manifest
        .items()
        .iter()
        .map(|it| {
            Ok(TrainSample {
                raster: corpus.raster(it)?,
                counts: *counts
                    .get(&it.item_id)
                    .ok_or_else(|| CliError::Format(format!("no counts for item {}", it.item_id)))?,
                posed: it.posed_emotion,
            })
        })
        .collect()
}

pub fn fit(samples: &[TrainSample<f64>], cfg: &TrainConfig) -> Result<TrainReport<f64>> {
    train_with_report(samples, cfg).map_err(|e| match e {
        softcrowd_core::trainer::TrainError::InvalidConfig(m) => CliError::InvalidConfig(m),
        other => CliError::Format(other.to_string()),
    })
}

pub fn summarize(report: &TrainReport<f64>, cfg: &TrainConfig, n_train: usize) -> TrainSummary {
    TrainSummary {
        label_mode: cfg.label_mode,
        architecture: cfg.architecture,
        seed: cfg.seed,
        n_train,
        augmentation_digest: format!("{:016x}", report.augmentation_digest),
        epoch_losses: report.epoch_losses.clone(),
    }
}

pub fn run(corpus_dir: &Path, counts: Option<&Path>, cfg: &TrainConfig, out: &Path) -> Result<(TrainSummary, Outcome)> {
    let corpus = Corpus::open(corpus_dir)?;
    let counts_path = counts.map(Path::to_path_buf).unwrap_or_else(|| corpus_dir.join(io::COUNTS_FILE));
    let counts = io::counts_by_item(io::read_counts(&counts_path)?);
    let (train, _) = corpus.partition()?;
    let data = samples(&corpus, &train, &counts)?;
    let report = fit(&data, cfg)?;

    io::create_dir(out)?;
    io::write_bytes(&out.join(MODEL_FILE), format!("{}\n", report.model.to_json()).as_bytes())?;
    let summary = summarize(&report, cfg, data.len());
    io::write_json(&out.join(TRAIN_REPORT_FILE), &summary)?;

    let outcome = Outcome {
        config: serde_json::to_value(TrainFile { version: default_version(), train: cfg.clone() }).expect("serializes"),
        seed: Some(cfg.seed),
        inputs: vec![corpus_dir.to_path_buf(), counts_path],
        outputs: vec![MODEL_FILE.into(), TRAIN_REPORT_FILE.into()],
        partial_failure: None,
    };
    Ok((summary, outcome))
}
