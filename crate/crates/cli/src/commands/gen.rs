use std::io::Write;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use softcrowd_core::aggregation::CountRow;
use softcrowd_core::event::tally;
use softcrowd_core::synthgen::{
    corpus_manifest, gen_corpus, simulate_campaign, write_truth_csv, CampaignConfig, CorpusConfig, SynthError,
};

use crate::config::{default_version, versioned};
use crate::error::{CliError, Result};
use crate::io::{self, SplitFile};
use crate::run_manifest::Outcome;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenConfig {
    pub version: u32,
    #[serde(default)]
    pub corpus: CorpusConfig,
    /// Crowd that produces counts.csv.
    #[serde(default)]
    pub crowd: CampaignConfig,
}

impl Default for GenConfig {
    fn default() -> Self {
        Self { version: default_version(), corpus: CorpusConfig::default(), crowd: CampaignConfig::default() }
    }
}

versioned!(GenConfig);

pub(crate) fn synth_err(e: SynthError) -> CliError {
    CliError::InvalidConfig(e.to_string())
}

pub fn run(cfg: &GenConfig, out: &Path) -> Result<Outcome> {
    cfg.corpus.validate().map_err(synth_err)?;
    let items = gen_corpus::<f64>(&cfg.corpus).map_err(synth_err)?;

    io::create_dir(&out.join(io::IMAGES_DIR))?;
    let manifest = corpus_manifest(&items);
    let manifest_path = out.join(io::MANIFEST_FILE);
    let mut w = io::create(&manifest_path)?;
    manifest.write_jsonl(&mut w).map_err(|e| CliError::Format(e.to_string()))?;
    w.flush().map_err(CliError::io(&manifest_path))?;

    for item in &items {
        let path = out.join(item.image_path());
        let mut w = io::create(&path)?;
        item.raster.write_pgm(&mut w).map_err(CliError::io(&path))?;
        w.flush().map_err(CliError::io(&path))?;
    }

    let truth_path = out.join(io::TRUTH_FILE);
    let mut w = io::create(&truth_path)?;
    write_truth_csv(&items, &mut w).map_err(CliError::io(&truth_path))?;
    w.flush().map_err(CliError::io(&truth_path))?;

    io::write_csv(
        &out.join(io::KINDS_FILE),
        &["item_id", "kind", "subject_id", "posed"],
        items.iter().map(|it| [it.item_id.as_str(), io::ambiguity_name(it.ambiguity), &it.subject_id, it.posed.name()]),
    )?;

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.corpus.seed);
    rng.set_stream(2);
    let log = simulate_campaign(&items, &cfg.crowd, &mut rng).map_err(synth_err)?;
    let mut counts = tally(&log.events);
    let rows: Vec<CountRow> = items
        .iter()
        .map(|it| CountRow { item_id: it.item_id.clone(), counts: counts.remove(&it.item_id).unwrap_or_default() })
        .collect();
    io::write_counts(&out.join(io::COUNTS_FILE), &rows)?;

    let held_out = cfg.corpus.held_out_subject_ids();
    let n_test = items.iter().filter(|it| held_out.contains(&it.subject_id)).count();
    let split = SplitFile { held_out_subjects: held_out.into_iter().collect(), n_train: items.len() - n_test, n_test };
    io::write_json(&out.join(io::SPLIT_FILE), &split)?;

    Ok(Outcome {
        config: serde_json::to_value(cfg).expect("config serializes"),
        seed: Some(cfg.corpus.seed),
        inputs: Vec::new(),
        outputs: [io::MANIFEST_FILE, "images/", io::TRUTH_FILE, io::KINDS_FILE, io::COUNTS_FILE, io::SPLIT_FILE]
            .map(String::from)
            .to_vec(),
        partial_failure: None,
    })
}
