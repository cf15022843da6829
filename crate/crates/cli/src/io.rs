//! Corpus directories, count tables and small file helpers.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use softcrowd_core::aggregation::{read_count_table, write_count_table, CountRow};
use softcrowd_core::synthgen::{read_truth_csv, Ambiguity, SyntheticItem};
use softcrowd_core::trainer::{split_by_subject, Raster};
use softcrowd_core::{EmotionClass, ItemRecord, LabelCountVector, Manifest, SoftTargetF64};

use crate::error::{format_err, CliError, Result};

pub const MANIFEST_FILE: &str = "manifest.jsonl";
pub const TRUTH_FILE: &str = "truth.csv";
pub const COUNTS_FILE: &str = "counts.csv";
pub const SPLIT_FILE: &str = "split.json";
pub const KINDS_FILE: &str = "item_kinds.csv";
pub const IMAGES_DIR: &str = "images";

/// Subject hold-out recorded by `gen`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitFile {
    pub held_out_subjects: Vec<String>,
    pub n_train: usize,
    pub n_test: usize,
}

pub fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(CliError::io(dir))
}

pub fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    std::fs::write(path, bytes).map_err(CliError::io(path))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).expect("value serializes");
    text.push('\n');
    write_bytes(path, text.as_bytes())
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(CliError::io(path))?;
    serde_json::from_str(&text).map_err(|e| CliError::Format(format!("{}: {e}", path.display())))
}

pub fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path).map(BufReader::new).map_err(CliError::io(path))
}

pub fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path).map(BufWriter::new).map_err(CliError::io(path))
}

pub fn read_counts(path: &Path) -> Result<Vec<CountRow>> {
    read_count_table(open(path)?).map_err(|e| CliError::Format(format!("{}: {e}", path.display())))
}

pub fn counts_by_item(rows: Vec<CountRow>) -> BTreeMap<String, LabelCountVector> {
    rows.into_iter().map(|r| (r.item_id, r.counts)).collect()
}

pub fn write_counts(path: &Path, rows: &[CountRow]) -> Result<()> {
    let mut w = create(path)?;
    write_count_table(&mut w, rows).map_err(format_err(&path.display().to_string()))?;
    w.flush().map_err(CliError::io(path))
}

/// Writes rows through the csv crate; `header` first.
pub fn write_csv<I, R>(path: &Path, header: &[&str], rows: I) -> Result<()>
where
    I: IntoIterator<Item = R>,
    R: IntoIterator,
    R::Item: AsRef<[u8]>,
{
    let to_err = |e: csv::Error| CliError::Format(format!("{}: {e}", path.display()));
    let mut w = csv::Writer::from_writer(create(path)?);
    w.write_record(header).map_err(to_err)?;
    for row in rows {
        w.write_record(row).map_err(to_err)?;
    }
    w.flush().map_err(CliError::io(path))
}

/// A directory written by `gen`.
#[derive(Debug, Clone)]
pub struct Corpus {
    pub root: PathBuf,
    pub manifest: Manifest,
    pub split: SplitFile,
}

impl Corpus {
    pub fn open(root: &Path) -> Result<Self> {
        if !root.is_dir() {
            return Err(CliError::Io {
                path: root.to_path_buf(),
                source: std::io::Error::new(std::io::ErrorKind::NotFound, "corpus directory not found"),
            });
        }
        let manifest_path = root.join(MANIFEST_FILE);
        let manifest = Manifest::read_jsonl(open(&manifest_path)?)
            .map_err(|e| CliError::Format(format!("{}: {e}", manifest_path.display())))?;
        let split = read_json(&root.join(SPLIT_FILE))?;
        Ok(Self { root: root.to_path_buf(), manifest, split })
    }

    pub fn manifest_path(&self) -> PathBuf {
        self.root.join(MANIFEST_FILE)
    }

    pub fn held_out(&self) -> BTreeSet<String> {
        self.split.held_out_subjects.iter().cloned().collect()
    }

    /// (train, test) manifests.
    pub fn partition(&self) -> Result<(Manifest, Manifest)> {
        split_by_subject(&self.manifest, &self.held_out()).map_err(|e| CliError::Format(e.to_string()))
    }

    pub fn raster(&self, item: &ItemRecord) -> Result<Raster<f64>> {
        let path = self.root.join(&item.image_path);
        Raster::read_pgm(open(&path)?).map_err(|e| CliError::Format(format!("{}: {e}", path.display())))
    }

    pub fn truth(&self) -> Result<BTreeMap<String, SoftTargetF64>> {
        let path = self.root.join(TRUTH_FILE);
        let rows = read_truth_csv::<f64, _>(open(&path)?).map_err(format_err(&path.display().to_string()))?;
        Ok(rows.into_iter().collect())
    }

    pub fn counts(&self) -> Result<BTreeMap<String, LabelCountVector>> {
        Ok(counts_by_item(read_counts(&self.root.join(COUNTS_FILE))?))
    }

    pub fn kinds(&self) -> Result<BTreeMap<String, Ambiguity>> {
        let path = self.root.join(KINDS_FILE);
        let mut r = csv::Reader::from_reader(open(&path)?);
        let mut out = BTreeMap::new();
        for rec in r.records() {
            let rec = rec.map_err(format_err(&path.display().to_string()))?;
            let kind = match rec.get(1).unwrap_or("") {
                "pure" => Ambiguity::Pure,
                "ambiguous_pair" => Ambiguity::AmbiguousPair,
                "compound" => Ambiguity::Compound,
                other => return Err(CliError::Format(format!("{}: unknown kind {other:?}", path.display()))),
            };
            out.insert(rec[0].to_string(), kind);
        }
        Ok(out)
    }

    /// Items with rasters, true distributions and kinds, in manifest order.
    pub fn synthetic_items(&self) -> Result<Vec<SyntheticItem<f64>>> {
        let truth = self.truth()?;
        let kinds = self.kinds()?;
        self.manifest
            .items()
            .iter()
            .map(|it| {
                let missing = |what: &str| CliError::Format(format!("item {} has no {what} row", it.item_id));
                Ok(SyntheticItem {
                    item_id: it.item_id.clone(),
                    subject_id: it.subject_id.clone(),
                    raster: self.raster(it)?,
                    true_distribution: *truth.get(&it.item_id).ok_or_else(|| missing("truth"))?,
                    posed: it.posed_emotion,
                    ambiguity: *kinds.get(&it.item_id).ok_or_else(|| missing("kind"))?,
                })
            })
            .collect()
    }
}

pub fn ambiguity_name(kind: Ambiguity) -> &'static str {
    match kind {
        Ambiguity::Pure => "pure",
        Ambiguity::AmbiguousPair => "ambiguous_pair",
        Ambiguity::Compound => "compound",
    }
}

/// Posed class encoded in a `<index>-<word>_<subject>` item id.
pub fn posed_from_item_id(item_id: &str) -> Option<EmotionClass> {
    softcrowd_core::label_model::parse_cafe_filename(&format!("{item_id}.id")).ok().map(|c| c.posed_emotion)
}

/// Shortest round-trip formatting, so re-runs produce identical text.
pub fn fmt_f64(x: f64) -> String {
    format!("{x}")
}
