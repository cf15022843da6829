use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use softcrowd_core::aggregation::{
    agreement_report, coverage_histogram, AgreementReport, CountRow, CoverageHistogram, MergeMap,
};
use softcrowd_core::{EmotionClass, Manifest};

use crate::error::{CliError, Result};
use crate::io::{self, posed_from_item_id};
use crate::run_manifest::Outcome;

pub const ANALYSIS_FILE: &str = "analysis.json";
pub const AGREEMENT_FILE: &str = "agreement.csv";
pub const MERGED_AGREEMENT_FILE: &str = "agreement_merged.csv";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Analysis {
    pub n_items: usize,
    /// Rows with no votes; left out of every statistic.
    pub n_empty: usize,
    pub histograms: Vec<CoverageHistogram>,
    pub agreement: Option<AgreementReport>,
    pub merged_agreement: Option<AgreementReport>,
}

pub fn coverage_file(threshold: f64) -> String {
    format!("coverage_{threshold:.2}.csv")
}

/// Posed classes for every row, from a manifest or from the item ids.
pub fn ground_truth(rows: &[CountRow], manifest: Option<&Manifest>) -> Option<BTreeMap<String, EmotionClass>> {
    rows.iter()
        .map(|r| {
            let posed = match manifest {
                Some(m) => m.get(&r.item_id).map(|it| it.posed_emotion),
                None => posed_from_item_id(&r.item_id),
            };
            posed.map(|p| (r.item_id.clone(), p))
        })
        .collect()
}

pub fn analyze(
    rows: &[CountRow],
    thresholds: &[f64],
    truth: Option<&BTreeMap<String, EmotionClass>>,
) -> Result<Analysis> {
    let voted: Vec<&CountRow> = rows.iter().filter(|r| r.counts.total() > 0).collect();
    if voted.is_empty() {
        return Err(CliError::Format("count table has no voted items".into()));
    }
    let histograms = thresholds
        .iter()
        .map(|&t| coverage_histogram(voted.iter().map(|r| &r.counts), t).map_err(|e| CliError::Usage(e.to_string())))
        .collect::<Result<Vec<_>>>()?;
    let (agreement, merged_agreement) = match truth {
        Some(truth) => {
            let items: Vec<_> = voted.iter().map(|r| (truth[&r.item_id], r.counts)).collect();
            let plain = agreement_report(&items, None).map_err(|e| CliError::Format(e.to_string()))?;
            let merged = agreement_report(&items, Some(&MergeMap::commonly_confused()))
                .map_err(|e| CliError::Format(e.to_string()))?;
            (Some(plain), Some(merged))
        }
        None => (None, None),
    };
    Ok(Analysis { n_items: voted.len(), n_empty: rows.len() - voted.len(), histograms, agreement, merged_agreement })
}

pub fn run(counts_path: &Path, thresholds: &[f64], manifest_path: Option<&Path>, out: &Path) -> Result<(Analysis, Outcome)> {
    let rows = io::read_counts(counts_path)?;
    let manifest = match manifest_path {
        Some(p) => Some(Manifest::read_jsonl(io::open(p)?).map_err(|e| CliError::Format(format!("{}: {e}", p.display())))?),
        None => None,
    };
    let truth = ground_truth(&rows, manifest.as_ref());
    let analysis = analyze(&rows, thresholds, truth.as_ref())?;

    io::create_dir(out)?;
    let mut outputs = Vec::new();
    for h in &analysis.histograms {
        let name = coverage_file(h.threshold);
        let mut buf = Vec::new();
        h.write_csv(&mut buf).map_err(|e| CliError::Format(e.to_string()))?;
        io::write_bytes(&out.join(&name), &buf)?;
        outputs.push(name);
    }
    for (report, name) in [(&analysis.agreement, AGREEMENT_FILE), (&analysis.merged_agreement, MERGED_AGREEMENT_FILE)] {
        if let Some(report) = report {
            let mut buf = Vec::new();
            report.write_csv(&mut buf).map_err(|e| CliError::Format(e.to_string()))?;
            io::write_bytes(&out.join(name), &buf)?;
            outputs.push(name.to_string());
        }
    }
    io::write_json(&out.join(ANALYSIS_FILE), &analysis)?;
    outputs.push(ANALYSIS_FILE.into());

    let mut inputs: Vec<PathBuf> = vec![counts_path.to_path_buf()];
    inputs.extend(manifest_path.map(Path::to_path_buf));
    let config = serde_json::json!({ "thresholds": thresholds });
    Ok((analysis, Outcome { config, seed: None, inputs, outputs, partial_failure: None }))
}
