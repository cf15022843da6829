use std::path::Path;

use serde::{Deserialize, Serialize};
use softcrowd_core::worker_quality::{read_review_csv, ReviewDecision, WorkerProfile};

use crate::client::Backend;
use crate::error::{CliError, Result};
use crate::io;
use crate::run_manifest::Outcome;

pub const REVIEW_REPORT_FILE: &str = "review_report.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RejectedReview {
    /// 1-based data row.
    pub row: usize,
    pub worker_id: String,
    pub item_id: String,
    pub code: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReviewReport {
    pub applied: usize,
    pub rejected: Vec<RejectedReview>,
    /// Final profile of every worker with an applied review, by worker id.
    pub workers: Vec<WorkerProfile>,
}

/// Applies decisions in file order; a refused row is recorded and skipped.
pub fn apply(backend: &mut dyn Backend, decisions: &[ReviewDecision]) -> Result<ReviewReport> {
    let mut applied = 0;
    let mut rejected = Vec::new();
    let mut touched = std::collections::BTreeMap::new();
    for (i, d) in decisions.iter().enumerate() {
        match backend.review(&d.reviewer_id, &d.worker_id, &d.item_id, d.verdict) {
            Ok(profile) => {
                applied += 1;
                touched.insert(d.worker_id.clone(), profile);
            }
            Err(CliError::Service { code, message }) if code != "Unreachable" => rejected.push(RejectedReview {
                row: i + 1,
                worker_id: d.worker_id.clone(),
                item_id: d.item_id.clone(),
                code,
                message,
            }),
            Err(e) => return Err(e),
        }
    }
    Ok(ReviewReport { applied, rejected, workers: touched.into_values().collect() })
}

pub fn read_decisions(path: &Path) -> Result<Vec<ReviewDecision>> {
    read_review_csv(io::open(path)?).map_err(|e| CliError::Format(format!("{}: {e}", path.display())))
}

pub fn run(backend: &mut dyn Backend, reviews: &Path, target: &str, out: &Path) -> Result<(ReviewReport, Outcome)> {
    let decisions = read_decisions(reviews)?;
    let report = apply(backend, &decisions)?;
    io::create_dir(out)?;
    io::write_json(&out.join(REVIEW_REPORT_FILE), &report)?;
    let partial_failure = (!report.rejected.is_empty()).then(|| {
        format!("{} of {} review rows were rejected; see {REVIEW_REPORT_FILE}", report.rejected.len(), decisions.len())
    });
    let outcome = Outcome {
        config: serde_json::json!({ "target": target }),
        seed: None,
        inputs: vec![reviews.to_path_buf()],
        outputs: vec![REVIEW_REPORT_FILE.into()],
        partial_failure,
    };
    Ok((report, outcome))
}
