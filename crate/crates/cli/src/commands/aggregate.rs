use std::path::Path;

use softcrowd_core::aggregation::{majority_consensus, to_soft_target, CountRow};
use softcrowd_core::event::{label_events, read_log, tally};
use softcrowd_core::worker_quality::QualityPolicy;
use softcrowd_core::EmotionClass;
use softcrowd_service::store::POLICY_FILE;
use softcrowd_service::{replay, PoolFilter, ServiceState};

use crate::args::PoolArg;
use crate::error::{CliError, Result};
use crate::io::{self, fmt_f64};
use crate::run_manifest::Outcome;

pub const SOFT_TARGETS_FILE: &str = "soft_targets.csv";
pub const CONSENSUS_FILE: &str = "consensus.csv";

/// Count rows for one campaign of a service log. `Raw` counts every label;
/// the other pools follow the service export.
pub fn rows_from_log(log_path: &Path, campaign: Option<&str>, pool: PoolArg) -> Result<Vec<CountRow>> {
    let entries = read_log(io::open(log_path)?).map_err(|e| CliError::Format(format!("{}: {e}", log_path.display())))?;
    let policy_path = log_path.with_file_name(POLICY_FILE);
    let policy: QualityPolicy = if policy_path.exists() { io::read_json(&policy_path)? } else { QualityPolicy::default() };
    let state = replay(ServiceState::new(policy)?, &entries)?;
    let campaign_id = match campaign {
        Some(c) => c.to_string(),
        None => {
            let ids: Vec<&str> = state.campaigns().map(|c| c.campaign_id.as_str()).collect();
            match ids.as_slice() {
                [only] => only.to_string(),
                _ => return Err(CliError::Usage(format!("log has campaigns {ids:?}; pick one with --campaign"))),
            }
        }
    };
    match pool {
        PoolArg::All => Ok(state.export(&campaign_id, PoolFilter::All)?),
        PoolArg::Filtered => Ok(state.export(&campaign_id, PoolFilter::Filtered)?),
        PoolArg::Raw => {
            let mut counts = tally(label_events(&entries).filter(|e| e.campaign_id == campaign_id));
            Ok(state
                .campaign(&campaign_id)?
                .items()
                .iter()
                .filter_map(|it| counts.remove(&it.item_id).map(|c| CountRow { item_id: it.item_id.clone(), counts: c }))
                .collect())
        }
    }
}

pub fn write_outputs(rows: &[CountRow], out: &Path) -> Result<Vec<String>> {
    io::create_dir(out)?;
    io::write_counts(&out.join(io::COUNTS_FILE), rows)?;

    let mut header = vec!["item_id"];
    header.extend(EmotionClass::ALL.iter().map(|c| c.name()));
    let voted: Vec<&CountRow> = rows.iter().filter(|r| r.counts.total() > 0).collect();
    let soft = voted
        .iter()
        .map(|r| {
            let t = to_soft_target::<f64>(&r.counts).map_err(|e| CliError::Invariant(e.to_string()))?;
            let mut row = vec![r.item_id.clone()];
            row.extend(t.probs().iter().map(|p| fmt_f64(*p)));
            Ok(row)
        })
        .collect::<Result<Vec<_>>>()?;
    io::write_csv(&out.join(SOFT_TARGETS_FILE), &header, soft)?;

    let consensus = voted
        .iter()
        .map(|r| {
            let c = majority_consensus(&r.counts).map_err(|e| CliError::Invariant(e.to_string()))?;
            let winners: Vec<&str> = c.winners.iter().map(|w| w.name()).collect();
            Ok([
                r.item_id.clone(),
                winners.join("|"),
                c.is_tie.to_string(),
                c.winning_count.to_string(),
                r.counts.total().to_string(),
            ])
        })
        .collect::<Result<Vec<_>>>()?;
    io::write_csv(&out.join(CONSENSUS_FILE), &["item_id", "consensus", "tie", "winning_count", "n_votes"], consensus)?;
    Ok(vec![io::COUNTS_FILE.into(), SOFT_TARGETS_FILE.into(), CONSENSUS_FILE.into()])
}

pub fn run(
    log: Option<&Path>,
    counts: Option<&Path>,
    campaign: Option<&str>,
    pool: PoolArg,
    out: &Path,
) -> Result<Outcome> {
    let (rows, input) = match (log, counts) {
        (Some(l), None) => (rows_from_log(l, campaign, pool)?, l),
        (None, Some(c)) => (io::read_counts(c)?, c),
        _ => return Err(CliError::Usage("give exactly one of --log or --counts".into())),
    };
    let outputs = write_outputs(&rows, out)?;
    let config = serde_json::json!({
        "campaign": campaign,
        "pool": format!("{pool:?}").to_lowercase(),
    });
    Ok(Outcome { config, seed: None, inputs: vec![input.to_path_buf()], outputs, partial_failure: None })
}
