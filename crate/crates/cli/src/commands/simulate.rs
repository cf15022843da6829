use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use softcrowd_core::aggregation::{agreement_report, CountRow};
use softcrowd_core::event::PoolPolicy;
use softcrowd_core::synthgen::{
    build_workers, simulate_label, Ambiguity, CampaignConfig, GroundTruthReviewer, SimulatedWorker, SyntheticItem,
};
use softcrowd_core::worker_quality::Pool;
use softcrowd_core::{EmotionClass, LabelCountVector};
use softcrowd_service::PoolFilter;

use super::gen::synth_err;
use super::serve::ServiceSettings;
use crate::client::{Backend, Task};
use crate::config::{default_version, versioned};
use crate::error::{CliError, Result};
use crate::io::{self, Corpus};
use crate::run_manifest::Outcome;

pub const REVIEWER_ID: &str = "scripted-reviewer";
pub const REPORT_FILE: &str = "simulation_report.json";
pub const WORKERS_FILE: &str = "workers.csv";
pub const SERVICE_DIR: &str = "service";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateConfig {
    pub version: u32,
    #[serde(default = "default_crowd")]
    pub crowd: CampaignConfig,
    #[serde(default)]
    pub pool_policy: PoolPolicy,
    #[serde(default)]
    pub reviewer: GroundTruthReviewer,
    /// Chance that an accepted label is sent to the reviewer.
    #[serde(default = "default_review_fraction")]
    pub review_fraction: f64,
    /// Embedded service only.
    #[serde(default = "embedded_service")]
    pub service: ServiceSettings,
    #[serde(default = "default_seed")]
    pub seed: u64,
}

fn default_crowd() -> CampaignConfig {
    CampaignConfig::mixed_crowd(200, 100)
}

fn default_review_fraction() -> f64 {
    0.25
}

fn embedded_service() -> ServiceSettings {
    ServiceSettings { policy: None, snapshot_every: 0, sync: false }
}

fn default_seed() -> u64 {
    42
}

impl Default for SimulateConfig {
    fn default() -> Self {
        Self {
            version: default_version(),
            crowd: default_crowd(),
            pool_policy: PoolPolicy::default(),
            reviewer: GroundTruthReviewer::default(),
            review_fraction: default_review_fraction(),
            service: embedded_service(),
            seed: default_seed(),
        }
    }
}

versioned!(SimulateConfig);

impl SimulateConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.review_fraction) {
            return Err(CliError::InvalidConfig(format!("review_fraction {} outside [0, 1]", self.review_fraction)));
        }
        if self.crowd.votes_per_item == 0 || self.crowd.votes_per_item > u32::MAX as usize {
            return Err(CliError::InvalidConfig("crowd.votes_per_item must be a positive 32-bit count".into()));
        }
        Ok(())
    }
}

/// Votes grouping for agreement statistics.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VoteSet {
    /// Every accepted vote, from every consenting worker.
    Raw,
    /// Votes of workers not excluded at the end.
    All,
    /// Votes of workers promoted by the end.
    Filtered,
    /// Votes cast while the worker was still unfiltered.
    CastUnfiltered,
    /// Votes of workers still unfiltered at the end.
    ResidualUnfiltered,
}

impl VoteSet {
    pub const EVERY: [VoteSet; 5] =
        [VoteSet::Raw, VoteSet::All, VoteSet::Filtered, VoteSet::CastUnfiltered, VoteSet::ResidualUnfiltered];
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SetAgreement {
    pub votes: VoteSet,
    pub n_votes: u64,
    /// Items with at least one vote in the set.
    pub n_items: usize,
    pub n_agreeing: usize,
    pub n_ties: usize,
    pub rate: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationReport {
    pub campaign_id: String,
    pub n_workers: usize,
    pub n_labels: u64,
    pub n_reviews: u64,
    pub n_rounds: u64,
    /// Final pool sizes per persona.
    pub pools_by_persona: BTreeMap<String, BTreeMap<Pool, usize>>,
    /// Consensus agreement with posed labels on pure items.
    pub pure_agreement: Vec<SetAgreement>,
    pub all_items_agreement: Vec<SetAgreement>,
}

impl SimulationReport {
    pub fn pure(&self, set: VoteSet) -> Option<&SetAgreement> {
        self.pure_agreement.iter().find(|a| a.votes == set)
    }
}

struct CastVote {
    worker: usize,
    item: usize,
    label: EmotionClass,
    worker_was_unfiltered: bool,
}

pub struct Simulation {
    pub report: SimulationReport,
    pub workers: Vec<SimulatedWorker>,
    pub final_pools: Vec<Pool>,
    pub counts: BTreeMap<VoteSet, Vec<CountRow>>,
}

fn in_set(set: VoteSet, vote: &CastVote, final_pool: Pool) -> bool {
    match set {
        VoteSet::Raw => true,
        VoteSet::All => final_pool != Pool::Excluded,
        VoteSet::Filtered => final_pool == Pool::Filtered,
        VoteSet::CastUnfiltered => vote.worker_was_unfiltered,
        VoteSet::ResidualUnfiltered => final_pool == Pool::Unfiltered,
    }
}

fn set_agreement(
    set: VoteSet,
    items: &[SyntheticItem<f64>],
    counts: &[LabelCountVector],
    keep: impl Fn(&SyntheticItem<f64>) -> bool,
) -> Result<SetAgreement> {
    let scored: Vec<(EmotionClass, LabelCountVector)> = items
        .iter()
        .zip(counts)
        .filter(|(it, c)| keep(it) && c.total() > 0)
        .map(|(it, c)| (it.posed, *c))
        .collect();
    let n_votes = scored.iter().map(|(_, c)| c.total()).sum();
    if scored.is_empty() {
        return Ok(SetAgreement { votes: set, n_votes, n_items: 0, n_agreeing: 0, n_ties: 0, rate: None });
    }
    let r = agreement_report(&scored, None).map_err(|e| CliError::Invariant(e.to_string()))?;
    Ok(SetAgreement {
        votes: set,
        n_votes,
        n_items: r.n_items,
        n_agreeing: r.n_agreeing,
        n_ties: r.n_ties,
        rate: Some(r.overall_rate),
    })
}

/// Runs one campaign over `items` to completion. Each round every active
/// worker, in shuffled order, asks for a task and labels it; a worker leaves
/// when the service has nothing more for it.
pub fn simulate(
    backend: &mut dyn Backend,
    manifest_path: &Path,
    items: &[SyntheticItem<f64>],
    cfg: &SimulateConfig,
) -> Result<Simulation> {
    cfg.validate()?;
    let workers = build_workers(&cfg.crowd).map_err(synth_err)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let campaign_id = backend.create_campaign(manifest_path, cfg.crowd.votes_per_item as u32, cfg.pool_policy)?;
    for w in &workers {
        backend.register_worker(&w.worker_id)?;
    }
    let index: HashMap<&str, usize> = items.iter().enumerate().map(|(i, it)| (it.item_id.as_str(), i)).collect();

    let mut pools = vec![Pool::Unfiltered; workers.len()];
    let mut votes: Vec<CastVote> = Vec::new();
    let mut n_reviews = 0u64;
    let mut n_rounds = 0u64;
    let mut active: Vec<usize> = (0..workers.len()).collect();
    while !active.is_empty() {
        n_rounds += 1;
        active.shuffle(&mut rng);
        let mut next = Vec::with_capacity(active.len());
        for &w in &active {
            let worker = &workers[w];
            let item_id = match backend.next_task(&campaign_id, &worker.worker_id)? {
                Task::Item(id) => id,
                Task::Done | Task::Ineligible => continue,
            };
            let i = *index
                .get(item_id.as_str())
                .ok_or_else(|| CliError::Invariant(format!("service assigned unknown item {item_id}")))?;
            let label = simulate_label(&worker.persona, &items[i], &mut rng);
            if backend.submit(&campaign_id, &worker.worker_id, &item_id, label, &item_id)?.is_some() {
                votes.push(CastVote { worker: w, item: i, label, worker_was_unfiltered: pools[w] == Pool::Unfiltered });
                if rng.random::<f64>() < cfg.review_fraction {
                    let verdict = cfg.reviewer.verdict(&items[i], label);
                    pools[w] = backend.review(REVIEWER_ID, &worker.worker_id, &item_id, verdict)?.pool;
                    n_reviews += 1;
                }
            }
            next.push(w);
        }
        active = next;
    }

    let mut final_pools = Vec::with_capacity(workers.len());
    let mut pools_by_persona: BTreeMap<String, BTreeMap<Pool, usize>> = BTreeMap::new();
    for w in &workers {
        let pool = backend.worker(&w.worker_id)?.pool;
        *pools_by_persona.entry(w.persona.tag().to_string()).or_default().entry(pool).or_default() += 1;
        final_pools.push(pool);
    }

    let voted: Vec<bool> = {
        let mut v = vec![false; items.len()];
        for vote in &votes {
            v[vote.item] = true;
        }
        v
    };
    let mut counts = BTreeMap::new();
    let mut pure_agreement = Vec::new();
    let mut all_items_agreement = Vec::new();
    for set in VoteSet::EVERY {
        let mut tallies = vec![LabelCountVector::zero(); items.len()];
        for vote in votes.iter().filter(|v| in_set(set, v, final_pools[v.worker])) {
            tallies[vote.item].increment(vote.label);
        }
        pure_agreement.push(set_agreement(set, items, &tallies, |it| it.ambiguity == Ambiguity::Pure)?);
        all_items_agreement.push(set_agreement(set, items, &tallies, |_| true)?);
        let rows: Vec<CountRow> = items
            .iter()
            .zip(&tallies)
            .zip(&voted)
            .filter(|(_, &v)| v)
            .map(|((it, c), _)| CountRow { item_id: it.item_id.clone(), counts: *c })
            .collect();
        counts.insert(set, rows);
    }

    // the service's own pools must agree with the local bookkeeping
    for (set, filter) in [(VoteSet::All, PoolFilter::All), (VoteSet::Filtered, PoolFilter::Filtered)] {
        if backend.export(&campaign_id, filter)? != counts[&set] {
            return Err(CliError::Invariant(format!("service export for {filter:?} differs from the simulated votes")));
        }
    }

    let report = SimulationReport {
        campaign_id,
        n_workers: workers.len(),
        n_labels: votes.len() as u64,
        n_reviews,
        n_rounds,
        pools_by_persona,
        pure_agreement,
        all_items_agreement,
    };
    Ok(Simulation { report, workers, final_pools, counts })
}

pub fn counts_file(set: VoteSet) -> String {
    let name = serde_json::to_value(set).expect("serializes");
    format!("counts_{}.csv", name.as_str().expect("string tag"))
}

pub fn write_outputs(sim: &Simulation, backend: &mut dyn Backend, out: &Path) -> Result<Vec<String>> {
    io::create_dir(out)?;
    let mut outputs = Vec::new();
    for (set, rows) in &sim.counts {
        let name = counts_file(*set);
        io::write_counts(&out.join(&name), rows)?;
        outputs.push(name);
    }
    let mut rows = Vec::with_capacity(sim.workers.len());
    for w in &sim.workers {
        let p = backend.worker(&w.worker_id)?;
        rows.push([
            w.worker_id.clone(),
            w.persona.tag().to_string(),
            serde_json::to_value(p.pool).expect("serializes").as_str().unwrap_or_default().to_string(),
            p.n_labels.to_string(),
            p.n_reviewed.to_string(),
            p.n_accepted.to_string(),
        ]);
    }
    io::write_csv(
        &out.join(WORKERS_FILE),
        &["worker_id", "persona", "pool", "n_labels", "n_reviewed", "n_accepted"],
        rows,
    )?;
    outputs.push(WORKERS_FILE.into());
    io::write_json(&out.join(REPORT_FILE), &sim.report)?;
    outputs.push(REPORT_FILE.into());
    Ok(outputs)
}

pub fn run(
    backend: &mut dyn Backend,
    corpus_dir: &Path,
    cfg: &SimulateConfig,
    out: &Path,
) -> Result<(SimulationReport, Outcome)> {
    let corpus = Corpus::open(corpus_dir)?;
    let items = corpus.synthetic_items()?;
    let sim = simulate(backend, &corpus.manifest_path(), &items, cfg)?;
    let outputs = write_outputs(&sim, backend, out)?;
    let outcome = Outcome {
        config: serde_json::to_value(cfg).expect("serializes"),
        seed: Some(cfg.seed),
        inputs: vec![corpus_dir.to_path_buf()],
        outputs,
        partial_failure: None,
    };
    Ok((sim.report, outcome))
}
