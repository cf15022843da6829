//! Worker filtration: review bookkeeping, the promotion/exclusion policy and
//! an automated leave-one-out consensus score for reviewers.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::aggregation::majority_consensus;
use crate::event::AnnotationEvent;
use crate::label_model::LabelCountVector;

#[derive(Debug, Error, PartialEq)]
pub enum QualityError {
    #[error("unknown worker {0:?}")]
    UnknownWorker(String),
    #[error("worker {0:?} already registered")]
    DuplicateWorker(String),
    #[error("worker {worker_id:?} has no label on item {item_id:?}")]
    UnknownLabel { worker_id: String, item_id: String },
    #[error("reviewer {reviewer_id:?} already judged worker {worker_id:?} on item {item_id:?}")]
    DuplicateDecision { reviewer_id: String, worker_id: String, item_id: String },
    #[error("worker {0:?} has no label on an item with at least two other labels")]
    InsufficientData(String),
    #[error("invalid quality policy: {0}")]
    InvalidPolicy(String),
    #[error("worker {worker_id:?} cannot move from {from:?} to {to:?}")]
    InvalidTransition { worker_id: String, from: Pool, to: Pool },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pool {
    #[default]
    Unfiltered,
    Filtered,
    Excluded,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Accept,
    Reject,
}

impl std::str::FromStr for Verdict {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "accept" => Ok(Verdict::Accept),
            "reject" => Ok(Verdict::Reject),
            other => Err(format!("unknown verdict {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WorkerProfile {
    pub worker_id: String,
    pub consented: bool,
    pub pool: Pool,
    pub n_labels: u64,
    pub n_reviewed: u64,
    pub n_accepted: u64,
}

impl WorkerProfile {
    pub fn new(worker_id: impl Into<String>, consented: bool) -> Self {
        Self {
            worker_id: worker_id.into(),
            consented,
            pool: Pool::Unfiltered,
            n_labels: 0,
            n_reviewed: 0,
            n_accepted: 0,
        }
    }

    pub fn accept_rate(&self) -> Option<f64> {
        (self.n_reviewed > 0).then(|| self.n_accepted as f64 / self.n_reviewed as f64)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReviewDecision {
    pub reviewer_id: String,
    pub worker_id: String,
    pub item_id: String,
    pub verdict: Verdict,
    #[serde(default)]
    pub timestamp: u64,
}

/// Thresholds applied after every review.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QualityPolicy {
    pub min_reviewed: u64,
    pub min_accept_rate: f64,
    pub max_accept_rate_for_exclusion: f64,
    /// Reviewer aid only; never promotes or excludes on its own.
    #[serde(default)]
    pub consensus_agreement_floor: Option<f64>,
}

impl Default for QualityPolicy {
    fn default() -> Self {
        Self {
            min_reviewed: 10,
            min_accept_rate: 0.9,
            max_accept_rate_for_exclusion: 0.3,
            consensus_agreement_floor: None,
        }
    }
}

impl QualityPolicy {
    pub fn validate(&self) -> Result<(), QualityError> {
        let in_unit = |x: f64| (0.0..=1.0).contains(&x);
        if !in_unit(self.min_accept_rate) || !in_unit(self.max_accept_rate_for_exclusion) {
            return Err(QualityError::InvalidPolicy("rates must lie in [0, 1]".into()));
        }
        if self.min_accept_rate <= self.max_accept_rate_for_exclusion {
            return Err(QualityError::InvalidPolicy(
                "min_accept_rate must exceed max_accept_rate_for_exclusion".into(),
            ));
        }
        if let Some(f) = self.consensus_agreement_floor {
            if !in_unit(f) {
                return Err(QualityError::InvalidPolicy("consensus_agreement_floor must lie in [0, 1]".into()));
            }
        }
        Ok(())
    }

    /// Pool an unfiltered worker moves to given its counters. Filtered and
    /// excluded are terminal under the policy.
    pub fn assess(&self, profile: &WorkerProfile) -> Pool {
        if profile.pool != Pool::Unfiltered || profile.n_reviewed < self.min_reviewed || profile.n_reviewed == 0 {
            return profile.pool;
        }
        let rate = profile.n_accepted as f64 / profile.n_reviewed as f64;
        if rate >= self.min_accept_rate {
            Pool::Filtered
        } else if rate <= self.max_accept_rate_for_exclusion {
            Pool::Excluded
        } else {
            Pool::Unfiltered
        }
    }
}

/// Worker ids per pool, each list sorted.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PoolMembership {
    pub unfiltered: Vec<String>,
    pub filtered: Vec<String>,
    pub excluded: Vec<String>,
}

/// Worker profiles plus the label and review indices needed to validate decisions.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ProfileStore {
    policy: QualityPolicy,
    profiles: BTreeMap<String, WorkerProfile>,
    labels: BTreeSet<(String, String)>,
    decisions: BTreeSet<(String, String, String)>,
}

impl ProfileStore {
    pub fn new(policy: QualityPolicy) -> Result<Self, QualityError> {
        policy.validate()?;
        Ok(Self { policy, ..Self::default() })
    }

    pub fn policy(&self) -> QualityPolicy {
        self.policy
    }

    pub fn register(&mut self, worker_id: &str, consented: bool) -> Result<&WorkerProfile, QualityError> {
        if self.profiles.contains_key(worker_id) {
            return Err(QualityError::DuplicateWorker(worker_id.to_string()));
        }
        Ok(self.profiles.entry(worker_id.to_string()).or_insert_with(|| WorkerProfile::new(worker_id, consented)))
    }

    pub fn get(&self, worker_id: &str) -> Option<&WorkerProfile> {
        self.profiles.get(worker_id)
    }

    pub fn profiles(&self) -> impl Iterator<Item = &WorkerProfile> {
        self.profiles.values()
    }

    pub fn has_label(&self, worker_id: &str, item_id: &str) -> bool {
        self.labels.contains(&(worker_id.to_string(), item_id.to_string()))
    }

    pub fn record_label(&mut self, worker_id: &str, item_id: &str) -> Result<(), QualityError> {
        let profile = self
            .profiles
            .get_mut(worker_id)
            .ok_or_else(|| QualityError::UnknownWorker(worker_id.to_string()))?;
        profile.n_labels += 1;
        self.labels.insert((worker_id.to_string(), item_id.to_string()));
        Ok(())
    }

    /// Checks a decision without applying it.
    pub fn validate_review(&self, d: &ReviewDecision) -> Result<(), QualityError> {
        if !self.profiles.contains_key(&d.worker_id) {
            return Err(QualityError::UnknownWorker(d.worker_id.clone()));
        }
        if !self.has_label(&d.worker_id, &d.item_id) {
            return Err(QualityError::UnknownLabel { worker_id: d.worker_id.clone(), item_id: d.item_id.clone() });
        }
        if self.decisions.contains(&(d.reviewer_id.clone(), d.worker_id.clone(), d.item_id.clone())) {
            return Err(QualityError::DuplicateDecision {
                reviewer_id: d.reviewer_id.clone(),
                worker_id: d.worker_id.clone(),
                item_id: d.item_id.clone(),
            });
        }
        Ok(())
    }

    /// Applies a review and re-assesses the worker's pool.
    pub fn record_review(&mut self, d: &ReviewDecision) -> Result<&WorkerProfile, QualityError> {
        self.validate_review(d)?;
        self.decisions.insert((d.reviewer_id.clone(), d.worker_id.clone(), d.item_id.clone()));
        let policy = self.policy;
        let profile = self.profiles.get_mut(&d.worker_id).expect("validated");
        profile.n_reviewed += 1;
        if d.verdict == Verdict::Accept {
            profile.n_accepted += 1;
        }
        profile.pool = policy.assess(profile);
        Ok(profile)
    }

    /// Explicit promotion of an unfiltered worker.
    pub fn promote(&mut self, worker_id: &str) -> Result<&WorkerProfile, QualityError> {
        self.transition(worker_id, Pool::Filtered)
    }

    /// Explicit exclusion; excluded is absorbing.
    pub fn exclude(&mut self, worker_id: &str) -> Result<&WorkerProfile, QualityError> {
        self.transition(worker_id, Pool::Excluded)
    }

    fn transition(&mut self, worker_id: &str, to: Pool) -> Result<&WorkerProfile, QualityError> {
        let profile = self
            .profiles
            .get_mut(worker_id)
            .ok_or_else(|| QualityError::UnknownWorker(worker_id.to_string()))?;
        let allowed = matches!(
            (profile.pool, to),
            (Pool::Unfiltered, Pool::Filtered) | (Pool::Unfiltered, Pool::Excluded) | (Pool::Filtered, Pool::Excluded)
        ) || profile.pool == to;
        if !allowed {
            return Err(QualityError::InvalidTransition { worker_id: worker_id.to_string(), from: profile.pool, to });
        }
        profile.pool = to;
        Ok(profile)
    }

    pub fn pool_membership(&self) -> PoolMembership {
        let mut m = PoolMembership::default();
        for p in self.profiles.values() {
            let list = match p.pool {
                Pool::Unfiltered => &mut m.unfiltered,
                Pool::Filtered => &mut m.filtered,
                Pool::Excluded => &mut m.excluded,
            };
            list.push(p.worker_id.clone());
        }
        m
    }
}

/// Fraction of a worker's labels matching the item's leave-one-out majority.
///
/// Items where fewer than two other labels exist, or where the remaining votes
/// tie, are skipped.
pub fn consensus_agreement_score<'a, I>(worker_id: &str, events: I) -> Result<f64, QualityError>
where
    I: IntoIterator<Item = &'a AnnotationEvent>,
{
    let mut per_item: HashMap<(&str, &str), LabelCountVector> = HashMap::new();
    let mut own: Vec<&AnnotationEvent> = Vec::new();
    for e in events {
        per_item.entry((e.campaign_id.as_str(), e.item_id.as_str())).or_default().increment(e.label);
        if e.worker_id == worker_id {
            own.push(e);
        }
    }
    let mut scored = 0usize;
    let mut matched = 0usize;
    for e in own {
        let mut counts = per_item[&(e.campaign_id.as_str(), e.item_id.as_str())];
        let mut raw = *counts.counts();
        raw[e.label.ordinal()] -= 1;
        counts = raw.into();
        if counts.total() < 2 {
            continue;
        }
        let consensus = majority_consensus(&counts).expect("non-empty");
        if let Some(winner) = consensus.unique() {
            scored += 1;
            if winner == e.label {
                matched += 1;
            }
        }
    }
    if scored == 0 {
        return Err(QualityError::InsufficientData(worker_id.to_string()));
    }
    Ok(matched as f64 / scored as f64)
}

/// Parses review CSV rows: `reviewer_id,worker_id,item_id,verdict`.
pub fn read_review_csv<R: std::io::Read>(reader: R) -> Result<Vec<ReviewDecision>, String> {
    let mut r = csv::Reader::from_reader(reader);
    let header: Vec<String> = r.headers().map_err(|e| e.to_string())?.iter().map(|h| h.trim().to_string()).collect();
    if header != ["reviewer_id", "worker_id", "item_id", "verdict"] {
        return Err(format!("unexpected review CSV header {header:?}"));
    }
    let mut out = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| e.to_string())?;
        if rec.len() != 4 {
            return Err(format!("review row {}: expected 4 fields", i + 1));
        }
        out.push(ReviewDecision {
            reviewer_id: rec[0].trim().to_string(),
            worker_id: rec[1].trim().to_string(),
            item_id: rec[2].trim().to_string(),
            verdict: rec[3].parse().map_err(|e| format!("review row {}: {e}", i + 1))?,
            timestamp: 0,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::label_model::EmotionClass::{self, *};

    fn review(worker: &str, item: &str, verdict: Verdict) -> ReviewDecision {
        ReviewDecision {
            reviewer_id: "r".into(),
            worker_id: worker.into(),
            item_id: item.into(),
            verdict,
            timestamp: 0,
        }
    }

    fn store_with_labels(worker: &str, n: usize) -> ProfileStore {
        let mut s = ProfileStore::new(QualityPolicy::default()).unwrap();
        s.register(worker, true).unwrap();
        for i in 0..n {
            s.record_label(worker, &format!("item{i}")).unwrap();
        }
        s
    }

    #[test]
    fn ten_accepts_promote() {
        let mut s = store_with_labels("w", 10);
        for i in 0..9 {
            assert_eq!(s.record_review(&review("w", &format!("item{i}"), Verdict::Accept)).unwrap().pool, Pool::Unfiltered);
        }
        let p = s.record_review(&review("w", "item9", Verdict::Accept)).unwrap();
        assert_eq!((p.pool, p.n_reviewed, p.n_accepted), (Pool::Filtered, 10, 10));
    }

    #[test]
    fn unreviewed_worker_stays_unfiltered() {
        let s = store_with_labels("w", 50);
        assert_eq!(s.get("w").unwrap().pool, Pool::Unfiltered);
        assert_eq!(s.pool_membership().unfiltered, vec!["w".to_string()]);
    }

    #[test]
    fn rejects_exclude_and_exclusion_is_absorbing() {
        let mut s = store_with_labels("w", 12);
        for i in 0..10 {
            let v = if i < 3 { Verdict::Accept } else { Verdict::Reject };
            s.record_review(&review("w", &format!("item{i}"), v)).unwrap();
        }
        assert_eq!(s.get("w").unwrap().pool, Pool::Excluded);
        // later accepts cannot bring the worker back
        s.record_review(&review("w", "item10", Verdict::Accept)).unwrap();
        s.record_review(&review("w", "item11", Verdict::Accept)).unwrap();
        assert_eq!(s.get("w").unwrap().pool, Pool::Excluded);
        assert!(matches!(s.promote("w"), Err(QualityError::InvalidTransition { .. })));
    }

    #[test]
    fn review_errors() {
        let mut s = store_with_labels("w", 1);
        assert_eq!(
            s.record_review(&review("ghost", "item0", Verdict::Accept)).unwrap_err(),
            QualityError::UnknownWorker("ghost".into())
        );
        assert!(matches!(
            s.record_review(&review("w", "nope", Verdict::Accept)),
            Err(QualityError::UnknownLabel { .. })
        ));
        s.record_review(&review("w", "item0", Verdict::Accept)).unwrap();
        assert!(matches!(
            s.record_review(&review("w", "item0", Verdict::Reject)),
            Err(QualityError::DuplicateDecision { .. })
        ));
        let mut other = review("w", "item0", Verdict::Reject);
        other.reviewer_id = "r2".into();
        assert!(s.record_review(&other).is_ok());
        assert!(matches!(s.register("w", true), Err(QualityError::DuplicateWorker(_))));
    }

    #[test]
    fn policy_validation() {
        assert!(QualityPolicy::default().validate().is_ok());
        let bad = QualityPolicy { min_accept_rate: 0.3, max_accept_rate_for_exclusion: 0.3, ..Default::default() };
        assert!(bad.validate().is_err());
        assert!(ProfileStore::new(bad).is_err());
    }

    #[test]
    fn membership_after_promotions() {
        let mut s = ProfileStore::new(QualityPolicy::default()).unwrap();
        for i in 0..6 {
            s.register(&format!("w{i}"), true).unwrap();
        }
        assert_eq!(s.pool_membership().unfiltered.len(), 6);
        s.promote("w1").unwrap();
        s.promote("w4").unwrap();
        let m = s.pool_membership();
        assert_eq!(m.filtered, vec!["w1".to_string(), "w4".to_string()]);
        assert_eq!(m.unfiltered.len(), 4);
    }

    fn ev(worker: &str, item: &str, label: EmotionClass) -> AnnotationEvent {
        AnnotationEvent {
            event_id: 0,
            worker_id: worker.into(),
            item_id: item.into(),
            label,
            campaign_id: "c".into(),
            timestamp: 0,
        }
    }

    #[test]
    fn consensus_score_extremes() {
        let mut log = Vec::new();
        for item in ["a", "b", "c"] {
            for w in ["x", "y", "z"] {
                log.push(ev(w, item, Happy));
            }
            log.push(ev("good", item, Happy));
            log.push(ev("bad", item, Sad));
        }
        assert_eq!(consensus_agreement_score("good", &log).unwrap(), 1.0);
        assert_eq!(consensus_agreement_score("bad", &log).unwrap(), 0.0);
        assert!(matches!(consensus_agreement_score("nobody", &log), Err(QualityError::InsufficientData(_))));
        let lonely = vec![ev("a", "i", Happy), ev("b", "i", Sad)];
        assert!(consensus_agreement_score("a", &lonely).is_err());
    }

    #[test]
    fn review_csv_parsing() {
        let text = "reviewer_id,worker_id,item_id,verdict\nr1,w1,i1,accept\nr1,w2,i1,REJECT\n";
        let rows = read_review_csv(text.as_bytes()).unwrap();
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[1].verdict, Verdict::Reject);
        assert!(read_review_csv("a,b\n".as_bytes()).is_err());
        assert!(read_review_csv("reviewer_id,worker_id,item_id,verdict\nr,w,i,maybe\n".as_bytes()).is_err());
    }
}
