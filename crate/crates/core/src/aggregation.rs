//! Vote aggregation: soft targets, majority consensus, top-N coverage,
//! merged-class counts and agreement against ground truth.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::label_model::{EmotionClass, LabelCountVector, SoftTarget, NUM_CLASSES};
use crate::scalar::Scalar;

#[derive(Debug, Error)]
pub enum AggregationError {
    #[error("count vector has zero total")]
    EmptyCounts,
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("coverage threshold {0} outside (0, 1]")]
    InvalidThreshold(f64),
    #[error("smoothing constant {0} must be finite and >= 0")]
    InvalidSmoothing(f64),
    #[error("invalid merge map: {0}")]
    InvalidMerge(String),
    #[error("count table: {0}")]
    Table(String),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

/// Normalizes vote counts into a probability vector.
pub fn to_soft_target<T: Scalar>(counts: &LabelCountVector) -> Result<SoftTarget<T>, AggregationError> {
    to_soft_target_smoothed(counts, 0.0)
}

/// Additive smoothing: `(c_i + alpha) / (total + 7 alpha)`. `alpha = 0` is plain normalization.
pub fn to_soft_target_smoothed<T: Scalar>(
    counts: &LabelCountVector,
    alpha: f64,
) -> Result<SoftTarget<T>, AggregationError> {
    if !alpha.is_finite() || alpha < 0.0 {
        return Err(AggregationError::InvalidSmoothing(alpha));
    }
    let total = counts.total();
    if total == 0 && alpha == 0.0 {
        return Err(AggregationError::EmptyCounts);
    }
    let alpha = T::lit(alpha);
    let denom = T::from_count(total) + alpha * T::from_count(NUM_CLASSES as u64);
    let probs = counts.counts().map(|c| (T::from_count(u64::from(c)) + alpha) / denom);
    Ok(SoftTarget::from_probs_unchecked(probs))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConsensusResult {
    /// Classes sharing the maximum count, in canonical order.
    pub winners: Vec<EmotionClass>,
    pub winning_count: u32,
    pub is_tie: bool,
}

impl ConsensusResult {
    /// The unique winner, if there is no tie.
    pub fn unique(&self) -> Option<EmotionClass> {
        (!self.is_tie).then(|| self.winners[0])
    }
}

pub fn majority_consensus(counts: &LabelCountVector) -> Result<ConsensusResult, AggregationError> {
    if counts.total() == 0 {
        return Err(AggregationError::EmptyCounts);
    }
    let winning_count = *counts.counts().iter().max().expect("seven classes");
    let winners: Vec<EmotionClass> =
        EmotionClass::ALL.into_iter().filter(|&c| counts.get(c) == winning_count).collect();
    Ok(ConsensusResult { is_tie: winners.len() > 1, winners, winning_count })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoverageResult {
    pub n: usize,
    pub threshold: f64,
    pub covered_fraction: f64,
}

fn check_threshold(threshold: f64) -> Result<(), AggregationError> {
    if threshold > 0.0 && threshold <= 1.0 {
        Ok(())
    } else {
        Err(AggregationError::InvalidThreshold(threshold))
    }
}

/// Classes ordered by descending count, ties in canonical order.
pub fn ranked_classes(counts: &LabelCountVector) -> [EmotionClass; NUM_CLASSES] {
    let mut order = EmotionClass::ALL;
    // stable sort keeps canonical order among equal counts
    order.sort_by(|a, b| counts.get(*b).cmp(&counts.get(*a)));
    order
}

/// Smallest number of top-voted classes whose votes reach `threshold` of the total.
pub fn topn_coverage(counts: &LabelCountVector, threshold: f64) -> Result<CoverageResult, AggregationError> {
    check_threshold(threshold)?;
    let total = counts.total();
    if total == 0 {
        return Err(AggregationError::EmptyCounts);
    }
    let mut covered = 0u64;
    for (k, class) in ranked_classes(counts).into_iter().enumerate() {
        covered += u64::from(counts.get(class));
        let fraction = covered as f64 / total as f64;
        if fraction >= threshold {
            return Ok(CoverageResult { n: k + 1, threshold, covered_fraction: fraction });
        }
    }
    // all seven classes cover the full total, and threshold <= 1
    unreachable!("threshold <= 1 is always reached by all classes")
}

/// Item counts per required top-N, for N in 1..=7.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageHistogram {
    pub threshold: f64,
    /// `bins[n - 1]` holds the number of items needing exactly `n` classes.
    pub bins: [usize; NUM_CLASSES],
}

impl CoverageHistogram {
    pub fn count(&self, n: usize) -> usize {
        if (1..=NUM_CLASSES).contains(&n) {
            self.bins[n - 1]
        } else {
            0
        }
    }

    pub fn total(&self) -> usize {
        self.bins.iter().sum()
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<(), AggregationError> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["n", "items"])?;
        for (i, count) in self.bins.iter().enumerate() {
            w.write_record([(i + 1).to_string(), count.to_string()])?;
        }
        w.flush().map_err(csv::Error::from)?;
        Ok(())
    }
}

pub fn coverage_histogram<'a, I>(dataset: I, threshold: f64) -> Result<CoverageHistogram, AggregationError>
where
    I: IntoIterator<Item = &'a LabelCountVector>,
{
    check_threshold(threshold)?;
    let mut bins = [0usize; NUM_CLASSES];
    let mut seen = 0usize;
    for counts in dataset {
        bins[topn_coverage(counts, threshold)?.n - 1] += 1;
        seen += 1;
    }
    if seen == 0 {
        return Err(AggregationError::EmptyDataset);
    }
    Ok(CoverageHistogram { threshold, bins })
}

/// A partition of the seven classes into named groups.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MergeMap {
    names: Vec<String>,
    group_of: [usize; NUM_CLASSES],
}

impl MergeMap {
    /// Seven singleton groups.
    pub fn identity() -> Self {
        Self {
            names: EmotionClass::ALL.iter().map(|c| c.name().to_string()).collect(),
            group_of: [0, 1, 2, 3, 4, 5, 6],
        }
    }

    /// Groups must be non-empty, disjoint and cover every class.
    pub fn from_groups(groups: &[(&str, &[EmotionClass])]) -> Result<Self, AggregationError> {
        let mut group_of = [usize::MAX; NUM_CLASSES];
        let mut names = Vec::with_capacity(groups.len());
        for (g, (name, members)) in groups.iter().enumerate() {
            if members.is_empty() {
                return Err(AggregationError::InvalidMerge(format!("group {name:?} is empty")));
            }
            for &m in *members {
                if group_of[m.ordinal()] != usize::MAX {
                    return Err(AggregationError::InvalidMerge(format!("{m} appears in two groups")));
                }
                group_of[m.ordinal()] = g;
            }
            names.push((*name).to_string());
        }
        if let Some(i) = group_of.iter().position(|&g| g == usize::MAX) {
            return Err(AggregationError::InvalidMerge(format!("{} is not assigned", EmotionClass::ALL[i])));
        }
        Ok(Self { names, group_of })
    }

    /// `anger + disgust` and `fear + surprise`, other classes kept alone.
    pub fn commonly_confused() -> Self {
        use EmotionClass::*;
        Self::from_groups(&[
            ("anger+disgust", &[Anger, Disgust]),
            ("fear+surprise", &[Fear, Surprised]),
            ("happy", &[Happy]),
            ("neutral", &[Neutral]),
            ("sad", &[Sad]),
        ])
        .expect("static partition")
    }

    pub fn group_of(&self, class: EmotionClass) -> usize {
        self.group_of[class.ordinal()]
    }

    pub fn group_names(&self) -> &[String] {
        &self.names
    }

    pub fn n_groups(&self) -> usize {
        self.names.len()
    }
}

pub fn merge_counts(counts: &LabelCountVector, merge: &MergeMap) -> Vec<u64> {
    let mut merged = vec![0u64; merge.n_groups()];
    for class in EmotionClass::ALL {
        merged[merge.group_of(class)] += u64::from(counts.get(class));
    }
    merged
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgreementRow {
    /// Class or merged-group name.
    pub label: String,
    pub n_items: usize,
    pub n_agreeing: usize,
    /// `None` when the class has no items.
    pub rate: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgreementReport {
    pub rows: Vec<AgreementRow>,
    pub n_items: usize,
    pub n_agreeing: usize,
    pub overall_rate: f64,
    /// Items whose consensus was tied; these never count as agreement.
    pub n_ties: usize,
}

impl AgreementReport {
    pub fn row(&self, label: &str) -> Option<&AgreementRow> {
        self.rows.iter().find(|r| r.label == label)
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<(), AggregationError> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["label", "n_items", "n_agreeing", "rate"])?;
        for r in &self.rows {
            w.write_record([
                r.label.clone(),
                r.n_items.to_string(),
                r.n_agreeing.to_string(),
                r.rate.map(|x| format!("{x:.6}")).unwrap_or_default(),
            ])?;
        }
        w.write_record([
            "overall".to_string(),
            self.n_items.to_string(),
            self.n_agreeing.to_string(),
            format!("{:.6}", self.overall_rate),
        ])?;
        w.flush().map_err(csv::Error::from)?;
        Ok(())
    }
}

/// Majority-consensus agreement with ground truth, per class or merged group.
///
/// With a merge map, consensus is taken over merged counts and compared with
/// the ground truth's group. A tied consensus is never agreement.
pub fn agreement_report(
    items: &[(EmotionClass, LabelCountVector)],
    merge: Option<&MergeMap>,
) -> Result<AgreementReport, AggregationError> {
    if items.is_empty() {
        return Err(AggregationError::EmptyDataset);
    }
    let identity;
    let merge = match merge {
        Some(m) => m,
        None => {
            identity = MergeMap::identity();
            &identity
        }
    };
    let mut n_items = vec![0usize; merge.n_groups()];
    let mut n_agree = vec![0usize; merge.n_groups()];
    let mut n_ties = 0;
    for (truth, counts) in items {
        if counts.total() == 0 {
            return Err(AggregationError::EmptyCounts);
        }
        let group = merge.group_of(*truth);
        n_items[group] += 1;
        let merged = merge_counts(counts, merge);
        let best = *merged.iter().max().expect("non-empty");
        let n_best = merged.iter().filter(|&&c| c == best).count();
        if n_best > 1 {
            n_ties += 1;
        } else if merged[group] == best {
            n_agree[group] += 1;
        }
    }
    let rows = merge
        .group_names()
        .iter()
        .enumerate()
        .map(|(g, name)| AgreementRow {
            label: name.clone(),
            n_items: n_items[g],
            n_agreeing: n_agree[g],
            rate: (n_items[g] > 0).then(|| n_agree[g] as f64 / n_items[g] as f64),
        })
        .collect();
    let total_agree: usize = n_agree.iter().sum();
    Ok(AgreementReport {
        rows,
        n_items: items.len(),
        n_agreeing: total_agree,
        overall_rate: total_agree as f64 / items.len() as f64,
        n_ties,
    })
}

/// One row of the count-table CSV.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CountRow {
    pub item_id: String,
    pub counts: LabelCountVector,
}

pub const COUNT_TABLE_HEADER: [&str; 8] =
    ["item_id", "anger", "disgust", "fear", "happy", "neutral", "sad", "surprised"];

pub fn read_count_table<R: Read>(reader: R) -> Result<Vec<CountRow>, AggregationError> {
    let mut r = csv::Reader::from_reader(reader);
    let header = r.headers()?.clone();
    if header.iter().map(str::trim).ne(COUNT_TABLE_HEADER.iter().copied()) {
        return Err(AggregationError::Table(format!("unexpected header {:?}", header.iter().collect::<Vec<_>>())));
    }
    let mut rows = Vec::new();
    for record in r.records() {
        let record = record?;
        let mut counts = [0u32; NUM_CLASSES];
        for (i, slot) in counts.iter_mut().enumerate() {
            let field = record.get(i + 1).unwrap_or("");
            *slot = field.trim().parse().map_err(|_| {
                AggregationError::Table(format!("row {:?}: bad count {field:?}", record.get(0).unwrap_or("")))
            })?;
        }
        rows.push(CountRow { item_id: record[0].to_string(), counts: counts.into() });
    }
    Ok(rows)
}

pub fn write_count_table<W: Write>(writer: W, rows: &[CountRow]) -> Result<(), AggregationError> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(COUNT_TABLE_HEADER)?;
    for row in rows {
        let mut rec = vec![row.item_id.clone()];
        rec.extend(row.counts.counts().iter().map(u32::to_string));
        w.write_record(&rec)?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::label_model::EmotionClass::*;
    use proptest::prelude::*;

    fn cv(c: [u32; 7]) -> LabelCountVector {
        c.into()
    }

    #[test]
    fn soft_target_of_table_row() {
        let t: SoftTarget<f64> = to_soft_target(&cv([30, 37, 15, 8, 0, 8, 2])).unwrap();
        assert_eq!(t.probs(), &[0.30, 0.37, 0.15, 0.08, 0.00, 0.08, 0.02]);
        let t: SoftTarget<f64> = to_soft_target(&cv([0, 0, 0, 100, 0, 0, 0])).unwrap();
        assert_eq!(t, SoftTarget::one_hot(Happy));
        let t: SoftTarget<f64> = to_soft_target(&cv([1; 7])).unwrap();
        assert!(t.probs().iter().all(|&p| p == 1.0 / 7.0));
        assert!(matches!(to_soft_target::<f64>(&LabelCountVector::zero()), Err(AggregationError::EmptyCounts)));
    }

    #[test]
    fn smoothing_is_opt_in() {
        let t: SoftTarget<f64> = to_soft_target_smoothed(&LabelCountVector::zero(), 1.0).unwrap();
        assert_eq!(t, SoftTarget::uniform());
        let t: SoftTarget<f64> = to_soft_target_smoothed(&cv([3, 0, 0, 0, 0, 0, 0]), 1.0).unwrap();
        assert!((t.get(Anger) - 0.4).abs() < 1e-15);
        assert!(to_soft_target_smoothed::<f64>(&cv([1; 7]), -1.0).is_err());
    }

    #[test]
    fn consensus_examples() {
        let c = majority_consensus(&cv([30, 37, 15, 8, 0, 8, 2])).unwrap();
        assert_eq!((c.winners.as_slice(), c.winning_count, c.is_tie), (&[Disgust][..], 37, false));
        let c = majority_consensus(&cv([5, 5, 0, 0, 0, 0, 0])).unwrap();
        assert_eq!(c.winners, vec![Anger, Disgust]);
        assert!(c.is_tie && c.unique().is_none());
        let c = majority_consensus(&cv([2, 1, 13, 20, 1, 0, 63])).unwrap();
        assert_eq!(c.unique(), Some(Surprised));
        assert!(majority_consensus(&LabelCountVector::zero()).is_err());
    }

    #[test]
    fn coverage_examples() {
        // 62% angry, 25% disgusted, the rest at most 5% each
        let r = topn_coverage(&cv([62, 25, 5, 3, 2, 2, 1]), 0.80).unwrap();
        assert_eq!(r.n, 2);
        assert!((r.covered_fraction - 0.87).abs() < 1e-12);
        for t in [0.01, 0.5, 0.8, 1.0] {
            assert_eq!(topn_coverage(&cv([0, 0, 0, 0, 9, 0, 0]), t).unwrap().n, 1);
        }
        assert!(matches!(topn_coverage(&cv([1; 7]), 0.0), Err(AggregationError::InvalidThreshold(_))));
        assert!(matches!(topn_coverage(&cv([1; 7]), 1.1), Err(AggregationError::InvalidThreshold(_))));
        assert!(matches!(topn_coverage(&LabelCountVector::zero(), 0.8), Err(AggregationError::EmptyCounts)));
    }

    #[test]
    fn ranked_ties_follow_canonical_order() {
        let order = ranked_classes(&cv([1, 3, 3, 0, 0, 3, 0]));
        assert_eq!(&order[..4], &[Disgust, Fear, Sad, Anger]);
    }

    #[test]
    fn histogram_examples() {
        let data = vec![cv([0, 0, 0, 100, 0, 0, 0]), cv([0, 7, 0, 0, 0, 0, 0])];
        let h = coverage_histogram(&data, 0.8).unwrap();
        assert_eq!(h.count(1), 2);
        assert_eq!(h.total(), 2);
        assert!(matches!(coverage_histogram(&[], 0.8), Err(AggregationError::EmptyDataset)));
    }

    #[test]
    fn merge_examples() {
        let ad = MergeMap::from_groups(&[
            ("anger+disgust", &[Anger, Disgust]),
            ("fear", &[Fear]),
            ("happy", &[Happy]),
            ("neutral", &[Neutral]),
            ("sad", &[Sad]),
            ("surprised", &[Surprised]),
        ])
        .unwrap();
        assert_eq!(merge_counts(&cv([30, 37, 15, 8, 0, 8, 2]), &ad)[0], 67);
        let m = MergeMap::commonly_confused();
        assert_eq!(merge_counts(&cv([2, 3, 58, 2, 3, 1, 31]), &m)[m.group_of(Fear)], 89);
        assert_eq!(merge_counts(&cv([1, 2, 3, 4, 5, 6, 7]), &MergeMap::identity()), vec![1, 2, 3, 4, 5, 6, 7]);

        assert!(MergeMap::from_groups(&[("a", &[Anger])]).is_err());
        assert!(MergeMap::from_groups(&[("a", &EmotionClass::ALL), ("b", &[Anger])]).is_err());
        assert!(MergeMap::from_groups(&[("a", &EmotionClass::ALL), ("b", &[])]).is_err());
    }

    #[test]
    fn agreement_counts_ties_as_disagreement() {
        let items = vec![
            (Anger, cv([5, 0, 0, 0, 0, 0, 0])),
            (Anger, cv([5, 5, 0, 0, 0, 0, 0])),
            (Happy, cv([0, 0, 0, 3, 0, 1, 0])),
        ];
        let r = agreement_report(&items, None).unwrap();
        assert_eq!(r.row("anger").unwrap().n_agreeing, 1);
        assert_eq!(r.row("anger").unwrap().rate, Some(0.5));
        assert_eq!(r.row("happy").unwrap().rate, Some(1.0));
        assert_eq!(r.row("sad").unwrap().rate, None);
        assert_eq!(r.n_ties, 1);
        // merging resolves the anger/disgust tie in favor of the merged group
        let merged = agreement_report(&items, Some(&MergeMap::commonly_confused())).unwrap();
        assert_eq!(merged.row("anger+disgust").unwrap().rate, Some(1.0));
        assert!(agreement_report(&[], None).is_err());
    }

    #[test]
    fn coarsening_can_lose_agreement() {
        // anger is the unique class maximum, but fear+surprise outweighs anger+disgust
        let items = vec![(Anger, cv([40, 0, 30, 0, 0, 0, 30]))];
        assert_eq!(agreement_report(&items, None).unwrap().n_agreeing, 1);
        assert_eq!(agreement_report(&items, Some(&MergeMap::commonly_confused())).unwrap().n_agreeing, 0);
    }

    #[test]
    fn count_table_round_trip_and_errors() {
        let rows = vec![
            CountRow { item_id: "9990-angry_F-AA-15".into(), counts: cv([30, 37, 15, 8, 0, 8, 2]) },
            CountRow { item_id: "x".into(), counts: cv([0; 7]) },
        ];
        let mut buf = Vec::new();
        write_count_table(&mut buf, &rows).unwrap();
        assert!(String::from_utf8_lossy(&buf).starts_with("item_id,anger,disgust,fear,happy,neutral,sad,surprised\n"));
        assert_eq!(read_count_table(&buf[..]).unwrap(), rows);
        assert!(read_count_table("item_id,a,b\n".as_bytes()).is_err());
        let bad = "item_id,anger,disgust,fear,happy,neutral,sad,surprised\nx,1,2,3,4,5,6,-1\n";
        assert!(read_count_table(bad.as_bytes()).is_err());
    }

    fn counts_strategy() -> impl Strategy<Value = LabelCountVector> {
        proptest::array::uniform7(0u32..60)
            .prop_filter("non-empty", |c| c.iter().any(|&x| x > 0))
            .prop_map(LabelCountVector::from)
    }

    proptest! {
        #[test]
        fn soft_target_is_scale_invariant(c in counts_strategy(), k in 1u32..20) {
            let a: SoftTarget<f64> = to_soft_target(&c).unwrap();
            let b: SoftTarget<f64> = to_soft_target(&c.scaled(k)).unwrap();
            let sum: f64 = a.probs().iter().sum();
            prop_assert!((sum - 1.0).abs() <= 1e-12);
            for (x, y) in a.probs().iter().zip(b.probs()) {
                prop_assert!((x - y).abs() <= 1e-15);
            }
        }

        #[test]
        fn consensus_is_scale_invariant(c in counts_strategy(), k in 1u32..20) {
            prop_assert_eq!(
                majority_consensus(&c).unwrap().winners,
                majority_consensus(&c.scaled(k)).unwrap().winners
            );
        }

        #[test]
        fn coverage_is_monotone_in_threshold(c in counts_strategy(), a in 0.01f64..1.0, b in 0.01f64..1.0) {
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            prop_assert!(topn_coverage(&c, lo).unwrap().n <= topn_coverage(&c, hi).unwrap().n);
        }

        #[test]
        fn merge_preserves_total(c in counts_strategy()) {
            let merged = merge_counts(&c, &MergeMap::commonly_confused());
            prop_assert_eq!(merged.iter().sum::<u64>(), c.total());
        }

        #[test]
        fn histogram_bins_sum_to_size(data in proptest::collection::vec(counts_strategy(), 1..40), t in 0.05f64..1.0) {
            prop_assert_eq!(coverage_histogram(&data, t).unwrap().total(), data.len());
        }
    }
}
