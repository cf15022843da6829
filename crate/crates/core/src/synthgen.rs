//! Synthetic corpora with known label distributions and simulated annotators.
//!
//! Each class has a parametric blob template. An item's raster is the blend of
//! class templates weighted by its true distribution, shifted per subject,
//! plus clamped Gaussian pixel noise.

use std::collections::BTreeSet;
use std::io::Write;

use rand::seq::{index, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::event::AnnotationEvent;
use crate::label_model::{EmotionClass, ItemRecord, Manifest, SoftTarget, NUM_CLASSES};
use crate::scalar::Scalar;
use crate::trainer::Raster;
use crate::worker_quality::Verdict;

#[derive(Debug, Error, PartialEq)]
pub enum SynthError {
    #[error("invalid corpus config: {0}")]
    InvalidConfig(String),
    #[error("campaign needs {needed} distinct workers per item, only {available} exist")]
    InsufficientWorkers { needed: usize, available: usize },
    #[error("invalid persona: {0}")]
    InvalidPersona(String),
}

/// Anisotropic Gaussian bump.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Blob {
    pub cx: f64,
    pub cy: f64,
    pub sigma_major: f64,
    pub sigma_minor: f64,
    /// Orientation of the major axis, radians.
    pub angle: f64,
    pub amplitude: f64,
}

impl Blob {
    fn eval(&self, x: f64, y: f64) -> f64 {
        let (s, c) = self.angle.sin_cos();
        let (dx, dy) = (x - self.cx, y - self.cy);
        let u = c * dx + s * dy;
        let v = -s * dx + c * dy;
        self.amplitude * (-0.5 * (u * u / (self.sigma_major * self.sigma_major) + v * v / (self.sigma_minor * self.sigma_minor))).exp()
    }
}

/// Deterministic template for one class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassPrototype {
    pub class: EmotionClass,
    pub blobs: Vec<Blob>,
}

/// Minimum pairwise mean absolute difference between class templates.
pub const SEPARABILITY_FLOOR: f64 = 0.05;

impl ClassPrototype {
    /// Template for `class` on a `size x size` canvas: an off-center round
    /// blob placed on a circle by class index plus a central bar whose
    /// orientation also depends on the class.
    pub fn for_class(class: EmotionClass, size: usize) -> Self {
        let k = class.ordinal() as f64;
        let n = NUM_CLASSES as f64;
        let center = (size as f64 - 1.0) / 2.0;
        let radius = size as f64 * 0.3;
        let theta = 2.0 * std::f64::consts::PI * k / n;
        let scale = size as f64 / 24.0;
        Self {
            class,
            blobs: vec![
                Blob {
                    cx: center + radius * theta.cos(),
                    cy: center + radius * theta.sin(),
                    sigma_major: 2.5 * scale,
                    sigma_minor: 2.5 * scale,
                    angle: 0.0,
                    amplitude: 0.9,
                },
                Blob {
                    cx: center,
                    cy: center,
                    sigma_major: 4.5 * scale,
                    sigma_minor: 1.2 * scale,
                    angle: std::f64::consts::PI * k / n,
                    amplitude: 0.6,
                },
            ],
        }
    }

    /// Rendered template, with the image content shifted by `(dx, dy)` pixels.
    pub fn render(&self, size: usize, dx: f64, dy: f64) -> Vec<f64> {
        let mut px = Vec::with_capacity(size * size);
        for y in 0..size {
            for x in 0..size {
                let (sx, sy) = (x as f64 - dx, y as f64 - dy);
                let v: f64 = self.blobs.iter().map(|b| b.eval(sx, sy)).sum();
                px.push(v.min(1.0));
            }
        }
        px
    }
}

/// Smallest pairwise mean absolute difference among the seven templates.
pub fn template_separation(size: usize) -> f64 {
    let templates: Vec<Vec<f64>> =
        EmotionClass::ALL.iter().map(|&c| ClassPrototype::for_class(c, size).render(size, 0.0, 0.0)).collect();
    let mut min = f64::INFINITY;
    for i in 0..NUM_CLASSES {
        for j in i + 1..NUM_CLASSES {
            let mad = templates[i].iter().zip(&templates[j]).map(|(a, b)| (a - b).abs()).sum::<f64>()
                / (size * size) as f64;
            min = min.min(mad);
        }
    }
    min
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Ambiguity {
    Pure,
    AmbiguousPair,
    Compound,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticItem<T: Scalar> {
    pub item_id: String,
    pub subject_id: String,
    pub raster: Raster<T>,
    pub true_distribution: SoftTarget<T>,
    pub posed: EmotionClass,
    pub ambiguity: Ambiguity,
}

impl<T: Scalar> SyntheticItem<T> {
    pub fn image_path(&self) -> String {
        format!("images/{}.pgm", self.item_id)
    }

    pub fn record(&self) -> ItemRecord {
        ItemRecord {
            item_id: self.item_id.clone(),
            subject_id: self.subject_id.clone(),
            posed_emotion: self.posed,
            image_path: self.image_path(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AmbiguityMix {
    pub pure: f64,
    pub ambiguous_pair: f64,
    pub compound: f64,
}

impl Default for AmbiguityMix {
    fn default() -> Self {
        Self { pure: 0.6, ambiguous_pair: 0.25, compound: 0.15 }
    }
}

/// Corpus generation parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CorpusConfig {
    pub n_subjects: usize,
    pub items_per_subject: usize,
    /// Per-subject item counts; overrides `items_per_subject` when present.
    pub subject_item_counts: Option<Vec<usize>>,
    /// The last `held_out_subjects` subjects form the test split.
    pub held_out_subjects: usize,
    pub mix: AmbiguityMix,
    pub pixel_noise: f64,
    pub image_size: usize,
    /// Posed-class mass of pure items.
    pub pure_mass: f64,
    /// (posed, secondary) masses of ambiguous items.
    pub pair_weights: (f64, f64),
    /// (posed, secondary) masses of compound items.
    pub compound_weights: (f64, f64),
    /// Probability that the secondary class is the posed class's usual confusion partner.
    pub confusion_partner_prob: f64,
    pub seed: u64,
}

/// Train subjects (23) and held-out subjects (5) sized to 1141 and 51 items.
const DEFAULT_SUBJECT_SIZES: [usize; 28] = [
    50, 50, 50, 50, 50, 50, 50, 50, 50, 50, 50, 50, 50, 50, 49, 49, 49, 49, 49, 49, 49, 49, 49, 11, 10, 10, 10, 10,
];

impl Default for CorpusConfig {
    fn default() -> Self {
        Self {
            n_subjects: 28,
            items_per_subject: 42,
            subject_item_counts: Some(DEFAULT_SUBJECT_SIZES.to_vec()),
            held_out_subjects: 5,
            mix: AmbiguityMix::default(),
            pixel_noise: 0.05,
            image_size: 24,
            pure_mass: 0.94,
            pair_weights: (0.6, 0.3),
            compound_weights: (0.45, 0.35),
            confusion_partner_prob: 0.5,
            seed: 42,
        }
    }
}

impl CorpusConfig {
    pub fn subject_sizes(&self) -> Vec<usize> {
        match &self.subject_item_counts {
            Some(sizes) => sizes.clone(),
            None => vec![self.items_per_subject; self.n_subjects],
        }
    }

    pub fn total_items(&self) -> usize {
        self.subject_sizes().iter().sum()
    }

    pub fn subject_id(index: usize) -> String {
        format!("SYN-{:02}", index + 1)
    }

    pub fn held_out_subject_ids(&self) -> BTreeSet<String> {
        (self.n_subjects - self.held_out_subjects.min(self.n_subjects)..self.n_subjects)
            .map(Self::subject_id)
            .collect()
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: &str| Err(SynthError::InvalidConfig(m.to_string()));
        if self.n_subjects == 0 {
            return bad("n_subjects must be >= 1");
        }
        match &self.subject_item_counts {
            Some(s) if s.len() != self.n_subjects => return bad("subject_item_counts length must equal n_subjects"),
            Some(s) if s.contains(&0) => return bad("every subject needs at least one item"),
            None if self.items_per_subject == 0 => return bad("items_per_subject must be >= 1"),
            _ => {}
        }
        if self.held_out_subjects > self.n_subjects {
            return bad("held_out_subjects exceeds n_subjects");
        }
        let m = &self.mix;
        if [m.pure, m.ambiguous_pair, m.compound].iter().any(|&f| !(0.0..=1.0).contains(&f))
            || ((m.pure + m.ambiguous_pair + m.compound) - 1.0).abs() > 1e-9
        {
            return bad("mix fractions must lie in [0, 1] and sum to 1");
        }
        if !(self.pixel_noise >= 0.0 && self.pixel_noise.is_finite()) {
            return bad("pixel_noise must be >= 0");
        }
        if self.image_size < 8 {
            return bad("image_size must be >= 8");
        }
        if !(0.9..=1.0).contains(&self.pure_mass) {
            return bad("pure_mass must lie in [0.9, 1]");
        }
        let (a, b) = self.pair_weights;
        if !(a > b && b > 0.0 && a + b <= 1.0 && (1.0 - a - b) / 5.0 < b) {
            return bad("pair_weights must satisfy posed > secondary > leftover share");
        }
        let (a, b) = self.compound_weights;
        if !(a > b && b >= 0.25 && a + b <= 1.0) {
            return bad("compound_weights must satisfy posed > secondary >= 0.25");
        }
        if !(0.0..=1.0).contains(&self.confusion_partner_prob) {
            return bad("confusion_partner_prob must lie in [0, 1]");
        }
        Ok(())
    }
}

/// The classes most often confused with each other.
pub fn confusion_partner(class: EmotionClass) -> Option<EmotionClass> {
    use EmotionClass::*;
    match class {
        Anger => Some(Disgust),
        Disgust => Some(Anger),
        Fear => Some(Surprised),
        Surprised => Some(Fear),
        _ => None,
    }
}

fn mixture<T: Scalar>(posed: EmotionClass, secondary: Option<EmotionClass>, main: f64, second: f64) -> SoftTarget<T> {
    let n_rest = if secondary.is_some() { NUM_CLASSES - 2 } else { NUM_CLASSES - 1 };
    let used = main + if secondary.is_some() { second } else { 0.0 };
    let rest = (1.0 - used) / n_rest as f64;
    let mut probs = [rest; NUM_CLASSES];
    probs[posed.ordinal()] = main;
    if let Some(s) = secondary {
        probs[s.ordinal()] = second;
    }
    SoftTarget::new(probs.map(T::lit)).expect("mixture lies on the simplex")
}

/// Generates a corpus. Deterministic for a given config.
pub fn gen_corpus<T: Scalar>(cfg: &CorpusConfig) -> Result<Vec<SyntheticItem<T>>, SynthError> {
    cfg.validate()?;
    let size = cfg.image_size;
    let separation = template_separation(size);
    if separation < SEPARABILITY_FLOOR {
        return Err(SynthError::InvalidConfig(format!("templates too similar at size {size}: {separation:.4}")));
    }
    let prototypes: Vec<ClassPrototype> = EmotionClass::ALL.iter().map(|&c| ClassPrototype::for_class(c, size)).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let noise = Normal::new(0.0, cfg.pixel_noise.max(0.0)).expect("finite sigma");

    let sizes = cfg.subject_sizes();
    let total: usize = sizes.iter().sum();
    let mut kinds = allocate_kinds(total, &cfg.mix);
    kinds.shuffle(&mut rng);

    let mut items = Vec::with_capacity(total);
    let mut index = 0usize;
    for (s, &n_items) in sizes.iter().enumerate() {
        let subject_id = CorpusConfig::subject_id(s);
        let shift_x = f64::from(rng.random_range(-1i32..=1));
        let shift_y = f64::from(rng.random_range(-1i32..=1));
        let gain = rng.random_range(0.9..1.1);
        let offset = rng.random_range(0..NUM_CLASSES);
        let rendered: Vec<Vec<f64>> = prototypes.iter().map(|p| p.render(size, shift_x, shift_y)).collect();
        for j in 0..n_items {
            let posed = EmotionClass::ALL[(j + offset) % NUM_CLASSES];
            let ambiguity = kinds[index];
            let pick_secondary = |rng: &mut ChaCha8Rng| -> EmotionClass {
                match confusion_partner(posed) {
                    Some(p) if rng.random::<f64>() < cfg.confusion_partner_prob => p,
                    _ => {
                        let others: Vec<EmotionClass> = EmotionClass::ALL.into_iter().filter(|&c| c != posed).collect();
                        others[rng.random_range(0..others.len())]
                    }
                }
            };
            let truth: SoftTarget<T> = match ambiguity {
                Ambiguity::Pure => mixture(posed, None, cfg.pure_mass, 0.0),
                Ambiguity::AmbiguousPair => {
                    let s = pick_secondary(&mut rng);
                    mixture(posed, Some(s), cfg.pair_weights.0, cfg.pair_weights.1)
                }
                Ambiguity::Compound => {
                    let s = pick_secondary(&mut rng);
                    mixture(posed, Some(s), cfg.compound_weights.0, cfg.compound_weights.1)
                }
            };
            let weights = truth.to_f64();
            let pixels: Vec<T> = (0..size * size)
                .map(|px| {
                    let blend: f64 = rendered.iter().zip(weights.probs()).map(|(t, w)| t[px] * w).sum();
                    let v = gain * blend + if cfg.pixel_noise > 0.0 { noise.sample(&mut rng) } else { 0.0 };
                    T::lit(v.clamp(0.0, 1.0))
                })
                .collect();
            items.push(SyntheticItem {
                item_id: format!("{:05}-{}_{}", index + 1, posed.filename_word(), subject_id),
                subject_id: subject_id.clone(),
                raster: Raster::new(size, size, pixels).expect("clamped pixels"),
                true_distribution: truth,
                posed,
                ambiguity,
            });
            index += 1;
        }
    }
    Ok(items)
}

/// Exact kind counts by largest remainder.
fn allocate_kinds(total: usize, mix: &AmbiguityMix) -> Vec<Ambiguity> {
    let counts = largest_remainder(total, &[mix.pure, mix.ambiguous_pair, mix.compound]);
    let mut kinds = Vec::with_capacity(total);
    for (kind, n) in [Ambiguity::Pure, Ambiguity::AmbiguousPair, Ambiguity::Compound].into_iter().zip(counts) {
        kinds.extend(std::iter::repeat_n(kind, n));
    }
    kinds
}

fn largest_remainder(total: usize, weights: &[f64]) -> Vec<usize> {
    let sum: f64 = weights.iter().sum();
    let exact: Vec<f64> = weights.iter().map(|w| w / sum * total as f64).collect();
    let mut counts: Vec<usize> = exact.iter().map(|e| e.floor() as usize).collect();
    let mut order: Vec<usize> = (0..weights.len()).collect();
    order.sort_by(|&a, &b| (exact[b] - exact[b].floor()).total_cmp(&(exact[a] - exact[a].floor())));
    let assigned: usize = counts.iter().sum();
    for &i in order.iter().take(total - assigned) {
        counts[i] += 1;
    }
    counts
}

pub fn corpus_manifest<T: Scalar>(items: &[SyntheticItem<T>]) -> Manifest {
    Manifest::new(items.iter().map(SyntheticItem::record).collect()).expect("generator ids are unique")
}

/// `truth.csv`: `item_id` plus seven probability columns.
pub fn write_truth_csv<T: Scalar, W: Write>(items: &[SyntheticItem<T>], mut w: W) -> std::io::Result<()> {
    writeln!(w, "item_id,anger,disgust,fear,happy,neutral,sad,surprised")?;
    for item in items {
        write!(w, "{}", item.item_id)?;
        for p in item.true_distribution.probs() {
            write!(w, ",{}", p.as_f64())?;
        }
        writeln!(w)?;
    }
    Ok(())
}

/// Reads `truth.csv` back.
pub fn read_truth_csv<T: Scalar, R: std::io::Read>(reader: R) -> Result<Vec<(String, SoftTarget<T>)>, SynthError> {
    let bad = |m: String| SynthError::InvalidConfig(format!("truth table: {m}"));
    let mut r = csv::Reader::from_reader(reader);
    let header = r.headers().map_err(|e| bad(e.to_string()))?.clone();
    if header.iter().ne(["item_id", "anger", "disgust", "fear", "happy", "neutral", "sad", "surprised"]) {
        return Err(bad(format!("unexpected header {header:?}")));
    }
    let mut out = Vec::new();
    for record in r.records() {
        let record = record.map_err(|e| bad(e.to_string()))?;
        let mut probs = [T::zero(); NUM_CLASSES];
        for (k, p) in probs.iter_mut().enumerate() {
            let field = record.get(k + 1).unwrap_or("");
            let v: f64 = field.trim().parse().map_err(|_| bad(format!("bad probability {field:?}")))?;
            *p = T::lit(v);
        }
        let target = SoftTarget::new(probs).map_err(|e| bad(e.to_string()))?;
        out.push((record.get(0).unwrap_or("").to_string(), target));
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum AnnotatorPersona {
    /// Samples the true distribution with probability `fidelity`, otherwise uniform.
    Faithful { fidelity: f64 },
    /// Uniform over the seven classes.
    Spammer,
    /// Samples the true distribution, then swaps within a confusion pair with probability 1/2.
    Biased { pairs: Vec<(EmotionClass, EmotionClass)> },
}

impl AnnotatorPersona {
    pub fn biased_default() -> Self {
        use EmotionClass::*;
        AnnotatorPersona::Biased { pairs: vec![(Anger, Disgust), (Fear, Surprised)] }
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        match self {
            AnnotatorPersona::Faithful { fidelity } if !(0.0..=1.0).contains(fidelity) => {
                Err(SynthError::InvalidPersona(format!("fidelity {fidelity} outside [0, 1]")))
            }
            AnnotatorPersona::Biased { pairs } => {
                let mut seen = BTreeSet::new();
                for (a, b) in pairs {
                    if a == b || !seen.insert(*a) || !seen.insert(*b) {
                        return Err(SynthError::InvalidPersona("confusion pairs must be disjoint".into()));
                    }
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }

    pub fn tag(&self) -> &'static str {
        match self {
            AnnotatorPersona::Faithful { .. } => "faithful",
            AnnotatorPersona::Spammer => "spammer",
            AnnotatorPersona::Biased { .. } => "biased",
        }
    }
}

fn sample_class<T: Scalar, R: Rng + ?Sized>(dist: &SoftTarget<T>, rng: &mut R) -> EmotionClass {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for class in EmotionClass::ALL {
        acc += dist.get(class).as_f64();
        if u < acc {
            return class;
        }
    }
    // rounding left a sliver above the cumulative sum
    EmotionClass::ALL.into_iter().rev().find(|&c| dist.get(c) > T::zero()).unwrap_or(EmotionClass::Surprised)
}

fn uniform_class<R: Rng + ?Sized>(rng: &mut R) -> EmotionClass {
    EmotionClass::ALL[rng.random_range(0..NUM_CLASSES)]
}

/// One simulated vote.
pub fn simulate_label<T: Scalar, R: Rng + ?Sized>(persona: &AnnotatorPersona, item: &SyntheticItem<T>, rng: &mut R) -> EmotionClass {
    match persona {
        AnnotatorPersona::Faithful { fidelity } => {
            if rng.random::<f64>() < *fidelity {
                sample_class(&item.true_distribution, rng)
            } else {
                uniform_class(rng)
            }
        }
        AnnotatorPersona::Spammer => uniform_class(rng),
        AnnotatorPersona::Biased { pairs } => {
            let label = sample_class(&item.true_distribution, rng);
            let partner = pairs.iter().find_map(|&(a, b)| {
                if a == label {
                    Some(b)
                } else if b == label {
                    Some(a)
                } else {
                    None
                }
            });
            match partner {
                Some(p) if rng.random::<bool>() => p,
                _ => label,
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PersonaShare {
    pub persona: AnnotatorPersona,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CampaignConfig {
    pub campaign_id: String,
    pub n_workers: usize,
    pub votes_per_item: usize,
    pub personas: Vec<PersonaShare>,
    /// Timestamp of the first event, UTC milliseconds.
    pub start_timestamp: u64,
}

impl Default for CampaignConfig {
    fn default() -> Self {
        Self {
            campaign_id: "sim".into(),
            n_workers: 200,
            votes_per_item: 100,
            personas: vec![PersonaShare { persona: AnnotatorPersona::Faithful { fidelity: 1.0 }, weight: 1.0 }],
            start_timestamp: 1_600_000_000_000,
        }
    }
}

impl CampaignConfig {
    /// 70% faithful (fidelity 0.95), 20% biased, 10% spammers.
    pub fn mixed_crowd(n_workers: usize, votes_per_item: usize) -> Self {
        Self {
            n_workers,
            votes_per_item,
            personas: vec![
                PersonaShare { persona: AnnotatorPersona::Faithful { fidelity: 0.95 }, weight: 0.7 },
                PersonaShare { persona: AnnotatorPersona::biased_default(), weight: 0.2 },
                PersonaShare { persona: AnnotatorPersona::Spammer, weight: 0.1 },
            ],
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulatedWorker {
    pub worker_id: String,
    pub persona: AnnotatorPersona,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CampaignLog {
    pub workers: Vec<SimulatedWorker>,
    pub events: Vec<AnnotationEvent>,
}

impl CampaignLog {
    pub fn persona_of(&self, worker_id: &str) -> Option<&AnnotatorPersona> {
        self.workers.iter().find(|w| w.worker_id == worker_id).map(|w| &w.persona)
    }
}

/// Worker roster with persona counts allocated by largest remainder.
pub fn build_workers(cfg: &CampaignConfig) -> Result<Vec<SimulatedWorker>, SynthError> {
    if cfg.personas.is_empty() || cfg.personas.iter().any(|p| !(p.weight >= 0.0)) {
        return Err(SynthError::InvalidPersona("persona weights must be non-negative and non-empty".into()));
    }
    if cfg.personas.iter().map(|p| p.weight).sum::<f64>() <= 0.0 {
        return Err(SynthError::InvalidPersona("persona weights sum to zero".into()));
    }
    for p in &cfg.personas {
        p.persona.validate()?;
    }
    let weights: Vec<f64> = cfg.personas.iter().map(|p| p.weight).collect();
    let counts = largest_remainder(cfg.n_workers, &weights);
    let mut workers = Vec::with_capacity(cfg.n_workers);
    for (share, n) in cfg.personas.iter().zip(counts) {
        for _ in 0..n {
            workers.push(SimulatedWorker { worker_id: format!("w{:04}", workers.len() + 1), persona: share.persona.clone() });
        }
    }
    Ok(workers)
}

/// Every item receives exactly `votes_per_item` votes from distinct workers.
pub fn simulate_campaign<T: Scalar, R: Rng + ?Sized>(
    corpus: &[SyntheticItem<T>],
    cfg: &CampaignConfig,
    rng: &mut R,
) -> Result<CampaignLog, SynthError> {
    if cfg.votes_per_item == 0 {
        return Err(SynthError::InvalidConfig("votes_per_item must be >= 1".into()));
    }
    let workers = build_workers(cfg)?;
    if workers.len() < cfg.votes_per_item {
        return Err(SynthError::InsufficientWorkers { needed: cfg.votes_per_item, available: workers.len() });
    }
    let mut events = Vec::with_capacity(corpus.len() * cfg.votes_per_item);
    for item in corpus {
        for w in index::sample(rng, workers.len(), cfg.votes_per_item).into_iter() {
            let worker = &workers[w];
            let label = simulate_label(&worker.persona, item, rng);
            let n = events.len() as u64;
            events.push(AnnotationEvent {
                event_id: n + 1,
                worker_id: worker.worker_id.clone(),
                item_id: item.item_id.clone(),
                label,
                campaign_id: cfg.campaign_id.clone(),
                timestamp: cfg.start_timestamp + n,
            });
        }
    }
    Ok(CampaignLog { workers, events })
}

/// Scripted reviewer: accepts a label when the item's true distribution gives
/// it at least `min_truth_mass`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthReviewer {
    pub min_truth_mass: f64,
}

impl Default for GroundTruthReviewer {
    fn default() -> Self {
        Self { min_truth_mass: 0.2 }
    }
}

impl GroundTruthReviewer {
    pub fn verdict<T: Scalar>(&self, item: &SyntheticItem<T>, label: EmotionClass) -> Verdict {
        if item.true_distribution.get(label).as_f64() >= self.min_truth_mass {
            Verdict::Accept
        } else {
            Verdict::Reject
        }
    }
}
