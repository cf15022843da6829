//! Emotion vocabulary, vote-count and probability vectors, item identity and
//! the `<index>-<emotionword>_<subject>.<ext>` filename convention.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::Scalar;

/// Number of emotion classes.
pub const NUM_CLASSES: usize = 7;

#[derive(Debug, Error)]
pub enum LabelError {
    #[error("malformed filename {name:?}: {reason}")]
    MalformedFilename { name: String, reason: &'static str },
    #[error("class ordinal {0} out of range 0..=6")]
    OutOfRange(i64),
    #[error("unknown emotion class {0:?}")]
    UnknownClass(String),
    #[error("invalid probability vector: {0}")]
    InvalidDistribution(String),
    #[error("duplicate item id {0:?} in manifest")]
    DuplicateItem(String),
    #[error("item {0:?} has an empty subject id")]
    EmptySubject(String),
    #[error("manifest line {line}: {message}")]
    ManifestFormat { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// The seven emotion classes in canonical storage order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EmotionClass {
    Anger,
    Disgust,
    Fear,
    Happy,
    Neutral,
    Sad,
    Surprised,
}

impl EmotionClass {
    pub const ALL: [EmotionClass; NUM_CLASSES] = [
        EmotionClass::Anger,
        EmotionClass::Disgust,
        EmotionClass::Fear,
        EmotionClass::Happy,
        EmotionClass::Neutral,
        EmotionClass::Sad,
        EmotionClass::Surprised,
    ];

    #[inline]
    pub fn ordinal(self) -> usize {
        self as usize
    }

    pub fn from_ordinal(i: i64) -> Result<Self, LabelError> {
        if (0..NUM_CLASSES as i64).contains(&i) {
            Ok(Self::ALL[i as usize])
        } else {
            Err(LabelError::OutOfRange(i))
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            EmotionClass::Anger => "anger",
            EmotionClass::Disgust => "disgust",
            EmotionClass::Fear => "fear",
            EmotionClass::Happy => "happy",
            EmotionClass::Neutral => "neutral",
            EmotionClass::Sad => "sad",
            EmotionClass::Surprised => "surprised",
        }
    }

    /// Base emotion word used in image filenames (`angry`, `fearful`, ...).
    pub fn filename_word(self) -> &'static str {
        match self {
            EmotionClass::Anger => "angry",
            EmotionClass::Disgust => "disgust",
            EmotionClass::Fear => "fearful",
            EmotionClass::Happy => "happy",
            EmotionClass::Neutral => "neutral",
            EmotionClass::Sad => "sad",
            EmotionClass::Surprised => "surprise",
        }
    }

    /// Maps a filename emotion word, including the mouth/tongue variants, to its class.
    pub fn from_filename_word(word: &str) -> Option<Self> {
        Some(match word {
            "angry" | "angryopen" => EmotionClass::Anger,
            "disgust" | "disgustwithtongue" => EmotionClass::Disgust,
            "fearful" | "fearfulopen" => EmotionClass::Fear,
            "happy" | "happyopen" => EmotionClass::Happy,
            "neutral" | "neutralopen" => EmotionClass::Neutral,
            "sad" | "sadopen" => EmotionClass::Sad,
            "surprise" => EmotionClass::Surprised,
            _ => return None,
        })
    }
}

impl fmt::Display for EmotionClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for EmotionClass {
    type Err = LabelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let lower = s.trim().to_ascii_lowercase();
        Self::ALL
            .iter()
            .copied()
            .find(|c| c.name() == lower)
            .or_else(|| Self::from_filename_word(&lower))
            .ok_or_else(|| LabelError::UnknownClass(s.to_string()))
    }
}

/// Per-item integer vote counts, indexed in canonical class order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct LabelCountVector {
    counts: [u32; NUM_CLASSES],
}

impl LabelCountVector {
    pub fn new(counts: [u32; NUM_CLASSES]) -> Self {
        Self { counts }
    }

    pub fn zero() -> Self {
        Self::default()
    }

    pub fn one_hot(class: EmotionClass, votes: u32) -> Self {
        let mut counts = [0; NUM_CLASSES];
        counts[class.ordinal()] = votes;
        Self { counts }
    }

    pub fn counts(&self) -> &[u32; NUM_CLASSES] {
        &self.counts
    }

    pub fn get(&self, class: EmotionClass) -> u32 {
        self.counts[class.ordinal()]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().map(|&c| u64::from(c)).sum()
    }

    pub fn increment(&mut self, class: EmotionClass) {
        self.counts[class.ordinal()] += 1;
    }

    /// Componentwise `self <= other`.
    pub fn le(&self, other: &Self) -> bool {
        self.counts.iter().zip(other.counts.iter()).all(|(a, b)| a <= b)
    }

    pub fn scaled(&self, factor: u32) -> Self {
        Self { counts: self.counts.map(|c| c * factor) }
    }
}

impl From<[u32; NUM_CLASSES]> for LabelCountVector {
    fn from(counts: [u32; NUM_CLASSES]) -> Self {
        Self::new(counts)
    }
}

impl FromIterator<EmotionClass> for LabelCountVector {
    fn from_iter<I: IntoIterator<Item = EmotionClass>>(iter: I) -> Self {
        let mut v = Self::zero();
        for c in iter {
            v.increment(c);
        }
        v
    }
}

/// A probability vector over the seven classes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
#[serde(bound = "")]
pub struct SoftTarget<T: Scalar> {
    probs: [T; NUM_CLASSES],
}

impl<T: Scalar> SoftTarget<T> {
    /// Validates non-negativity and the unit sum.
    pub fn new(probs: [T; NUM_CLASSES]) -> Result<Self, LabelError> {
        let mut sum = T::zero();
        for (i, &p) in probs.iter().enumerate() {
            if !p.is_finite() || p < T::zero() || p > T::one() + T::lit(T::SIMPLEX_TOL) {
                return Err(LabelError::InvalidDistribution(format!(
                    "component {i} = {p} outside [0, 1]"
                )));
            }
            sum = sum + p;
        }
        if (sum.as_f64() - 1.0).abs() > T::SIMPLEX_TOL {
            return Err(LabelError::InvalidDistribution(format!("sum {sum} != 1")));
        }
        Ok(Self { probs })
    }

    /// Builds a vector already known to be on the simplex.
    pub(crate) fn from_probs_unchecked(probs: [T; NUM_CLASSES]) -> Self {
        debug_assert!(Self::new(probs).is_ok(), "{probs:?}");
        Self { probs }
    }

    pub fn one_hot(class: EmotionClass) -> Self {
        let mut probs = [T::zero(); NUM_CLASSES];
        probs[class.ordinal()] = T::one();
        Self { probs }
    }

    pub fn uniform() -> Self {
        Self { probs: [T::one() / T::from_count(NUM_CLASSES as u64); NUM_CLASSES] }
    }

    pub fn probs(&self) -> &[T; NUM_CLASSES] {
        &self.probs
    }

    pub fn get(&self, class: EmotionClass) -> T {
        self.probs[class.ordinal()]
    }

    /// Most probable class; ties resolve to the earliest class in canonical order.
    pub fn argmax(&self) -> EmotionClass {
        let mut best = 0;
        for i in 1..NUM_CLASSES {
            if self.probs[i] > self.probs[best] {
                best = i;
            }
        }
        EmotionClass::ALL[best]
    }

    pub fn to_f64(&self) -> SoftTarget<f64> {
        SoftTarget { probs: self.probs.map(Scalar::as_f64) }
    }
}

/// Identity of one annotatable image.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ItemRecord {
    pub item_id: String,
    pub subject_id: String,
    pub posed_emotion: EmotionClass,
    pub image_path: String,
}

/// A validated list of items with unique ids.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(try_from = "Vec<ItemRecord>", into = "Vec<ItemRecord>")]
pub struct Manifest {
    items: Vec<ItemRecord>,
}

impl TryFrom<Vec<ItemRecord>> for Manifest {
    type Error = LabelError;

    fn try_from(items: Vec<ItemRecord>) -> Result<Self, Self::Error> {
        Manifest::new(items)
    }
}

impl From<Manifest> for Vec<ItemRecord> {
    fn from(m: Manifest) -> Self {
        m.items
    }
}

impl Manifest {
    pub fn new(items: Vec<ItemRecord>) -> Result<Self, LabelError> {
        let mut seen = HashSet::with_capacity(items.len());
        for item in &items {
            if item.subject_id.is_empty() {
                return Err(LabelError::EmptySubject(item.item_id.clone()));
            }
            if !seen.insert(item.item_id.as_str()) {
                return Err(LabelError::DuplicateItem(item.item_id.clone()));
            }
        }
        Ok(Self { items })
    }

    pub fn items(&self) -> &[ItemRecord] {
        &self.items
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn get(&self, item_id: &str) -> Option<&ItemRecord> {
        self.items.iter().find(|i| i.item_id == item_id)
    }

    /// Number of items per posed class.
    pub fn class_counts(&self) -> LabelCountVector {
        self.items.iter().map(|i| i.posed_emotion).collect()
    }

    pub fn subjects(&self) -> Vec<String> {
        let mut subjects: Vec<String> = self.items.iter().map(|i| i.subject_id.clone()).collect();
        subjects.sort();
        subjects.dedup();
        subjects
    }

    pub fn items_per_subject(&self) -> BTreeMap<String, usize> {
        let mut map = BTreeMap::new();
        for item in &self.items {
            *map.entry(item.subject_id.clone()).or_insert(0) += 1;
        }
        map
    }

    /// Reads the JSON-Lines manifest format. Blank lines are ignored.
    pub fn read_jsonl<R: BufRead>(reader: R) -> Result<Self, LabelError> {
        let mut items = Vec::new();
        for (idx, line) in reader.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let item: ItemRecord = serde_json::from_str(&line).map_err(|e| {
                LabelError::ManifestFormat { line: idx + 1, message: e.to_string() }
            })?;
            items.push(item);
        }
        Self::new(items)
    }

    pub fn write_jsonl<W: Write>(&self, mut writer: W) -> Result<(), LabelError> {
        for item in &self.items {
            let line = serde_json::to_string(item).expect("item serializes");
            writer.write_all(line.as_bytes())?;
            writer.write_all(b"\n")?;
        }
        Ok(())
    }
}

/// Components of a `<index>-<emotionword>_<subject>.<ext>` filename.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CafeName {
    pub index: u64,
    pub posed_emotion: EmotionClass,
    pub subject_id: String,
    /// Emotion word as written, e.g. `disgustwithtongue`.
    pub emotion_word: String,
    pub extension: String,
    /// Digit count of the index as written, so zero padding survives reassembly.
    pub index_width: usize,
}

impl CafeName {
    /// Reassembles the filename without its extension.
    pub fn stem(&self) -> String {
        format!("{:0width$}-{}_{}", self.index, self.emotion_word, self.subject_id, width = self.index_width)
    }
}

pub fn parse_cafe_filename(name: &str) -> Result<CafeName, LabelError> {
    let bad = |reason| LabelError::MalformedFilename { name: name.to_string(), reason };
    let (stem, ext) = name.rsplit_once('.').ok_or_else(|| bad("missing extension"))?;
    if ext.is_empty() {
        return Err(bad("missing extension"));
    }
    let (index, rest) = stem.split_once('-').ok_or_else(|| bad("missing index separator"))?;
    if index.is_empty() || !index.bytes().all(|b| b.is_ascii_digit()) {
        return Err(bad("index is not a digit string"));
    }
    let (word, subject) = rest.split_once('_').ok_or_else(|| bad("missing subject separator"))?;
    if subject.is_empty() {
        return Err(bad("empty subject"));
    }
    let posed_emotion = EmotionClass::from_filename_word(word).ok_or_else(|| bad("unknown emotion word"))?;
    let index_width = index.len();
    let index = index.parse().map_err(|_| bad("index overflows"))?;
    Ok(CafeName {
        index,
        index_width,
        posed_emotion,
        subject_id: subject.to_string(),
        emotion_word: word.to_string(),
        extension: ext.to_string(),
    })
}

/// Builds a manifest entry from a filename; the item id is the filename stem.
pub fn item_from_cafe_filename(name: &str, image_path: &str) -> Result<ItemRecord, LabelError> {
    let parsed = parse_cafe_filename(name)?;
    Ok(ItemRecord {
        item_id: parsed.stem(),
        subject_id: parsed.subject_id,
        posed_emotion: parsed.posed_emotion,
        image_path: image_path.to_string(),
    })
}
