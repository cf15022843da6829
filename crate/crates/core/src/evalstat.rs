//! Classifier and distribution metrics: F1 variants, L1 distribution
//! distance, Student's t CDF and independent two-sample t-tests.

use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::aggregation::to_soft_target;
use crate::label_model::{EmotionClass, LabelCountVector, SoftTarget, NUM_CLASSES};
use crate::scalar::Scalar;
use crate::trainer::{ModelParams, Raster, TrainError};

#[derive(Debug, Error)]
pub enum StatError {
    #[error("confusion matrix is empty")]
    EmptyMatrix,
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("degrees of freedom must be positive, got {0}")]
    InvalidDf(f64),
    #[error("both samples have zero variance")]
    DegenerateSamples,
    #[error("each sample needs at least two values")]
    InsufficientData,
    #[error("invalid summary statistics: {0}")]
    InvalidSummary(String),
    #[error("item {0}: vote counts are empty")]
    EmptyCounts(usize),
    #[error(transparent)]
    Model(#[from] TrainError),
}

/// `sum_i |p_i - q_i|`, in `[0, 2]`.
pub fn l1_distance<T: Scalar>(p: &SoftTarget<T>, q: &SoftTarget<T>) -> T {
    p.probs().iter().zip(q.probs()).map(|(a, b)| (*a - *b).abs()).sum()
}

/// Rows are true classes, columns predicted classes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    cells: [[u64; NUM_CLASSES]; NUM_CLASSES],
}

impl ConfusionMatrix {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_cells(cells: [[u64; NUM_CLASSES]; NUM_CLASSES]) -> Self {
        Self { cells }
    }

    pub fn record(&mut self, truth: EmotionClass, predicted: EmotionClass) {
        self.cells[truth.ordinal()][predicted.ordinal()] += 1;
    }

    pub fn get(&self, truth: EmotionClass, predicted: EmotionClass) -> u64 {
        self.cells[truth.ordinal()][predicted.ordinal()]
    }

    pub fn total(&self) -> u64 {
        self.cells.iter().flatten().sum()
    }

    /// Number of items whose true class is `class`.
    pub fn support(&self, class: EmotionClass) -> u64 {
        self.cells[class.ordinal()].iter().sum()
    }

    pub fn predicted(&self, class: EmotionClass) -> u64 {
        self.cells.iter().map(|row| row[class.ordinal()]).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct F1Scores<T: Scalar> {
    pub per_class: [T; NUM_CLASSES],
    /// Mean over classes with at least one true item.
    pub macro_f1: T,
    /// Support-weighted mean.
    pub weighted_f1: T,
    /// Classes with no true items, left out of the macro mean.
    pub absent_classes: Vec<EmotionClass>,
}

pub fn f1_scores<T: Scalar>(cm: &ConfusionMatrix) -> Result<F1Scores<T>, StatError> {
    let total = cm.total();
    if total == 0 {
        return Err(StatError::EmptyMatrix);
    }
    let mut per_class = [T::zero(); NUM_CLASSES];
    let mut macro_sum = T::zero();
    let mut weighted_sum = T::zero();
    let mut present = 0u64;
    let mut absent_classes = Vec::new();
    for class in EmotionClass::ALL {
        let tp = cm.get(class, class);
        let support = cm.support(class);
        let predicted = cm.predicted(class);
        // F1 = 2TP / (2TP + FP + FN) equals 2PR / (P + R) and is 0 when P + R = 0
        let denom = support + predicted;
        let f1 = if tp == 0 || denom == 0 {
            T::zero()
        } else {
            T::from_count(2 * tp) / T::from_count(denom)
        };
        per_class[class.ordinal()] = f1;
        if support == 0 {
            absent_classes.push(class);
        } else {
            present += 1;
            macro_sum = macro_sum + f1;
            weighted_sum = weighted_sum + f1 * T::from_count(support);
        }
    }
    Ok(F1Scores {
        per_class,
        macro_f1: macro_sum / T::from_count(present),
        weighted_f1: weighted_sum / T::from_count(total),
        absent_classes,
    })
}

const LANCZOS_G: f64 = 7.0;
const LANCZOS: [f64; 9] = [
    0.999_999_999_999_809_9,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_1,
    -176.615_029_162_140_6,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_572e-6,
    1.505_632_735_149_311_6e-7,
];

/// Natural log of the gamma function for `x > 0` (Lanczos approximation).
pub fn ln_gamma<T: Scalar>(x: T) -> T {
    let half = T::lit(0.5);
    if x < half {
        // reflection: Gamma(x) Gamma(1 - x) = pi / sin(pi x)
        let pi = T::PI();
        return (pi / (pi * x).sin()).ln() - ln_gamma(T::one() - x);
    }
    let x = x - T::one();
    let mut acc = T::lit(LANCZOS[0]);
    for (i, c) in LANCZOS.iter().enumerate().skip(1) {
        acc = acc + T::lit(*c) / (x + T::from_count(i as u64));
    }
    let t = x + T::lit(LANCZOS_G) + half;
    half * (T::lit(2.0) * T::PI()).ln() + (x + half) * t.ln() - t + acc.ln()
}

pub fn ln_beta<T: Scalar>(a: T, b: T) -> T {
    ln_gamma(a) + ln_gamma(b) - ln_gamma(a + b)
}

/// Regularized incomplete beta `I_x(a, b)`, taking `y = 1 - x` separately so
/// callers can supply it without cancellation.
pub fn reg_inc_beta<T: Scalar>(a: T, b: T, x: T, y: T) -> T {
    if x <= T::zero() {
        return T::zero();
    }
    if y <= T::zero() {
        return T::one();
    }
    let front = (a * x.ln() + b * y.ln() - ln_beta(a, b)).exp();
    if x < (a + T::one()) / (a + b + T::lit(2.0)) {
        front * beta_cont_frac(a, b, x, y) / a
    } else {
        T::one() - front * beta_cont_frac(b, a, y, x) / b
    }
}

/// Continued fraction for the incomplete beta, modified Lentz evaluation.
fn beta_cont_frac<T: Scalar>(a: T, b: T, x: T, _y: T) -> T {
    let tiny = T::lit(1e-300).max(T::min_positive_value());
    let eps = T::epsilon();
    let one = T::one();
    let two = T::lit(2.0);
    let qab = a + b;
    let qap = a + one;
    let qam = a - one;
    let mut c = one;
    let mut d = one - qab * x / qap;
    if d.abs() < tiny {
        d = tiny;
    }
    d = one / d;
    let mut h = d;
    for m in 1..20_000u64 {
        let m = T::from_count(m);
        let m2 = two * m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = one + aa * d;
        if d.abs() < tiny {
            d = tiny;
        }
        c = one + aa / c;
        if c.abs() < tiny {
            c = tiny;
        }
        d = one / d;
        h = h * d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = one + aa * d;
        if d.abs() < tiny {
            d = tiny;
        }
        c = one + aa / c;
        if c.abs() < tiny {
            c = tiny;
        }
        d = one / d;
        let del = d * c;
        h = h * del;
        if (del - one).abs() <= eps {
            break;
        }
    }
    h
}

/// Cumulative distribution of Student's t with `df` degrees of freedom.
pub fn t_cdf<T: Scalar>(t: T, df: T) -> Result<T, StatError> {
    if !(df > T::zero()) || !df.is_finite() {
        return Err(StatError::InvalidDf(df.as_f64()));
    }
    if t.is_nan() {
        return Ok(T::nan());
    }
    if t.is_infinite() {
        return Ok(if t > T::zero() { T::one() } else { T::zero() });
    }
    let t2 = t * t;
    let x = df / (df + t2);
    let y = t2 / (df + t2);
    let half = T::lit(0.5);
    // P(T > |t|) = I_x(df/2, 1/2) / 2
    let upper = half * reg_inc_beta(half * df, half, x, y);
    Ok(if t > T::zero() { T::one() - upper } else { upper })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TTestVariant {
    /// Pooled variance, `df = n1 + n2 - 2`.
    #[default]
    Pooled,
    /// Welch-Satterthwaite degrees of freedom.
    Welch,
}

impl std::str::FromStr for TTestVariant {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "pooled" => Ok(TTestVariant::Pooled),
            "welch" => Ok(TTestVariant::Welch),
            other => Err(format!("unknown t-test variant {other:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct SampleSummary<T: Scalar> {
    pub mean: T,
    /// Sample standard deviation (n - 1 denominator).
    pub sd: T,
    pub n: usize,
}

impl<T: Scalar> SampleSummary<T> {
    pub fn new(mean: T, sd: T, n: usize) -> Self {
        Self { mean, sd, n }
    }

    pub fn of(xs: &[T]) -> Result<Self, StatError> {
        if xs.len() < 2 {
            return Err(StatError::InsufficientData);
        }
        let n = T::from_count(xs.len() as u64);
        let mean = xs.iter().copied().sum::<T>() / n;
        let ss: T = xs.iter().map(|x| (*x - mean) * (*x - mean)).sum();
        Ok(Self { mean, sd: (ss / (n - T::one())).sqrt(), n: xs.len() })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct TTestResult<T: Scalar> {
    pub t: T,
    pub df: T,
    pub p_two_tailed: T,
    pub variant: TTestVariant,
}

/// Independent two-sample t-test from summary statistics.
pub fn two_sample_t<T: Scalar>(
    a: &SampleSummary<T>,
    b: &SampleSummary<T>,
    variant: TTestVariant,
) -> Result<TTestResult<T>, StatError> {
    if a.n < 2 || b.n < 2 {
        return Err(StatError::InsufficientData);
    }
    for s in [a, b] {
        if !(s.sd >= T::zero()) || !s.sd.is_finite() || !s.mean.is_finite() {
            return Err(StatError::InvalidSummary(format!("mean {} sd {}", s.mean, s.sd)));
        }
    }
    if a.sd == T::zero() && b.sd == T::zero() {
        return Err(StatError::DegenerateSamples);
    }
    let one = T::one();
    let (n1, n2) = (T::from_count(a.n as u64), T::from_count(b.n as u64));
    let (v1, v2) = (a.sd * a.sd, b.sd * b.sd);
    let (se, df) = match variant {
        TTestVariant::Pooled => {
            let df = n1 + n2 - T::lit(2.0);
            let pooled = ((n1 - one) * v1 + (n2 - one) * v2) / df;
            ((pooled * (one / n1 + one / n2)).sqrt(), df)
        }
        TTestVariant::Welch => {
            let (w1, w2) = (v1 / n1, v2 / n2);
            let df = (w1 + w2) * (w1 + w2) / (w1 * w1 / (n1 - one) + w2 * w2 / (n2 - one));
            ((w1 + w2).sqrt(), df)
        }
    };
    let t = (a.mean - b.mean) / se;
    let p = T::lit(2.0) * t_cdf(-t.abs(), df)?;
    Ok(TTestResult { t, df, p_two_tailed: p.min(one), variant })
}

pub fn two_sample_t_from_samples<T: Scalar>(xs: &[T], ys: &[T], variant: TTestVariant) -> Result<TTestResult<T>, StatError> {
    two_sample_t(&SampleSummary::of(xs)?, &SampleSummary::of(ys)?, variant)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct MetricsReport<T: Scalar> {
    pub per_class_f1: [T; NUM_CLASSES],
    pub macro_f1: T,
    pub weighted_f1: T,
    pub absent_classes: Vec<EmotionClass>,
    pub mean_l1: T,
    pub l1_values: Vec<T>,
    pub n_items: usize,
    /// Item ids in `l1_values` order, when known.
    #[serde(default)]
    pub item_ids: Vec<String>,
    pub confusion: ConfusionMatrix,
}

impl<T: Scalar> MetricsReport<T> {
    pub fn write_l1_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "item_id,l1")?;
        for (i, v) in self.l1_values.iter().enumerate() {
            let id = self.item_ids.get(i).map(String::as_str).unwrap_or("");
            writeln!(w, "{id},{v}")?;
        }
        Ok(())
    }
}

/// One held-out item and the distribution it is scored against.
#[derive(Debug, Clone)]
pub struct EvalItem<T: Scalar> {
    pub item_id: String,
    pub raster: Raster<T>,
    pub target: SoftTarget<T>,
    pub posed: EmotionClass,
}

#[derive(Debug, Clone)]
pub struct Evaluation<T: Scalar> {
    pub report: MetricsReport<T>,
    pub predictions: Vec<SoftTarget<T>>,
}

/// Scores precomputed predictions: argmax against `posed` for F1, L1 against `targets`.
pub fn evaluate_predictions<T: Scalar>(
    predictions: &[SoftTarget<T>],
    targets: &[SoftTarget<T>],
    posed: &[EmotionClass],
) -> Result<MetricsReport<T>, StatError> {
    assert_eq!(predictions.len(), targets.len());
    assert_eq!(predictions.len(), posed.len());
    if predictions.is_empty() {
        return Err(StatError::EmptyDataset);
    }
    let mut confusion = ConfusionMatrix::new();
    let mut l1_values = Vec::with_capacity(predictions.len());
    for ((q, p), truth) in predictions.iter().zip(targets).zip(posed) {
        confusion.record(*truth, q.argmax());
        l1_values.push(l1_distance(q, p));
    }
    let f1 = f1_scores::<T>(&confusion)?;
    let mean_l1 = l1_values.iter().copied().sum::<T>() / T::from_count(l1_values.len() as u64);
    Ok(MetricsReport {
        per_class_f1: f1.per_class,
        macro_f1: f1.macro_f1,
        weighted_f1: f1.weighted_f1,
        absent_classes: f1.absent_classes,
        mean_l1,
        n_items: l1_values.len(),
        l1_values,
        item_ids: Vec::new(),
        confusion,
    })
}

pub fn evaluate_items<T: Scalar>(model: &ModelParams<T>, items: &[EvalItem<T>]) -> Result<Evaluation<T>, StatError> {
    let predictions = items.iter().map(|it| model.predict_proba(&it.raster)).collect::<Result<Vec<_>, _>>()?;
    let targets: Vec<_> = items.iter().map(|it| it.target).collect();
    let posed: Vec<_> = items.iter().map(|it| it.posed).collect();
    let mut report = evaluate_predictions(&predictions, &targets, &posed)?;
    report.item_ids = items.iter().map(|it| it.item_id.clone()).collect();
    Ok(Evaluation { report, predictions })
}

/// Evaluates against normalized vote counts.
pub fn evaluate_model<T: Scalar>(
    model: &ModelParams<T>,
    test: &[(Raster<T>, LabelCountVector, EmotionClass)],
) -> Result<MetricsReport<T>, StatError> {
    let items = test
        .iter()
        .enumerate()
        .map(|(i, (raster, counts, posed))| {
            Ok(EvalItem {
                item_id: i.to_string(),
                raster: raster.clone(),
                target: to_soft_target(counts).map_err(|_| StatError::EmptyCounts(i))?,
                posed: *posed,
            })
        })
        .collect::<Result<Vec<_>, StatError>>()?;
    let mut report = evaluate_items(model, &items)?.report;
    report.item_ids.clear();
    Ok(report)
}
