use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{apply_affine, Architecture, AugmentConfig, ModelParams, Raster, TrainError};
use crate::aggregation::to_soft_target;
use crate::label_model::{EmotionClass, LabelCountVector, SoftTarget};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LabelMode {
    /// One-hot at the posed class.
    Hard,
    /// Normalized vote counts.
    #[default]
    Soft,
}

impl std::str::FromStr for LabelMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "hard" => Ok(LabelMode::Hard),
            "soft" => Ok(LabelMode::Soft),
            other => Err(format!("unknown label mode {other:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { beta1: 0.9, beta2: 0.999, epsilon: 1e-8 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub label_mode: LabelMode,
    pub architecture: Architecture,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub adam: AdamConfig,
    pub augmentation: AugmentConfig,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            label_mode: LabelMode::Soft,
            architecture: Architecture::SoftmaxLinear,
            epochs: 100,
            batch_size: 16,
            learning_rate: 0.0003,
            adam: AdamConfig::default(),
            augmentation: AugmentConfig::default(),
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: String| Err(TrainError::InvalidConfig(m));
        if self.epochs == 0 {
            return bad("epochs must be >= 1".into());
        }
        if self.batch_size == 0 {
            return bad("batch_size must be >= 1".into());
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be > 0".into());
        }
        let a = &self.adam;
        if !((0.0..1.0).contains(&a.beta1) && (0.0..1.0).contains(&a.beta2) && a.epsilon > 0.0) {
            return bad("adam parameters out of range".into());
        }
        if let Architecture::Mlp1Hidden { hidden_units: 0 } = self.architecture {
            return bad("hidden_units must be >= 1".into());
        }
        self.augmentation.validate().map_err(TrainError::InvalidConfig)
    }
}

/// One training example.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainSample<T: Scalar> {
    pub raster: Raster<T>,
    pub counts: LabelCountVector,
    pub posed: EmotionClass,
}

impl<T: Scalar> TrainSample<T> {
    pub fn target(&self, mode: LabelMode) -> Result<SoftTarget<T>, TrainError> {
        match mode {
            LabelMode::Hard => Ok(SoftTarget::one_hot(self.posed)),
            LabelMode::Soft => to_soft_target(&self.counts).map_err(|_| TrainError::EmptyCounts),
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainReport<T: Scalar> {
    pub model: ModelParams<T>,
    /// Digest of every augmentation drawn, in order. Equal digests mean equal
    /// shuffling and augmentation streams.
    pub augmentation_digest: u64,
    pub epoch_losses: Vec<f64>,
}

/// Seeded initial parameters; the data stream uses a separate generator so
/// that initialization and shuffling do not interact.
pub fn initial_model<T: Scalar>(architecture: Architecture, input_dim: usize, seed: u64) -> ModelParams<T> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    ModelParams::init(architecture, input_dim, &mut rng)
}

pub fn train<T: Scalar>(dataset: &[TrainSample<T>], cfg: &TrainConfig) -> Result<ModelParams<T>, TrainError> {
    Ok(train_with_report(dataset, cfg)?.model)
}

pub fn train_with_report<T: Scalar>(dataset: &[TrainSample<T>], cfg: &TrainConfig) -> Result<TrainReport<T>, TrainError> {
    let first = dataset.first().ok_or(TrainError::EmptyDataset)?;
    let dims = first.raster.dims();
    let input_dim = dims.0 * dims.1;
    let init = initial_model(cfg.architecture, input_dim, cfg.seed);
    train_from(init, dataset, cfg)
}

/// Mini-batch Adam on cross-entropy, starting from `init`.
pub fn train_from<T: Scalar>(
    init: ModelParams<T>,
    dataset: &[TrainSample<T>],
    cfg: &TrainConfig,
) -> Result<TrainReport<T>, TrainError> {
    cfg.validate()?;
    let first = dataset.first().ok_or(TrainError::EmptyDataset)?;
    let dims = first.raster.dims();
    for s in dataset {
        if s.raster.dims() != dims {
            return Err(TrainError::DimensionMismatch { expected: dims.0 * dims.1, got: s.raster.pixels().len() });
        }
    }
    if init.input_dim() != dims.0 * dims.1 {
        return Err(TrainError::DimensionMismatch { expected: init.input_dim(), got: dims.0 * dims.1 });
    }
    let targets = dataset.iter().map(|s| s.target(cfg.label_mode)).collect::<Result<Vec<_>, _>>()?;

    let mut data_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    data_rng.set_stream(1);
    let mut digest = Fnv64::new();
    let mut model = init;
    let mut adam = AdamState::new(&model, cfg);
    let mut grads = model.zeroed_like();
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    let mut epoch_losses = Vec::with_capacity(cfg.epochs);

    for _ in 0..cfg.epochs {
        order.shuffle(&mut data_rng);
        let mut epoch_loss = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            grads.params_mut().for_each(|g| *g = T::zero());
            for &i in batch {
                let params = cfg.augmentation.sample(&mut data_rng);
                digest.write_u64(i as u64);
                for w in params.digest_words() {
                    digest.write_u64(w);
                }
                let x = apply_affine(&dataset[i].raster, &params);
                epoch_loss += model.accumulate_gradient(x.pixels(), &targets[i], &mut grads)?.as_f64();
            }
            let scale = T::one() / T::from_count(batch.len() as u64);
            grads.params_mut().for_each(|g| *g = *g * scale);
            adam.step(&mut model, &grads);
        }
        epoch_losses.push(epoch_loss / dataset.len() as f64);
    }
    Ok(TrainReport { model, augmentation_digest: digest.finish(), epoch_losses })
}

struct AdamState<T: Scalar> {
    m: Vec<T>,
    v: Vec<T>,
    t: i32,
    lr: T,
    beta1: T,
    beta2: T,
    eps: T,
}

impl<T: Scalar> AdamState<T> {
    fn new(model: &ModelParams<T>, cfg: &TrainConfig) -> Self {
        let n = model.n_params();
        Self {
            m: vec![T::zero(); n],
            v: vec![T::zero(); n],
            t: 0,
            lr: T::lit(cfg.learning_rate),
            beta1: T::lit(cfg.adam.beta1),
            beta2: T::lit(cfg.adam.beta2),
            eps: T::lit(cfg.adam.epsilon),
        }
    }

    fn step(&mut self, model: &mut ModelParams<T>, grads: &ModelParams<T>) {
        self.t += 1;
        let one = T::one();
        let bc1 = one - self.beta1.powi(self.t);
        let bc2 = one - self.beta2.powi(self.t);
        for (((p, g), m), v) in model.params_mut().zip(grads.params()).zip(&mut self.m).zip(&mut self.v) {
            *m = self.beta1 * *m + (one - self.beta1) * *g;
            *v = self.beta2 * *v + (one - self.beta2) * *g * *g;
            let m_hat = *m / bc1;
            let v_hat = *v / bc2;
            *p = *p - self.lr * m_hat / (v_hat.sqrt() + self.eps);
        }
    }
}

/// 64-bit FNV-1a.
struct Fnv64(u64);

impl Fnv64 {
    fn new() -> Self {
        Self(0xcbf2_9ce4_8422_2325)
    }

    fn write_u64(&mut self, x: u64) {
        for b in x.to_le_bytes() {
            self.0 ^= u64::from(b);
            self.0 = self.0.wrapping_mul(0x0000_0100_0000_01b3);
        }
    }

    fn finish(&self) -> u64 {
        self.0
    }
}
