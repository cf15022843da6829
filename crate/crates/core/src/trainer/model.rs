use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{Raster, TrainError};
use crate::label_model::{SoftTarget, NUM_CLASSES};
use crate::scalar::Scalar;

/// Probability floor applied before taking logarithms.
pub const LOG_CLAMP: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
#[derive(Default)]
pub enum Architecture {
    #[default]
    SoftmaxLinear,
    /// One tanh hidden layer.
    #[serde(rename = "mlp_1hidden")]
    Mlp1Hidden { hidden_units: usize },
}


/// Dense layer, `weights` is `out_dim x in_dim` row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense<T: Scalar> {
    pub in_dim: usize,
    pub out_dim: usize,
    pub weights: Vec<T>,
    pub biases: Vec<T>,
}

impl<T: Scalar> Dense<T> {
    pub fn zeros(in_dim: usize, out_dim: usize) -> Self {
        Self { in_dim, out_dim, weights: vec![T::zero(); in_dim * out_dim], biases: vec![T::zero(); out_dim] }
    }

    fn forward_into(&self, input: &[T], out: &mut Vec<T>) {
        out.clear();
        for (row, b) in self.weights.chunks_exact(self.in_dim).zip(&self.biases) {
            let mut acc = *b;
            for (w, x) in row.iter().zip(input) {
                acc = acc + *w * *x;
            }
            out.push(acc);
        }
    }

    fn params(&self) -> impl Iterator<Item = &T> {
        self.weights.iter().chain(self.biases.iter())
    }

    fn params_mut(&mut self) -> impl Iterator<Item = &mut T> {
        self.weights.iter_mut().chain(self.biases.iter_mut())
    }
}

/// Classifier parameters. Also used, with the same shapes, to hold gradients.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams<T: Scalar> {
    architecture: Architecture,
    input_dim: usize,
    layers: Vec<Dense<T>>,
}

/// Intermediate activations of one forward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache<T: Scalar> {
    hidden: Vec<T>,
    logits: Vec<T>,
    pub probs: SoftTarget<T>,
}

impl<T: Scalar> ModelParams<T> {
    pub fn zeros(architecture: Architecture, input_dim: usize) -> Self {
        let layers = match architecture {
            Architecture::SoftmaxLinear => vec![Dense::zeros(input_dim, NUM_CLASSES)],
            Architecture::Mlp1Hidden { hidden_units } => {
                vec![Dense::zeros(input_dim, hidden_units), Dense::zeros(hidden_units, NUM_CLASSES)]
            }
        };
        Self { architecture, input_dim, layers }
    }

    /// Glorot-uniform weights, zero biases.
    pub fn init<R: Rng + ?Sized>(architecture: Architecture, input_dim: usize, rng: &mut R) -> Self {
        let mut model = Self::zeros(architecture, input_dim);
        for layer in &mut model.layers {
            let limit = (6.0 / (layer.in_dim + layer.out_dim) as f64).sqrt();
            for w in &mut layer.weights {
                *w = T::lit(rng.random_range(-limit..limit));
            }
        }
        model
    }

    pub fn from_layers(architecture: Architecture, input_dim: usize, layers: Vec<Dense<T>>) -> Result<Self, TrainError> {
        let expected = Self::zeros(architecture, input_dim);
        let shapes_match = expected.layers.len() == layers.len()
            && expected.layers.iter().zip(&layers).all(|(e, l)| {
                e.in_dim == l.in_dim
                    && e.out_dim == l.out_dim
                    && l.weights.len() == l.in_dim * l.out_dim
                    && l.biases.len() == l.out_dim
            });
        if !shapes_match {
            return Err(TrainError::Format("layer shapes inconsistent with architecture".into()));
        }
        let model = Self { architecture, input_dim, layers };
        if model.params().any(|p| !p.is_finite()) {
            return Err(TrainError::Format("non-finite parameter".into()));
        }
        Ok(model)
    }

    pub fn architecture(&self) -> Architecture {
        self.architecture
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn layers(&self) -> &[Dense<T>] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Dense<T>] {
        &mut self.layers
    }

    pub fn n_params(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.biases.len()).sum()
    }

    pub fn params(&self) -> impl Iterator<Item = &T> {
        self.layers.iter().flat_map(Dense::params)
    }

    pub fn params_mut(&mut self) -> impl Iterator<Item = &mut T> {
        self.layers.iter_mut().flat_map(Dense::params_mut)
    }

    /// Parameter at a flat index (layer by layer, weights before biases).
    pub fn param_mut(&mut self, mut idx: usize) -> Option<&mut T> {
        for layer in &mut self.layers {
            let nw = layer.weights.len();
            if idx < nw {
                return layer.weights.get_mut(idx);
            }
            idx -= nw;
            if idx < layer.biases.len() {
                return layer.biases.get_mut(idx);
            }
            idx -= layer.biases.len();
        }
        None
    }

    pub fn zeroed_like(&self) -> Self {
        Self::zeros(self.architecture, self.input_dim)
    }

    fn check_input(&self, len: usize) -> Result<(), TrainError> {
        if len == self.input_dim {
            Ok(())
        } else {
            Err(TrainError::DimensionMismatch { expected: self.input_dim, got: len })
        }
    }

    pub fn forward(&self, input: &[T]) -> Result<ForwardCache<T>, TrainError> {
        self.check_input(input.len())?;
        let mut hidden = Vec::new();
        let mut logits = Vec::with_capacity(NUM_CLASSES);
        match self.architecture {
            Architecture::SoftmaxLinear => self.layers[0].forward_into(input, &mut logits),
            Architecture::Mlp1Hidden { .. } => {
                self.layers[0].forward_into(input, &mut hidden);
                for h in &mut hidden {
                    *h = h.tanh();
                }
                self.layers[1].forward_into(&hidden, &mut logits);
            }
        }
        let probs = softmax(&logits_array(&logits));
        Ok(ForwardCache { hidden, logits, probs })
    }

    pub fn logits(&self, input: &[T]) -> Result<[T; NUM_CLASSES], TrainError> {
        Ok(logits_array(&self.forward(input)?.logits))
    }

    pub fn predict_proba(&self, image: &Raster<T>) -> Result<SoftTarget<T>, TrainError> {
        Ok(self.forward(image.pixels())?.probs)
    }

    /// Cross-entropy of the prediction against `target`.
    pub fn loss(&self, input: &[T], target: &SoftTarget<T>) -> Result<T, TrainError> {
        Ok(cross_entropy(target, &self.forward(input)?.probs))
    }

    /// Adds the gradient of the cross-entropy loss for one sample into `grads`
    /// and returns the loss.
    pub fn accumulate_gradient(
        &self,
        input: &[T],
        target: &SoftTarget<T>,
        grads: &mut ModelParams<T>,
    ) -> Result<T, TrainError> {
        let cache = self.forward(input)?;
        let dlogits = logit_gradient(target, &cache.probs);
        match self.architecture {
            Architecture::SoftmaxLinear => outer_accumulate(&mut grads.layers[0], &dlogits, input),
            Architecture::Mlp1Hidden { .. } => {
                outer_accumulate(&mut grads.layers[1], &dlogits, &cache.hidden);
                let out = &self.layers[1];
                let dhidden: Vec<T> = (0..out.in_dim)
                    .map(|j| {
                        let back: T = (0..NUM_CLASSES).map(|k| out.weights[k * out.in_dim + j] * dlogits[k]).sum();
                        back * (T::one() - cache.hidden[j] * cache.hidden[j])
                    })
                    .collect();
                outer_accumulate(&mut grads.layers[0], &dhidden, input);
            }
        }
        Ok(cross_entropy(target, &cache.probs))
    }
}

fn outer_accumulate<T: Scalar>(layer: &mut Dense<T>, delta: &[T], input: &[T]) {
    for (k, d) in delta.iter().enumerate() {
        let row = &mut layer.weights[k * layer.in_dim..(k + 1) * layer.in_dim];
        for (w, x) in row.iter_mut().zip(input) {
            *w = *w + *d * *x;
        }
        layer.biases[k] = layer.biases[k] + *d;
    }
}

fn logits_array<T: Scalar>(v: &[T]) -> [T; NUM_CLASSES] {
    let mut out = [T::zero(); NUM_CLASSES];
    out.copy_from_slice(v);
    out
}

/// Max-subtracted softmax.
pub fn softmax<T: Scalar>(logits: &[T; NUM_CLASSES]) -> SoftTarget<T> {
    let max = logits.iter().copied().fold(T::neg_infinity(), T::max);
    let exps = logits.map(|z| (z - max).exp());
    let sum: T = exps.iter().copied().sum();
    SoftTarget::from_probs_unchecked(exps.map(|e| e / sum))
}

/// `-sum_i p_i ln q_i`, with `q` clamped below at [`LOG_CLAMP`].
pub fn cross_entropy<T: Scalar>(p: &SoftTarget<T>, q: &SoftTarget<T>) -> T {
    let floor = T::lit(LOG_CLAMP);
    p.probs()
        .iter()
        .zip(q.probs())
        .filter(|(pi, _)| **pi > T::zero())
        .map(|(pi, qi)| -*pi * qi.max(floor).ln())
        .sum()
}

/// Gradient of `cross_entropy(p, softmax(z))` with respect to `z`: `q - p`.
pub fn logit_gradient<T: Scalar>(p: &SoftTarget<T>, q: &SoftTarget<T>) -> [T; NUM_CLASSES] {
    let mut g = [T::zero(); NUM_CLASSES];
    for (i, gi) in g.iter_mut().enumerate() {
        *gi = q.probs()[i] - p.probs()[i];
    }
    g
}

/// Central finite-difference step used by [`grad_check`].
pub const GRAD_CHECK_STEP: f64 = 1e-5;

/// Maximum relative error between the analytic gradient and central
/// differences, over every parameter. The denominator is floored at 1e-6 so
/// that parameters with vanishing gradients compare on an absolute scale.
pub fn grad_check<T: Scalar>(model: &ModelParams<T>, input: &[T], target: &SoftTarget<T>) -> Result<T, TrainError> {
    let mut analytic = model.zeroed_like();
    model.accumulate_gradient(input, target, &mut analytic)?;
    let analytic: Vec<T> = analytic.params().copied().collect();

    let h = T::lit(GRAD_CHECK_STEP);
    let floor = T::lit(1e-6);
    let mut probe = model.clone();
    let mut worst = T::zero();
    for (idx, a) in analytic.iter().enumerate() {
        let slot = probe.param_mut(idx).expect("index in range");
        let original = *slot;
        *slot = original + h;
        let plus = probe.loss(input, target)?;
        *probe.param_mut(idx).expect("index in range") = original - h;
        let minus = probe.loss(input, target)?;
        *probe.param_mut(idx).expect("index in range") = original;
        let numeric = (plus - minus) / (h + h);
        let denom = a.abs().max(numeric.abs()).max(floor);
        worst = worst.max((*a - numeric).abs() / denom);
    }
    Ok(worst)
}

/// On-disk model document.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelDocument {
    pub format: u32,
    pub architecture: Architecture,
    pub input_dim: usize,
    pub layers: Vec<LayerDocument>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LayerDocument {
    pub rows: usize,
    pub cols: usize,
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
}

pub const MODEL_FORMAT: u32 = 1;

impl<T: Scalar> ModelParams<T> {
    pub fn to_document(&self) -> ModelDocument {
        ModelDocument {
            format: MODEL_FORMAT,
            architecture: self.architecture,
            input_dim: self.input_dim,
            layers: self
                .layers
                .iter()
                .map(|l| LayerDocument {
                    rows: l.out_dim,
                    cols: l.in_dim,
                    weights: l.weights.iter().map(|w| w.as_f64()).collect(),
                    biases: l.biases.iter().map(|b| b.as_f64()).collect(),
                })
                .collect(),
        }
    }

    pub fn from_document(doc: &ModelDocument) -> Result<Self, TrainError> {
        if doc.format != MODEL_FORMAT {
            return Err(TrainError::Format(format!("unsupported model format {}", doc.format)));
        }
        let layers = doc
            .layers
            .iter()
            .map(|l| Dense {
                in_dim: l.cols,
                out_dim: l.rows,
                weights: l.weights.iter().map(|&w| T::lit(w)).collect(),
                biases: l.biases.iter().map(|&b| T::lit(b)).collect(),
            })
            .collect();
        Self::from_layers(doc.architecture, doc.input_dim, layers)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_document()).expect("model serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, TrainError> {
        let doc: ModelDocument = serde_json::from_str(text).map_err(|e| TrainError::Format(e.to_string()))?;
        Self::from_document(&doc)
    }
}
