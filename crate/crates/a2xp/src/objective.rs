//! The objective network: a frozen pretrained classifier behind a thin
//! adapter, plus the KL training loss against a smoothed target.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{Linear, LinearGrads, Net, NetCache, NetGrads};
use crate::tensor::Image;
use crate::util::Fnv1a;

/// Which parameters may change during the generalization phase.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TuningMode {
    /// No objective parameter changes at any stage.
    Frozen,
    /// Only the final linear layer trains.
    LinearProbe,
    /// Every parameter trains.
    FullTune,
}

impl TuningMode {
    pub fn name(&self) -> &'static str {
        match self {
            TuningMode::Frozen => "frozen",
            TuningMode::LinearProbe => "linear_probe",
            TuningMode::FullTune => "full_tune",
        }
    }
}

/// Classifier = feature extractor + final linear layer, kept separate so
/// linear probing has a precise boundary.
#[derive(Debug, Clone)]
pub struct ObjectiveNetwork {
    pub features: Net,
    pub classifier: Linear,
    pub tuning_mode: TuningMode,
    pub num_classes: usize,
}

pub struct ObjectiveCache {
    pub feat_cache: NetCache,
    pub feats: Vec<f64>,
}

/// Gradient buffers for the objective; which halves exist follows the
/// tuning mode.
pub struct ObjectiveGrads {
    pub features: Option<NetGrads>,
    pub classifier: Option<LinearGrads>,
}

impl ObjectiveNetwork {
    pub fn new(features: Net, num_classes: usize, tuning_mode: TuningMode, seed: u64) -> Self {
        let classifier = Linear::new(features.out_dim(), num_classes, seed);
        ObjectiveNetwork {
            features,
            classifier,
            tuning_mode,
            num_classes,
        }
    }

    pub fn grads_for_mode(&self) -> ObjectiveGrads {
        match self.tuning_mode {
            TuningMode::Frozen => ObjectiveGrads {
                features: None,
                classifier: None,
            },
            TuningMode::LinearProbe => ObjectiveGrads {
                features: None,
                classifier: Some(LinearGrads::zeros_like(&self.classifier)),
            },
            TuningMode::FullTune => ObjectiveGrads {
                features: Some(NetGrads::zeros_like(&self.features)),
                classifier: Some(LinearGrads::zeros_like(&self.classifier)),
            },
        }
    }

    /// Gradient buffers for every parameter regardless of tuning mode
    /// (used by pretext training, which happens before freezing).
    pub fn grads_full(&self) -> ObjectiveGrads {
        ObjectiveGrads {
            features: Some(NetGrads::zeros_like(&self.features)),
            classifier: Some(LinearGrads::zeros_like(&self.classifier)),
        }
    }

    pub fn forward_single(&self, img: &Image) -> Result<(Vec<f64>, ObjectiveCache)> {
        if img.shape() != self.features.input_shape() {
            return Err(Error::shape(
                self.features.input_shape().to_string(),
                img.shape().to_string(),
            ));
        }
        let (feats, feat_cache) = self.features.forward(img.data());
        let logits = self.classifier.forward(&feats);
        Ok((logits, ObjectiveCache { feat_cache, feats }))
    }

    /// Logits for a batch. The nets contain no stochastic layers, so
    /// inference is deterministic.
    pub fn predict(&self, batch: &[Image]) -> Result<Vec<Vec<f64>>> {
        batch
            .iter()
            .map(|img| self.forward_single(img).map(|(l, _)| l))
            .collect()
    }

    /// Last-hidden-layer features (input of the classifier) per sample.
    pub fn features_of(&self, batch: &[Image]) -> Result<Vec<Vec<f64>>> {
        batch
            .iter()
            .map(|img| self.forward_single(img).map(|(_, c)| c.feats))
            .collect()
    }

    /// Backward from logit gradients to the input image gradient,
    /// accumulating parameter gradients where buffers exist.
    pub fn backward_single(
        &self,
        cache: &ObjectiveCache,
        dlogits: &[f64],
        grads: &mut ObjectiveGrads,
    ) -> Image {
        let dfeats = self
            .classifier
            .backward(&cache.feats, dlogits, grads.classifier.as_mut());
        let dinput = self
            .features
            .backward(&cache.feat_cache, &dfeats, grads.features.as_mut());
        Image::from_vec(self.features.input_shape(), dinput)
            .expect("input gradient has input shape")
    }

    pub fn param_hash(&self) -> u64 {
        let mut h = Fnv1a::new();
        h.write_u64(self.features.param_hash());
        h.write_f64_slice(&self.classifier.w);
        h.write_f64_slice(&self.classifier.b);
        h.finish()
    }

    /// Hash of everything except the final layer; the linear-probe audit.
    pub fn param_hash_hidden(&self) -> u64 {
        self.features.param_hash()
    }

    pub fn num_params(&self) -> usize {
        self.features.num_params() + self.classifier.num_params()
    }
}

/// Loss family selector. Only the KL-to-smoothed-target loss exists.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    KlSmoothed,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossConfig {
    pub kind: LossKind,
    /// Smoothing mass spread off the true class; in [0, 0.5).
    pub smoothing: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        LossConfig {
            kind: LossKind::KlSmoothed,
            smoothing: 0.05,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..0.5).contains(&self.smoothing) {
            return Err(Error::config(
                "loss.smoothing",
                format!("must be in [0, 0.5), got {}", self.smoothing),
            ));
        }
        Ok(())
    }

    /// The smoothed one-hot target: (1-eps) on the true class, eps/(K-1)
    /// elsewhere. Sums to 1.
    pub fn target(&self, num_classes: usize, label: usize) -> Vec<f64> {
        if num_classes == 1 {
            return vec![1.0];
        }
        let off = self.smoothing / (num_classes - 1) as f64;
        let mut q = vec![off; num_classes];
        q[label] = 1.0 - self.smoothing;
        q
    }
}

/// Numerically stable softmax.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&z| (z - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.iter().map(|e| e / sum).collect()
}

/// Mean KL(softmax(logits) || smoothed target) over the batch, and the
/// logit gradients already divided by the batch size.
///
/// At smoothing = 0 the KL direction above is infinite for any non-one-hot
/// prediction, so that setting is computed as plain cross-entropy instead
/// (the limit reading of the objective); smoothing > 0 uses the KL form.
pub fn kl_smoothed_loss(
    logits: &[Vec<f64>],
    labels: &[usize],
    cfg: &LossConfig,
) -> Result<(f64, Vec<Vec<f64>>)> {
    cfg.validate()?;
    if logits.len() != labels.len() {
        return Err(Error::shape(
            format!("{} labels", logits.len()),
            format!("{} labels", labels.len()),
        ));
    }
    if logits.is_empty() {
        return Err(Error::EmptyDataset("loss over empty batch".into()));
    }
    let k = logits[0].len();
    let b = logits.len() as f64;
    let mut total = 0.0;
    let mut dlogits = Vec::with_capacity(logits.len());
    for (z, &y) in logits.iter().zip(labels) {
        if y >= k {
            return Err(Error::LabelOutOfRange {
                label: y,
                num_classes: k,
            });
        }
        let p = softmax(z);
        if cfg.smoothing == 0.0 {
            total += -p[y].max(f64::MIN_POSITIVE).ln();
            let mut dz = p;
            dz[y] -= 1.0;
            for d in &mut dz {
                *d /= b;
            }
            dlogits.push(dz);
        } else {
            let q = cfg.target(k, y);
            let s: Vec<f64> = p
                .iter()
                .zip(&q)
                .map(|(&pc, &qc)| pc.max(f64::MIN_POSITIVE).ln() - qc.ln())
                .collect();
            let l: f64 = p.iter().zip(&s).map(|(pc, sc)| pc * sc).sum();
            total += l;
            let dz: Vec<f64> = p
                .iter()
                .zip(&s)
                .map(|(&pc, &sc)| pc * (sc - l) / b)
                .collect();
            dlogits.push(dz);
        }
    }
    Ok((total / b, dlogits))
}
