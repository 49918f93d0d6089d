//! Cross-attention mixing of expert prompts.
//!
//! A shared embedder maps images and experts into a feature space; two
//! linear heads project features to query (images) and key (experts)
//! embeddings. Per-image weights are unscaled dot products, optionally
//! passed through tanh and/or softmax, and the image-specific prompt is the
//! weighted sum of the experts.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{Linear, Net};
use crate::prompt::{mix_experts, ExpertBank, KeyCache};
use crate::tensor::Image;
use crate::util::Fnv1a;

/// Default dimension of the query/key embeddings.
pub const EMBED_DIM: usize = 512;

/// Ablation flags for expert processing. All eight combinations are legal.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MixerConfig {
    pub use_expert_norm: bool,
    pub use_tanh: bool,
    pub use_softmax: bool,
}

impl Default for MixerConfig {
    /// Expert normalization plus tanh, no softmax: the strongest measured
    /// combination.
    fn default() -> Self {
        MixerConfig {
            use_expert_norm: true,
            use_tanh: true,
            use_softmax: false,
        }
    }
}

impl MixerConfig {
    pub fn label(&self) -> String {
        format!(
            "norm={}+tanh={}+softmax={}",
            self.use_expert_norm as u8, self.use_tanh as u8, self.use_softmax as u8
        )
    }

    /// All eight flag combinations in a stable order.
    pub fn all_combinations() -> Vec<MixerConfig> {
        let mut out = Vec::with_capacity(8);
        for norm in [false, true] {
            for tanh in [false, true] {
                for softmax in [false, true] {
                    out.push(MixerConfig {
                        use_expert_norm: norm,
                        use_tanh: tanh,
                        use_softmax: softmax,
                    });
                }
            }
        }
        out
    }
}

/// Shared embedder plus the two projection heads.
#[derive(Debug, Clone)]
pub struct MixerHeads {
    pub shared: Net,
    pub head_t: Linear,
    pub head_e: Linear,
    version: u64,
}

impl MixerHeads {
    /// Heads at the default embedding dimension (512).
    pub fn new(shared: Net, seed: u64) -> Self {
        Self::with_embed_dim(shared, EMBED_DIM, seed)
    }

    pub fn with_embed_dim(shared: Net, embed_dim: usize, seed: u64) -> Self {
        let d = shared.out_dim();
        MixerHeads {
            head_t: Linear::new(d, embed_dim, crate::util::derive_seed(seed, "head_t", 0)),
            head_e: Linear::new(d, embed_dim, crate::util::derive_seed(seed, "head_e", 0)),
            shared,
            version: 0,
        }
    }

    pub fn embed_dim(&self) -> usize {
        self.head_t.out_dim
    }

    /// Monotone counter bumped after parameter updates; key caches stamp it.
    pub fn version(&self) -> u64 {
        self.version
    }

    /// Must be called after any in-place parameter mutation so stale key
    /// caches become detectable.
    pub fn mark_mutated(&mut self) {
        self.version += 1;
    }

    pub fn param_hash(&self) -> u64 {
        let mut h = Fnv1a::new();
        h.write_u64(self.shared.param_hash());
        h.write_f64_slice(&self.head_t.w);
        h.write_f64_slice(&self.head_t.b);
        h.write_f64_slice(&self.head_e.w);
        h.write_f64_slice(&self.head_e.b);
        h.finish()
    }

    pub fn num_params(&self) -> usize {
        self.shared.num_params() + self.head_t.num_params() + self.head_e.num_params()
    }
}

/// Query embedding of one image: `E_T(E_shared(x))`.
pub fn embed_image(heads: &MixerHeads, x: &Image) -> Result<Vec<f64>> {
    if x.shape() != heads.shared.input_shape() {
        return Err(Error::shape(
            heads.shared.input_shape().to_string(),
            x.shape().to_string(),
        ));
    }
    Ok(heads.head_t.forward(&heads.shared.infer(x.data())))
}

/// Key embedding of one expert image: `E_E(E_shared(p))`. Experts go
/// through the same image-shaped pathway as inputs.
pub fn embed_expert(heads: &MixerHeads, expert_values: &Image) -> Result<Vec<f64>> {
    if expert_values.shape() != heads.shared.input_shape() {
        return Err(Error::shape(
            heads.shared.input_shape().to_string(),
            expert_values.shape().to_string(),
        ));
    }
    Ok(heads.head_e.forward(&heads.shared.infer(expert_values.data())))
}

/// Computes and caches key embeddings (and shared features) for every
/// expert in the bank. The cache is stamped with the current heads and
/// bank versions; any later mutation invalidates it.
pub fn embed_experts(heads: &MixerHeads, bank: &mut ExpertBank) -> Result<()> {
    let mut keys = Vec::with_capacity(bank.len());
    let mut features = Vec::with_capacity(bank.len());
    for e in bank.experts() {
        let f = heads.shared.infer(e.values().data());
        keys.push(heads.head_e.forward(&f));
        features.push(f);
    }
    let cache = KeyCache {
        keys,
        features,
        heads_version: heads.version(),
        bank_version: bank.version(),
    };
    bank.set_cache(cache);
    Ok(())
}

/// Keys for a forward pass: the cache when present (erroring if stale),
/// otherwise a fresh computation.
pub fn current_keys(heads: &MixerHeads, bank: &ExpertBank) -> Result<Vec<Vec<f64>>> {
    if let Some(cache) = bank.cache() {
        if cache.heads_version != heads.version() {
            return Err(Error::CacheInvalid(format!(
                "heads changed (cache v{}, heads v{})",
                cache.heads_version,
                heads.version()
            )));
        }
        if cache.bank_version != bank.version() {
            return Err(Error::CacheInvalid(format!(
                "experts changed (cache v{}, bank v{})",
                cache.bank_version,
                bank.version()
            )));
        }
        return Ok(cache.keys.clone());
    }
    bank.experts()
        .iter()
        .map(|e| embed_expert(heads, e.values()))
        .collect()
}

/// Raw scores and post-activation weights for one query against all keys.
/// Raw scores are unscaled dot products; tanh applies before softmax when
/// both flags are set.
pub fn attention_weights(
    q: &[f64],
    keys: &[Vec<f64>],
    cfg: &MixerConfig,
) -> Result<(Vec<f64>, Vec<f64>)> {
    if keys.is_empty() {
        return Err(Error::EmptyDataset("attention over zero experts".into()));
    }
    let mut raws = Vec::with_capacity(keys.len());
    for k in keys {
        if k.len() != q.len() {
            return Err(Error::shape(
                format!("key dim {}", q.len()),
                format!("key dim {}", k.len()),
            ));
        }
        raws.push(q.iter().zip(k).map(|(a, b)| a * b).sum::<f64>());
    }
    let mut w: Vec<f64> = if cfg.use_tanh {
        raws.iter().map(|r| r.tanh()).collect()
    } else {
        raws.clone()
    };
    if cfg.use_softmax {
        w = crate::objective::softmax(&w);
    }
    Ok((raws, w))
}

/// Per-sample attention outcome kept for analysis and reporting.
#[derive(Debug, Clone)]
pub struct AttentionRecord {
    pub sample_id: usize,
    pub domain_name: String,
    /// Post-activation mixing weights, one per expert.
    pub weights: Vec<f64>,
    /// Pre-activation dot products, one per expert.
    pub raw_scores: Vec<f64>,
    pub predicted_class: Option<usize>,
    pub true_class: Option<usize>,
}

impl AttentionRecord {
    pub fn is_correct(&self) -> Option<bool> {
        match (self.predicted_class, self.true_class) {
            (Some(p), Some(t)) => Some(p == t),
            _ => None,
        }
    }

    /// Bound checks implied by the activation flags.
    pub fn check_bounds(&self, cfg: &MixerConfig) -> bool {
        if cfg.use_softmax {
            let sum: f64 = self.weights.iter().sum();
            self.weights.iter().all(|&w| w >= 0.0) && (sum - 1.0).abs() <= 1e-6
        } else if cfg.use_tanh {
            self.weights.iter().all(|&w| w > -1.0 && w < 1.0)
        } else {
            true
        }
    }
}

/// Forward pass over a batch: each image gets its own mixed prompt added.
/// Returns the prompted images and one attention record per sample.
pub fn forward(
    heads: &MixerHeads,
    bank: &ExpertBank,
    cfg: &MixerConfig,
    batch: &[Image],
    domain_name: &str,
) -> Result<(Vec<Image>, Vec<AttentionRecord>)> {
    let keys = current_keys(heads, bank)?;
    let mut out = Vec::with_capacity(batch.len());
    let mut records = Vec::with_capacity(batch.len());
    for (idx, x) in batch.iter().enumerate() {
        let q = embed_image(heads, x)?;
        let (raws, weights) = attention_weights(&q, &keys, cfg)?;
        let p = mix_experts(bank, &weights)?;
        out.push(x.add(p.values())?);
        records.push(AttentionRecord {
            sample_id: idx,
            domain_name: domain_name.to_string(),
            weights,
            raw_scores: raws,
            predicted_class: None,
            true_class: None,
        });
    }
    Ok((out, records))
}
