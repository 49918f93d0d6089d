//! Border-masked additive input prompts and the expert bank.
//!
//! A padding prompt is an image-shaped tensor whose trainable entries live on
//! a fixed-width frame around the image; the interior is identically zero.
//! Experts are adapted prompts, one per source domain, stored L2-normalized
//! in an [`ExpertBank`] together with optional cached key embeddings.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{Image, Shape3};

/// Norm threshold below which an expert counts as degenerate.
pub const NORM_EPSILON: f64 = 1e-8;

/// How a prompt is initialized before adaptation.
#[derive(Debug, Clone)]
pub enum InitStrategy {
    /// All-zero border.
    Zero,
    /// I.i.d. U(-scale, scale) on the border.
    Uniform { scale: f64 },
    /// I.i.d. N(0, scale^2) on the border.
    Normal { scale: f64 },
    /// Copy of a previously trained prompt, masked to the border.
    Meta { source: Box<PaddingPrompt> },
}

impl InitStrategy {
    pub fn kind_name(&self) -> &'static str {
        match self {
            InitStrategy::Zero => "zero",
            InitStrategy::Uniform { .. } => "uniform",
            InitStrategy::Normal { .. } => "normal",
            InitStrategy::Meta { .. } => "meta",
        }
    }

    fn validate(&self) -> Result<()> {
        match self {
            InitStrategy::Uniform { scale } | InitStrategy::Normal { scale } => {
                if *scale <= 0.0 {
                    return Err(Error::config("init.scale", "scale must be > 0"));
                }
            }
            _ => {}
        }
        Ok(())
    }
}

/// Serializable description of an init strategy (the meta source is referenced
/// by path in configs, not embedded).
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct InitSpec {
    pub kind: String,
    #[serde(default)]
    pub scale: Option<f64>,
}

/// An additive prompt trainable only on a border frame of width
/// `border_width`; interior entries are exactly zero.
#[derive(Debug, Clone, PartialEq)]
pub struct PaddingPrompt {
    values: Image,
    border_width: usize,
}

impl PaddingPrompt {
    /// Validates the border geometry: `border_width >= 1` and
    /// `2 * border_width < min(h, w)`.
    pub fn check_geometry(shape: Shape3, border_width: usize) -> Result<()> {
        if border_width < 1 {
            return Err(Error::config("border_width", "must be >= 1"));
        }
        if 2 * border_width >= shape.h.min(shape.w) {
            return Err(Error::config(
                "border_width",
                format!(
                    "2*{} must be < min(H, W) = {}",
                    border_width,
                    shape.h.min(shape.w)
                ),
            ));
        }
        Ok(())
    }

    /// Zero prompt with the given geometry.
    pub fn zeros(shape: Shape3, border_width: usize) -> Result<Self> {
        Self::check_geometry(shape, border_width)?;
        Ok(PaddingPrompt {
            values: Image::zeros(shape),
            border_width,
        })
    }

    /// Wraps existing values, zeroing the interior to restore the invariant.
    pub fn from_values(values: Image, border_width: usize) -> Result<Self> {
        Self::check_geometry(values.shape(), border_width)?;
        let mut p = PaddingPrompt {
            values,
            border_width,
        };
        p.project_to_border();
        Ok(p)
    }

    pub fn shape(&self) -> Shape3 {
        self.values.shape()
    }

    pub fn border_width(&self) -> usize {
        self.border_width
    }

    pub fn values(&self) -> &Image {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut Image {
        &mut self.values
    }

    /// True iff pixel (y, x) lies on the trainable frame.
    #[inline]
    pub fn is_border(&self, y: usize, x: usize) -> bool {
        let s = self.values.shape();
        let b = self.border_width;
        y < b || y >= s.h - b || x < b || x >= s.w - b
    }

    /// Materialized boolean mask in CHW order (true on the border).
    pub fn mask(&self) -> Vec<bool> {
        let s = self.values.shape();
        let mut m = Vec::with_capacity(s.len());
        for _c in 0..s.c {
            for y in 0..s.h {
                for x in 0..s.w {
                    m.push(self.is_border(y, x));
                }
            }
        }
        m
    }

    /// Number of trainable entries: C * (H*W - (H-2b)(W-2b)).
    pub fn trainable_count(&self) -> usize {
        let s = self.values.shape();
        let b = self.border_width;
        s.c * (s.h * s.w - (s.h - 2 * b) * (s.w - 2 * b))
    }

    /// Zeroes every interior entry. Also used as the masked-gradient
    /// projection after optimizer steps.
    pub fn project_to_border(&mut self) {
        let s = self.values.shape();
        let b = self.border_width;
        for c in 0..s.c {
            for y in b..s.h - b {
                for x in b..s.w - b {
                    self.values.set(c, y, x, 0.0);
                }
            }
        }
    }

    /// Zeroes the interior of an image-shaped gradient buffer in place.
    pub fn mask_gradient(&self, grad: &mut Image) {
        assert_eq!(grad.shape(), self.shape());
        let s = self.shape();
        let b = self.border_width;
        for c in 0..s.c {
            for y in b..s.h - b {
                for x in b..s.w - b {
                    grad.set(c, y, x, 0.0);
                }
            }
        }
    }

    /// Checks the interior-zero invariant exactly.
    pub fn interior_is_zero(&self) -> bool {
        let s = self.values.shape();
        let b = self.border_width;
        for c in 0..s.c {
            for y in b..s.h - b {
                for x in b..s.w - b {
                    if self.values.get(c, y, x) != 0.0 {
                        return false;
                    }
                }
            }
        }
        true
    }

    pub fn l2_norm(&self) -> f64 {
        // Interior entries are zero, so the full-tensor norm equals the
        // border-only norm.
        self.values.l2_norm()
    }
}

/// Initializes a prompt with the given strategy. The RNG stream is
/// ChaCha8 seeded from `rng_seed`, drawing one value per border entry in
/// CHW order.
pub fn init_prompt(
    shape: Shape3,
    border_width: usize,
    strategy: &InitStrategy,
    rng_seed: u64,
) -> Result<PaddingPrompt> {
    PaddingPrompt::check_geometry(shape, border_width)?;
    strategy.validate()?;
    let mut prompt = PaddingPrompt::zeros(shape, border_width)?;
    match strategy {
        InitStrategy::Zero => {}
        InitStrategy::Uniform { scale } => {
            let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
            fill_border(&mut prompt, |rng_v: &mut ChaCha8Rng| {
                rng_v.gen_range(-*scale..*scale)
            }, &mut rng);
        }
        InitStrategy::Normal { scale } => {
            let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
            fill_border(&mut prompt, |rng_v: &mut ChaCha8Rng| {
                sample_standard_normal(rng_v) * *scale
            }, &mut rng);
        }
        InitStrategy::Meta { source } => {
            if source.shape() != shape {
                return Err(Error::shape(
                    shape.to_string(),
                    source.shape().to_string(),
                ));
            }
            let src = source.values().data();
            let dst = prompt.values_mut().data_mut();
            dst.copy_from_slice(src);
            prompt.project_to_border();
        }
    }
    Ok(prompt)
}

fn fill_border<F>(prompt: &mut PaddingPrompt, mut sample: F, rng: &mut ChaCha8Rng)
where
    F: FnMut(&mut ChaCha8Rng) -> f64,
{
    let s = prompt.shape();
    let b = prompt.border_width();
    for c in 0..s.c {
        for y in 0..s.h {
            for x in 0..s.w {
                if y < b || y >= s.h - b || x < b || x >= s.w - b {
                    let v = sample(rng);
                    prompt.values_mut().set(c, y, x, v);
                }
            }
        }
    }
}

/// Box-Muller standard normal draw; two uniforms per sample keeps the
/// stream layout independent of the platform's Normal implementation.
fn sample_standard_normal(rng: &mut ChaCha8Rng) -> f64 {
    let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
    let u2: f64 = rng.gen_range(0.0..1.0);
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

/// Divides the prompt by its L2 norm. Errors on norms below
/// [`NORM_EPSILON`]: a zero expert means adaptation never moved.
pub fn normalize_expert(p: &PaddingPrompt) -> Result<PaddingPrompt> {
    let norm = p.l2_norm();
    if norm <= NORM_EPSILON {
        return Err(Error::DegenerateExpert {
            norm,
            epsilon: NORM_EPSILON,
        });
    }
    let mut out = p.clone();
    out.values_mut().scale(1.0 / norm);
    Ok(out)
}

/// Adds the prompt to every image in the batch. Interior pixels pass
/// through unchanged because the prompt interior is zero.
pub fn apply_prompt(batch: &[Image], p: &PaddingPrompt) -> Result<Vec<Image>> {
    let mut out = Vec::with_capacity(batch.len());
    for x in batch {
        if x.shape() != p.shape() {
            return Err(Error::shape(p.shape().to_string(), x.shape().to_string()));
        }
        out.push(x.add(p.values())?);
    }
    Ok(out)
}

/// Cached key embeddings for a bank, stamped with the versions of the
/// heads and the bank they were computed from.
#[derive(Debug, Clone)]
pub struct KeyCache {
    /// One `embed_dim` key per expert.
    pub keys: Vec<Vec<f64>>,
    /// Shared-embedder features per expert (reused when only heads change).
    pub features: Vec<Vec<f64>>,
    pub heads_version: u64,
    pub bank_version: u64,
}

/// Ordered collection of expert prompts with domain names and an optional
/// key cache. When `normalized` is true every stored expert has unit L2
/// norm.
#[derive(Debug, Clone)]
pub struct ExpertBank {
    experts: Vec<PaddingPrompt>,
    domain_names: Vec<String>,
    normalized: bool,
    version: u64,
    cache: Option<KeyCache>,
}

impl ExpertBank {
    /// Builds a bank from raw experts. With `normalize` set (the default
    /// pipeline) each expert is divided by its own L2 norm; a zero expert
    /// raises [`Error::DegenerateExpert`].
    pub fn new(
        raw_experts: Vec<PaddingPrompt>,
        domain_names: Vec<String>,
        normalize: bool,
    ) -> Result<Self> {
        if raw_experts.is_empty() {
            return Err(Error::EmptyDataset("expert bank needs N >= 1".into()));
        }
        if raw_experts.len() != domain_names.len() {
            return Err(Error::shape(
                format!("{} names", raw_experts.len()),
                format!("{} names", domain_names.len()),
            ));
        }
        let shape = raw_experts[0].shape();
        let border = raw_experts[0].border_width();
        for e in &raw_experts {
            if e.shape() != shape || e.border_width() != border {
                return Err(Error::shape(
                    format!("{shape} b={border}"),
                    format!("{} b={}", e.shape(), e.border_width()),
                ));
            }
        }
        let experts = if normalize {
            raw_experts
                .iter()
                .map(normalize_expert)
                .collect::<Result<Vec<_>>>()?
        } else {
            raw_experts
        };
        Ok(ExpertBank {
            experts,
            domain_names,
            normalized: normalize,
            version: 0,
            cache: None,
        })
    }

    pub fn len(&self) -> usize {
        self.experts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.experts.is_empty()
    }

    pub fn experts(&self) -> &[PaddingPrompt] {
        &self.experts
    }

    pub fn domain_names(&self) -> &[String] {
        &self.domain_names
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    pub fn shape(&self) -> Shape3 {
        self.experts[0].shape()
    }

    pub fn border_width(&self) -> usize {
        self.experts[0].border_width()
    }

    /// Monotone counter bumped on every expert mutation; key caches carry
    /// the version they were computed against.
    pub fn version(&self) -> u64 {
        self.version
    }

    /// Mutable access to one expert. Bumps the bank version so stale
    /// caches are detectable.
    pub fn expert_mut(&mut self, idx: usize) -> &mut PaddingPrompt {
        self.version += 1;
        &mut self.experts[idx]
    }

    /// Mutable access to all experts at once (bumps the version once);
    /// used when further tuning updates every expert in one step.
    pub fn experts_mut(&mut self) -> &mut [PaddingPrompt] {
        self.version += 1;
        &mut self.experts
    }

    pub fn cache(&self) -> Option<&KeyCache> {
        self.cache.as_ref()
    }

    pub fn set_cache(&mut self, cache: KeyCache) {
        self.cache = Some(cache);
    }

    pub fn clear_cache(&mut self) {
        self.cache = None;
    }

    /// FNV-1a hash over the exact value bytes of all experts; used by the
    /// no-mutation audits.
    pub fn value_hash(&self) -> u64 {
        let mut h = crate::util::Fnv1a::new();
        for e in &self.experts {
            for v in e.values().data() {
                h.write_u64(v.to_bits());
            }
        }
        h.finish()
    }
}

/// Linear combination of the bank's experts: `sum_i weights[i] * expert_i`.
/// The result is a valid prompt with the shared border mask.
pub fn mix_experts(bank: &ExpertBank, weights: &[f64]) -> Result<PaddingPrompt> {
    if weights.len() != bank.len() {
        return Err(Error::shape(
            format!("{} weights", bank.len()),
            format!("{} weights", weights.len()),
        ));
    }
    let mut acc = Image::zeros(bank.shape());
    for (w, e) in weights.iter().zip(bank.experts()) {
        let data = e.values().data();
        for (a, v) in acc.data_mut().iter_mut().zip(data) {
            *a += w * v;
        }
    }
    PaddingPrompt::from_values(acc, bank.border_width())
}
