//! Phase 1: expert adaptation. One prompt per source domain is trained by
//! SGD with momentum against the frozen objective network, with gradients
//! masked to the border at every step. Also produces the pooled-source
//! meta prompt used for initialization.

use crate::data::{pool_train_samples, DomainDataset, EpochSampler};
use crate::error::{Error, Result};
use crate::nn::optim::SgdMomentum;
use crate::objective::{kl_smoothed_loss, LossConfig, ObjectiveNetwork};
use crate::prompt::{init_prompt, ExpertBank, InitStrategy, PaddingPrompt};
use crate::tensor::Image;
use crate::util::derive_seed;

/// Hyperparameters for one adaptation run.
#[derive(Debug, Clone)]
pub struct AdaptConfig {
    pub border_width: usize,
    /// Number of optimizer steps, honored exactly.
    pub budget: usize,
    pub lr: f64,
    pub momentum: f64,
    pub batch_size: usize,
    pub loss: LossConfig,
}

impl Default for AdaptConfig {
    fn default() -> Self {
        AdaptConfig {
            border_width: 30,
            budget: 1000,
            lr: 1e-4,
            momentum: 0.9,
            batch_size: 32,
            loss: LossConfig::default(),
        }
    }
}

/// Outcome bookkeeping for one adapted prompt.
#[derive(Debug, Clone)]
pub struct AdaptStats {
    /// Optimizer steps actually taken; equals the budget.
    pub steps: usize,
    pub losses: Vec<f64>,
    pub final_loss: f64,
}

/// Core update loop shared by expert adaptation and meta-prompt training:
/// `budget` steps of SGD+momentum on the prompt border against the frozen
/// network.
fn adapt_prompt(
    net: &ObjectiveNetwork,
    samples: &[(Image, usize)],
    mut prompt: PaddingPrompt,
    cfg: &AdaptConfig,
    seed: u64,
) -> Result<(PaddingPrompt, AdaptStats)> {
    if samples.is_empty() {
        return Err(Error::EmptyDataset("adaptation training split".into()));
    }
    if cfg.batch_size == 0 {
        return Err(Error::config("batch_size", "must be >= 1"));
    }
    let mut sampler = EpochSampler::new((0..samples.len()).collect(), derive_seed(seed, "batch", 0))?;
    let dim = prompt.values().data().len();
    let mut opt = SgdMomentum::new(cfg.lr, cfg.momentum, dim);
    let mut losses = Vec::with_capacity(cfg.budget);
    for step in 0..cfg.budget {
        let idx = sampler.next_batch(cfg.batch_size);
        let mut grad = Image::zeros(prompt.shape());
        let mut logits = Vec::with_capacity(idx.len());
        let mut labels = Vec::with_capacity(idx.len());
        let mut caches = Vec::with_capacity(idx.len());
        for &i in &idx {
            let (img, label) = &samples[i];
            let prompted = img.add(prompt.values())?;
            let (l, cache) = net.forward_single(&prompted)?;
            logits.push(l);
            labels.push(*label);
            caches.push(cache);
        }
        let (loss, dlogits) = kl_smoothed_loss(&logits, &labels, &cfg.loss)?;
        if !loss.is_finite() {
            return Err(Error::NumericalFailure(format!(
                "non-finite adaptation loss at step {step}"
            )));
        }
        let mut frozen_grads = net.grads_for_mode();
        for (cache, dl) in caches.iter().zip(&dlogits) {
            let dinput = net.backward_single(cache, dl, &mut frozen_grads);
            for (g, d) in grad.data_mut().iter_mut().zip(dinput.data()) {
                *g += d;
            }
        }
        prompt.mask_gradient(&mut grad);
        opt.step(prompt.values_mut().data_mut(), grad.data());
        prompt.project_to_border();
        losses.push(loss);
    }
    let final_loss = losses.last().copied().unwrap_or(f64::NAN);
    Ok((
        prompt,
        AdaptStats {
            steps: cfg.budget,
            losses,
            final_loss,
        },
    ))
}

/// Adapts one expert on a single domain's training split. The network is
/// read-only throughout; the returned expert is raw (pre-normalization).
pub fn adapt_expert(
    net: &ObjectiveNetwork,
    domain: &DomainDataset,
    init: &InitStrategy,
    cfg: &AdaptConfig,
    seed: u64,
) -> Result<(PaddingPrompt, AdaptStats)> {
    let (images, labels) = domain.gather(domain.train_indices());
    let samples: Vec<(Image, usize)> = images.into_iter().zip(labels).collect();
    let prompt = init_prompt(
        domain.image_shape(),
        cfg.border_width,
        init,
        derive_seed(seed, "init", 0),
    )?;
    adapt_prompt(net, &samples, prompt, cfg, seed)
}

/// Trains the meta prompt on the union of all source training splits with
/// the same update rule as expert adaptation, starting from zero.
pub fn pretrain_meta_prompt(
    net: &ObjectiveNetwork,
    sources: &[&DomainDataset],
    cfg: &AdaptConfig,
    seed: u64,
) -> Result<(PaddingPrompt, AdaptStats)> {
    if sources.is_empty() {
        return Err(Error::EmptyDataset("meta prompt needs >= 1 source".into()));
    }
    let pooled = pool_train_samples(sources);
    if pooled.is_empty() {
        return Err(Error::EmptyDataset("pooled source training data".into()));
    }
    let shape = sources[0].image_shape();
    let prompt = init_prompt(shape, cfg.border_width, &InitStrategy::Zero, seed)?;
    adapt_prompt(net, &pooled, prompt, cfg, seed)
}

/// Adapts one raw expert per source domain. `seeds` must provide one seed
/// per domain. Domains are independent, so with `jobs > 1` they adapt in
/// parallel with identical results.
pub fn adapt_all_experts(
    net: &ObjectiveNetwork,
    sources: &[&DomainDataset],
    init: &InitStrategy,
    cfg: &AdaptConfig,
    seeds: &[u64],
    jobs: usize,
) -> Result<Vec<(PaddingPrompt, AdaptStats)>> {
    if sources.is_empty() {
        return Err(Error::EmptyDataset("no source domains".into()));
    }
    if seeds.len() != sources.len() {
        return Err(Error::config(
            "seeds",
            format!("need {} seeds, got {}", sources.len(), seeds.len()),
        ));
    }
    if jobs > 1 {
        use rayon::prelude::*;
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build()
            .map_err(|e| Error::NumericalFailure(format!("thread pool: {e}")))?;
        pool.install(|| {
            sources
                .par_iter()
                .zip(seeds.par_iter())
                .map(|(domain, &seed)| adapt_expert(net, domain, init, cfg, seed))
                .collect()
        })
    } else {
        sources
            .iter()
            .zip(seeds)
            .map(|(domain, &seed)| adapt_expert(net, domain, init, cfg, seed))
            .collect()
    }
}

/// Runs [`adapt_all_experts`] and normalizes the results into a bank with
/// the source domain names.
pub fn build_expert_bank(
    net: &ObjectiveNetwork,
    sources: &[&DomainDataset],
    init: &InitStrategy,
    cfg: &AdaptConfig,
    seeds: &[u64],
    jobs: usize,
) -> Result<(ExpertBank, Vec<AdaptStats>)> {
    let adapted = adapt_all_experts(net, sources, init, cfg, seeds, jobs)?;
    let mut experts = Vec::with_capacity(adapted.len());
    let mut stats = Vec::with_capacity(adapted.len());
    for (p, s) in adapted {
        experts.push(p);
        stats.push(s);
    }
    let names = sources.iter().map(|d| d.name().to_string()).collect();
    let bank = ExpertBank::new(experts, names, true)?;
    Ok((bank, stats))
}
