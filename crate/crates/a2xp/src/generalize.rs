//! Phase 2: attention-based generalization. Trains the query and key heads
//! (and optionally the shared embedder, the objective per its tuning mode,
//! and the experts themselves) with AdamW under a cosine
//! annealing-with-warm-restarts schedule.

use serde::{Deserialize, Serialize};

use crate::data::{pool_train_samples, DomainDataset, EpochSampler};
use crate::error::{Error, Result};
use crate::mixer::{embed_experts, MixerConfig, MixerHeads};
use crate::nn::optim::AdamW;
use crate::nn::LinearGrads;
use crate::objective::{kl_smoothed_loss, LossConfig, ObjectiveNetwork, TuningMode};
use crate::prompt::{mix_experts, ExpertBank};
use crate::tensor::Image;
use crate::util::derive_seed;

/// Warm-restart structure of the learning-rate schedule.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScheduleConfig {
    /// Number of cosine cycles of near-equal length.
    pub cycles: usize,
    /// Peak of the last cycle relative to the base learning rate.
    pub final_peak_frac: f64,
    /// Lower end of each cosine, relative to the base learning rate.
    pub floor_frac: f64,
}

impl Default for ScheduleConfig {
    fn default() -> Self {
        ScheduleConfig {
            cycles: 3,
            final_peak_frac: 0.1,
            floor_frac: 0.01,
        }
    }
}

/// Per-step learning rates: `cycles` cosine arcs whose peaks interpolate
/// linearly from `base_lr` down to `final_peak_frac * base_lr`, each arc
/// annealing to `floor_frac * base_lr`.
///
/// Closed form within a cycle of length L (positions s = 0..L-1):
/// `lr(s) = floor + (peak - floor) * (1 + cos(pi * s / (L-1))) / 2`.
pub fn make_lr_schedule(
    base_lr: f64,
    total_updates: usize,
    cfg: &ScheduleConfig,
) -> Result<Vec<f64>> {
    if total_updates < 1 {
        return Err(Error::config("schedule.total_updates", "must be >= 1"));
    }
    if base_lr <= 0.0 {
        return Err(Error::config("schedule.base_lr", "must be > 0"));
    }
    if cfg.cycles < 1 {
        return Err(Error::config("schedule.cycles", "must be >= 1"));
    }
    if !(cfg.final_peak_frac > 0.0 && cfg.final_peak_frac <= 1.0) {
        return Err(Error::config("schedule.final_peak_frac", "must be in (0, 1]"));
    }
    if !(cfg.floor_frac > 0.0 && cfg.floor_frac <= cfg.final_peak_frac) {
        return Err(Error::config(
            "schedule.floor_frac",
            "must be in (0, final_peak_frac]",
        ));
    }
    let cycles = cfg.cycles.min(total_updates);
    let floor = cfg.floor_frac * base_lr;
    let base_len = total_updates / cycles;
    let remainder = total_updates % cycles;
    let mut out = Vec::with_capacity(total_updates);
    for c in 0..cycles {
        let len = base_len + usize::from(c < remainder);
        let peak = if cycles == 1 {
            base_lr
        } else {
            base_lr * (1.0 - (1.0 - cfg.final_peak_frac) * c as f64 / (cycles - 1) as f64)
        };
        if len == 1 {
            out.push(peak);
            continue;
        }
        for s in 0..len {
            let phase = std::f64::consts::PI * s as f64 / (len - 1) as f64;
            out.push(floor + (peak - floor) * (1.0 + phase.cos()) / 2.0);
        }
    }
    Ok(out)
}

/// Hyperparameters for the generalization phase.
#[derive(Debug, Clone)]
pub struct GenConfig {
    /// Number of optimizer steps, honored exactly.
    pub budget: usize,
    pub lr: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    pub schedule: ScheduleConfig,
    /// Also push gradients into the expert border values.
    pub tune_experts: bool,
    /// Train the shared embedder rather than keeping it frozen.
    pub train_embedder: bool,
    pub loss: LossConfig,
}

impl Default for GenConfig {
    fn default() -> Self {
        GenConfig {
            budget: 1000,
            lr: 1e-4,
            weight_decay: 0.01,
            batch_size: 32,
            schedule: ScheduleConfig::default(),
            tune_experts: false,
            train_embedder: false,
            loss: LossConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct GenStats {
    pub losses: Vec<f64>,
    pub lrs: Vec<f64>,
}

/// Softmax Jacobian-vector product: dv_i = w_i * (dw_i - sum_j dw_j w_j).
fn softmax_backward(weights: &[f64], dweights: &[f64]) -> Vec<f64> {
    let dot: f64 = weights.iter().zip(dweights).map(|(w, d)| w * d).sum();
    weights
        .iter()
        .zip(dweights)
        .map(|(w, d)| w * (d - dot))
        .collect()
}

/// Gradients of the mean batch loss through the full A2XP forward: mixed
/// prompt added to each image, frozen-or-tuned objective on top.
pub struct StepGrads {
    pub loss: f64,
    pub head_t: LinearGrads,
    pub head_e: LinearGrads,
    /// Present iff the shared embedder trains.
    pub shared: Option<crate::nn::NetGrads>,
    pub objective: crate::objective::ObjectiveGrads,
    /// Border-masked expert gradients; present iff experts are tuned.
    pub experts: Option<Vec<Image>>,
}

/// One gradient evaluation of the generalization objective over a batch.
/// `image_feats_hint` / `expert_feats_hint` may carry precomputed shared
/// features when the corresponding path is frozen; they must match what the
/// embedder would produce.
#[allow(clippy::too_many_arguments)]
pub fn a2xp_step_gradients(
    objective: &ObjectiveNetwork,
    bank: &ExpertBank,
    heads: &MixerHeads,
    mixer_cfg: &MixerConfig,
    batch: &[(&Image, usize)],
    loss_cfg: &LossConfig,
    tune_experts: bool,
    train_embedder: bool,
    image_feats_hint: Option<&[Vec<f64>]>,
    expert_feats_hint: Option<&[Vec<f64>]>,
) -> Result<StepGrads> {
    let n_experts = bank.len();
    let embed_dim = heads.embed_dim();
    let expert_path_grads = tune_experts || train_embedder;

    // Expert features, with forward caches when their path needs gradients.
    let (expert_feats, expert_caches) = if expert_path_grads {
        let mut feats = Vec::with_capacity(n_experts);
        let mut caches = Vec::with_capacity(n_experts);
        for e in bank.experts() {
            let (f, c) = heads.shared.forward(e.values().data());
            feats.push(f);
            caches.push(c);
        }
        (feats, Some(caches))
    } else if let Some(hint) = expert_feats_hint {
        (hint.to_vec(), None)
    } else {
        (
            bank.experts()
                .iter()
                .map(|e| heads.shared.infer(e.values().data()))
                .collect(),
            None,
        )
    };
    let keys: Vec<Vec<f64>> = expert_feats
        .iter()
        .map(|f| heads.head_e.forward(f))
        .collect();

    // Forward over the batch, keeping what backward needs.
    let mut logits = Vec::with_capacity(batch.len());
    let mut labels = Vec::with_capacity(batch.len());
    let mut obj_caches = Vec::with_capacity(batch.len());
    let mut image_feats = Vec::with_capacity(batch.len());
    let mut image_caches = Vec::with_capacity(batch.len());
    let mut all_raws = Vec::with_capacity(batch.len());
    let mut all_weights = Vec::with_capacity(batch.len());
    for (j, (img, label)) in batch.iter().enumerate() {
        let (f_x, cache_x) = if train_embedder {
            let (f, c) = heads.shared.forward(img.data());
            (f, Some(c))
        } else if let Some(hint) = image_feats_hint {
            (hint[j].clone(), None)
        } else {
            (heads.shared.infer(img.data()), None)
        };
        let q = heads.head_t.forward(&f_x);
        let raws: Vec<f64> = keys
            .iter()
            .map(|k| q.iter().zip(k).map(|(a, b)| a * b).sum())
            .collect();
        let mut weights: Vec<f64> = if mixer_cfg.use_tanh {
            raws.iter().map(|r| r.tanh()).collect()
        } else {
            raws.clone()
        };
        if mixer_cfg.use_softmax {
            weights = crate::objective::softmax(&weights);
        }
        let prompt = mix_experts(bank, &weights)?;
        let prompted = img.add(prompt.values())?;
        let (l, cache) = objective.forward_single(&prompted)?;
        logits.push(l);
        labels.push(*label);
        obj_caches.push(cache);
        image_feats.push((f_x, q));
        image_caches.push(cache_x);
        all_raws.push(raws);
        all_weights.push(weights);
    }
    let (loss, dlogits) = kl_smoothed_loss(&logits, &labels, loss_cfg)?;

    // Gradient accumulators.
    let mut gh_t = LinearGrads::zeros_like(&heads.head_t);
    let mut gh_e = LinearGrads::zeros_like(&heads.head_e);
    let mut gshared = if train_embedder {
        Some(crate::nn::NetGrads::zeros_like(&heads.shared))
    } else {
        None
    };
    let mut obj_grads = objective.grads_for_mode();
    let mut dkeys = vec![vec![0.0; embed_dim]; n_experts];
    let mut dexperts: Option<Vec<Image>> = if tune_experts {
        Some(vec![Image::zeros(bank.shape()); n_experts])
    } else {
        None
    };

    for (j, dl) in dlogits.iter().enumerate() {
        let dinput = objective.backward_single(&obj_caches[j], dl, &mut obj_grads);
        // d(loss)/d(weight_i) via the mixed-prompt value path.
        let dweights: Vec<f64> = bank
            .experts()
            .iter()
            .map(|e| {
                dinput
                    .data()
                    .iter()
                    .zip(e.values().data())
                    .map(|(a, b)| a * b)
                    .sum()
            })
            .collect();
        if let Some(de) = dexperts.as_mut() {
            for (i, e) in de.iter_mut().enumerate() {
                let w = all_weights[j][i];
                for (g, d) in e.data_mut().iter_mut().zip(dinput.data()) {
                    *g += w * d;
                }
            }
        }
        // Activation backward, in reverse application order.
        let dv = if mixer_cfg.use_softmax {
            softmax_backward(&all_weights[j], &dweights)
        } else {
            dweights
        };
        let draws: Vec<f64> = if mixer_cfg.use_tanh {
            all_raws[j]
                .iter()
                .zip(&dv)
                .map(|(r, d)| {
                    let t = r.tanh();
                    d * (1.0 - t * t)
                })
                .collect()
        } else {
            dv
        };
        let (f_x, q) = &image_feats[j];
        let mut dq = vec![0.0; embed_dim];
        for (dr, k) in draws.iter().zip(&keys) {
            for (dqo, ko) in dq.iter_mut().zip(k) {
                *dqo += dr * ko;
            }
        }
        let df_x = heads.head_t.backward(f_x, &dq, Some(&mut gh_t));
        if let (Some(gs), Some(cache_x)) = (gshared.as_mut(), image_caches[j].as_ref()) {
            heads.shared.backward(cache_x, &df_x, Some(gs));
        }
        for (dk, dr) in dkeys.iter_mut().zip(&draws) {
            for (dko, qo) in dk.iter_mut().zip(q) {
                *dko += dr * qo;
            }
        }
    }

    // Key path: through head_e, then optionally into the shared embedder
    // and the expert values.
    for (i, dk) in dkeys.iter().enumerate() {
        let df_e = heads.head_e.backward(&expert_feats[i], dk, Some(&mut gh_e));
        if let Some(caches) = expert_caches.as_ref() {
            let de_key = heads.shared.backward(&caches[i], &df_e, gshared.as_mut());
            if let Some(de) = dexperts.as_mut() {
                for (g, d) in de[i].data_mut().iter_mut().zip(&de_key) {
                    *g += d;
                }
            }
        }
    }

    let masked_experts = dexperts.map(|de| {
        de.into_iter()
            .zip(bank.experts())
            .map(|(mut g, e)| {
                e.mask_gradient(&mut g);
                g
            })
            .collect()
    });

    Ok(StepGrads {
        loss,
        head_t: gh_t,
        head_e: gh_e,
        shared: gshared,
        objective: obj_grads,
        experts: masked_experts,
    })
}

/// Trains heads (and optional extras) on mini-batches pooled uniformly from
/// the source domains. Exactly `cfg.budget` steps run; the expert key cache
/// is rebuilt afterwards.
pub fn train_generalization(
    objective: &mut ObjectiveNetwork,
    bank: &mut ExpertBank,
    heads: &mut MixerHeads,
    mixer_cfg: &MixerConfig,
    sources: &[&DomainDataset],
    cfg: &GenConfig,
    seed: u64,
) -> Result<GenStats> {
    if sources.is_empty() {
        return Err(Error::EmptyDataset("no source domains".into()));
    }
    if cfg.batch_size == 0 {
        return Err(Error::config("batch_size", "must be >= 1"));
    }
    let pooled = pool_train_samples(sources);
    if pooled.is_empty() {
        return Err(Error::EmptyDataset("pooled source training data".into()));
    }
    let mut stats = GenStats::default();
    if cfg.budget > 0 {
        let schedule = make_lr_schedule(cfg.lr, cfg.budget, &cfg.schedule)?;
        let mut sampler =
            EpochSampler::new((0..pooled.len()).collect(), derive_seed(seed, "gen_batch", 0))?;
        let mut opt = AdamW::new(cfg.lr, cfg.weight_decay);
        let recompute_experts = cfg.tune_experts || cfg.train_embedder;
        // Experts and embedder frozen: shared features of the experts never
        // change, so compute them once.
        let frozen_expert_feats: Vec<Vec<f64>> = if recompute_experts {
            Vec::new()
        } else {
            bank.experts()
                .iter()
                .map(|e| heads.shared.infer(e.values().data()))
                .collect()
        };
        // Frozen embedder: image features are constant too, so compute each
        // pooled sample's feature vector once up front.
        let pool_feats: Vec<Vec<f64>> = if cfg.train_embedder {
            Vec::new()
        } else {
            pooled
                .iter()
                .map(|(img, _)| heads.shared.infer(img.data()))
                .collect()
        };
        for step in 0..cfg.budget {
            opt.set_lr(schedule[step]);
            let idx = sampler.next_batch(cfg.batch_size);
            let batch: Vec<(&Image, usize)> =
                idx.iter().map(|&i| (&pooled[i].0, pooled[i].1)).collect();
            let feats_hint: Option<Vec<Vec<f64>>> = if cfg.train_embedder {
                None
            } else {
                Some(idx.iter().map(|&i| pool_feats[i].clone()).collect())
            };
            let sg = a2xp_step_gradients(
                objective,
                bank,
                heads,
                mixer_cfg,
                &batch,
                &cfg.loss,
                cfg.tune_experts,
                cfg.train_embedder,
                feats_hint.as_deref(),
                if recompute_experts {
                    None
                } else {
                    Some(&frozen_expert_feats)
                },
            )?;
            if !sg.loss.is_finite() {
                return Err(Error::NumericalFailure(format!(
                    "non-finite generalization loss at step {step}"
                )));
            }

            // Assemble the stable parameter/gradient lists and step.
            let mut params: Vec<&mut [f64]> = vec![
                &mut heads.head_t.w,
                &mut heads.head_t.b,
                &mut heads.head_e.w,
                &mut heads.head_e.b,
            ];
            let mut grads: Vec<&[f64]> =
                vec![&sg.head_t.gw, &sg.head_t.gb, &sg.head_e.gw, &sg.head_e.gb];
            if let Some(gs) = sg.shared.as_ref() {
                for p in heads.shared.param_vecs_mut() {
                    params.push(p);
                }
                for g in gs.grad_vecs() {
                    grads.push(g);
                }
            }
            if let Some(cg) = sg.objective.classifier.as_ref() {
                params.push(&mut objective.classifier.w);
                params.push(&mut objective.classifier.b);
                grads.push(&cg.gw);
                grads.push(&cg.gb);
            }
            if let Some(fg) = sg.objective.features.as_ref() {
                for p in objective.features.param_vecs_mut() {
                    params.push(p);
                }
                for g in fg.grad_vecs() {
                    grads.push(g);
                }
            }
            if let Some(de) = sg.experts.as_ref() {
                let experts = bank.experts_mut();
                for (e, g) in experts.iter_mut().zip(de) {
                    params.push(e.values_mut().data_mut());
                    grads.push(g.data());
                }
                opt.step(&mut params, &grads);
                for e in experts.iter_mut() {
                    e.project_to_border();
                }
            } else {
                opt.step(&mut params, &grads);
            }
            heads.mark_mutated();
            stats.losses.push(sg.loss);
            stats.lrs.push(schedule[step]);
        }
    }
    // Experts are fixed from here on; refresh the key cache for inference.
    embed_experts(heads, bank)?;
    Ok(stats)
}

/// Supervised tuning of the objective network alone (no prompts): the
/// plain fine-tuning / linear-probing baseline, and (with `all_params`)
/// the pretext training that builds the desk-scale backbone.
pub fn train_objective_supervised(
    objective: &mut ObjectiveNetwork,
    sources: &[&DomainDataset],
    budget: usize,
    lr: f64,
    weight_decay: f64,
    batch_size: usize,
    loss_cfg: &LossConfig,
    all_params: bool,
    seed: u64,
) -> Result<GenStats> {
    if sources.is_empty() {
        return Err(Error::EmptyDataset("no source domains".into()));
    }
    let pooled = pool_train_samples(sources);
    if pooled.is_empty() {
        return Err(Error::EmptyDataset("pooled source training data".into()));
    }
    if batch_size == 0 {
        return Err(Error::config("batch_size", "must be >= 1"));
    }
    let mut sampler =
        EpochSampler::new((0..pooled.len()).collect(), derive_seed(seed, "sup_batch", 0))?;
    let mut opt = AdamW::new(lr, weight_decay);
    let mut stats = GenStats::default();
    let trains_anything = all_params || objective.tuning_mode != TuningMode::Frozen;
    for step in 0..budget {
        let idx = sampler.next_batch(batch_size);
        let mut logits = Vec::with_capacity(idx.len());
        let mut labels = Vec::with_capacity(idx.len());
        let mut caches = Vec::with_capacity(idx.len());
        for &i in &idx {
            let (img, label) = &pooled[i];
            let (l, c) = objective.forward_single(img)?;
            logits.push(l);
            labels.push(*label);
            caches.push(c);
        }
        let (loss, dlogits) = kl_smoothed_loss(&logits, &labels, loss_cfg)?;
        if !loss.is_finite() {
            return Err(Error::NumericalFailure(format!(
                "non-finite supervised loss at step {step}"
            )));
        }
        if trains_anything {
            let mut grads = if all_params {
                objective.grads_full()
            } else {
                objective.grads_for_mode()
            };
            for (cache, dl) in caches.iter().zip(&dlogits) {
                objective.backward_single(cache, dl, &mut grads);
            }
            let mut params: Vec<&mut [f64]> = Vec::new();
            let mut gvecs: Vec<&[f64]> = Vec::new();
            if let Some(cg) = grads.classifier.as_ref() {
                params.push(&mut objective.classifier.w);
                params.push(&mut objective.classifier.b);
                gvecs.push(&cg.gw);
                gvecs.push(&cg.gb);
            }
            if let Some(fg) = grads.features.as_ref() {
                for p in objective.features.param_vecs_mut() {
                    params.push(p);
                }
                for g in fg.grad_vecs() {
                    gvecs.push(g);
                }
            }
            opt.step(&mut params, &gvecs);
        }
        stats.losses.push(loss);
        stats.lrs.push(lr);
    }
    Ok(stats)
}
