//! Evaluation protocols: accuracy with attention records, the source-domain
//! matrix, attention-weight distribution analysis, memory accounting and
//! feature export.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::data::DomainDataset;
use crate::error::{Error, Result};
use crate::mixer::{self, AttentionRecord, MixerConfig, MixerHeads};
use crate::objective::ObjectiveNetwork;
use crate::prompt::{apply_prompt, ExpertBank, PaddingPrompt};
use crate::stats::rm_anova;

pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, x) in v.iter().enumerate().skip(1) {
        if *x > v[best] {
            best = i;
        }
    }
    best
}

/// Accuracy plus per-sample attention records for one dataset.
#[derive(Debug, Clone)]
pub struct EvalOutcome {
    pub accuracy: f64,
    pub records: Vec<AttentionRecord>,
}

/// Full A2XP inference on the dataset's validation split: mix a prompt per
/// image, classify, and record the attention weights.
pub fn evaluate_accuracy(
    net: &ObjectiveNetwork,
    bank: &ExpertBank,
    heads: &MixerHeads,
    cfg: &MixerConfig,
    dataset: &DomainDataset,
) -> Result<EvalOutcome> {
    let indices = dataset.val_indices();
    if indices.is_empty() {
        return Err(Error::EmptyDataset(format!(
            "validation split of '{}'",
            dataset.name()
        )));
    }
    let (images, labels) = dataset.gather(indices);
    let (prompted, mut records) = mixer::forward(heads, bank, cfg, &images, dataset.name())?;
    let logits = net.predict(&prompted)?;
    let mut correct = 0usize;
    for (((rec, l), &label), &orig_idx) in records
        .iter_mut()
        .zip(&logits)
        .zip(&labels)
        .zip(indices)
    {
        let pred = argmax(l);
        rec.sample_id = orig_idx;
        rec.predicted_class = Some(pred);
        rec.true_class = Some(label);
        if pred == label {
            correct += 1;
        }
    }
    Ok(EvalOutcome {
        accuracy: correct as f64 / labels.len() as f64,
        records,
    })
}

/// Plain frozen-network accuracy on the validation split, no prompts.
pub fn evaluate_baseline(net: &ObjectiveNetwork, dataset: &DomainDataset) -> Result<f64> {
    let indices = dataset.val_indices();
    if indices.is_empty() {
        return Err(Error::EmptyDataset(format!(
            "validation split of '{}'",
            dataset.name()
        )));
    }
    let (images, labels) = dataset.gather(indices);
    let logits = net.predict(&images)?;
    let correct = logits
        .iter()
        .zip(&labels)
        .filter(|(l, &y)| argmax(l) == y)
        .count();
    Ok(correct as f64 / labels.len() as f64)
}

/// Accuracy with a single fixed prompt added to every validation image.
pub fn evaluate_with_prompt(
    net: &ObjectiveNetwork,
    prompt: &PaddingPrompt,
    dataset: &DomainDataset,
) -> Result<f64> {
    let indices = dataset.val_indices();
    if indices.is_empty() {
        return Err(Error::EmptyDataset(format!(
            "validation split of '{}'",
            dataset.name()
        )));
    }
    let (images, labels) = dataset.gather(indices);
    let prompted = apply_prompt(&images, prompt)?;
    let logits = net.predict(&prompted)?;
    let correct = logits
        .iter()
        .zip(&labels)
        .filter(|(l, &y)| argmax(l) == y)
        .count();
    Ok(correct as f64 / labels.len() as f64)
}

/// Artifacts of one leave-one-domain-out run, borrowed for evaluation.
pub struct TargetArtifacts<'a> {
    pub target_index: usize,
    pub net: &'a ObjectiveNetwork,
    pub bank: &'a ExpertBank,
    pub heads: &'a MixerHeads,
    pub cfg: MixerConfig,
}

/// Accuracy matrix over domains: row = model (identified by its held-out
/// target), column = evaluated domain, diagonal empty.
#[derive(Debug, Clone)]
pub struct SourceMatrix {
    pub domain_names: Vec<String>,
    /// cells[row][col]; None on the diagonal.
    pub cells: Vec<Vec<Option<f64>>>,
}

impl SourceMatrix {
    /// Arithmetic mean of the off-diagonal entries of one row.
    pub fn row_avg(&self, row: usize) -> f64 {
        let vals: Vec<f64> = self.cells[row].iter().flatten().copied().collect();
        vals.iter().sum::<f64>() / vals.len() as f64
    }

    pub fn col_avg(&self, col: usize) -> f64 {
        let vals: Vec<f64> = self
            .cells
            .iter()
            .filter_map(|row| row[col])
            .collect();
        vals.iter().sum::<f64>() / vals.len() as f64
    }
}

/// Evaluates each per-target model on every other domain (Table-1b style).
pub fn source_eval_matrix(
    artifacts: &[TargetArtifacts<'_>],
    domains: &[DomainDataset],
) -> Result<SourceMatrix> {
    let names: Vec<String> = domains.iter().map(|d| d.name().to_string()).collect();
    let mut cells = vec![vec![None; domains.len()]; domains.len()];
    for art in artifacts {
        for (j, domain) in domains.iter().enumerate() {
            if j == art.target_index {
                continue;
            }
            let outcome = evaluate_accuracy(art.net, art.bank, art.heads, &art.cfg, domain)?;
            cells[art.target_index][j] = Some(outcome.accuracy);
        }
    }
    Ok(SourceMatrix {
        domain_names: names,
        cells,
    })
}

/// Five-number-ish summary of one expert's normalized weights in a cell.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WeightSummary {
    pub mean: f64,
    pub sd: f64,
    pub q25: f64,
    pub q50: f64,
    pub q75: f64,
}

/// One (target domain, evaluated domain) cell of the attention report.
#[derive(Debug, Clone)]
pub struct AttentionCell {
    pub target_domain: String,
    pub eval_domain: String,
    /// Correctly classified samples contributing to the cell.
    pub n_samples: usize,
    pub per_expert: Vec<WeightSummary>,
    /// None when fewer than 2 samples or fewer than 2 experts.
    pub p_value: Option<f64>,
    pub degenerate: bool,
}

#[derive(Debug, Clone)]
pub struct AttentionReport {
    /// Interpretation note carried into the CSV header.
    pub normalization: &'static str,
    pub cells: Vec<AttentionCell>,
}

/// Weights of one record normalized to unit L1 mass, sign preserved.
/// All-zero weights stay zero.
fn l1_normalize(w: &[f64]) -> Vec<f64> {
    let norm: f64 = w.iter().map(|v| v.abs()).sum();
    if norm == 0.0 {
        return w.to_vec();
    }
    w.iter().map(|v| v / norm).collect()
}

fn quantile(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    if sorted.len() == 1 {
        return sorted[0];
    }
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] * (1.0 - frac) + sorted[hi] * frac
}

fn summarize(values: &[f64]) -> WeightSummary {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = if values.len() > 1 {
        values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    WeightSummary {
        mean,
        sd: var.sqrt(),
        q25: quantile(&sorted, 0.25),
        q50: quantile(&sorted, 0.50),
        q75: quantile(&sorted, 0.75),
    }
}

/// Distribution summaries and RM-ANOVA p-values of the normalized attention
/// weights of correctly classified samples, grouped by (target domain,
/// evaluated domain). `records_by_target` carries one entry per LODO run.
pub fn attention_report(
    records_by_target: &[(String, Vec<AttentionRecord>)],
) -> Result<AttentionReport> {
    if records_by_target.iter().all(|(_, r)| r.is_empty()) {
        return Err(Error::EmptyDataset("attention report without records".into()));
    }
    let mut cells = Vec::new();
    for (target, records) in records_by_target {
        // Group correct samples by the domain they were evaluated on.
        let mut by_domain: BTreeMap<&str, Vec<Vec<f64>>> = BTreeMap::new();
        for rec in records {
            if rec.is_correct() == Some(true) {
                by_domain
                    .entry(rec.domain_name.as_str())
                    .or_default()
                    .push(l1_normalize(&rec.weights));
            }
        }
        for (domain, table) in by_domain {
            let n_experts = table[0].len();
            let per_expert: Vec<WeightSummary> = (0..n_experts)
                .map(|i| summarize(&table.iter().map(|row| row[i]).collect::<Vec<_>>()))
                .collect();
            let (p_value, degenerate) = if table.len() >= 2 && n_experts >= 2 {
                let out = rm_anova(&table)?;
                (Some(out.p_value), out.degenerate)
            } else {
                (None, false)
            };
            cells.push(AttentionCell {
                target_domain: target.clone(),
                eval_domain: domain.to_string(),
                n_samples: table.len(),
                per_expert,
                p_value,
                degenerate,
            });
        }
    }
    Ok(AttentionReport {
        normalization: "per-sample weights divided by the sum of absolute weights (L1), sign preserved",
        cells,
    })
}

/// Exact parameter budgets of the two strategies plus their marginal
/// per-unit costs, all in integer arithmetic, with the asymptotic forms as
/// symbolic strings.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct MemoryReport {
    /// Objective-network parameters.
    pub s_n: u64,
    /// Parameters of a single prompt.
    pub s_p: u64,
    /// Embedder (shared net + both heads) parameters.
    pub s_e: u64,
    pub n_experts: u64,
    pub m_presets: u64,
    /// N*S_p + S_N + S_E.
    pub a2xp_total: u64,
    /// M*S_N.
    pub dart_total: u64,
    /// Marginal cost of one more expert: S_p.
    pub a2xp_marginal_per_unit: u64,
    /// Marginal cost of one more preset: S_N.
    pub dart_marginal_per_unit: u64,
    pub a2xp_total_form: String,
    pub a2xp_marginal_form: String,
    pub dart_form: String,
    /// dart_total / a2xp_total.
    pub total_ratio: f64,
    /// (M*S_N) / (N*S_p): marginal budget ratio at the given N, M.
    pub marginal_ratio: f64,
}

pub fn memory_report(s_n: u64, s_p: u64, s_e: u64, n_experts: u64, m_presets: u64) -> MemoryReport {
    let a2xp_total = n_experts * s_p + s_n + s_e;
    let dart_total = m_presets * s_n;
    MemoryReport {
        s_n,
        s_p,
        s_e,
        n_experts,
        m_presets,
        a2xp_total,
        dart_total,
        a2xp_marginal_per_unit: s_p,
        dart_marginal_per_unit: s_n,
        a2xp_total_form: "N*S_p + S_N + S_E".to_string(),
        a2xp_marginal_form: "N*S_p".to_string(),
        dart_form: "M*S_N".to_string(),
        total_ratio: dart_total as f64 / a2xp_total as f64,
        marginal_ratio: (m_presets * s_n) as f64 / (n_experts * s_p) as f64,
    }
}

/// One exported feature row: classifier-input features plus metadata.
#[derive(Debug, Clone)]
pub struct FeatureRow {
    pub sample_id: usize,
    pub domain: String,
    pub label: usize,
    pub features: Vec<f64>,
}

/// Last-hidden-layer features of the validation split, through the full
/// prompting path when artifacts are given, raw otherwise.
pub fn export_features(
    net: &ObjectiveNetwork,
    dataset: &DomainDataset,
    artifacts: Option<(&ExpertBank, &MixerHeads, &MixerConfig)>,
) -> Result<Vec<FeatureRow>> {
    let indices = dataset.val_indices();
    if indices.is_empty() {
        return Err(Error::EmptyDataset(format!(
            "validation split of '{}'",
            dataset.name()
        )));
    }
    let (images, labels) = dataset.gather(indices);
    let inputs = match artifacts {
        Some((bank, heads, cfg)) => mixer::forward(heads, bank, cfg, &images, dataset.name())?.0,
        None => images,
    };
    let feats = net.features_of(&inputs)?;
    Ok(feats
        .into_iter()
        .zip(labels)
        .zip(indices)
        .map(|((features, label), &orig_idx)| FeatureRow {
            sample_id: orig_idx,
            domain: dataset.name().to_string(),
            label,
            features,
        })
        .collect())
}
