//! Command implementations behind the CLI: adapt, generalize, evaluate,
//! ablate, analyze. Every command is deterministic for a fixed config and
//! writes byte-identical outputs on rerun.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::adapt::{adapt_all_experts, pretrain_meta_prompt, AdaptConfig};
use crate::checkpoint::{
    load_heads, load_objective, load_prompt, save_heads, save_objective, save_prompt, sha256_file,
    PromptMeta,
};
use crate::data::{
    dataset_manifest, lodo_splits, load_folder_dataset, make_synthetic_domains, shapes_base_set,
    DomainDataset, LodoSplit,
};
use crate::error::{Error, Result};
use crate::eval::{
    attention_report, evaluate_accuracy, evaluate_baseline, export_features, memory_report,
    source_eval_matrix, TargetArtifacts,
};
use crate::experiment::config::{DatasetSpec, ExperimentConfig, InitConfig};
use crate::experiment::csvfmt;
use crate::generalize::{train_generalization, train_objective_supervised, GenConfig};
use crate::mixer::{embed_experts, MixerConfig, MixerHeads};
use crate::nn::Net;
use crate::objective::{ObjectiveNetwork, TuningMode};
use crate::prompt::{ExpertBank, InitSpec, InitStrategy, PaddingPrompt};
use crate::tensor::Shape3;
use crate::util::derive_seed;

/// Everything a command needs: validated config, resolved output dir, and
/// the materialized domains.
pub struct RunContext {
    pub cfg: ExperimentConfig,
    pub out: PathBuf,
    pub jobs: usize,
    pub domains: Vec<DomainDataset>,
}

#[derive(Serialize)]
struct RootManifest<'a> {
    schema_version: u32,
    config: &'a ExperimentConfig,
    dataset: crate::data::DatasetManifest,
}

impl RunContext {
    pub fn prepare(
        cfg: ExperimentConfig,
        jobs: usize,
        output_override: Option<PathBuf>,
    ) -> Result<Self> {
        cfg.validate()?;
        let out = output_override.unwrap_or_else(|| cfg.output_dir.clone());
        std::fs::create_dir_all(&out).map_err(|e| Error::io(&out, e))?;
        let domains = build_domains(&cfg)?;
        let ctx = RunContext {
            cfg,
            out,
            jobs: jobs.max(1),
            domains,
        };
        let manifest = RootManifest {
            schema_version: crate::experiment::config::SCHEMA_VERSION,
            config: &ctx.cfg,
            dataset: dataset_manifest(&ctx.domains),
        };
        write_json(&ctx.out.join("manifest.json"), &manifest)?;
        Ok(ctx)
    }

    fn splits(&self) -> Vec<LodoSplit<'_>> {
        lodo_splits(&self.domains)
    }

    fn image_shape(&self) -> Shape3 {
        self.domains[0].image_shape()
    }

    fn num_classes(&self) -> usize {
        self.domains[0].num_classes()
    }

    fn adapt_dir(&self, target: &str) -> PathBuf {
        self.out.join("adapt").join(format!("target_{target}"))
    }

    fn gen_dir(&self, target: &str) -> PathBuf {
        self.out.join("generalize").join(format!("target_{target}"))
    }

    fn adapt_config(&self) -> AdaptConfig {
        AdaptConfig {
            border_width: self.cfg.border_width,
            budget: self.cfg.budgets.adapt,
            lr: self.cfg.lrs.adapt,
            momentum: self.cfg.momentum,
            batch_size: self.cfg.batch_size,
            loss: self.cfg.loss,
        }
    }

    fn gen_config(&self) -> GenConfig {
        GenConfig {
            budget: self.cfg.budgets.generalize,
            lr: self.cfg.lrs.generalize,
            weight_decay: self.cfg.weight_decay,
            batch_size: self.cfg.batch_size,
            schedule: self.cfg.schedule,
            tune_experts: self.cfg.tune_experts,
            train_embedder: self.cfg.embedder.trainable,
            loss: self.cfg.loss,
        }
    }
}

pub fn build_domains(cfg: &ExperimentConfig) -> Result<Vec<DomainDataset>> {
    match &cfg.dataset {
        DatasetSpec::Folder { path } => {
            if !path.exists() {
                return Err(Error::config(
                    "dataset.path",
                    format!("dataset path does not exist: {}", path.display()),
                ));
            }
            load_folder_dataset(path, cfg.train_ratio)
        }
        DatasetSpec::Synthetic {
            classes,
            per_class,
            image_size,
            style_strength,
        } => {
            let base = shapes_base_set(
                *classes,
                *per_class,
                *image_size,
                derive_seed(cfg.seed, "shapes", 0),
            )?;
            make_synthetic_domains(
                &base,
                &style_strength.styles(),
                *classes,
                cfg.train_ratio,
                derive_seed(cfg.seed, "styles", 0),
            )
        }
    }
}

pub fn build_feature_net(id: &str, input_shape: Shape3, feat_dim: usize, seed: u64) -> Result<Net> {
    match id {
        "cnn_small" => Ok(Net::small_cnn(input_shape, feat_dim, seed)),
        "mlp_tiny" => Ok(Net::tiny_mlp(input_shape, 64, feat_dim, seed)),
        other => Err(Error::config(
            "backbone.id",
            format!("unknown backbone '{other}'"),
        )),
    }
}

/// Builds and pretext-trains the objective network on the split's pooled
/// sources; the returned network carries the config's tuning mode.
pub fn pretext_objective(
    ctx: &RunContext,
    sources: &[&DomainDataset],
    target_seed: u64,
) -> Result<ObjectiveNetwork> {
    let features = build_feature_net(
        &ctx.cfg.backbone.id,
        ctx.image_shape(),
        ctx.cfg.backbone.feat_dim,
        derive_seed(target_seed, "backbone", 0),
    )?;
    let mut net = ObjectiveNetwork::new(
        features,
        ctx.num_classes(),
        ctx.cfg.tuning_mode,
        derive_seed(target_seed, "classifier", 0),
    );
    train_objective_supervised(
        &mut net,
        sources,
        ctx.cfg.budgets.pretext,
        ctx.cfg.lrs.pretext,
        0.0,
        ctx.cfg.batch_size,
        &ctx.cfg.loss,
        true,
        derive_seed(target_seed, "pretext", 0),
    )?;
    Ok(net)
}

/// Builds the mixer heads: the shared embedder clones the pretext-trained
/// feature net or starts fresh, per config.
pub fn build_heads(
    ctx: &RunContext,
    objective: &ObjectiveNetwork,
    target_seed: u64,
) -> Result<MixerHeads> {
    let shared = match ctx.cfg.embedder.init.as_str() {
        "pretext" => objective.features.clone(),
        "random" => build_feature_net(
            &ctx.cfg.backbone.id,
            ctx.image_shape(),
            ctx.cfg.backbone.feat_dim,
            derive_seed(target_seed, "embedder", 0),
        )?,
        other => {
            return Err(Error::config(
                "embedder.init",
                format!("unknown embedder init '{other}'"),
            ))
        }
    };
    Ok(MixerHeads::with_embed_dim(
        shared,
        ctx.cfg.embedder.embed_dim,
        derive_seed(target_seed, "heads", 0),
    ))
}

/// Resolves the expert init strategy; `meta` without a stored path trains
/// the pooled-source meta prompt and saves it under the target directory.
fn resolve_init(
    ctx: &RunContext,
    net: &ObjectiveNetwork,
    sources: &[&DomainDataset],
    target_seed: u64,
    dir: &Path,
) -> Result<(InitStrategy, Option<String>)> {
    let ic = &ctx.cfg.init;
    resolve_init_kind(ctx, ic, net, sources, target_seed, dir)
}

fn resolve_init_kind(
    ctx: &RunContext,
    ic: &InitConfig,
    net: &ObjectiveNetwork,
    sources: &[&DomainDataset],
    target_seed: u64,
    dir: &Path,
) -> Result<(InitStrategy, Option<String>)> {
    match ic.kind.as_str() {
        "zero" => Ok((InitStrategy::Zero, None)),
        "uniform" => Ok((InitStrategy::Uniform { scale: ic.scale }, None)),
        "normal" => Ok((InitStrategy::Normal { scale: ic.scale }, None)),
        "meta" => {
            if let Some(path) = &ic.meta_path {
                let (prompt, _) = load_prompt(path)?;
                return Ok((
                    InitStrategy::Meta {
                        source: Box::new(prompt),
                    },
                    Some(path.display().to_string()),
                ));
            }
            let mut meta_cfg = ctx.adapt_config();
            meta_cfg.budget = ctx.cfg.budgets.meta;
            let (meta, stats) = pretrain_meta_prompt(
                net,
                sources,
                &meta_cfg,
                derive_seed(target_seed, "meta", 0),
            )?;
            let path = dir.join("meta_prompt.a2xp");
            save_prompt(
                &path,
                &meta,
                &PromptMeta {
                    border_width: meta.border_width(),
                    shape: meta.shape(),
                    init_strategy: InitSpec {
                        kind: "zero".into(),
                        scale: None,
                    },
                    domain_name: "pooled".into(),
                    seed: derive_seed(target_seed, "meta", 0),
                    update_count: stats.steps,
                },
            )?;
            Ok((
                InitStrategy::Meta {
                    source: Box::new(meta),
                },
                Some("meta_prompt.a2xp".into()),
            ))
        }
        other => Err(Error::config(
            "init.kind",
            format!("unknown strategy '{other}'"),
        )),
    }
}

#[derive(Debug, Serialize, Deserialize)]
pub struct AdaptEntry {
    pub domain: String,
    pub seed: u64,
    pub budget: usize,
    pub final_loss: f64,
    pub prompt_path: String,
    pub sha256: String,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct AdaptManifest {
    pub target: String,
    pub objective_path: String,
    pub objective_sha256: String,
    pub meta_prompt_path: Option<String>,
    pub entries: Vec<AdaptEntry>,
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::Format {
        path: path.to_path_buf(),
        detail: e.to_string(),
    })?;
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Format {
        path: path.to_path_buf(),
        detail: e.to_string(),
    })
}

/// Phase 1 over every LODO split: pretext-train the objective, optionally
/// build the meta prompt, adapt one expert per source domain, and write
/// checkpoints plus a manifest per split.
pub fn cmd_adapt(ctx: &RunContext) -> Result<()> {
    for (t, split) in ctx.splits().iter().enumerate() {
        let target = split.target.name().to_string();
        let dir = ctx.adapt_dir(&target);
        std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        let target_seed = derive_seed(ctx.cfg.seed, "target", t as u64);
        let net = pretext_objective(ctx, &split.sources, target_seed)?;
        let obj_path = dir.join("objective.a2xp");
        save_objective(&obj_path, &net)?;
        let (init, meta_path) = resolve_init(ctx, &net, &split.sources, target_seed, &dir)?;
        let seeds: Vec<u64> = (0..split.sources.len())
            .map(|d| derive_seed(target_seed, "adapt", d as u64))
            .collect();
        let adapted = adapt_all_experts(
            &net,
            &split.sources,
            &init,
            &ctx.adapt_config(),
            &seeds,
            ctx.jobs,
        )?;
        let mut entries = Vec::new();
        for ((domain, (prompt, stats)), seed) in
            split.sources.iter().zip(&adapted).zip(&seeds)
        {
            let file = format!("expert_{}.a2xp", domain.name());
            let path = dir.join(&file);
            save_prompt(
                &path,
                prompt,
                &PromptMeta {
                    border_width: prompt.border_width(),
                    shape: prompt.shape(),
                    init_strategy: InitSpec {
                        kind: ctx.cfg.init.kind.clone(),
                        scale: Some(ctx.cfg.init.scale),
                    },
                    domain_name: domain.name().to_string(),
                    seed: *seed,
                    update_count: stats.steps,
                },
            )?;
            entries.push(AdaptEntry {
                domain: domain.name().to_string(),
                seed: *seed,
                budget: stats.steps,
                final_loss: stats.final_loss,
                prompt_path: file,
                sha256: sha256_file(&path)?,
            });
        }
        let manifest = AdaptManifest {
            target: target.clone(),
            objective_path: "objective.a2xp".into(),
            objective_sha256: sha256_file(&obj_path)?,
            meta_prompt_path: meta_path,
            entries,
        };
        write_json(&dir.join("manifest.json"), &manifest)?;
    }
    Ok(())
}

#[derive(Debug, Serialize, Deserialize)]
pub struct GenManifest {
    pub target: String,
    pub heads_path: String,
    pub heads_sha256: String,
    pub curve_path: String,
    pub tune_experts: bool,
    pub mixer: MixerConfig,
    pub budget: usize,
    pub final_loss: Option<f64>,
    /// (domain, file) pairs of the bank as used at inference; stored in
    /// final form, loaded without re-normalization.
    pub bank_paths: Vec<(String, String)>,
}

/// Loads the raw experts recorded in an adapt manifest.
fn load_adapt_artifacts(
    dir: &Path,
) -> Result<(AdaptManifest, ObjectiveNetwork, Vec<PaddingPrompt>, Vec<String>)> {
    let manifest: AdaptManifest = read_json(&dir.join("manifest.json"))?;
    let objective = load_objective(&dir.join(&manifest.objective_path))?;
    let mut experts = Vec::new();
    let mut names = Vec::new();
    for e in &manifest.entries {
        let (p, _) = load_prompt(&dir.join(&e.prompt_path))?;
        experts.push(p);
        names.push(e.domain.clone());
    }
    Ok((manifest, objective, experts, names))
}

/// Phase 2 over every LODO split: build the bank and heads from phase-1
/// artifacts, train, and write heads/bank checkpoints, the training curve,
/// and a manifest.
pub fn cmd_generalize(ctx: &RunContext) -> Result<()> {
    for (t, split) in ctx.splits().iter().enumerate() {
        let target = split.target.name().to_string();
        let adapt_dir = ctx.adapt_dir(&target);
        let (_, mut objective, experts, names) = load_adapt_artifacts(&adapt_dir)?;
        let target_seed = derive_seed(ctx.cfg.seed, "target", t as u64);
        let mut bank = ExpertBank::new(experts, names, ctx.cfg.mixer.use_expert_norm)?;
        let mut heads = build_heads(ctx, &objective, target_seed)?;
        let stats = train_generalization(
            &mut objective,
            &mut bank,
            &mut heads,
            &ctx.cfg.mixer,
            &split.sources,
            &ctx.gen_config(),
            derive_seed(target_seed, "generalize", 0),
        )?;
        let dir = ctx.gen_dir(&target);
        std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        let heads_path = dir.join("heads.a2xp");
        save_heads(&heads_path, &heads)?;
        // The objective may have been tuned (linear probe / full tune);
        // persist the network actually used at inference.
        save_objective(&dir.join("objective.a2xp"), &objective)?;
        let mut bank_paths = Vec::new();
        for (domain, expert) in bank.domain_names().iter().zip(bank.experts()) {
            let file = format!("bank_{domain}.a2xp");
            save_prompt(
                &dir.join(&file),
                expert,
                &PromptMeta {
                    border_width: expert.border_width(),
                    shape: expert.shape(),
                    init_strategy: InitSpec {
                        kind: ctx.cfg.init.kind.clone(),
                        scale: Some(ctx.cfg.init.scale),
                    },
                    domain_name: domain.clone(),
                    seed: target_seed,
                    update_count: ctx.cfg.budgets.generalize,
                },
            )?;
            bank_paths.push((domain.clone(), file));
        }
        let curve = csvfmt::curve_csv(&stats);
        let curve_path = dir.join("curve.csv");
        std::fs::write(&curve_path, curve).map_err(|e| Error::io(&curve_path, e))?;
        let manifest = GenManifest {
            target,
            heads_path: "heads.a2xp".into(),
            heads_sha256: sha256_file(&heads_path)?,
            curve_path: "curve.csv".into(),
            tune_experts: ctx.cfg.tune_experts,
            mixer: ctx.cfg.mixer,
            budget: ctx.cfg.budgets.generalize,
            final_loss: stats.losses.last().copied(),
            bank_paths,
        };
        write_json(&dir.join("manifest.json"), &manifest)?;
    }
    Ok(())
}

/// Owned per-target artifacts reloaded from disk.
pub struct LoadedArtifacts {
    pub target_index: usize,
    pub target: String,
    pub objective: ObjectiveNetwork,
    pub bank: ExpertBank,
    pub heads: MixerHeads,
    pub mixer: MixerConfig,
}

pub fn load_target_artifacts(ctx: &RunContext, t: usize, target: &str) -> Result<LoadedArtifacts> {
    let dir = ctx.gen_dir(target);
    let manifest: GenManifest = read_json(&dir.join("manifest.json"))?;
    let objective = load_objective(&dir.join("objective.a2xp"))?;
    let heads = load_heads(&dir.join(&manifest.heads_path))?;
    let mut experts = Vec::new();
    let mut names = Vec::new();
    for (domain, file) in &manifest.bank_paths {
        let (p, _) = load_prompt(&dir.join(file))?;
        experts.push(p);
        names.push(domain.clone());
    }
    // Stored in final (possibly normalized, possibly tuned) form.
    let mut bank = ExpertBank::new(experts, names, false)?;
    embed_experts(&heads, &mut bank)?;
    Ok(LoadedArtifacts {
        target_index: t,
        target: target.to_string(),
        objective,
        bank,
        heads,
        mixer: manifest.mixer,
    })
}

fn load_all_artifacts(ctx: &RunContext) -> Result<Vec<LoadedArtifacts>> {
    ctx.domains
        .iter()
        .enumerate()
        .map(|(t, d)| load_target_artifacts(ctx, t, d.name()))
        .collect()
}

/// Evaluates every LODO model on its held-out target (accuracy table) and
/// on all other domains (source matrix).
pub fn cmd_evaluate(ctx: &RunContext) -> Result<()> {
    let artifacts = load_all_artifacts(ctx)?;
    let dir = ctx.out.join("evaluate");
    std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    let mut rows = Vec::new();
    for art in &artifacts {
        let outcome = evaluate_accuracy(
            &art.objective,
            &art.bank,
            &art.heads,
            &art.mixer,
            &ctx.domains[art.target_index],
        )?;
        rows.push((art.target.clone(), outcome.accuracy));
    }
    let path = dir.join("target_accuracy.csv");
    std::fs::write(&path, csvfmt::target_accuracy_csv(&rows)).map_err(|e| Error::io(&path, e))?;

    let borrowed: Vec<TargetArtifacts> = artifacts
        .iter()
        .map(|a| TargetArtifacts {
            target_index: a.target_index,
            net: &a.objective,
            bank: &a.bank,
            heads: &a.heads,
            cfg: a.mixer,
        })
        .collect();
    let matrix = source_eval_matrix(&borrowed, &ctx.domains)?;
    let path = dir.join("source_matrix.csv");
    std::fs::write(&path, csvfmt::source_matrix_csv(&matrix)).map_err(|e| Error::io(&path, e))?;
    Ok(())
}

/// Attention distributions, RM-ANOVA grid, memory accounting, and feature
/// export, all from the trained artifacts.
pub fn cmd_analyze(ctx: &RunContext) -> Result<()> {
    let artifacts = load_all_artifacts(ctx)?;
    let dir = ctx.out.join("analyze");
    std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;

    // Evaluate each model on every domain to fill the full grid.
    let mut records_by_target = Vec::new();
    let mut feature_rows = Vec::new();
    for art in &artifacts {
        let mut records = Vec::new();
        for domain in &ctx.domains {
            let outcome =
                evaluate_accuracy(&art.objective, &art.bank, &art.heads, &art.mixer, domain)?;
            records.extend(outcome.records);
            feature_rows.push((
                art.target.clone(),
                export_features(
                    &art.objective,
                    domain,
                    Some((&art.bank, &art.heads, &art.mixer)),
                )?,
            ));
        }
        records_by_target.push((art.target.clone(), records));
    }

    let report = attention_report(&records_by_target)?;
    write_file(&dir.join("attention_report.csv"), &csvfmt::attention_report_csv(&report))?;
    write_file(
        &dir.join("attention_records.csv"),
        &csvfmt::attention_records_csv(&records_by_target),
    )?;

    // Square p-value grid in domain order.
    let names: Vec<String> = ctx.domains.iter().map(|d| d.name().to_string()).collect();
    let mut grid = vec![vec![None; names.len()]; names.len()];
    for cell in &report.cells {
        let i = names.iter().position(|n| n == &cell.target_domain);
        let j = names.iter().position(|n| n == &cell.eval_domain);
        if let (Some(i), Some(j)) = (i, j) {
            grid[i][j] = cell.p_value;
        }
    }
    write_file(&dir.join("pvalue_grid.csv"), &csvfmt::pvalue_grid_csv(&names, &grid))?;

    let first = &artifacts[0];
    let prompt_params = first.bank.experts()[0].trainable_count() as u64;
    let report = memory_report(
        first.objective.num_params() as u64,
        prompt_params,
        first.heads.num_params() as u64,
        first.bank.len() as u64,
        first.bank.len() as u64,
    );
    write_file(&dir.join("memory_report.csv"), &csvfmt::memory_report_csv(&report))?;
    write_file(&dir.join("features.csv"), &csvfmt::features_csv(&feature_rows))?;
    Ok(())
}

fn write_file(path: &Path, content: &str) -> Result<()> {
    std::fs::write(path, content).map_err(|e| Error::io(path, e))
}

/// Runs the configured ablation grids (mixer flags, init strategies,
/// tuning modes) and writes one combined CSV.
pub fn cmd_ablate(ctx: &RunContext) -> Result<()> {
    let dir = ctx.out.join("ablate");
    std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    let names: Vec<String> = ctx.domains.iter().map(|d| d.name().to_string()).collect();
    let mut rows: Vec<(String, String, Vec<f64>)> = Vec::new();
    for grid in &ctx.cfg.ablate.grids {
        match grid.as_str() {
            "mixer_flags" => ablate_mixer_flags(ctx, &mut rows)?,
            "init" => ablate_init(ctx, &mut rows)?,
            "tuning" => ablate_tuning(ctx, &mut rows)?,
            other => {
                return Err(Error::config(
                    "ablate.grids",
                    format!("unknown grid '{other}'"),
                ))
            }
        }
    }
    write_file(&dir.join("results.csv"), &csvfmt::ablation_csv(&names, &rows))
}

/// One full A2XP run for one split with the given pieces; returns target
/// accuracy.
fn run_split_once(
    ctx: &RunContext,
    split: &LodoSplit<'_>,
    objective: &ObjectiveNetwork,
    raw_experts: &[PaddingPrompt],
    mixer: &MixerConfig,
    tuning_mode: TuningMode,
    tune_experts: bool,
    target_seed: u64,
    variant_tag: u64,
) -> Result<f64> {
    let mut objective = objective.clone();
    objective.tuning_mode = tuning_mode;
    let names: Vec<String> = split.sources.iter().map(|d| d.name().to_string()).collect();
    let mut bank = ExpertBank::new(raw_experts.to_vec(), names, mixer.use_expert_norm)?;
    let mut heads = build_heads(ctx, &objective, derive_seed(target_seed, "variant_heads", variant_tag))?;
    let mut gen_cfg = ctx.gen_config();
    gen_cfg.tune_experts = tune_experts;
    train_generalization(
        &mut objective,
        &mut bank,
        &mut heads,
        mixer,
        &split.sources,
        &gen_cfg,
        derive_seed(target_seed, "variant_gen", variant_tag),
    )?;
    let outcome = evaluate_accuracy(&objective, &bank, &heads, mixer, split.target)?;
    Ok(outcome.accuracy)
}

fn ablate_mixer_flags(
    ctx: &RunContext,
    rows: &mut Vec<(String, String, Vec<f64>)>,
) -> Result<()> {
    let combos = MixerConfig::all_combinations();
    let splits = ctx.splits();
    // Experts do not depend on mixer flags; adapt once per split.
    let mut per_split: Vec<(ObjectiveNetwork, Vec<PaddingPrompt>)> = Vec::new();
    for (t, split) in splits.iter().enumerate() {
        let target_seed = derive_seed(ctx.cfg.seed, "target", t as u64);
        let net = pretext_objective(ctx, &split.sources, target_seed)?;
        let dir = ctx.out.join("ablate");
        let (init, _) = resolve_init(ctx, &net, &split.sources, target_seed, &dir)?;
        let seeds: Vec<u64> = (0..split.sources.len())
            .map(|d| derive_seed(target_seed, "adapt", d as u64))
            .collect();
        let adapted = adapt_all_experts(
            &net,
            &split.sources,
            &init,
            &ctx.adapt_config(),
            &seeds,
            ctx.jobs,
        )?;
        per_split.push((net, adapted.into_iter().map(|(p, _)| p).collect()));
    }
    for (ci, combo) in combos.iter().enumerate() {
        let mut accs = Vec::new();
        for (t, split) in splits.iter().enumerate() {
            let target_seed = derive_seed(ctx.cfg.seed, "target", t as u64);
            let (net, experts) = &per_split[t];
            accs.push(run_split_once(
                ctx,
                split,
                net,
                experts,
                combo,
                ctx.cfg.tuning_mode,
                ctx.cfg.tune_experts,
                target_seed,
                100 + ci as u64,
            )?);
        }
        rows.push(("mixer_flags".into(), combo.label(), accs));
    }
    Ok(())
}

fn ablate_init(ctx: &RunContext, rows: &mut Vec<(String, String, Vec<f64>)>) -> Result<()> {
    let kinds = ["zero", "uniform", "normal", "meta"];
    let splits = ctx.splits();
    for (ki, kind) in kinds.iter().enumerate() {
        let mut accs = Vec::new();
        for (t, split) in splits.iter().enumerate() {
            let target_seed = derive_seed(ctx.cfg.seed, "target", t as u64);
            let net = pretext_objective(ctx, &split.sources, target_seed)?;
            let ic = InitConfig {
                kind: kind.to_string(),
                scale: ctx.cfg.init.scale,
                meta_path: None,
            };
            let dir = ctx.out.join("ablate");
            let (init, _) =
                resolve_init_kind(ctx, &ic, &net, &split.sources, target_seed, &dir)?;
            let seeds: Vec<u64> = (0..split.sources.len())
                .map(|d| derive_seed(target_seed, "adapt", d as u64))
                .collect();
            let adapted = adapt_all_experts(
                &net,
                &split.sources,
                &init,
                &ctx.adapt_config(),
                &seeds,
                ctx.jobs,
            )?;
            let experts: Vec<PaddingPrompt> = adapted.into_iter().map(|(p, _)| p).collect();
            accs.push(run_split_once(
                ctx,
                split,
                &net,
                &experts,
                &ctx.cfg.mixer,
                ctx.cfg.tuning_mode,
                ctx.cfg.tune_experts,
                target_seed,
                200 + ki as u64,
            )?);
        }
        rows.push(("init".into(), kind.to_string(), accs));
    }
    Ok(())
}

fn ablate_tuning(ctx: &RunContext, rows: &mut Vec<(String, String, Vec<f64>)>) -> Result<()> {
    let splits = ctx.splits();
    // Pretext nets and experts shared across the four variants.
    let mut per_split: Vec<(ObjectiveNetwork, Vec<PaddingPrompt>)> = Vec::new();
    for (t, split) in splits.iter().enumerate() {
        let target_seed = derive_seed(ctx.cfg.seed, "target", t as u64);
        let net = pretext_objective(ctx, &split.sources, target_seed)?;
        let dir = ctx.out.join("ablate");
        let (init, _) = resolve_init(ctx, &net, &split.sources, target_seed, &dir)?;
        let seeds: Vec<u64> = (0..split.sources.len())
            .map(|d| derive_seed(target_seed, "adapt", d as u64))
            .collect();
        let adapted = adapt_all_experts(
            &net,
            &split.sources,
            &init,
            &ctx.adapt_config(),
            &seeds,
            ctx.jobs,
        )?;
        per_split.push((net, adapted.into_iter().map(|(p, _)| p).collect()));
    }
    let variants: [(&str, TuningMode, bool); 4] = [
        ("FT", TuningMode::FullTune, false),
        ("LP", TuningMode::LinearProbe, false),
        ("A2XP+FT", TuningMode::FullTune, true),
        ("A2XP+LP", TuningMode::LinearProbe, true),
    ];
    for (vi, (label, mode, with_a2xp)) in variants.iter().enumerate() {
        let mut accs = Vec::new();
        for (t, split) in splits.iter().enumerate() {
            let target_seed = derive_seed(ctx.cfg.seed, "target", t as u64);
            let (net, experts) = &per_split[t];
            if *with_a2xp {
                accs.push(run_split_once(
                    ctx,
                    split,
                    net,
                    experts,
                    &ctx.cfg.mixer,
                    *mode,
                    ctx.cfg.tune_experts,
                    target_seed,
                    300 + vi as u64,
                )?);
            } else {
                // Plain supervised tuning, no prompts, same budget.
                let mut tuned = net.clone();
                tuned.tuning_mode = *mode;
                train_objective_supervised(
                    &mut tuned,
                    &split.sources,
                    ctx.cfg.budgets.generalize,
                    ctx.cfg.lrs.generalize,
                    ctx.cfg.weight_decay,
                    ctx.cfg.batch_size,
                    &ctx.cfg.loss,
                    false,
                    derive_seed(target_seed, "tuning_baseline", vi as u64),
                )?;
                accs.push(evaluate_baseline(&tuned, split.target)?);
            }
        }
        rows.push(("tuning".into(), label.to_string(), accs));
    }
    Ok(())
}
