//! One leave-one-domain-out run end to end at reduced budgets: pretext,
//! expert adaptation, attention-based generalization, and evaluation on
//! the held-out target against the no-prompt baseline.
//!
//! ```
//! cargo run --release --example lodo_run [target_index 0..3]
//! ```

use a2xp::adapt::{build_expert_bank, AdaptConfig};
use a2xp::data::{lodo_splits, make_synthetic_domains, shapes_base_set, standard_styles};
use a2xp::eval::{evaluate_accuracy, evaluate_baseline};
use a2xp::generalize::{train_generalization, train_objective_supervised, GenConfig};
use a2xp::mixer::{MixerConfig, MixerHeads};
use a2xp::nn::Net;
use a2xp::objective::{LossConfig, ObjectiveNetwork, TuningMode};
use a2xp::prompt::InitStrategy;
use a2xp::tensor::Shape3;

fn main() -> a2xp::Result<()> {
    let target_idx: usize = std::env::args()
        .nth(1)
        .and_then(|s| s.parse().ok())
        .unwrap_or(3)
        .min(3);
    let base = shapes_base_set(7, 25, 32, 0)?;
    let domains = make_synthetic_domains(&base, &standard_styles(), 7, 0.8, 1)?;
    let split = &lodo_splits(&domains)[target_idx];
    println!("target: {}, sources: {:?}", split.target.name(), split.source_names());

    let shape = Shape3::new(3, 32, 32);
    let mut net = ObjectiveNetwork::new(Net::small_cnn(shape, 64, 2), 7, TuningMode::Frozen, 3);
    train_objective_supervised(
        &mut net,
        &split.sources,
        300,
        1e-3,
        0.0,
        8,
        &LossConfig::default(),
        true,
        4,
    )?;
    let baseline = evaluate_baseline(&net, split.target)?;
    println!("no-prompt baseline on target: {baseline:.3}");

    let adapt_cfg = AdaptConfig {
        border_width: 4,
        budget: 400,
        lr: 1e-4,
        momentum: 0.9,
        batch_size: 8,
        loss: LossConfig::default(),
    };
    let (mut bank, _) = build_expert_bank(
        &net,
        &split.sources,
        &InitStrategy::Zero,
        &adapt_cfg,
        &[10, 11, 12],
        1,
    )?;
    println!("adapted and normalized {} experts", bank.len());

    let mut heads = MixerHeads::new(net.features.clone(), 5);
    let gen_cfg = GenConfig {
        budget: 400,
        lr: 1e-4,
        weight_decay: 0.01,
        batch_size: 8,
        schedule: Default::default(),
        tune_experts: false,
        train_embedder: false,
        loss: LossConfig::default(),
    };
    let mixer_cfg = MixerConfig::default();
    let stats = train_generalization(
        &mut net,
        &mut bank,
        &mut heads,
        &mixer_cfg,
        &split.sources,
        &gen_cfg,
        5,
    )?;
    println!(
        "generalization: {} steps, loss {:.4} -> {:.4}",
        stats.losses.len(),
        stats.losses.first().unwrap(),
        stats.losses.last().unwrap()
    );

    let outcome = evaluate_accuracy(&net, &bank, &heads, &mixer_cfg, split.target)?;
    println!(
        "a2xp accuracy on target: {:.3} (baseline {:.3}, delta {:+.3})",
        outcome.accuracy,
        baseline,
        outcome.accuracy - baseline
    );
    for domain in &split.sources {
        let acc = evaluate_accuracy(&net, &bank, &heads, &mixer_cfg, domain)?.accuracy;
        let b = evaluate_baseline(&net, domain)?;
        println!("  source {:<8} a2xp {:.3} vs baseline {:.3}", domain.name(), acc, b);
    }
    Ok(())
}
