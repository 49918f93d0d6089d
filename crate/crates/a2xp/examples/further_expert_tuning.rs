//! Further expert tuning during the generalization phase: the same run
//! with experts frozen vs experts receiving gradients, comparing target
//! accuracy and how far the experts drifted.
//!
//! ```
//! cargo run --release --example further_expert_tuning
//! ```

use a2xp::adapt::{build_expert_bank, AdaptConfig};
use a2xp::data::{lodo_splits, make_synthetic_domains, shapes_base_set, standard_styles};
use a2xp::eval::evaluate_accuracy;
use a2xp::generalize::{train_generalization, train_objective_supervised, GenConfig};
use a2xp::mixer::{MixerConfig, MixerHeads};
use a2xp::nn::Net;
use a2xp::objective::{LossConfig, ObjectiveNetwork, TuningMode};
use a2xp::prompt::InitStrategy;
use a2xp::tensor::Shape3;

fn main() -> a2xp::Result<()> {
    let base = shapes_base_set(7, 20, 32, 0)?;
    let domains = make_synthetic_domains(&base, &standard_styles(), 7, 0.8, 1)?;
    let split = &lodo_splits(&domains)[1];
    let shape = Shape3::new(3, 32, 32);
    let mut net = ObjectiveNetwork::new(Net::small_cnn(shape, 64, 2), 7, TuningMode::Frozen, 3);
    train_objective_supervised(
        &mut net,
        &split.sources,
        250,
        1e-3,
        0.0,
        8,
        &LossConfig::default(),
        true,
        4,
    )?;
    let adapt_cfg = AdaptConfig {
        border_width: 4,
        budget: 300,
        lr: 1e-4,
        momentum: 0.9,
        batch_size: 8,
        loss: LossConfig::default(),
    };
    let (bank0, _) = build_expert_bank(
        &net,
        &split.sources,
        &InitStrategy::Zero,
        &adapt_cfg,
        &[7, 8, 9],
        1,
    )?;

    for tune_experts in [false, true] {
        let mut bank = bank0.clone();
        let before = bank.value_hash();
        let mut heads = MixerHeads::with_embed_dim(net.features.clone(), 256, 5);
        let cfg = GenConfig {
            budget: 300,
            lr: 1e-4,
            weight_decay: 0.01,
            batch_size: 8,
            schedule: Default::default(),
            tune_experts,
            train_embedder: false,
            loss: LossConfig::default(),
        };
        let mut netc = net.clone();
        train_generalization(
            &mut netc,
            &mut bank,
            &mut heads,
            &MixerConfig::default(),
            &split.sources,
            &cfg,
            6,
        )?;
        let acc = evaluate_accuracy(&netc, &bank, &heads, &MixerConfig::default(), split.target)?
            .accuracy;
        let drift: f64 = bank
            .experts()
            .iter()
            .zip(bank0.experts())
            .map(|(a, b)| a.values().max_abs_diff(b.values()))
            .fold(0.0, f64::max);
        println!(
            "tune_experts={tune_experts}: target accuracy {acc:.3}, bank changed: {}, max drift {drift:.2e}",
            bank.value_hash() != before
        );
    }
    Ok(())
}
