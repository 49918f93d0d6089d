//! Phase 1 in miniature: pretext-train a small backbone on the source
//! domains, adapt one border prompt per source domain against the frozen
//! network, and compare prompted vs unprompted accuracy.
//!
//! ```
//! cargo run --example adapt_experts
//! ```

use a2xp::adapt::{adapt_all_experts, AdaptConfig};
use a2xp::data::{lodo_splits, make_synthetic_domains, shapes_base_set, standard_styles};
use a2xp::eval::{evaluate_baseline, evaluate_with_prompt};
use a2xp::generalize::train_objective_supervised;
use a2xp::nn::Net;
use a2xp::objective::{LossConfig, ObjectiveNetwork, TuningMode};
use a2xp::prompt::InitStrategy;
use a2xp::tensor::Shape3;

fn main() -> a2xp::Result<()> {
    let base = shapes_base_set(7, 20, 32, 0)?;
    let domains = make_synthetic_domains(&base, &standard_styles(), 7, 0.8, 1)?;
    let split = &lodo_splits(&domains)[3]; // sketch held out
    println!("sources: {:?}, target: {}", split.source_names(), split.target.name());

    let shape = Shape3::new(3, 32, 32);
    let mut net = ObjectiveNetwork::new(Net::small_cnn(shape, 64, 2), 7, TuningMode::Frozen, 3);
    train_objective_supervised(
        &mut net,
        &split.sources,
        200,
        1e-3,
        0.0,
        8,
        &LossConfig::default(),
        true,
        4,
    )?;
    let hash_before = net.param_hash();

    let cfg = AdaptConfig {
        border_width: 4,
        budget: 300,
        lr: 1e-4,
        momentum: 0.9,
        batch_size: 8,
        loss: LossConfig::default(),
    };
    let adapted = adapt_all_experts(&net, &split.sources, &InitStrategy::Zero, &cfg, &[10, 11, 12], 1)?;
    assert_eq!(net.param_hash(), hash_before, "objective must stay frozen");

    for (domain, (expert, stats)) in split.sources.iter().zip(&adapted) {
        let plain = evaluate_baseline(&net, domain)?;
        let prompted = evaluate_with_prompt(&net, expert, domain)?;
        println!(
            "{:<8} unprompted {:.3} -> prompted {:.3}  (final loss {:.4}, {} steps, |p| = {:.4})",
            domain.name(),
            plain,
            prompted,
            stats.final_loss,
            stats.steps,
            expert.l2_norm(),
        );
    }
    Ok(())
}
