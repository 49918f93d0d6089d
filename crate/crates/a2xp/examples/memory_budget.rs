//! Parameter-budget accounting: expert prompts vs whole-network ensembles,
//! at full scale (224x224, border 30) and at this crate's desk scale.
//!
//! ```
//! cargo run --example memory_budget
//! ```

use a2xp::eval::memory_report;
use a2xp::mixer::MixerHeads;
use a2xp::nn::Net;
use a2xp::objective::{ObjectiveNetwork, TuningMode};
use a2xp::prompt::PaddingPrompt;
use a2xp::tensor::Shape3;

fn main() -> a2xp::Result<()> {
    // Full-scale prompt: 3x224x224 with a 30-pixel border.
    let prompt = PaddingPrompt::zeros(Shape3::new(3, 224, 224), 30)?;
    println!("224x224 border-30 prompt: {} trainable values", prompt.trainable_count());

    // Illustrative large-backbone numbers (ViT-base-class parameter count).
    let r = memory_report(86_000_000, prompt.trainable_count() as u64, 11_500_000, 3, 3);
    println!("{}  = {}", r.dart_form, r.dart_total);
    println!("{}  = {}", r.a2xp_total_form, r.a2xp_total);
    println!(
        "marginal: {} per expert vs {} per preset (ratio {:.1}x)",
        r.a2xp_marginal_per_unit, r.dart_marginal_per_unit, r.marginal_ratio
    );

    // Desk-scale: the actual networks this crate trains.
    let shape = Shape3::new(3, 32, 32);
    let net = ObjectiveNetwork::new(Net::small_cnn(shape, 64, 1), 7, TuningMode::Frozen, 2);
    let heads = MixerHeads::new(Net::small_cnn(shape, 64, 3), 4);
    let desk_prompt = PaddingPrompt::zeros(shape, 4)?;
    let r = memory_report(
        net.num_params() as u64,
        desk_prompt.trainable_count() as u64,
        heads.num_params() as u64,
        3,
        3,
    );
    println!(
        "desk scale: S_N={} S_p={} S_E={} -> a2xp {} vs ensemble {}",
        r.s_n, r.s_p, r.s_e, r.a2xp_total, r.dart_total
    );
    Ok(())
}
