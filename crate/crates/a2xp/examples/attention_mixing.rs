//! The attention mixer in isolation: embed images and experts, compute
//! per-image weights under the different flag combinations, and show the
//! effect of expert normalization and tanh.
//!
//! ```
//! cargo run --example attention_mixing
//! ```

use a2xp::mixer::{attention_weights, embed_experts, embed_image, forward, MixerConfig, MixerHeads};
use a2xp::nn::Net;
use a2xp::prompt::{init_prompt, ExpertBank, InitStrategy};
use a2xp::tensor::{Image, Shape3};

fn main() -> a2xp::Result<()> {
    let shape = Shape3::new(3, 32, 32);
    let heads = MixerHeads::new(Net::small_cnn(shape, 32, 5), 6);

    let experts: Vec<_> = (0..3)
        .map(|i| init_prompt(shape, 4, &InitStrategy::Normal { scale: 0.5 }, 20 + i))
        .collect::<a2xp::Result<_>>()?;
    let names = vec!["photo".to_string(), "art".to_string(), "cartoon".to_string()];
    let mut bank = ExpertBank::new(experts, names, true)?;
    embed_experts(&heads, &mut bank)?;
    println!(
        "bank: {} experts, keys cached ({}-dim)",
        bank.len(),
        bank.cache().unwrap().keys[0].len()
    );

    let image = Image::from_vec(
        shape,
        (0..shape.len()).map(|i| ((i % 29) as f64) / 29.0).collect(),
    )?;
    let q = embed_image(&heads, &image)?;
    let keys = bank.cache().unwrap().keys.clone();

    for cfg in [
        MixerConfig { use_expert_norm: true, use_tanh: true, use_softmax: false },
        MixerConfig { use_expert_norm: true, use_tanh: false, use_softmax: true },
        MixerConfig { use_expert_norm: true, use_tanh: true, use_softmax: true },
    ] {
        let (raws, weights) = attention_weights(&q, &keys, &cfg)?;
        println!(
            "{:<28} raw {:?} -> weights {:?}",
            cfg.label(),
            raws.iter().map(|r| format!("{r:+.3}")).collect::<Vec<_>>(),
            weights.iter().map(|w| format!("{w:+.4}")).collect::<Vec<_>>(),
        );
    }

    let (prompted, records) = forward(&heads, &bank, &MixerConfig::default(), &[image.clone()], "demo")?;
    let delta = prompted[0].max_abs_diff(&image);
    println!(
        "forward: mixed prompt changed the image by at most {delta:.4}; record weights {:?}",
        records[0]
            .weights
            .iter()
            .map(|w| format!("{w:+.4}"))
            .collect::<Vec<_>>()
    );
    Ok(())
}
