//! Attention-weight analysis: collect per-sample records from evaluation,
//! build the distribution report, and print the RM-ANOVA p-value grid.
//!
//! ```
//! cargo run --example attention_anova
//! ```

use a2xp::data::{make_synthetic_domains, shapes_base_set, standard_styles};
use a2xp::eval::{attention_report, evaluate_accuracy};
use a2xp::generalize::train_objective_supervised;
use a2xp::mixer::{MixerConfig, MixerHeads};
use a2xp::nn::Net;
use a2xp::objective::{LossConfig, ObjectiveNetwork, TuningMode};
use a2xp::prompt::{init_prompt, ExpertBank, InitStrategy};
use a2xp::stats::rm_anova;
use a2xp::tensor::Shape3;

fn main() -> a2xp::Result<()> {
    // rm_anova on its own: a planted condition effect is significant.
    let table: Vec<Vec<f64>> = (0..20)
        .map(|i| {
            let noise = |k: usize| ((i * 7 + k * 13) % 11) as f64 / 110.0;
            vec![0.8 + noise(0), 0.1 + noise(1), 0.1 + noise(2)]
        })
        .collect();
    let out = rm_anova(&table)?;
    println!(
        "planted effect: F({};{}) = {:.2}, p = {:.3e}",
        out.df_conditions, out.df_error, out.f_stat, out.p_value
    );

    // Records from a small real evaluation.
    let base = shapes_base_set(5, 12, 32, 0)?;
    let domains = make_synthetic_domains(&base, &standard_styles(), 5, 0.6, 1)?;
    let shape = Shape3::new(3, 32, 32);
    let mut net = ObjectiveNetwork::new(Net::small_cnn(shape, 48, 2), 5, TuningMode::Frozen, 3);
    let sources: Vec<_> = domains.iter().take(3).collect();
    train_objective_supervised(&mut net, &sources, 150, 1e-3, 0.0, 8, &LossConfig::default(), true, 4)?;
    let experts: Vec<_> = (0..3)
        .map(|i| init_prompt(shape, 4, &InitStrategy::Normal { scale: 0.3 }, 40 + i))
        .collect::<a2xp::Result<_>>()?;
    let bank = ExpertBank::new(
        experts,
        sources.iter().map(|d| d.name().to_string()).collect(),
        true,
    )?;
    let heads = MixerHeads::with_embed_dim(net.features.clone(), 64, 5);

    let cfg = MixerConfig::default();
    let mut records_by_target = Vec::new();
    let mut records = Vec::new();
    for domain in &domains {
        let outcome = evaluate_accuracy(&net, &bank, &heads, &cfg, domain)?;
        println!("evaluated {:<8}: accuracy {:.3}, {} records", domain.name(), outcome.accuracy, outcome.records.len());
        records.extend(outcome.records);
    }
    records_by_target.push(("sketch".to_string(), records));

    let report = attention_report(&records_by_target)?;
    println!("normalization: {}", report.normalization);
    for cell in &report.cells {
        let p = cell
            .p_value
            .map(|p| format!("{p:.3e}"))
            .unwrap_or_else(|| "n/a".into());
        println!(
            "  target {} / eval {:<8} n={:<3} p={} means={:?}",
            cell.target_domain,
            cell.eval_domain,
            cell.n_samples,
            p,
            cell.per_expert
                .iter()
                .map(|s| format!("{:+.3}", s.mean))
                .collect::<Vec<_>>()
        );
    }
    Ok(())
}
