//! Writes a ready-to-run experiment config for the `a2xp` CLI, at smoke
//! scale so the full command pipeline finishes in about a minute.
//!
//! ```
//! cargo run --example write_config
//! cargo run --release --bin a2xp -- adapt --config target/smoke_config.json
//! cargo run --release --bin a2xp -- generalize --config target/smoke_config.json
//! cargo run --release --bin a2xp -- evaluate --config target/smoke_config.json
//! ```

use a2xp::experiment::{DatasetSpec, ExperimentConfig, StyleStrength};

fn main() -> a2xp::Result<()> {
    let mut cfg = ExperimentConfig::synthetic_default(0, "target/smoke_run".into());
    cfg.dataset = DatasetSpec::Synthetic {
        classes: 7,
        per_class: 10,
        image_size: 32,
        style_strength: StyleStrength::Standard,
    };
    cfg.budgets.pretext = 150;
    cfg.budgets.adapt = 100;
    cfg.budgets.generalize = 100;
    cfg.budgets.meta = 50;
    cfg.batch_size = 8;
    let path = std::path::Path::new("target/smoke_config.json");
    cfg.save(path)?;
    println!("wrote {}", path.display());
    println!("next: cargo run --release --bin a2xp -- adapt --config {}", path.display());
    Ok(())
}
