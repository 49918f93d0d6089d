//! The cosine-annealing-with-warm-restarts schedule used in the
//! generalization phase, printed as a coarse sparkline.
//!
//! ```
//! cargo run --example lr_schedule
//! ```

use a2xp::generalize::{make_lr_schedule, ScheduleConfig};

fn main() -> a2xp::Result<()> {
    let base = 1e-4;
    let total = 1000;
    let schedule = make_lr_schedule(base, total, &ScheduleConfig::default())?;
    println!("{} steps, base lr {base:e}", schedule.len());
    println!("start {:.3e}, end {:.3e}", schedule[0], schedule[total - 1]);

    let bins = 60;
    let levels = [' ', '.', ':', '-', '=', '+', '*', '#'];
    let mut line = String::new();
    for b in 0..bins {
        let i = b * total / bins;
        let frac = schedule[i] / base;
        let li = ((frac * (levels.len() - 1) as f64).round() as usize).min(levels.len() - 1);
        line.push(levels[li]);
    }
    println!("[{line}]");

    for cycles in [1, 2, 5] {
        let cfg = ScheduleConfig {
            cycles,
            ..Default::default()
        };
        let s = make_lr_schedule(base, total, &cfg)?;
        let peaks: Vec<String> = (0..cycles)
            .map(|c| format!("{:.2e}", s[c * (total / cycles)]))
            .collect();
        println!("cycles={cycles}: peaks {peaks:?}, final {:.2e}", s[total - 1]);
    }
    Ok(())
}
