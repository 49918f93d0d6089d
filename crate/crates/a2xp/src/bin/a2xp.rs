use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use a2xp::experiment::{
    cmd_ablate, cmd_adapt, cmd_analyze, cmd_evaluate, cmd_generalize, ExperimentConfig, RunContext,
};

#[derive(Parser)]
#[command(name = "a2xp", about = "Expert-prompt domain generalization experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Phase 1: adapt one expert prompt per source domain for every split.
    Adapt(CommonArgs),
    /// Phase 2: train the attention heads on top of adapted experts.
    Generalize(CommonArgs),
    /// Accuracy tables: per-target accuracy and the source-domain matrix.
    Evaluate(CommonArgs),
    /// Grids over mixer flags, init strategies, and tuning modes.
    Ablate(CommonArgs),
    /// Attention distributions, RM-ANOVA grid, memory report, features.
    Analyze(CommonArgs),
}

#[derive(clap::Args)]
struct CommonArgs {
    /// Experiment config (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Parallel workers for domain-level adaptation.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    /// Override the config's output directory.
    #[arg(long)]
    output: Option<PathBuf>,
}

fn run(args: &CommonArgs, f: impl Fn(&RunContext) -> a2xp::Result<()>) -> a2xp::Result<()> {
    let cfg = ExperimentConfig::load(&args.config)?;
    let ctx = RunContext::prepare(cfg, args.jobs, args.output.clone())?;
    f(&ctx)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Adapt(args) => run(args, cmd_adapt),
        Command::Generalize(args) => run(args, cmd_generalize),
        Command::Evaluate(args) => run(args, cmd_evaluate),
        Command::Ablate(args) => run(args, cmd_ablate),
        Command::Analyze(args) => run(args, cmd_analyze),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(err.exit_code() as u8)
        }
    }
}
