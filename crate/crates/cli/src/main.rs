use clap::{Parser, Subcommand};
use std::path::PathBuf;
use ustar_cli::commands;
use ustar_cli::{CliError, RunConfig};

/// Anchor-based probe-navigation experiments on synthetic scan corpora.
#[derive(Parser)]
#[command(name = "ustar", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// TOML config file; flags override file values, file values override
    /// defaults.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,

    /// Generic override for any config key, repeatable: --set train.epochs=2
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,

    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Corpus directory (containing manifest.json).
    #[arg(long, global = true, value_name = "DIR")]
    corpus: Option<PathBuf>,

    /// Output directory.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,

    /// Model head: star | chain | fc | single.
    #[arg(long, global = true)]
    model: Option<String>,

    /// Keyframe sampler: segmental | semantic.
    #[arg(long, global = true)]
    sampler: Option<String>,

    /// Input graph size L (L-1 anchors per sample).
    #[arg(long = "L", short = 'L', global = true, value_name = "N")]
    graph_size: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the synthetic scan corpus and its manifest.
    Simulate,
    /// Train the configured head; writes checkpoint.ustar, loss_log.csv,
    /// split.json under --out.
    Train,
    /// Evaluate a checkpoint; writes metrics.csv and metrics.json.
    Eval {
        /// Checkpoint path (default: <out>/checkpoint.ustar).
        #[arg(long, value_name = "PATH")]
        checkpoint: Option<PathBuf>,
    },
    /// Train + eval per graph size; writes curve.csv and curve.svg.
    ScaleCurve {
        /// Comma-separated L values (default from config scale.l_values).
        #[arg(long, value_name = "LIST")]
        l_values: Option<String>,
    },
    /// Full model x sampler x seed grid; writes ablate.csv and
    /// ablate_runs.csv.
    Ablate,
}

fn build_config(cli: &Cli) -> Result<RunConfig, CliError> {
    let mut cfg = RunConfig::default();
    if let Some(path) = &cli.config {
        cfg.apply_file(path)?;
    }
    for kv in &cli.set {
        let (key, value) = kv
            .split_once('=')
            .ok_or_else(|| CliError::validation(format!("--set expects KEY=VALUE, got {kv:?}")))?;
        cfg.set(key.trim(), value)?;
    }
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(corpus) = &cli.corpus {
        cfg.corpus = corpus.clone();
    }
    if let Some(out) = &cli.out {
        cfg.out = out.clone();
    }
    if let Some(model) = &cli.model {
        cfg.model_kind = model.clone();
    }
    if let Some(sampler) = &cli.sampler {
        cfg.sampler_strategy = sampler.clone();
    }
    if let Some(l) = cli.graph_size {
        cfg.graph_size = l;
    }
    Ok(cfg)
}

fn run(cli: Cli) -> Result<(), CliError> {
    let mut cfg = build_config(&cli)?;
    match &cli.command {
        Command::Simulate => {
            let out = commands::cmd_simulate(&cfg)?;
            println!(
                "wrote {} scans and {}",
                out.scan_count,
                out.manifest_path.display()
            );
        }
        Command::Train => {
            let out = commands::cmd_train(&cfg)?;
            println!(
                "trained {} steps on {} samples; epoch losses {:?}",
                out.steps, out.sample_count, out.epoch_losses
            );
            println!("checkpoint: {}", out.checkpoint_path.display());
        }
        Command::Eval { checkpoint } => {
            if let Some(ckpt) = checkpoint {
                cfg.checkpoint = Some(ckpt.clone());
            }
            let report = commands::cmd_eval(&cfg)?;
            println!(
                "overall MAE: {:.3} mm / {:.3} deg over {} samples ({} split)",
                report.overall.trans_mm, report.overall.rot_deg, report.samples, cfg.eval_split
            );
            println!("report: {}", cfg.out.join("metrics.json").display());
        }
        Command::ScaleCurve { l_values } => {
            let ls: Vec<usize> = match l_values {
                Some(list) => list
                    .split(',')
                    .filter(|s| !s.trim().is_empty())
                    .map(|s| {
                        s.trim()
                            .parse()
                            .map_err(|_| CliError::validation(format!("bad L value {s:?}")))
                    })
                    .collect::<Result<_, _>>()?,
                None => cfg.scale_l_values.clone(),
            };
            let rows = commands::cmd_scale_curve(&cfg, &ls)?;
            for row in &rows {
                println!(
                    "L={:<3} trans {:.3} mm  rot {:.3} deg",
                    row.graph_size, row.trans_mm, row.rot_deg
                );
            }
            println!("curve: {}", cfg.out.join("curve.csv").display());
        }
        Command::Ablate => {
            let cells = commands::cmd_ablate(&cfg)?;
            for c in &cells {
                println!(
                    "{:<7} {:<10} trans {:.3} +- {:.3} mm  rot {:.3} +- {:.3} deg",
                    c.model, c.sampler, c.trans_mean, c.trans_spread, c.rot_mean, c.rot_spread
                );
            }
            println!("grid: {}", cfg.out.join("ablate.csv").display());
        }
    }
    Ok(())
}

fn main() {
    let cli = Cli::parse();
    if let Err(err) = run(cli) {
        eprintln!("{}", err.to_json());
        std::process::exit(err.exit_code());
    }
}
