use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use social_processes::datasets::mock::MockConfig;
use social_processes::datasets::{ContextRegime, WindowingConfig};
use social_processes::evaluation::EvalConfig;
use social_processes_cli::{
    evaluate_run, exit_code, generate_synthetic, mock_haggling, plot, preprocess, train_run,
    EvaluateArgs, PlotKind,
};

#[derive(Parser)]
#[command(name = "sp", version, about = "Social process forecasting experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write the synthetic glancing dataset.
    GenerateSynthetic {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0.001)]
        phase_step: f64,
        /// Seed of the fixed evaluation context.
        #[arg(long, default_value_t = 0)]
        context_seed: u64,
        /// Number of context phases (default: an eighth of all phases).
        #[arg(long)]
        context_phases: Option<usize>,
    },
    /// Write scripted conversation groups in the raw interchange format.
    MockHaggling {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 3)]
        train_groups: usize,
        #[arg(long, default_value_t = 1)]
        test_groups: usize,
        #[arg(long, default_value_t = 3)]
        participants: usize,
        #[arg(long, default_value_t = 60.0)]
        seconds: f64,
        #[arg(long, default_value_t = 10.0)]
        sample_rate: f64,
    },
    /// Ingest raw groups and write windowed, standardized train/test data.
    Preprocess {
        #[arg(long)]
        raw: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 2.0)]
        obs_seconds: f64,
        #[arg(long, default_value_t = 2.0)]
        fut_seconds: f64,
        #[arg(long, default_value_t = 0.8)]
        overlap: f64,
        #[arg(long, default_value_t = 5.0)]
        max_offset_seconds: f64,
        #[arg(long, default_value_t = 10.0)]
        sample_rate: f64,
    },
    /// Train a model described by a run configuration file.
    Train {
        #[arg(long)]
        config: PathBuf,
        /// Run directory (default: $SP_RUN_ROOT/<variant>-<paths>-seed<seed>).
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Evaluate checkpoints; several checkpoints share context splits.
    Evaluate {
        #[arg(long = "checkpoint", required = true)]
        checkpoints: Vec<PathBuf>,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value = "random")]
        regime: String,
        #[arg(long, default_value_t = 128)]
        batch_size: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Latent draws for the NLL estimate.
        #[arg(long, default_value_t = 1)]
        z_samples: usize,
    },
    /// Export plot data (CSV) from an evaluation directory.
    Plot {
        #[arg(long)]
        metrics: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// timestep, phase or all.
        #[arg(long, default_value = "timestep")]
        kind: String,
    },
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::GenerateSynthetic {
            out,
            phase_step,
            context_seed,
            context_phases,
        } => {
            let p = generate_synthetic(&out, phase_step, context_seed, context_phases)?;
            println!("{}", p.display());
        }
        Command::MockHaggling {
            out,
            seed,
            train_groups,
            test_groups,
            participants,
            seconds,
            sample_rate,
        } => {
            let cfg = MockConfig {
                train_groups,
                test_groups,
                participants,
                seconds,
                sample_rate,
                seed,
            };
            let ids = mock_haggling(&out, &cfg)?;
            println!("{} groups in {}", ids.len(), out.display());
        }
        Command::Preprocess {
            raw,
            out,
            obs_seconds,
            fut_seconds,
            overlap,
            max_offset_seconds,
            sample_rate,
        } => {
            let cfg = WindowingConfig {
                obs_len: obs_seconds,
                fut_len: fut_seconds,
                overlap_fraction: overlap,
                max_offset: max_offset_seconds,
                sample_rate,
            };
            let summary = preprocess(&raw, &out, &cfg)?;
            for g in &summary.groups {
                println!(
                    "{}\t{:?}\t{} frames\t{} windows",
                    g.group_id, g.split, g.frames, g.windows
                );
            }
        }
        Command::Train { config, out, seed } => {
            let o = train_run(&config, out.as_deref(), seed)?;
            println!("{} ({} parameters)", o.checkpoint.display(), o.param_count);
        }
        Command::Evaluate {
            checkpoints,
            data,
            out,
            regime,
            batch_size,
            seed,
            z_samples,
        } => {
            let regime: ContextRegime = regime.parse()?;
            let args = EvaluateArgs {
                checkpoints,
                data,
                out,
                eval: EvalConfig {
                    regime,
                    batch_size,
                    seed,
                    z_samples,
                    ..EvalConfig::default()
                },
            };
            let outputs = evaluate_run(&args)?;
            for (path, o) in args.checkpoints.iter().zip(&outputs) {
                for r in &o.summary {
                    println!("{}\t{}\t{}", path.display(), r.metric, r.formatted());
                }
            }
        }
        Command::Plot { metrics, out, kind } => {
            let kind: PlotKind = kind.parse()?;
            for p in plot(&metrics, &out, kind)? {
                println!("{}", p.display());
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e) as u8)
        }
    }
}
