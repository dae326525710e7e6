//! `tedmil` — train and evaluate the temporal encoding-decoding anomaly
//! detector on per-clip video features.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use tedmil::commands;
use tedmil::config::{Overrides, RunConfig};
use tedmil::error::Result;
use tedmil::loss::LossVariant;

#[derive(Parser)]
#[command(name = "tedmil", version, about = "Weakly supervised video anomaly detection")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct CommonArgs {
    /// TOML run configuration; defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Top-level seed, overriding the config file everywhere.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory (default: $TEDMIL_OUT/<subcommand> or
    /// tedmil-out/<subcommand>).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset with planted anomalies.
    Synth {
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Train on a dataset manifest's train split.
    Train {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long)]
        manifest: PathBuf,
        /// Continue bit-exactly from a checkpoint.
        #[arg(long)]
        resume: Option<PathBuf>,
        #[arg(long)]
        iterations: Option<u64>,
        #[arg(long, value_parser = parse_loss)]
        loss: Option<LossVariant>,
        #[arg(long)]
        kernel_length: Option<usize>,
    },
    /// Frame-level ROC/AUC and false-alarm rate on the test split.
    Eval {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
    },
    /// Score one feature file with a trained checkpoint.
    Score {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long)]
        checkpoint: PathBuf,
        /// TEDF binary or CSV feature file.
        #[arg(long)]
        features: PathBuf,
    },
    /// Verify analytic gradients against finite differences.
    Gradcheck {
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Sweep loss variants and kernel lengths, one AUC row per cell.
    Ablate {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        iterations: Option<u64>,
    },
}

fn parse_loss(s: &str) -> std::result::Result<LossVariant, String> {
    s.parse().map_err(|e: tedmil::Error| e.to_string())
}

fn out_dir(explicit: &Option<PathBuf>, subcommand: &str) -> PathBuf {
    explicit.clone().unwrap_or_else(|| {
        let root = std::env::var("TEDMIL_OUT").unwrap_or_else(|_| "tedmil-out".into());
        PathBuf::from(root).join(subcommand)
    })
}

fn load_config(common: &CommonArgs, extra: Overrides) -> Result<RunConfig> {
    let overrides = Overrides { seed: common.seed, ..extra };
    RunConfig::load(common.config.as_deref(), &overrides)
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Synth { common } => {
            let cfg = load_config(&common, Overrides::default())?;
            commands::cmd_synth(&cfg, &out_dir(&common.out, "synth"))?;
        }
        Command::Train { common, manifest, resume, iterations, loss, kernel_length } => {
            let cfg = load_config(
                &common,
                Overrides { iterations, loss, kernel_length, ..Overrides::default() },
            )?;
            commands::cmd_train(&cfg, &manifest, &out_dir(&common.out, "train"), resume.as_deref())?;
        }
        Command::Eval { common, checkpoint, manifest } => {
            let cfg = load_config(&common, Overrides::default())?;
            commands::cmd_eval(&cfg, &checkpoint, &manifest, &out_dir(&common.out, "eval"))?;
        }
        Command::Score { common, checkpoint, features } => {
            let cfg = load_config(&common, Overrides::default())?;
            commands::cmd_score(&cfg, &checkpoint, &features, common.out.as_deref())?;
        }
        Command::Gradcheck { common } => {
            let cfg = match &common.config {
                Some(_) => load_config(&common, Overrides::default())?,
                None => {
                    // Without a config, check the shrunken network rather
                    // than the full-size default (finite differences over
                    // millions of parameters are not viable).
                    let mut cfg = RunConfig::default();
                    cfg.seed = common.seed.unwrap_or(cfg.seed);
                    cfg.network = commands::shrunken_network(0);
                    cfg.finalize();
                    cfg
                }
            };
            let report = commands::cmd_gradcheck(&cfg)?;
            if !report.passed() {
                return Err(tedmil::Error::Numeric(format!(
                    "gradient check failed: max relative error {:.3e} exceeds {:.0e}",
                    report.max_rel_err(),
                    report.tolerance
                )));
            }
        }
        Command::Ablate { common, manifest, iterations } => {
            let cfg = load_config(&common, Overrides { iterations, ..Overrides::default() })?;
            commands::cmd_ablate(&cfg, &manifest, &out_dir(&common.out, "ablate"))?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
