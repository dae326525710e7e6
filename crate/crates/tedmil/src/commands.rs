//! Subcommand entry points behind the `tedmil` binary.
//!
//! Every command validates its inputs before writing anything, sends all
//! outputs under the given directory, and echoes the resolved config
//! there for provenance.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use crate::checkpoint::{self, Checkpoint};
use crate::config::RunConfig;
use crate::data::{self, load_feature_file, load_manifest, GeneratedDataset, Split, FRAMES_PER_CLIP};
use crate::error::{Error, Result};
use crate::eval::{self, expand_scores, EvalReport};
use crate::loss::LossVariant;
use crate::network::{score_video, ModelParams, NetworkConfig};
use crate::trainer::{self, GradCheckReport, TrainHooks};

/// Kernel lengths swept by the ablation harness.
pub const ABLATION_KERNEL_LENGTHS: [usize; 5] = [2, 4, 6, 8, 16];

/// Shrunken network for gradient checking: small enough that central
/// finite differences over every parameter stay cheap.
pub fn shrunken_network(seed: u64) -> NetworkConfig {
    NetworkConfig {
        input_dim: 8,
        bag_size: 8,
        kernel_length: 4,
        encoder_filters: [8, 4],
        seed,
        ..NetworkConfig::default()
    }
}

/// Generate a synthetic dataset under `out_dir`.
pub fn cmd_synth(cfg: &RunConfig, out_dir: &Path) -> Result<GeneratedDataset> {
    let dataset = data::generate_synthetic(&cfg.synth, out_dir)?;
    cfg.write_echo(out_dir)?;
    println!(
        "wrote {} videos (dim {}, null_signal {}) under {}",
        dataset.n_videos,
        cfg.synth.dim,
        cfg.synth.is_null_signal(),
        out_dir.display()
    );
    Ok(dataset)
}

pub struct TrainOutcome {
    pub checkpoint_path: PathBuf,
    pub log_path: PathBuf,
    pub iterations_run: u64,
    pub final_loss: Option<f64>,
}

/// Train on the manifest's train split; emits an append-only CSV log,
/// scheduled checkpoints, and the final checkpoint. With `resume`, the
/// run continues bit-exactly from the stored iteration.
pub fn cmd_train(
    cfg: &RunConfig,
    manifest_path: &Path,
    out_dir: &Path,
    resume: Option<&Path>,
) -> Result<TrainOutcome> {
    // Everything that can fail validation happens before any output.
    let manifest = load_manifest(manifest_path)?;
    let bags = data::load_split(&manifest, Split::Train, cfg.data.renormalize_instances)?;
    if bags.is_empty() {
        return Err(Error::Validation("manifest has no training videos".into()));
    }
    if cfg.network.bag_size != data::BAG_SIZE {
        return Err(Error::Validation(format!(
            "the data pipeline builds {}-instance bags; set network.bag_size accordingly",
            data::BAG_SIZE
        )));
    }
    if bags[0].dim != cfg.network.input_dim {
        return Err(Error::Validation(format!(
            "features have dim {}, but network.input_dim is {}",
            bags[0].dim, cfg.network.input_dim
        )));
    }

    let (mut params, start_iteration) = match resume {
        Some(ckpt_path) => {
            let ckpt = checkpoint::load(ckpt_path)?;
            if ckpt.params.config != cfg.network {
                return Err(Error::Validation(
                    "checkpoint network config differs from the run config; \
                     resume needs identical settings"
                        .into(),
                ));
            }
            if ckpt.train_seed != cfg.train.seed {
                return Err(Error::Validation(format!(
                    "checkpoint was trained with seed {}, config says {}",
                    ckpt.train_seed, cfg.train.seed
                )));
            }
            (ckpt.params, ckpt.iteration)
        }
        None => (ModelParams::init(&cfg.network)?, 0),
    };

    fs::create_dir_all(out_dir)?;
    cfg.write_echo(out_dir)?;
    let ckpt_dir = out_dir.join("checkpoints");
    fs::create_dir_all(&ckpt_dir)?;

    let log_path = out_dir.join("train_log.csv");
    let mut log_file = if resume.is_some() && log_path.exists() {
        fs::OpenOptions::new().append(true).open(&log_path)?
    } else {
        let mut f = fs::File::create(&log_path)?;
        writeln!(f, "iteration,loss,mean_abnormal_score,mean_normal_score,elapsed_secs")?;
        f
    };

    let eval_every = cfg.train.eval_every;
    let train_seed = cfg.train.seed;
    let mut final_loss = None;
    let mut hooks = TrainHooks {
        on_log: Some(Box::new(|r: &trainer::TrainLogRecord| {
            let _ = writeln!(
                log_file,
                "{},{},{},{},{:.3}",
                r.iteration, r.loss, r.mean_abnormal, r.mean_normal, r.elapsed_secs
            );
            if eval_every > 0 && r.iteration % eval_every == 0 {
                println!(
                    "iter {:>6}  loss {:.6}  mean scores abnormal {:.3} / normal {:.3}",
                    r.iteration, r.loss, r.mean_abnormal, r.mean_normal
                );
            }
        })),
        on_checkpoint: Some(Box::new(|iteration: u64, params: &ModelParams| {
            checkpoint::save(
                &ckpt_dir.join(format!("ckpt_{iteration:06}.tedc")),
                &Checkpoint { params: params.clone(), iteration, train_seed },
            )
        })),
    };

    let log = trainer::train(&mut params, &bags, &cfg.train, &cfg.loss, start_iteration, &mut hooks)?;
    drop(hooks);
    if let Some(last) = log.last() {
        final_loss = Some(last.loss);
    }

    let checkpoint_path = out_dir.join("checkpoint.tedc");
    checkpoint::save(
        &checkpoint_path,
        &Checkpoint { params, iteration: cfg.train.iterations, train_seed },
    )?;
    println!(
        "trained {} iterations ({} new); checkpoint at {}",
        cfg.train.iterations,
        log.len(),
        checkpoint_path.display()
    );
    Ok(TrainOutcome {
        checkpoint_path,
        log_path,
        iterations_run: log.len() as u64,
        final_loss,
    })
}

/// Evaluate a checkpoint on the manifest's test split and write the
/// metric report plus plot-ready CSVs.
pub fn cmd_eval(
    cfg: &RunConfig,
    checkpoint_path: &Path,
    manifest_path: &Path,
    out_dir: &Path,
) -> Result<EvalReport> {
    let ckpt = checkpoint::load(checkpoint_path)?;
    let manifest = load_manifest(manifest_path)?;
    let report = eval::evaluate(&ckpt.params, &manifest, cfg.data.renormalize_instances)?;
    eval::write_report(&report, out_dir)?;
    println!(
        "frame-level AUC {:.4}, false-alarm rate {:.4} over {} frames / {} videos",
        report.auc, report.false_alarm_rate, report.n_frames, report.n_videos
    );
    Ok(report)
}

pub struct ScoreOutcome {
    pub video_id: String,
    pub instance_scores: Vec<f64>,
    pub frame_scores: Vec<f64>,
}

/// Score one feature file: instance scores, then per-frame scores
/// (frame count is clips × 16). Printed to stdout, or written as CSVs
/// when an output directory is given.
pub fn cmd_score(
    cfg: &RunConfig,
    checkpoint_path: &Path,
    features_path: &Path,
    out_dir: Option<&Path>,
) -> Result<ScoreOutcome> {
    let ckpt = checkpoint::load(checkpoint_path)?;
    let features = load_feature_file(features_path)?;
    let instance_scores = score_video(&ckpt.params, &features, cfg.data.renormalize_instances)?;
    let frame_scores = expand_scores(&instance_scores, features.n_clips * FRAMES_PER_CLIP);

    match out_dir {
        Some(dir) => {
            fs::create_dir_all(dir)?;
            let mut f = fs::File::create(dir.join("instance_scores.csv"))?;
            writeln!(f, "instance,score")?;
            for (i, s) in instance_scores.iter().enumerate() {
                writeln!(f, "{i},{s}")?;
            }
            let mut f = fs::File::create(dir.join("frame_scores.csv"))?;
            writeln!(f, "frame,score")?;
            for (i, s) in frame_scores.iter().enumerate() {
                writeln!(f, "{i},{s}")?;
            }
            println!(
                "scored {}: {} instances, {} frames -> {}",
                features.video_id,
                instance_scores.len(),
                frame_scores.len(),
                dir.display()
            );
        }
        None => {
            println!("instance,score");
            for (i, s) in instance_scores.iter().enumerate() {
                println!("{i},{s}");
            }
            println!("frame,score");
            for (i, s) in frame_scores.iter().enumerate() {
                println!("{i},{s}");
            }
        }
    }
    Ok(ScoreOutcome { video_id: features.video_id, instance_scores, frame_scores })
}

/// Run the finite-difference gradient check and print one line per
/// parameter group.
pub fn cmd_gradcheck(cfg: &RunConfig) -> Result<GradCheckReport> {
    let total: usize = ModelParams::init(&cfg.network)?.total_params();
    if total > 20_000 {
        return Err(Error::Validation(format!(
            "gradcheck network has {total} parameters; finite differences need a shrunken \
             config (at most ~10^4)"
        )));
    }
    let report = trainer::gradcheck(&cfg.network, &cfg.loss, cfg.seed)?;
    println!("gradient check, loss {} (tolerance {:.0e}):", cfg.loss.variant, report.tolerance);
    for group in &report.groups {
        println!(
            "  {:<14} max rel err {:>12.3e}  ({} params)",
            group.name, group.max_rel_err, group.checked
        );
    }
    println!(
        "score gap {:.4}; overall max {:.3e}: {}",
        report.score_gap,
        report.max_rel_err(),
        if report.passed() { "PASS" } else { "FAIL" }
    );
    Ok(report)
}

#[derive(Debug, Clone)]
pub struct AblationRow {
    pub variant: LossVariant,
    pub kernel_length: usize,
    pub auc: f64,
    pub false_alarm_rate: f64,
}

/// Train and evaluate every loss variant × kernel length and emit one
/// CSV row per cell.
pub fn cmd_ablate(cfg: &RunConfig, manifest_path: &Path, out_dir: &Path) -> Result<Vec<AblationRow>> {
    let manifest = load_manifest(manifest_path)?;
    let bags = data::load_split(&manifest, Split::Train, cfg.data.renormalize_instances)?;
    if bags.is_empty() {
        return Err(Error::Validation("manifest has no training videos".into()));
    }
    fs::create_dir_all(out_dir)?;
    cfg.write_echo(out_dir)?;

    let variants =
        [LossVariant::MeanDistance, LossVariant::MaxHinge, LossVariant::MaxHingeAvgMapping];
    let mut rows = Vec::new();
    for variant in variants {
        for kernel_length in ABLATION_KERNEL_LENGTHS {
            let mut cell = cfg.clone();
            cell.loss.variant = variant;
            cell.network.kernel_length = kernel_length;
            cell.network.validate()?;

            let mut params = ModelParams::init(&cell.network)?;
            trainer::train(
                &mut params,
                &bags,
                &cell.train,
                &cell.loss,
                0,
                &mut TrainHooks::default(),
            )?;
            let report = eval::evaluate(&params, &manifest, cfg.data.renormalize_instances)?;
            println!(
                "ablation {variant} kernel {kernel_length}: AUC {:.4}, false alarms {:.4}",
                report.auc, report.false_alarm_rate
            );
            rows.push(AblationRow {
                variant,
                kernel_length,
                auc: report.auc,
                false_alarm_rate: report.false_alarm_rate,
            });
        }
    }

    let mut f = fs::File::create(out_dir.join("ablation.csv"))?;
    writeln!(f, "loss_variant,kernel_length,auc,false_alarm_rate")?;
    for row in &rows {
        writeln!(f, "{},{},{},{}", row.variant, row.kernel_length, row.auc, row.false_alarm_rate)?;
    }
    Ok(rows)
}
