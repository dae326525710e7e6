//! Mini-batch training: sample bags, run paired forward/backward passes,
//! take an Adagrad step, and log. Also hosts the finite-difference
//! gradient checker that exercises the exact per-pair training path.
//!
//! Each iteration draws `batch_abnormal + batch_normal` bags without
//! replacement (independently per iteration), pairs them index-wise, and
//! averages the per-pair losses. Pair jobs run in parallel; gradient
//! reduction into the shared parameter slots always happens in pair
//! order, so the trajectory is a pure function of (seed, data, config).

use std::time::Instant;

use rand::seq::index::sample;
use serde::{Deserialize, Serialize};

use crate::data::{Bag, Label};
use crate::error::{Error, Result};
use crate::loss::{self, BagScores, LossConfig};
use crate::network::{forward_traced, ModelParams, NetworkConfig, PARAM_ARRAY_NAMES};
use crate::par;
use crate::rng::{derive, STREAM_BATCH, STREAM_DROPOUT};

fn default_learning_rate() -> f64 {
    0.01
}
fn default_iterations() -> u64 {
    20_000
}
fn default_batch() -> usize {
    30
}
fn default_adagrad_epsilon() -> f64 {
    1e-8
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    #[serde(default = "default_learning_rate")]
    pub learning_rate: f64,
    #[serde(default = "default_iterations")]
    pub iterations: u64,
    #[serde(default = "default_batch")]
    pub batch_abnormal: usize,
    #[serde(default = "default_batch")]
    pub batch_normal: usize,
    /// Batch/dropout seed; 0 inherits the run's top-level seed.
    #[serde(default)]
    pub seed: u64,
    /// Checkpoint cadence in iterations; 0 disables intermediate saves.
    #[serde(default)]
    pub checkpoint_every: u64,
    /// Progress-print cadence for the CLI; 0 keeps training quiet.
    #[serde(default)]
    pub eval_every: u64,
    #[serde(default = "default_adagrad_epsilon")]
    pub adagrad_epsilon: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: default_learning_rate(),
            iterations: default_iterations(),
            batch_abnormal: default_batch(),
            batch_normal: default_batch(),
            seed: 0,
            checkpoint_every: 0,
            eval_every: 0,
            adagrad_epsilon: default_adagrad_epsilon(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.learning_rate <= 0.0 {
            return Err(Error::Validation("learning_rate must be positive".into()));
        }
        if self.batch_abnormal == 0 || self.batch_normal == 0 {
            return Err(Error::Validation("batch counts must be at least 1".into()));
        }
        if self.adagrad_epsilon <= 0.0 {
            return Err(Error::Validation("adagrad_epsilon must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainLogRecord {
    pub iteration: u64,
    pub loss: f64,
    pub mean_abnormal: f64,
    pub mean_normal: f64,
    pub elapsed_secs: f64,
}

/// Per scalar: `a ← a + g²; w ← w − lr·g/(√a + eps)`; gradients are
/// cleared afterwards. Stepping with no populated gradient anywhere is a
/// contract error (backward was never run).
pub fn adagrad_step(params: &mut ModelParams, learning_rate: f64, epsilon: f64) -> Result<()> {
    if params.arrays().iter().all(|a| a.grad.iter().all(|&g| g == 0.0)) {
        return Err(Error::Contract(
            "adagrad step requires populated gradients; run backward first".into(),
        ));
    }
    for arr in params.arrays_mut() {
        for i in 0..arr.len() {
            let g = arr.grad[i];
            arr.accum[i] += g * g;
            arr.values[i] -= learning_rate * g / (arr.accum[i].sqrt() + epsilon);
        }
        arr.clear_grad();
    }
    Ok(())
}

/// One abnormal/normal pair of a batch. `weight` scales the seeded score
/// gradients (1/number-of-pairs for mean aggregation); dropout masks are
/// derived from `(train_seed, iteration, pair_index, bag side)` so any
/// execution order reproduces them.
pub struct PairJob<'a> {
    pub abnormal: &'a [f64],
    pub normal: &'a [f64],
    pub train_seed: u64,
    pub iteration: u64,
    pub pair_index: u64,
    pub weight: f64,
}

pub struct PairOutcome {
    pub loss: f64,
    /// Weighted parameter-gradient contribution, one entry per array in
    /// [`PARAM_ARRAY_NAMES`] order.
    pub grads: Vec<Vec<f64>>,
    pub abnormal_scores: Vec<f64>,
    pub normal_scores: Vec<f64>,
}

/// Forward both bags in training mode, evaluate the pair loss, backward
/// the weighted score gradients, and return the parameter contributions.
pub fn run_pair_job(
    params: &ModelParams,
    loss_cfg: &LossConfig,
    job: &PairJob,
) -> Result<PairOutcome> {
    let run_side = |instances: &[f64], side: u64| -> Result<_> {
        let mut rng = derive(
            job.train_seed,
            &[STREAM_DROPOUT, job.iteration, 2 * job.pair_index + side],
        );
        let traced = forward_traced(params, instances, Some(&mut rng))?;
        let scores = traced.scores_vec();
        if scores.iter().any(|s| !s.is_finite()) {
            return Err(Error::Numeric("non-finite score in forward pass".into()));
        }
        Ok((traced, scores))
    };
    let (mut traced_a, scores_a) = run_side(job.abnormal, 0)?;
    let (mut traced_n, scores_n) = run_side(job.normal, 1)?;

    let pair = loss::pair_loss(
        loss_cfg,
        &BagScores::new(scores_a.clone(), Label::Abnormal)?,
        &BagScores::new(scores_n.clone(), Label::Normal)?,
    )?;

    let seed_a: Vec<f64> = pair.abnormal_grad.iter().map(|g| g * job.weight).collect();
    let seed_n: Vec<f64> = pair.normal_grad.iter().map(|g| g * job.weight).collect();
    traced_a.tape.backward_seeded(traced_a.scores, &seed_a)?;
    traced_n.tape.backward_seeded(traced_n.scores, &seed_n)?;

    let grads = traced_a
        .param_nodes
        .as_array()
        .iter()
        .zip(traced_n.param_nodes.as_array())
        .map(|(na, nn)| {
            traced_a
                .tape
                .grad(*na)
                .iter()
                .zip(traced_n.tape.grad(*nn))
                .map(|(a, b)| a + b)
                .collect()
        })
        .collect();

    Ok(PairOutcome { loss: pair.value, grads, abnormal_scores: scores_a, normal_scores: scores_n })
}

/// Callbacks invoked from inside the training loop.
#[derive(Default)]
pub struct TrainHooks<'a> {
    pub on_log: Option<Box<dyn FnMut(&TrainLogRecord) + 'a>>,
    pub on_checkpoint: Option<Box<dyn FnMut(u64, &ModelParams) -> Result<()> + 'a>>,
}

/// Run iterations `start_iteration..config.iterations` over the dataset.
/// Resuming from a checkpoint with the stored iteration reproduces the
/// uninterrupted trajectory bit-exactly.
pub fn train(
    params: &mut ModelParams,
    bags: &[Bag],
    train_cfg: &TrainConfig,
    loss_cfg: &LossConfig,
    start_iteration: u64,
    hooks: &mut TrainHooks,
) -> Result<Vec<TrainLogRecord>> {
    train_cfg.validate()?;
    loss_cfg.validate()?;
    let cfg = params.config.clone();
    let expected = cfg.bag_size * cfg.input_dim;
    if let Some(bad) = bags.iter().find(|b| b.instances.len() != expected) {
        return Err(Error::Contract(format!(
            "bag {} has {} values, the model expects {}x{}",
            bad.video_id,
            bad.instances.len(),
            cfg.bag_size,
            cfg.input_dim
        )));
    }

    let abnormal: Vec<&Bag> = bags.iter().filter(|b| b.label == Label::Abnormal).collect();
    let normal: Vec<&Bag> = bags.iter().filter(|b| b.label == Label::Normal).collect();
    if abnormal.len() < train_cfg.batch_abnormal || normal.len() < train_cfg.batch_normal {
        return Err(Error::Contract(format!(
            "dataset has {} abnormal / {} normal bags; the batch needs {} / {}",
            abnormal.len(),
            normal.len(),
            train_cfg.batch_abnormal,
            train_cfg.batch_normal
        )));
    }

    let n_pairs = train_cfg.batch_abnormal.min(train_cfg.batch_normal);
    let weight = 1.0 / n_pairs as f64;
    let started = Instant::now();
    let mut log = Vec::new();

    for iteration in start_iteration..train_cfg.iterations {
        // Independent shuffles of both pools, then index-wise pairing.
        let mut rng = derive(train_cfg.seed, &[STREAM_BATCH, iteration]);
        let picks_a = sample(&mut rng, abnormal.len(), train_cfg.batch_abnormal);
        let picks_n = sample(&mut rng, normal.len(), train_cfg.batch_normal);

        let jobs: Vec<PairJob> = (0..n_pairs)
            .map(|p| PairJob {
                abnormal: &abnormal[picks_a.index(p)].instances,
                normal: &normal[picks_n.index(p)].instances,
                train_seed: train_cfg.seed,
                iteration,
                pair_index: p as u64,
                weight,
            })
            .collect();
        let outcomes = par::map_chunked(&jobs, |job| run_pair_job(params, loss_cfg, job));

        let mut batch_loss = 0.0;
        let mut sum_abnormal = 0.0;
        let mut sum_normal = 0.0;
        let mut n_scores = 0usize;
        for outcome in outcomes {
            let outcome = outcome.map_err(|e| match e {
                Error::Numeric(m) => Error::Numeric(format!("iteration {}: {m}", iteration + 1)),
                other => other,
            })?;
            for (arr, g) in params.arrays_mut().into_iter().zip(&outcome.grads) {
                arr.add_grad(g);
            }
            batch_loss += outcome.loss;
            sum_abnormal += outcome.abnormal_scores.iter().sum::<f64>();
            sum_normal += outcome.normal_scores.iter().sum::<f64>();
            n_scores += outcome.abnormal_scores.len();
        }
        batch_loss = batch_loss * weight + loss::weight_decay_term(params, loss_cfg.l2_weight_decay);
        if !batch_loss.is_finite() {
            return Err(Error::Numeric(format!(
                "iteration {}: batch loss is not finite ({batch_loss})",
                iteration + 1
            )));
        }
        loss::add_weight_decay_grads(params, loss_cfg.l2_weight_decay);
        adagrad_step(params, train_cfg.learning_rate, train_cfg.adagrad_epsilon)?;

        let record = TrainLogRecord {
            iteration: iteration + 1,
            loss: batch_loss,
            mean_abnormal: sum_abnormal / n_scores as f64,
            mean_normal: sum_normal / n_scores as f64,
            elapsed_secs: started.elapsed().as_secs_f64(),
        };
        if let Some(f) = hooks.on_log.as_mut() {
            f(&record);
        }
        log.push(record);

        if train_cfg.checkpoint_every > 0 && (iteration + 1) % train_cfg.checkpoint_every == 0 {
            if let Some(f) = hooks.on_checkpoint.as_mut() {
                f(iteration + 1, params)?;
            }
        }
    }
    Ok(log)
}

// ── gradient checking ────────────────────────────────────────────────

pub const GRADCHECK_TOLERANCE: f64 = 1e-5;

#[derive(Debug, Clone)]
pub struct GradCheckGroup {
    pub name: &'static str,
    pub max_rel_err: f64,
    pub checked: usize,
}

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub groups: Vec<GradCheckGroup>,
    /// Mean-score gap between the two probe bags; keeps the check away
    /// from the loss kinks (|gap| must not be tiny).
    pub score_gap: f64,
    pub tolerance: f64,
}

impl GradCheckReport {
    pub fn max_rel_err(&self) -> f64 {
        self.groups.iter().map(|g| g.max_rel_err).fold(0.0, f64::max)
    }

    pub fn passed(&self) -> bool {
        self.max_rel_err() < self.tolerance
    }
}

const GRADCHECK_STREAM: u64 = 7;

/// Compare analytic full-loss gradients (pair loss, dropout active,
/// weight decay included) against central finite differences with
/// per-parameter step `1e-4 · max(1, |w|)`. Relative errors use a 1e-3
/// magnitude floor so near-zero gradient pairs compare absolutely.
pub fn gradcheck(
    net_cfg: &NetworkConfig,
    loss_cfg: &LossConfig,
    seed: u64,
) -> Result<GradCheckReport> {
    use rand::Rng;
    net_cfg.validate()?;
    loss_cfg.validate()?;
    let params = ModelParams::init(net_cfg)?;
    let n = net_cfg.bag_size * net_cfg.input_dim;
    let bag_of = |side: u64| -> Vec<f64> {
        let mut rng = derive(seed, &[GRADCHECK_STREAM, side]);
        (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
    };
    let bag_a = bag_of(0);
    let bag_n = bag_of(1);
    fn probe_job<'a>(a: &'a [f64], n: &'a [f64], seed: u64) -> PairJob<'a> {
        PairJob {
            abnormal: a,
            normal: n,
            train_seed: seed,
            iteration: 0,
            pair_index: 0,
            weight: 1.0,
        }
    }

    let outcome = run_pair_job(&params, loss_cfg, &probe_job(&bag_a, &bag_n, seed))?;
    let score_gap = outcome.abnormal_scores.iter().sum::<f64>() / net_cfg.bag_size as f64
        - outcome.normal_scores.iter().sum::<f64>() / net_cfg.bag_size as f64;
    let mut analytic = params.clone();
    analytic.clear_grads();
    for (arr, g) in analytic.arrays_mut().into_iter().zip(&outcome.grads) {
        arr.add_grad(g);
    }
    loss::add_weight_decay_grads(&mut analytic, loss_cfg.l2_weight_decay);

    let loss_of = |p: &ModelParams| -> Result<f64> {
        let outcome = run_pair_job(p, loss_cfg, &probe_job(&bag_a, &bag_n, seed))?;
        Ok(outcome.loss + loss::weight_decay_term(p, loss_cfg.l2_weight_decay))
    };

    let mut probe = params.clone();
    let mut groups = Vec::new();
    for (ai, name) in PARAM_ARRAY_NAMES.iter().enumerate() {
        let len = probe.arrays()[ai].len();
        let mut max_rel_err = 0.0_f64;
        for i in 0..len {
            let orig = probe.arrays()[ai].values[i];
            let h = 1e-4 * orig.abs().max(1.0);
            probe.arrays_mut()[ai].values[i] = orig + h;
            let plus = loss_of(&probe)?;
            probe.arrays_mut()[ai].values[i] = orig - h;
            let minus = loss_of(&probe)?;
            probe.arrays_mut()[ai].values[i] = orig;
            let fd = (plus - minus) / (2.0 * h);
            let a = analytic.arrays()[ai].grad[i];
            let err = (a - fd).abs() / a.abs().max(fd.abs()).max(1e-3);
            max_rel_err = max_rel_err.max(err);
        }
        groups.push(GradCheckGroup { name, max_rel_err, checked: len });
    }
    Ok(GradCheckReport { groups, score_gap, tolerance: GRADCHECK_TOLERANCE })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::SyntheticSpec;
    use crate::loss::LossVariant;
    use tempfile::tempdir;

    fn tiny_net(seed: u64) -> NetworkConfig {
        NetworkConfig {
            input_dim: 8,
            bag_size: 8,
            kernel_length: 4,
            encoder_filters: [8, 4],
            dropout_rate: 0.5,
            seed,
            ..NetworkConfig::default()
        }
    }

    #[test]
    fn adagrad_first_step_closed_form() {
        let mut params = ModelParams::init(&tiny_net(1)).unwrap();
        let before = params.head.bias.values[0];
        params.head.bias.grad[0] = 0.5;
        adagrad_step(&mut params, 0.01, 1e-8).unwrap();
        let step = params.head.bias.values[0] - before;
        // -lr * g / (sqrt(g^2) + eps) = -0.01 * 0.5 / (0.5 + 1e-8)
        assert!((step + 0.01).abs() < 1e-9, "step {step}");
        assert_eq!(params.head.bias.accum[0], 0.25);
        assert_eq!(params.head.bias.grad[0], 0.0);
    }

    #[test]
    fn adagrad_zero_gradient_leaves_parameter_alone() {
        let mut params = ModelParams::init(&tiny_net(2)).unwrap();
        let before = params.enc1.kernels.values.clone();
        // One populated gradient elsewhere keeps the step legal.
        params.head.bias.grad[0] = 1.0;
        adagrad_step(&mut params, 0.01, 1e-8).unwrap();
        assert_eq!(params.enc1.kernels.values, before);
        assert!(params.enc1.kernels.accum.iter().all(|&a| a == 0.0));
    }

    #[test]
    fn adagrad_damps_repeated_steps() {
        let mut params = ModelParams::init(&tiny_net(3)).unwrap();
        let w0 = params.head.bias.values[0];
        params.head.bias.grad[0] = 0.3;
        adagrad_step(&mut params, 0.01, 1e-8).unwrap();
        let first = (params.head.bias.values[0] - w0).abs();
        let w1 = params.head.bias.values[0];
        params.head.bias.grad[0] = 0.3;
        adagrad_step(&mut params, 0.01, 1e-8).unwrap();
        let second = (params.head.bias.values[0] - w1).abs();
        assert!(second < first, "second step {second} not smaller than first {first}");
    }

    #[test]
    fn adagrad_without_gradients_is_contract_error() {
        let mut params = ModelParams::init(&tiny_net(4)).unwrap();
        assert!(matches!(adagrad_step(&mut params, 0.01, 1e-8), Err(Error::Contract(_))));
    }

    /// 32-step network matching the bag builder's fixed instance count.
    fn data_net(seed: u64) -> NetworkConfig {
        NetworkConfig { bag_size: 32, ..tiny_net(seed) }
    }

    fn tiny_dataset(seed: u64) -> (tempfile::TempDir, Vec<Bag>, Vec<Bag>) {
        let dir = tempdir().unwrap();
        let spec = SyntheticSpec {
            dim: 8,
            train_normal: 8,
            train_abnormal: 8,
            test_per_label: 4,
            clips_min: 8,
            clips_max: 12,
            anomaly_clips_min: 6,
            anomaly_clips_max: 10,
            seed,
            ..SyntheticSpec::default()
        };
        let ds = crate::data::generate_synthetic(&spec, dir.path()).unwrap();
        let manifest = crate::data::load_manifest(&ds.manifest_path).unwrap();
        let train = crate::data::load_split(&manifest, crate::data::Split::Train, true).unwrap();
        let test = crate::data::load_split(&manifest, crate::data::Split::Test, true).unwrap();
        (dir, train, test)
    }

    fn small_train_cfg(iterations: u64, seed: u64) -> TrainConfig {
        TrainConfig {
            iterations,
            batch_abnormal: 4,
            batch_normal: 4,
            seed,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn zero_iterations_leaves_params_identical() {
        let (_dir, train_bags, _) = tiny_dataset(10);
        let mut params = ModelParams::init(&data_net(10)).unwrap();
        let snapshot = params.clone();
        let log = train(
            &mut params,
            &train_bags,
            &small_train_cfg(0, 10),
            &LossConfig::default(),
            0,
            &mut TrainHooks::default(),
        )
        .unwrap();
        assert!(log.is_empty());
        assert_eq!(params, snapshot);
    }

    #[test]
    fn same_seed_gives_identical_logs_and_params() {
        let (_dir, train_bags, _) = tiny_dataset(11);
        let run = || {
            let mut params = ModelParams::init(&data_net(11)).unwrap();
            let log = train(
                &mut params,
                &train_bags,
                &small_train_cfg(5, 11),
                &LossConfig::default(),
                0,
                &mut TrainHooks::default(),
            )
            .unwrap();
            (params, log)
        };
        let (p1, l1) = run();
        let (p2, l2) = run();
        assert_eq!(p1, p2);
        let deterministic = |l: &[TrainLogRecord]| -> Vec<(u64, f64, f64, f64)> {
            l.iter().map(|r| (r.iteration, r.loss, r.mean_abnormal, r.mean_normal)).collect()
        };
        assert_eq!(deterministic(&l1), deterministic(&l2));
    }

    #[test]
    fn insufficient_data_is_rejected_before_the_loop() {
        let (_dir, train_bags, _) = tiny_dataset(12);
        let mut params = ModelParams::init(&data_net(12)).unwrap();
        let snapshot = params.clone();
        let cfg = TrainConfig { batch_abnormal: 100, ..small_train_cfg(3, 12) };
        let err = train(
            &mut params,
            &train_bags,
            &cfg,
            &LossConfig::default(),
            0,
            &mut TrainHooks::default(),
        )
        .unwrap_err();
        assert!(matches!(err, Error::Contract(_)));
        assert_eq!(params, snapshot);
    }

    #[test]
    fn non_finite_forward_is_a_numeric_error() {
        let (_dir, train_bags, _) = tiny_dataset(13);
        let mut params = ModelParams::init(&data_net(13)).unwrap();
        params.enc1.kernels.values[0] = f64::INFINITY;
        let err = train(
            &mut params,
            &train_bags,
            &small_train_cfg(3, 13),
            &LossConfig::default(),
            0,
            &mut TrainHooks::default(),
        )
        .unwrap_err();
        assert!(matches!(err, Error::Numeric(_)), "{err}");
        assert!(err.to_string().contains("iteration 1"));
    }

    #[test]
    fn accumulators_never_decrease() {
        let (_dir, train_bags, _) = tiny_dataset(14);
        let mut params = ModelParams::init(&data_net(14)).unwrap();
        let mut prev: Vec<Vec<f64>> = params.arrays().iter().map(|a| a.accum.clone()).collect();
        for step in 0..4 {
            train(
                &mut params,
                &train_bags,
                &TrainConfig { iterations: step + 1, ..small_train_cfg(0, 14) },
                &LossConfig::default(),
                step,
                &mut TrainHooks::default(),
            )
            .unwrap();
            for (arr, old) in params.arrays().iter().zip(&prev) {
                for (now, before) in arr.accum.iter().zip(old) {
                    assert!(now >= before);
                }
            }
            prev = params.arrays().iter().map(|a| a.accum.clone()).collect();
        }
    }

    #[test]
    fn checkpoint_resume_matches_uninterrupted_run() {
        let (_dir, train_bags, _) = tiny_dataset(15);
        let loss_cfg = LossConfig::default();

        let mut straight = ModelParams::init(&data_net(15)).unwrap();
        train(
            &mut straight,
            &train_bags,
            &small_train_cfg(8, 15),
            &loss_cfg,
            0,
            &mut TrainHooks::default(),
        )
        .unwrap();

        let mut resumed = ModelParams::init(&data_net(15)).unwrap();
        train(
            &mut resumed,
            &train_bags,
            &small_train_cfg(4, 15),
            &loss_cfg,
            0,
            &mut TrainHooks::default(),
        )
        .unwrap();
        // Round-trip the midpoint through the checkpoint format.
        let dir = tempdir().unwrap();
        let path = dir.path().join("mid.tedc");
        crate::checkpoint::save(
            &path,
            &crate::checkpoint::Checkpoint { params: resumed, iteration: 4, train_seed: 15 },
        )
        .unwrap();
        let ckpt = crate::checkpoint::load(&path).unwrap();
        let mut resumed = ckpt.params;
        train(
            &mut resumed,
            &train_bags,
            &small_train_cfg(8, 15),
            &loss_cfg,
            ckpt.iteration,
            &mut TrainHooks::default(),
        )
        .unwrap();
        assert_eq!(straight, resumed);
    }

    #[test]
    fn short_synthetic_training_separates_held_out_bags() {
        // Anomaly runs cover most of each abnormal video, so the bag-mean
        // gap is a meaningful separation measure.
        let (_dir, train_bags, test_bags) = tiny_dataset(16);
        let mut params = ModelParams::init(&data_net(16)).unwrap();
        train(
            &mut params,
            &train_bags,
            &small_train_cfg(200, 16),
            &LossConfig::default(),
            0,
            &mut TrainHooks::default(),
        )
        .unwrap();

        let mean = |label: Label| -> f64 {
            let mut total = 0.0;
            let mut count = 0;
            for bag in test_bags.iter().filter(|b| b.label == label) {
                let scores = crate::network::infer(&params, &bag.instances).unwrap();
                total += scores.iter().sum::<f64>();
                count += scores.len();
            }
            total / count as f64
        };
        let gap = mean(Label::Abnormal) - mean(Label::Normal);
        assert!(gap > 0.5, "held-out mean gap {gap}");
    }

    #[test]
    fn gradcheck_passes_for_both_ranking_losses() {
        let net = tiny_net(40);
        for variant in [LossVariant::MeanDistance, LossVariant::MaxHinge] {
            let cfg = LossConfig { variant, ..LossConfig::default() };
            let report = gradcheck(&net, &cfg, 40).unwrap();
            assert!(
                report.score_gap.abs() > 1e-3,
                "probe bags too close to the loss kink: gap {}",
                report.score_gap
            );
            assert!(
                report.passed(),
                "{variant}: max rel err {} (gap {})",
                report.max_rel_err(),
                report.score_gap
            );
        }
    }

    #[test]
    fn clamp_region_kills_normal_bag_gradients() {
        let scores_a = BagScores::new(vec![0.2; 8], Label::Abnormal).unwrap();
        let scores_n = BagScores::new(vec![0.8; 8], Label::Normal).unwrap();
        let pair = loss::mean_distance_loss(&scores_a, &scores_n, 8e-5).unwrap();
        assert!(pair.normal_grad.iter().all(|&g| g == 0.0));
    }
}
