//! The temporal encoding-decoding network.
//!
//! Two encoder stages (causal conv → leaky ReLU → channel norm → time
//! pool) halve the bag from 32 to 8 steps; two decoder stages (upsample →
//! causal conv → leaky ReLU → channel norm) bring it back to 32; a
//! dropout layer and a time-distributed dense + sigmoid head emit one
//! anomaly score per instance. Decoder filter counts mirror the encoder
//! in reverse order.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{ConvLayerParams, DenseParams, NodeId, ParamArray, Tape, TemporalTensor};
use crate::data::{self, FeatureFile};
use crate::error::{Error, Result};
use crate::rng::{derive, STREAM_INIT};

fn default_input_dim() -> usize {
    4096
}
fn default_bag_size() -> usize {
    data::BAG_SIZE
}
fn default_kernel_length() -> usize {
    4
}
fn default_filters() -> [usize; 2] {
    [512, 128]
}
fn default_leaky_slope() -> f64 {
    0.01
}
fn default_dropout() -> f64 {
    0.5
}
fn default_epsilon() -> f64 {
    1e-5
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkConfig {
    /// Feature dimension of one instance.
    #[serde(default = "default_input_dim")]
    pub input_dim: usize,
    /// Instances per bag; must be divisible by 4 (two pooling stages).
    #[serde(default = "default_bag_size")]
    pub bag_size: usize,
    /// Temporal extent of every convolution kernel.
    #[serde(default = "default_kernel_length")]
    pub kernel_length: usize,
    /// Encoder filter counts [F1, F2]; the decoder mirrors them reversed.
    #[serde(default = "default_filters")]
    pub encoder_filters: [usize; 2],
    #[serde(default = "default_leaky_slope")]
    pub leaky_slope: f64,
    #[serde(default = "default_dropout")]
    pub dropout_rate: f64,
    /// Channel-norm stabilizer.
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    /// Parameter-init seed; 0 inherits the run's top-level seed.
    #[serde(default)]
    pub seed: u64,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        Self {
            input_dim: default_input_dim(),
            bag_size: default_bag_size(),
            kernel_length: default_kernel_length(),
            encoder_filters: default_filters(),
            leaky_slope: default_leaky_slope(),
            dropout_rate: default_dropout(),
            epsilon: default_epsilon(),
            seed: 0,
        }
    }
}

impl NetworkConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Validation(format!("network config: {msg}")));
        if self.input_dim == 0 {
            return fail("input_dim must be at least 1".into());
        }
        if self.bag_size == 0 || self.bag_size % 4 != 0 {
            return fail(format!(
                "bag_size must be a positive multiple of 4 (two pooling stages), got {}",
                self.bag_size
            ));
        }
        if self.kernel_length == 0 {
            return fail("kernel_length must be at least 1".into());
        }
        if self.kernel_length > self.bag_size {
            return fail(format!(
                "kernel_length {} exceeds bag_size {}",
                self.kernel_length, self.bag_size
            ));
        }
        if self.encoder_filters.iter().any(|&f| f == 0) {
            return fail("filter counts must be at least 1".into());
        }
        if !(self.leaky_slope > 0.0 && self.leaky_slope < 1.0) {
            return fail(format!("leaky_slope must lie in (0, 1), got {}", self.leaky_slope));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return fail(format!("dropout_rate must lie in [0, 1), got {}", self.dropout_rate));
        }
        if self.epsilon <= 0.0 {
            return fail("epsilon must be positive".into());
        }
        Ok(())
    }
}

/// All learnable arrays plus their gradient and Adagrad slots.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub config: NetworkConfig,
    pub enc1: ConvLayerParams,
    pub enc2: ConvLayerParams,
    pub dec1: ConvLayerParams,
    pub dec2: ConvLayerParams,
    pub head: DenseParams,
}

pub const PARAM_ARRAY_NAMES: [&str; 10] = [
    "enc1.kernels",
    "enc1.bias",
    "enc2.kernels",
    "enc2.bias",
    "dec1.kernels",
    "dec1.bias",
    "dec2.kernels",
    "dec2.bias",
    "head.weights",
    "head.bias",
];

impl ModelParams {
    /// Fan-scaled uniform init: each kernel entry is drawn from
    /// `U(-b, b)` with `b = sqrt(6 / (fan_in + fan_out))`; biases start
    /// at zero. Deterministic per config seed.
    pub fn init(config: &NetworkConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = derive(config.seed, &[STREAM_INIT]);
        let [f1, f2] = config.encoder_filters;
        let cd = config.kernel_length;
        let d = config.input_dim;

        let mut conv = |out_c: usize, in_c: usize| -> Result<ConvLayerParams> {
            let bound = (6.0 / ((cd * in_c + cd * out_c) as f64)).sqrt();
            let kernels: Vec<f64> =
                (0..out_c * cd * in_c).map(|_| rng.gen_range(-bound..bound)).collect();
            ConvLayerParams::new(out_c, cd, in_c, kernels, vec![0.0; out_c])
        };
        let enc1 = conv(f1, d)?;
        let enc2 = conv(f2, f1)?;
        let dec1 = conv(f2, f2)?;
        let dec2 = conv(f1, f2)?;
        let bound = (6.0 / (f1 + 1) as f64).sqrt();
        let head =
            DenseParams::new((0..f1).map(|_| rng.gen_range(-bound..bound)).collect(), 0.0);
        Ok(Self { config: config.clone(), enc1, enc2, dec1, dec2, head })
    }

    /// The ten learnable arrays in checkpoint/gradient-reduction order.
    pub fn arrays(&self) -> [&ParamArray; 10] {
        [
            &self.enc1.kernels,
            &self.enc1.bias,
            &self.enc2.kernels,
            &self.enc2.bias,
            &self.dec1.kernels,
            &self.dec1.bias,
            &self.dec2.kernels,
            &self.dec2.bias,
            &self.head.weights,
            &self.head.bias,
        ]
    }

    pub fn arrays_mut(&mut self) -> [&mut ParamArray; 10] {
        [
            &mut self.enc1.kernels,
            &mut self.enc1.bias,
            &mut self.enc2.kernels,
            &mut self.enc2.bias,
            &mut self.dec1.kernels,
            &mut self.dec1.bias,
            &mut self.dec2.kernels,
            &mut self.dec2.bias,
            &mut self.head.weights,
            &mut self.head.bias,
        ]
    }

    /// Conv kernels plus dense weights; the arrays the L2 penalty covers.
    pub fn kernel_arrays(&self) -> [&ParamArray; 5] {
        [
            &self.enc1.kernels,
            &self.enc2.kernels,
            &self.dec1.kernels,
            &self.dec2.kernels,
            &self.head.weights,
        ]
    }

    pub fn kernel_arrays_mut(&mut self) -> [&mut ParamArray; 5] {
        [
            &mut self.enc1.kernels,
            &mut self.enc2.kernels,
            &mut self.dec1.kernels,
            &mut self.dec2.kernels,
            &mut self.head.weights,
        ]
    }

    pub fn clear_grads(&mut self) {
        for a in self.arrays_mut() {
            a.clear_grad();
        }
    }

    pub fn total_params(&self) -> usize {
        self.arrays().iter().map(|a| a.len()).sum()
    }
}

/// Tape leaf handles of the ten parameter arrays, in array order.
pub struct ParamNodes {
    nodes: [NodeId; 10],
}

impl ParamNodes {
    pub fn as_array(&self) -> &[NodeId; 10] {
        &self.nodes
    }
}

/// A recorded forward pass ready for backward.
pub struct TracedForward {
    pub tape: Tape,
    /// Sigmoid output, `bag_size × 1`.
    pub scores: NodeId,
    /// Dense output before the sigmoid, `bag_size × 1`.
    pub pre_sigmoid: NodeId,
    pub param_nodes: ParamNodes,
}

impl TracedForward {
    pub fn scores_vec(&self) -> Vec<f64> {
        self.tape.values(self.scores).to_vec()
    }

    /// Add this pass's parameter gradients into the model's grad slots.
    pub fn accumulate_grads_into(&self, params: &mut ModelParams) {
        for (node, arr) in self.param_nodes.as_array().iter().zip(params.arrays_mut()) {
            arr.add_grad(self.tape.grad(*node));
        }
    }
}

/// Run the full pipeline on one bag (`bag_size × input_dim`, row-major).
/// `dropout_rng: Some(..)` selects training mode; `None` is inference.
pub fn forward_traced(
    params: &ModelParams,
    instances: &[f64],
    dropout_rng: Option<&mut ChaCha8Rng>,
) -> Result<TracedForward> {
    let cfg = &params.config;
    if instances.len() != cfg.bag_size * cfg.input_dim {
        return Err(Error::Shape(format!(
            "expected a {}x{} bag ({} values), got {}",
            cfg.bag_size,
            cfg.input_dim,
            cfg.bag_size * cfg.input_dim,
            instances.len()
        )));
    }

    let mut tape = Tape::new();
    let input = tape.leaf(&TemporalTensor::new(cfg.bag_size, cfg.input_dim, instances.to_vec())?);

    let register =
        |tape: &mut Tape, layer: &ConvLayerParams| -> (NodeId, NodeId) {
            (tape.param(&layer.kernels.values), tape.param(&layer.bias.values))
        };

    let (e1k, e1b) = register(&mut tape, &params.enc1);
    let (e2k, e2b) = register(&mut tape, &params.enc2);
    let (d1k, d1b) = register(&mut tape, &params.dec1);
    let (d2k, d2b) = register(&mut tape, &params.dec2);
    let hw = tape.param(&params.head.weights.values);
    let hb = tape.param(&params.head.bias.values);

    let conv = |tape: &mut Tape, x: NodeId, layer: &ConvLayerParams, k: NodeId, b: NodeId| {
        tape.conv1d_causal(x, k, b, layer.out_channels, layer.kernel_length, layer.in_channels)
    };

    // Encoder: 32 -> 16 -> 8 time steps.
    let mut x = conv(&mut tape, input, &params.enc1, e1k, e1b)?;
    x = tape.leaky_relu(x, cfg.leaky_slope);
    x = tape.channel_norm(x, cfg.epsilon);
    x = tape.max_pool_time(x)?;

    x = conv(&mut tape, x, &params.enc2, e2k, e2b)?;
    x = tape.leaky_relu(x, cfg.leaky_slope);
    x = tape.channel_norm(x, cfg.epsilon);
    x = tape.max_pool_time(x)?;

    // Decoder: 8 -> 16 -> 32.
    x = tape.upsample_time(x);
    x = conv(&mut tape, x, &params.dec1, d1k, d1b)?;
    x = tape.leaky_relu(x, cfg.leaky_slope);
    x = tape.channel_norm(x, cfg.epsilon);

    x = tape.upsample_time(x);
    x = conv(&mut tape, x, &params.dec2, d2k, d2b)?;
    x = tape.leaky_relu(x, cfg.leaky_slope);
    x = tape.channel_norm(x, cfg.epsilon);

    if let Some(rng) = dropout_rng {
        x = tape.dropout(x, cfg.dropout_rate, rng, true);
    }
    let pre_sigmoid = tape.time_distributed_dense(x, hw, hb)?;
    let scores = tape.sigmoid(pre_sigmoid);

    Ok(TracedForward {
        tape,
        scores,
        pre_sigmoid,
        param_nodes: ParamNodes { nodes: [e1k, e1b, e2k, e2b, d1k, d1b, d2k, d2b, hw, hb] },
    })
}

/// Inference: a pure function of (params, bag).
pub fn infer(params: &ModelParams, instances: &[f64]) -> Result<Vec<f64>> {
    Ok(forward_traced(params, instances, None)?.scores_vec())
}

/// Build the 32-instance bag from raw per-clip features and score it.
pub fn score_video(
    params: &ModelParams,
    features: &FeatureFile,
    renormalize: bool,
) -> Result<Vec<f64>> {
    if features.dim != params.config.input_dim {
        return Err(Error::Shape(format!(
            "feature dim {} does not match the model's input dim {}",
            features.dim, params.config.input_dim
        )));
    }
    let rows: Vec<f64> = features.values.iter().map(|&v| v as f64).collect();
    let instances = data::build_instances(&rows, features.n_clips, features.dim, renormalize)?;
    infer(params, &instances)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    pub(crate) fn tiny_config(seed: u64) -> NetworkConfig {
        NetworkConfig {
            input_dim: 8,
            bag_size: 8,
            kernel_length: 4,
            encoder_filters: [8, 4],
            leaky_slope: 0.01,
            dropout_rate: 0.5,
            epsilon: 1e-5,
            seed,
        }
    }

    fn random_bag(cfg: &NetworkConfig, seed: u64) -> Vec<f64> {
        let mut rng = crate::rng::derive(seed, &[300]);
        (0..cfg.bag_size * cfg.input_dim).map(|_| rng.gen_range(-1.0..1.0)).collect()
    }

    #[test]
    fn init_is_deterministic_per_seed() {
        let cfg = tiny_config(5);
        let a = ModelParams::init(&cfg).unwrap();
        let b = ModelParams::init(&cfg).unwrap();
        assert_eq!(a, b);
        let c = ModelParams::init(&tiny_config(6)).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn init_biases_are_zero_and_kernels_respect_fan_bound() {
        let cfg = NetworkConfig {
            input_dim: 16,
            encoder_filters: [512, 16],
            bag_size: 32,
            ..tiny_config(7)
        };
        let p = ModelParams::init(&cfg).unwrap();
        assert!(p.enc1.bias.values.iter().all(|&b| b == 0.0));
        assert!(p.head.bias.values.iter().all(|&b| b == 0.0));
        let bound = (6.0 / ((4 * 16 + 4 * 512) as f64)).sqrt();
        assert!(p.enc1.kernels.values.iter().all(|w| w.abs() <= bound));
        // The draw actually explores the range.
        assert!(p.enc1.kernels.values.iter().any(|w| w.abs() > bound * 0.5));
    }

    #[test]
    fn forward_emits_bag_size_scores_in_open_interval() {
        let cfg = tiny_config(8);
        let p = ModelParams::init(&cfg).unwrap();
        let scores = infer(&p, &random_bag(&cfg, 1)).unwrap();
        assert_eq!(scores.len(), cfg.bag_size);
        assert!(scores.iter().all(|s| *s > 0.0 && *s < 1.0));
    }

    #[test]
    fn default_architecture_maps_32_instances_to_32_scores() {
        let cfg = NetworkConfig {
            input_dim: 16,
            encoder_filters: [12, 6],
            seed: 9,
            ..NetworkConfig::default()
        };
        let p = ModelParams::init(&cfg).unwrap();
        let scores = infer(&p, &random_bag(&cfg, 2)).unwrap();
        assert_eq!(scores.len(), 32);
    }

    #[test]
    fn zero_features_with_fresh_params_score_exactly_half() {
        // Zero input through zero biases stays zero everywhere, so the
        // head sees zeros and the sigmoid returns 1/2.
        let cfg = tiny_config(10);
        let p = ModelParams::init(&cfg).unwrap();
        let scores = infer(&p, &vec![0.0; cfg.bag_size * cfg.input_dim]).unwrap();
        assert!(scores.iter().all(|&s| s == 0.5));
    }

    #[test]
    fn inference_is_deterministic() {
        let cfg = tiny_config(11);
        let p = ModelParams::init(&cfg).unwrap();
        let bag = random_bag(&cfg, 3);
        assert_eq!(infer(&p, &bag).unwrap(), infer(&p, &bag).unwrap());
    }

    #[test]
    fn dimension_mismatch_is_shape_error() {
        let cfg = tiny_config(12);
        let p = ModelParams::init(&cfg).unwrap();
        assert!(matches!(infer(&p, &vec![0.0; 7]), Err(Error::Shape(_))));
    }

    #[test]
    fn training_forward_differs_from_inference_under_dropout() {
        let cfg = tiny_config(13);
        let p = ModelParams::init(&cfg).unwrap();
        let bag = random_bag(&cfg, 4);
        let mut rng = crate::rng::derive(13, &[301]);
        let trained = forward_traced(&p, &bag, Some(&mut rng)).unwrap().scores_vec();
        let inferred = infer(&p, &bag).unwrap();
        assert_ne!(trained, inferred);
    }

    #[test]
    fn score_video_with_identity_bagging_equals_forward() {
        let cfg = NetworkConfig { input_dim: 6, encoder_filters: [6, 4], seed: 14, ..NetworkConfig::default() };
        let p = ModelParams::init(&cfg).unwrap();
        // 32 unit-norm rows: bagging is the identity partition.
        let mut rng = crate::rng::derive(14, &[302]);
        let mut values = Vec::new();
        for _ in 0..32 {
            let mut row: Vec<f64> = (0..6).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let norm: f64 = row.iter().map(|v| v * v).sum::<f64>().sqrt();
            row.iter_mut().for_each(|v| *v /= norm);
            values.extend(row.iter().map(|&v| v as f32));
        }
        let features = FeatureFile::new("v".into(), 32, 6, values.clone()).unwrap();
        let via_video = score_video(&p, &features, true).unwrap();

        let instances: Vec<f64> = {
            let rows: Vec<f64> = values.iter().map(|&v| v as f64).collect();
            data::build_instances(&rows, 32, 6, true).unwrap()
        };
        let via_forward = infer(&p, &instances).unwrap();
        assert_eq!(via_video, via_forward);
    }

    #[test]
    fn score_video_averages_long_videos_into_32_instances() {
        let cfg = NetworkConfig { input_dim: 4, encoder_filters: [5, 3], seed: 15, ..NetworkConfig::default() };
        let p = ModelParams::init(&cfg).unwrap();
        let mut rng = crate::rng::derive(15, &[303]);
        let values: Vec<f32> = (0..320 * 4).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let features = FeatureFile::new("long".into(), 320, 4, values).unwrap();
        let scores = score_video(&p, &features, true).unwrap();
        assert_eq!(scores.len(), 32);
        assert!(scores.iter().all(|s| *s > 0.0 && *s < 1.0));
    }

    #[test]
    fn single_clip_video_still_varies_across_time() {
        // All 32 instances share one feature vector, but the causal left
        // padding makes early time steps see fewer real inputs, so the
        // score sequence needs not be constant.
        let cfg = NetworkConfig { input_dim: 4, encoder_filters: [5, 3], seed: 16, ..NetworkConfig::default() };
        let p = ModelParams::init(&cfg).unwrap();
        let features =
            FeatureFile::new("single".into(), 1, 4, vec![0.5, -0.5, 0.5, -0.5]).unwrap();
        let scores = score_video(&p, &features, true).unwrap();
        assert_eq!(scores.len(), 32);
        let first = scores[0];
        assert!(scores.iter().any(|&s| (s - first).abs() > 1e-9));
        // Deterministic regression: two runs agree bit-exactly.
        assert_eq!(scores, score_video(&p, &features, true).unwrap());
    }

    #[test]
    fn config_validation_rejects_bad_shapes() {
        assert!(NetworkConfig { bag_size: 30, ..tiny_config(1) }.validate().is_err());
        assert!(NetworkConfig { kernel_length: 0, ..tiny_config(1) }.validate().is_err());
        assert!(NetworkConfig { kernel_length: 40, ..tiny_config(1) }.validate().is_err());
        assert!(NetworkConfig { encoder_filters: [0, 4], ..tiny_config(1) }.validate().is_err());
        assert!(NetworkConfig { dropout_rate: 1.0, ..tiny_config(1) }.validate().is_err());
        assert!(NetworkConfig { leaky_slope: 1.0, ..tiny_config(1) }.validate().is_err());
    }

    #[test]
    fn full_network_gradients_match_finite_differences() {
        // Shrunken config, inference mode (the gradcheck harness covers
        // dropout); loss = fixed random weighting of the scores.
        let cfg = NetworkConfig { dropout_rate: 0.0, ..tiny_config(17) };
        let params = ModelParams::init(&cfg).unwrap();
        let bag = random_bag(&cfg, 5);
        let mut rng = crate::rng::derive(17, &[304]);
        let w: Vec<f64> = (0..cfg.bag_size).map(|_| rng.gen_range(-1.0..1.0)).collect();

        let loss_of = |p: &ModelParams| -> f64 {
            let scores = infer(p, &bag).unwrap();
            scores.iter().zip(&w).map(|(s, wi)| s * wi).sum()
        };

        let mut traced = forward_traced(&params, &bag, None).unwrap();
        traced.tape.backward_seeded(traced.scores, &w).unwrap();
        let mut grads = params.clone();
        grads.clear_grads();
        traced.accumulate_grads_into(&mut grads);

        let mut probe = params.clone();
        for (ai, name) in PARAM_ARRAY_NAMES.iter().enumerate() {
            let len = probe.arrays()[ai].len();
            for i in 0..len {
                let orig = probe.arrays()[ai].values[i];
                let h = 1e-5 * orig.abs().max(1.0);
                probe.arrays_mut()[ai].values[i] = orig + h;
                let plus = loss_of(&probe);
                probe.arrays_mut()[ai].values[i] = orig - h;
                let minus = loss_of(&probe);
                probe.arrays_mut()[ai].values[i] = orig;
                let fd = (plus - minus) / (2.0 * h);
                let a = grads.arrays()[ai].grad[i];
                let err = (a - fd).abs() / a.abs().max(fd.abs()).max(1e-3);
                assert!(err < 1e-5, "{name}[{i}]: analytic {a} vs fd {fd} (err {err})");
            }
        }
    }
}
