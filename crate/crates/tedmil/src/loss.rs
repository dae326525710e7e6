//! Multiple-instance ranking losses over paired bags.
//!
//! Three variants, all taking one abnormal and one normal bag of
//! instance scores:
//!
//! - `mean_distance` — the gap d between the two bag means is pushed
//!   toward 1; d is clamped at 0 when the normal bag scores higher, and
//!   an L1 term keeps abnormal scores sparse:
//!   `1 - max(0, d) + λ·Σ abnormal`.
//! - `max_hinge` — the classic hinge on the two bag maxima plus temporal
//!   smoothness and sparsity on the abnormal bag:
//!   `max(0, 1 - max(a) + max(n)) + λ1·Σ(aᵢ-aᵢ₊₁)² + λ2·Σ a`.
//! - `max_hinge_avg` — the hinge with both maxima replaced by bag means,
//!   smoothness and sparsity unchanged.
//!
//! Every variant returns the loss together with its exact gradient with
//! respect to both score vectors; the trainer feeds those gradients into
//! the per-bag tapes.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::data::Label;
use crate::error::{Error, Result};
use crate::network::ModelParams;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossVariant {
    MeanDistance,
    MaxHinge,
    MaxHingeAvgMapping,
}

impl fmt::Display for LossVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LossVariant::MeanDistance => write!(f, "mean_distance"),
            LossVariant::MaxHinge => write!(f, "max_hinge"),
            LossVariant::MaxHingeAvgMapping => write!(f, "max_hinge_avg"),
        }
    }
}

impl FromStr for LossVariant {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mean_distance" => Ok(LossVariant::MeanDistance),
            "max_hinge" => Ok(LossVariant::MaxHinge),
            "max_hinge_avg" | "max_hinge_avg_mapping" => Ok(LossVariant::MaxHingeAvgMapping),
            other => Err(Error::Validation(format!(
                "unknown loss variant {other:?}; expected mean_distance, max_hinge or max_hinge_avg"
            ))),
        }
    }
}

fn default_lambda() -> f64 {
    8e-5
}
fn default_weight_decay() -> f64 {
    1e-3
}
fn default_variant() -> LossVariant {
    LossVariant::MeanDistance
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LossConfig {
    #[serde(default = "default_variant")]
    pub variant: LossVariant,
    /// λ of the mean-distance sparsity term.
    #[serde(default = "default_lambda")]
    pub lambda_sparsity: f64,
    /// λ1 (temporal smoothness) of the hinge losses.
    #[serde(default = "default_lambda")]
    pub lambda1_smooth: f64,
    /// λ2 (sparsity) of the hinge losses.
    #[serde(default = "default_lambda")]
    pub lambda2_sparse: f64,
    /// Coefficient of the Σ‖W‖² penalty over conv and dense kernels.
    #[serde(default = "default_weight_decay")]
    pub l2_weight_decay: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            variant: default_variant(),
            lambda_sparsity: default_lambda(),
            lambda1_smooth: default_lambda(),
            lambda2_sparse: default_lambda(),
            l2_weight_decay: default_weight_decay(),
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        if self.lambda_sparsity < 0.0
            || self.lambda1_smooth < 0.0
            || self.lambda2_sparse < 0.0
            || self.l2_weight_decay < 0.0
        {
            return Err(Error::Validation("loss coefficients must be non-negative".into()));
        }
        Ok(())
    }
}

/// Instance scores of one bag together with its bag label.
#[derive(Debug, Clone, PartialEq)]
pub struct BagScores {
    scores: Vec<f64>,
    label: Label,
}

impl BagScores {
    pub fn new(scores: Vec<f64>, label: Label) -> Result<Self> {
        if scores.is_empty() {
            return Err(Error::Contract("bag scores must not be empty".into()));
        }
        if let Some(bad) = scores.iter().find(|s| !(0.0 < **s && **s < 1.0)) {
            return Err(Error::Contract(format!(
                "bag scores must lie strictly in (0, 1), got {bad}"
            )));
        }
        Ok(Self { scores, label })
    }

    pub fn scores(&self) -> &[f64] {
        &self.scores
    }

    pub fn label(&self) -> Label {
        self.label
    }

    pub fn mean(&self) -> f64 {
        self.scores.iter().sum::<f64>() / self.scores.len() as f64
    }
}

/// Loss value plus its gradient with respect to both score vectors.
#[derive(Debug, Clone)]
pub struct PairLoss {
    pub value: f64,
    pub abnormal_grad: Vec<f64>,
    pub normal_grad: Vec<f64>,
}

fn check_pair(abnormal: &BagScores, normal: &BagScores) -> Result<()> {
    if abnormal.label != Label::Abnormal {
        return Err(Error::Contract("first bag of a pair must be labeled abnormal".into()));
    }
    if normal.label != Label::Normal {
        return Err(Error::Contract("second bag of a pair must be labeled normal".into()));
    }
    if abnormal.scores.len() != normal.scores.len() {
        return Err(Error::Contract(format!(
            "paired bags must have equal size, got {} and {}",
            abnormal.scores.len(),
            normal.scores.len()
        )));
    }
    Ok(())
}

fn argmax(scores: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in scores.iter().enumerate() {
        if *v > scores[best] {
            best = i;
        }
    }
    best
}

/// `1 - max(0, d) + λ·Σ abnormal` with `d = mean(abnormal) - mean(normal)`.
/// On the d ≤ 0 plateau the ranking term contributes no gradient at all.
pub fn mean_distance_loss(abnormal: &BagScores, normal: &BagScores, lambda: f64) -> Result<PairLoss> {
    check_pair(abnormal, normal)?;
    let n = abnormal.scores.len() as f64;
    let sum_abn: f64 = abnormal.scores.iter().sum();
    let d = sum_abn / n - normal.mean();
    let value = 1.0 - d.max(0.0) + lambda * sum_abn;

    let ga = if d > 0.0 { lambda - 1.0 / n } else { lambda };
    let gn = if d > 0.0 { 1.0 / n } else { 0.0 };
    Ok(PairLoss {
        value,
        abnormal_grad: vec![ga; abnormal.scores.len()],
        normal_grad: vec![gn; normal.scores.len()],
    })
}

fn smoothness(scores: &[f64], lambda1: f64) -> (f64, Vec<f64>) {
    let mut value = 0.0;
    let mut grad = vec![0.0; scores.len()];
    for i in 0..scores.len().saturating_sub(1) {
        let delta = scores[i] - scores[i + 1];
        value += delta * delta;
        grad[i] += 2.0 * lambda1 * delta;
        grad[i + 1] -= 2.0 * lambda1 * delta;
    }
    (lambda1 * value, grad)
}

/// `max(0, 1 - max(a) + max(n)) + λ1·Σ(aᵢ-aᵢ₊₁)² + λ2·Σa`. Hinge
/// subgradients route to the arg-max instances (lowest index on ties).
pub fn max_hinge_loss(
    abnormal: &BagScores,
    normal: &BagScores,
    lambda1: f64,
    lambda2: f64,
) -> Result<PairLoss> {
    check_pair(abnormal, normal)?;
    let ia = argmax(&abnormal.scores);
    let in_ = argmax(&normal.scores);
    let hinge_arg = 1.0 - abnormal.scores[ia] + normal.scores[in_];
    let (smooth, mut abnormal_grad) = smoothness(&abnormal.scores, lambda1);
    let sum_abn: f64 = abnormal.scores.iter().sum();
    let value = hinge_arg.max(0.0) + smooth + lambda2 * sum_abn;

    abnormal_grad.iter_mut().for_each(|g| *g += lambda2);
    let mut normal_grad = vec![0.0; normal.scores.len()];
    if hinge_arg > 0.0 {
        abnormal_grad[ia] -= 1.0;
        normal_grad[in_] += 1.0;
    }
    Ok(PairLoss { value, abnormal_grad, normal_grad })
}

/// The hinge loss with both max operations replaced by bag means;
/// smoothness and sparsity terms are unchanged.
pub fn max_hinge_avg_mapping_loss(
    abnormal: &BagScores,
    normal: &BagScores,
    lambda1: f64,
    lambda2: f64,
) -> Result<PairLoss> {
    check_pair(abnormal, normal)?;
    let n = abnormal.scores.len() as f64;
    let hinge_arg = 1.0 - abnormal.mean() + normal.mean();
    let (smooth, mut abnormal_grad) = smoothness(&abnormal.scores, lambda1);
    let sum_abn: f64 = abnormal.scores.iter().sum();
    let value = hinge_arg.max(0.0) + smooth + lambda2 * sum_abn;

    abnormal_grad.iter_mut().for_each(|g| *g += lambda2);
    let mut normal_grad = vec![0.0; normal.scores.len()];
    if hinge_arg > 0.0 {
        abnormal_grad.iter_mut().for_each(|g| *g -= 1.0 / n);
        normal_grad.iter_mut().for_each(|g| *g += 1.0 / n);
    }
    Ok(PairLoss { value, abnormal_grad, normal_grad })
}

/// Dispatch on the configured variant.
pub fn pair_loss(cfg: &LossConfig, abnormal: &BagScores, normal: &BagScores) -> Result<PairLoss> {
    match cfg.variant {
        LossVariant::MeanDistance => mean_distance_loss(abnormal, normal, cfg.lambda_sparsity),
        LossVariant::MaxHinge => {
            max_hinge_loss(abnormal, normal, cfg.lambda1_smooth, cfg.lambda2_sparse)
        }
        LossVariant::MaxHingeAvgMapping => {
            max_hinge_avg_mapping_loss(abnormal, normal, cfg.lambda1_smooth, cfg.lambda2_sparse)
        }
    }
}

/// `l2_weight_decay · Σ‖W‖²` over conv kernels and the dense head
/// weights; biases are excluded.
pub fn weight_decay_term(params: &ModelParams, weight_decay: f64) -> f64 {
    weight_decay
        * params
            .kernel_arrays()
            .iter()
            .map(|a| a.values.iter().map(|w| w * w).sum::<f64>())
            .sum::<f64>()
}

/// Add the weight-decay gradient `2·wd·W` into the kernel grad slots.
pub fn add_weight_decay_grads(params: &mut ModelParams, weight_decay: f64) {
    for arr in params.kernel_arrays_mut() {
        for (g, w) in arr.grad.iter_mut().zip(&arr.values) {
            *g += 2.0 * weight_decay * w;
        }
    }
}

/// Mean of the per-pair losses plus the weight-decay penalty.
pub fn batch_loss(
    pairs: &[(BagScores, BagScores)],
    cfg: &LossConfig,
    params: &ModelParams,
) -> Result<f64> {
    if pairs.is_empty() {
        return Err(Error::Contract("batch loss needs at least one pair".into()));
    }
    let mut total = 0.0;
    for (abnormal, normal) in pairs {
        total += pair_loss(cfg, abnormal, normal)?.value;
    }
    Ok(total / pairs.len() as f64 + weight_decay_term(params, cfg.l2_weight_decay))
}
