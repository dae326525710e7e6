//! Weakly supervised video anomaly detection with a temporal
//! encoding-decoding network trained under multiple-instance ranking losses.
//!
//! A video is a *bag* of 32 ordered instances (averaged clip feature
//! vectors). The network scores every instance in `(0, 1)`; training only
//! sees bag-level normal/abnormal labels and ranks abnormal bags above
//! normal ones. Evaluation expands instance scores to frame level and
//! reports ROC/AUC plus the false-alarm rate on normal videos.
//!
//! Module map:
//! - [`autodiff`] — flat `f64` tensors, conv/pool/norm/dense ops, and a
//!   record-replay tape for reverse-mode gradients.
//! - [`network`] — the two-stage temporal encoder/decoder with a
//!   time-distributed sigmoid head.
//! - [`loss`] — mean-distance and max-hinge MIL ranking losses with
//!   analytic score gradients.
//! - [`trainer`] — Adagrad mini-batch loop, checkpoint/resume, and the
//!   finite-difference gradient checker.
//! - [`data`] — TEDF/CSV feature files, bag building, annotations,
//!   manifests, and the synthetic dataset generator.
//! - [`eval`] — frame-level score expansion, ROC/AUC, false-alarm rate.
//! - [`commands`] — the subcommand entry points behind the `tedmil` binary.

pub mod autodiff;
pub mod checkpoint;
pub mod commands;
pub mod config;
pub mod data;
pub mod error;
pub mod eval;
pub mod loss;
pub mod network;
pub mod par;
pub mod rng;
pub mod trainer;

pub use error::{Error, Result};
