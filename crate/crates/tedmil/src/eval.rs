//! Frame-level evaluation: score expansion, ROC/AUC, false-alarm rate.
//!
//! Instance scores expand to frames through the same floor partition the
//! bag builder uses, frames from every test video are pooled into one
//! ROC, and the false-alarm rate counts normal-video frames scored at or
//! above the 50% threshold.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::data::{load_annotations, load_feature_file, partition, Label, Manifest, Split};
use crate::error::{Error, Result};
use crate::network::{score_video, ModelParams};
use crate::par;

/// One evaluated test video.
#[derive(Debug, Clone)]
pub struct ScoredVideo {
    pub video_id: String,
    pub instance_scores: Vec<f64>,
    pub frame_scores: Vec<f64>,
    pub frame_mask: Vec<bool>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RocPoint {
    pub threshold: f64,
    pub fpr: f64,
    pub tpr: f64,
}

/// Threshold sweep over the pooled frames, endpoints (0,0) and (1,1)
/// included, with the trapezoidal area.
#[derive(Debug, Clone)]
pub struct RocCurve {
    pub points: Vec<RocPoint>,
    pub auc: f64,
}

/// Frame f takes the score of the instance whose segment contains it:
/// the same partition `build_bag` uses, so a planted instance anomaly
/// maps to exactly its frames.
pub fn expand_scores(instance_scores: &[f64], n_frames: usize) -> Vec<f64> {
    debug_assert!(!instance_scores.is_empty());
    (0..n_frames)
        .map(|f| instance_scores[partition::group_of(f, n_frames, instance_scores.len())])
        .collect()
}

/// Pooled frame-level ROC. Scores are swept from high to low; tied
/// scores collapse into one point, which makes the trapezoidal area
/// equal the Mann-Whitney statistic with ties counted one half.
pub fn roc_auc(scores: &[f64], mask: &[bool]) -> Result<RocCurve> {
    if scores.len() != mask.len() {
        return Err(Error::Contract(format!(
            "scores and mask lengths differ: {} vs {}",
            scores.len(),
            mask.len()
        )));
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::Contract("ROC scores must be finite".into()));
    }
    let positives = mask.iter().filter(|&&m| m).count();
    let negatives = mask.len() - positives;
    if positives == 0 || negatives == 0 {
        return Err(Error::Contract(format!(
            "ROC needs both classes in the pool, got {positives} positive / {negatives} negative frames"
        )));
    }

    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).unwrap());

    let mut points = vec![RocPoint { threshold: f64::INFINITY, fpr: 0.0, tpr: 0.0 }];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut i = 0;
    while i < order.len() {
        let threshold = scores[order[i]];
        while i < order.len() && scores[order[i]] == threshold {
            if mask[order[i]] {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        points.push(RocPoint {
            threshold,
            fpr: fp as f64 / negatives as f64,
            tpr: tp as f64 / positives as f64,
        });
    }

    let mut auc = 0.0;
    for pair in points.windows(2) {
        auc += (pair[1].fpr - pair[0].fpr) * (pair[1].tpr + pair[0].tpr) / 2.0;
    }
    Ok(RocCurve { points, auc })
}

/// Fraction of frames scored at or above the threshold (the boundary
/// counts as an alarm). The pool must hold only normal-video frames.
pub fn false_alarm_rate(normal_frame_scores: &[f64], threshold: f64) -> Result<f64> {
    if normal_frame_scores.is_empty() {
        return Err(Error::Contract("false-alarm rate needs a non-empty frame pool".into()));
    }
    let alarms = normal_frame_scores.iter().filter(|&&s| s >= threshold).count();
    Ok(alarms as f64 / normal_frame_scores.len() as f64)
}

#[derive(Debug, Clone)]
pub struct EvalReport {
    pub auc: f64,
    pub false_alarm_rate: f64,
    pub n_frames: usize,
    pub n_videos: usize,
    pub roc: RocCurve,
    pub videos: Vec<ScoredVideo>,
}

pub const FALSE_ALARM_THRESHOLD: f64 = 0.5;

/// Score every test video of the manifest and pool the frames.
/// Annotations must cover every test video and agree on frame counts.
pub fn evaluate(params: &ModelParams, manifest: &Manifest, renormalize: bool) -> Result<EvalReport> {
    let annotations = load_annotations(&manifest.annotations_path())?;
    let rows: Vec<_> = manifest.rows.iter().filter(|r| r.split == Split::Test).collect();
    if rows.is_empty() {
        return Err(Error::Validation("manifest has no test videos".into()));
    }

    let videos: Vec<Result<ScoredVideo>> = par::map(&rows, |row| {
        let ann = annotations
            .iter()
            .find(|a| a.video_id == row.video_id)
            .ok_or_else(|| {
                Error::Validation(format!("no annotation for test video {}", row.video_id))
            })?;
        if ann.n_frames != row.n_frames {
            return Err(Error::Validation(format!(
                "video {}: manifest says {} frames, annotation says {}",
                row.video_id, row.n_frames, ann.n_frames
            )));
        }
        if ann.label != row.label {
            return Err(Error::Validation(format!(
                "video {}: manifest and annotation disagree on the label",
                row.video_id
            )));
        }
        let features = load_feature_file(&manifest.resolve(&row.feature_path))?;
        let instance_scores = score_video(params, &features, renormalize)?;
        let frame_scores = expand_scores(&instance_scores, row.n_frames);
        Ok(ScoredVideo {
            video_id: row.video_id.clone(),
            instance_scores,
            frame_scores,
            frame_mask: ann.frame_mask(),
        })
    });
    let videos: Vec<ScoredVideo> = videos.into_iter().collect::<Result<_>>()?;

    let mut pooled_scores = Vec::new();
    let mut pooled_mask = Vec::new();
    let mut normal_scores = Vec::new();
    for (video, row) in videos.iter().zip(&rows) {
        pooled_scores.extend_from_slice(&video.frame_scores);
        pooled_mask.extend(video.frame_mask.iter().copied());
        if row.label == Label::Normal {
            normal_scores.extend_from_slice(&video.frame_scores);
        }
    }

    let roc = roc_auc(&pooled_scores, &pooled_mask)?;
    let far = false_alarm_rate(&normal_scores, FALSE_ALARM_THRESHOLD)?;
    Ok(EvalReport {
        auc: roc.auc,
        false_alarm_rate: far,
        n_frames: pooled_scores.len(),
        n_videos: videos.len(),
        roc,
        videos,
    })
}

/// Plot-ready CSVs: `roc_points.csv` (threshold,fpr,tpr), `metrics.csv`
/// (key,value), `frame_scores.csv` (video_id,frame,score,ground_truth).
pub fn write_report(report: &EvalReport, out_dir: &Path) -> Result<()> {
    fs::create_dir_all(out_dir)?;

    let mut w = BufWriter::new(fs::File::create(out_dir.join("roc_points.csv"))?);
    writeln!(w, "threshold,fpr,tpr")?;
    for p in &report.roc.points {
        writeln!(w, "{},{},{}", p.threshold, p.fpr, p.tpr)?;
    }
    w.flush()?;

    let mut w = BufWriter::new(fs::File::create(out_dir.join("metrics.csv"))?);
    writeln!(w, "metric,value")?;
    writeln!(w, "auc,{}", report.auc)?;
    writeln!(w, "false_alarm_rate,{}", report.false_alarm_rate)?;
    writeln!(w, "n_frames,{}", report.n_frames)?;
    writeln!(w, "n_videos,{}", report.n_videos)?;
    w.flush()?;

    let mut w = BufWriter::new(fs::File::create(out_dir.join("frame_scores.csv"))?);
    writeln!(w, "video_id,frame,score,ground_truth")?;
    for video in &report.videos {
        for (f, (score, truth)) in video.frame_scores.iter().zip(&video.frame_mask).enumerate() {
            writeln!(w, "{},{},{},{}", video.video_id, f, score, *truth as u8)?;
        }
    }
    w.flush()?;
    Ok(())
}
