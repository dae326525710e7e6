//! On-disk formats: TEDF feature files, annotation CSV, dataset manifest.
//!
//! TEDF layout (little-endian): magic `TEDF`, format version `u32`,
//! `n_clips: u32`, `dim: u32`, then `n_clips * dim` 32-bit floats
//! row-major. A `.csv` extension switches to one comma-separated row per
//! clip; both encodings carry the same 32-bit values.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{Error, Result};

use super::{FeatureFile, Label};

pub const TEDF_MAGIC: [u8; 4] = *b"TEDF";
pub const TEDF_VERSION: u32 = 1;

fn video_id_of(path: &Path) -> String {
    path.file_stem().map_or_else(|| "unnamed".into(), |s| s.to_string_lossy().into_owned())
}

pub fn write_feature_file(path: &Path, features: &FeatureFile) -> Result<()> {
    if path.extension().is_some_and(|e| e == "csv") {
        return write_feature_csv(path, features);
    }
    let mut w = BufWriter::new(fs::File::create(path)?);
    w.write_all(&TEDF_MAGIC)?;
    w.write_all(&TEDF_VERSION.to_le_bytes())?;
    w.write_all(&(features.n_clips as u32).to_le_bytes())?;
    w.write_all(&(features.dim as u32).to_le_bytes())?;
    for v in &features.values {
        w.write_all(&v.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

fn write_feature_csv(path: &Path, features: &FeatureFile) -> Result<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    for clip in 0..features.n_clips {
        let row: Vec<String> = features.row(clip).iter().map(|v| format!("{v}")).collect();
        writeln!(w, "{}", row.join(","))?;
    }
    w.flush()?;
    Ok(())
}

/// Load a feature file; the encoding is picked by extension (`.csv` is
/// textual, anything else is TEDF binary). Rows that are not unit-l2
/// within 1e-3 produce a warning on stderr but still load.
pub fn load_feature_file(path: &Path) -> Result<FeatureFile> {
    let features = if path.extension().is_some_and(|e| e == "csv") {
        load_feature_csv(path)?
    } else {
        load_feature_tedf(path)?
    };
    let off = features.off_unit_rows();
    if off > 0 {
        eprintln!(
            "warning: {}: {off} of {} feature rows deviate from unit l2 norm by more than 1e-3",
            path.display(),
            features.n_clips
        );
    }
    Ok(features)
}

fn load_feature_tedf(path: &Path) -> Result<FeatureFile> {
    let bytes = fs::read(path)
        .map_err(|e| Error::Format(format!("cannot read {}: {e}", path.display())))?;
    let need = |offset: usize, len: usize| -> Result<&[u8]> {
        bytes.get(offset..offset + len).ok_or_else(|| {
            Error::Format(format!(
                "{}: truncated at byte {}: expected {} bytes, file has {}",
                path.display(),
                offset,
                offset + len,
                bytes.len()
            ))
        })
    };

    let magic = need(0, 4)?;
    if magic != TEDF_MAGIC {
        return Err(Error::Format(format!(
            "{}: bad magic {:?} at byte 0, expected {:?}",
            path.display(),
            magic,
            TEDF_MAGIC
        )));
    }
    let version = u32::from_le_bytes(need(4, 4)?.try_into().unwrap());
    if version != TEDF_VERSION {
        return Err(Error::Format(format!(
            "{}: unsupported format version {version} at byte 4",
            path.display()
        )));
    }
    let n_clips = u32::from_le_bytes(need(8, 4)?.try_into().unwrap()) as usize;
    let dim = u32::from_le_bytes(need(12, 4)?.try_into().unwrap()) as usize;
    let payload = need(16, n_clips.saturating_mul(dim).saturating_mul(4))?;
    if bytes.len() > 16 + n_clips * dim * 4 {
        return Err(Error::Format(format!(
            "{}: {} trailing bytes after the payload",
            path.display(),
            bytes.len() - 16 - n_clips * dim * 4
        )));
    }

    let mut values = Vec::with_capacity(n_clips * dim);
    for (i, chunk) in payload.chunks_exact(4).enumerate() {
        let v = f32::from_le_bytes(chunk.try_into().unwrap());
        if !v.is_finite() {
            return Err(Error::Format(format!(
                "{}: non-finite value at byte {}",
                path.display(),
                16 + i * 4
            )));
        }
        values.push(v);
    }
    FeatureFile::new(video_id_of(path), n_clips, dim, values)
}

fn load_feature_csv(path: &Path) -> Result<FeatureFile> {
    let text = fs::read_to_string(path)
        .map_err(|e| Error::Format(format!("cannot read {}: {e}", path.display())))?;
    let mut values = Vec::new();
    let mut dim = 0usize;
    let mut n_clips = 0usize;
    for (lineno, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let row: Vec<f32> = line
            .split(',')
            .map(|cell| {
                cell.trim().parse::<f32>().map_err(|e| {
                    Error::Format(format!("{}:{}: bad float {cell:?}: {e}", path.display(), lineno + 1))
                })
            })
            .collect::<Result<_>>()?;
        if row.iter().any(|v| !v.is_finite()) {
            return Err(Error::Format(format!(
                "{}:{}: non-finite value",
                path.display(),
                lineno + 1
            )));
        }
        if n_clips == 0 {
            dim = row.len();
        } else if row.len() != dim {
            return Err(Error::Format(format!(
                "{}:{}: row has {} values, expected {dim}",
                path.display(),
                lineno + 1,
                row.len()
            )));
        }
        values.extend(row);
        n_clips += 1;
    }
    FeatureFile::new(video_id_of(path), n_clips, dim, values)
}

// ── annotations ──────────────────────────────────────────────────────

/// Frame-level ground truth for one test video. Intervals are half-open
/// `[start, end)` frame ranges, sorted and non-overlapping; normal videos
/// carry none.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AnnotationRecord {
    pub video_id: String,
    pub label: Label,
    pub n_frames: usize,
    pub intervals: Vec<(usize, usize)>,
}

impl AnnotationRecord {
    /// Per-frame anomaly mask derived from the intervals.
    pub fn frame_mask(&self) -> Vec<bool> {
        let mut mask = vec![false; self.n_frames];
        for &(lo, hi) in &self.intervals {
            for m in mask.iter_mut().take(hi).skip(lo) {
                *m = true;
            }
        }
        mask
    }

    fn validate(&self, row: usize) -> Result<()> {
        let at = |msg: String| Error::Validation(format!("annotation row {row} ({}): {msg}", self.video_id));
        if self.n_frames == 0 {
            return Err(at("n_frames must be at least 1".into()));
        }
        if self.label == Label::Normal && !self.intervals.is_empty() {
            return Err(at("normal videos must not have anomalous intervals".into()));
        }
        let mut prev_end = 0usize;
        for (i, &(lo, hi)) in self.intervals.iter().enumerate() {
            if lo >= hi {
                return Err(at(format!("interval {i} [{lo}, {hi}) is empty or reversed")));
            }
            if hi > self.n_frames {
                return Err(at(format!(
                    "interval {i} [{lo}, {hi}) exceeds n_frames {}",
                    self.n_frames
                )));
            }
            if i > 0 && lo < prev_end {
                return Err(at(format!("interval {i} overlaps or is out of order")));
            }
            prev_end = hi;
        }
        Ok(())
    }
}

/// Parse annotation CSV: `video_id,label,n_frames[,start,end]...`.
/// `-1,-1` sentinel pairs are ignored (the convention used by public
/// frame-level annotation files).
pub fn load_annotations(path: &Path) -> Result<Vec<AnnotationRecord>> {
    let text = fs::read_to_string(path)
        .map_err(|e| Error::Format(format!("cannot read {}: {e}", path.display())))?;
    let mut records = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let row = lineno + 1;
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() < 3 {
            return Err(Error::Format(format!(
                "{}:{row}: expected at least video_id,label,n_frames",
                path.display()
            )));
        }
        let video_id = fields[0].to_string();
        let label = Label::from_str(fields[1])
            .map_err(|e| Error::Format(format!("{}:{row}: {e}", path.display())))?;
        let n_frames: usize = fields[2]
            .parse()
            .map_err(|e| Error::Format(format!("{}:{row}: bad n_frames: {e}", path.display())))?;
        let rest = &fields[3..];
        if rest.len() % 2 != 0 {
            return Err(Error::Format(format!(
                "{}:{row}: interval fields must come in start,end pairs",
                path.display()
            )));
        }
        let mut intervals = Vec::new();
        for pair in rest.chunks_exact(2) {
            let lo: i64 = pair[0]
                .parse()
                .map_err(|e| Error::Format(format!("{}:{row}: bad interval start: {e}", path.display())))?;
            let hi: i64 = pair[1]
                .parse()
                .map_err(|e| Error::Format(format!("{}:{row}: bad interval end: {e}", path.display())))?;
            if lo == -1 && hi == -1 {
                continue;
            }
            if lo < 0 || hi < 0 {
                return Err(Error::Validation(format!(
                    "{}:{row}: negative interval [{lo}, {hi})",
                    path.display()
                )));
            }
            intervals.push((lo as usize, hi as usize));
        }
        let record = AnnotationRecord { video_id, label, n_frames, intervals };
        record.validate(row)?;
        records.push(record);
    }
    Ok(records)
}

pub fn write_annotations(path: &Path, records: &[AnnotationRecord]) -> Result<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    for r in records {
        write!(w, "{},{},{}", r.video_id, r.label, r.n_frames)?;
        for &(lo, hi) in &r.intervals {
            write!(w, ",{lo},{hi}")?;
        }
        writeln!(w)?;
    }
    w.flush()?;
    Ok(())
}

// ── manifest ─────────────────────────────────────────────────────────

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Test,
}

impl std::fmt::Display for Split {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Split::Train => write!(f, "train"),
            Split::Test => write!(f, "test"),
        }
    }
}

impl FromStr for Split {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "test" => Ok(Split::Test),
            other => Err(Error::Format(format!("unknown split {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ManifestRow {
    pub video_id: String,
    pub split: Split,
    pub label: Label,
    /// Relative to the manifest's directory.
    pub feature_path: PathBuf,
    pub n_frames: usize,
}

/// Dataset index: one row per video plus free-form `# key=value`
/// metadata lines at the top of the file.
#[derive(Debug, Clone)]
pub struct Manifest {
    pub rows: Vec<ManifestRow>,
    pub metadata: BTreeMap<String, String>,
    pub dir: PathBuf,
}

impl Manifest {
    pub fn resolve(&self, relative: &Path) -> PathBuf {
        self.dir.join(relative)
    }

    /// Sibling annotation file, by convention `annotations.csv` next to
    /// the manifest (overridable through the `annotations` metadata key).
    pub fn annotations_path(&self) -> PathBuf {
        let name = self.metadata.get("annotations").map_or("annotations.csv", String::as_str);
        self.dir.join(name)
    }
}

pub fn load_manifest(path: &Path) -> Result<Manifest> {
    let text = fs::read_to_string(path)
        .map_err(|e| Error::Validation(format!("cannot read manifest {}: {e}", path.display())))?;
    let mut metadata = BTreeMap::new();
    let mut rows = Vec::new();
    let mut header_seen = false;
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix('#') {
            if let Some((k, v)) = rest.split_once('=') {
                metadata.insert(k.trim().to_string(), v.trim().to_string());
            }
            continue;
        }
        if !header_seen {
            // Tolerate a plain header line.
            if line.starts_with("video_id,") {
                header_seen = true;
                continue;
            }
            header_seen = true;
        }
        let row = lineno + 1;
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != 5 {
            return Err(Error::Format(format!(
                "{}:{row}: expected video_id,split,label,feature_path,n_frames",
                path.display()
            )));
        }
        rows.push(ManifestRow {
            video_id: fields[0].to_string(),
            split: Split::from_str(fields[1])
                .map_err(|e| Error::Format(format!("{}:{row}: {e}", path.display())))?,
            label: Label::from_str(fields[2])
                .map_err(|e| Error::Format(format!("{}:{row}: {e}", path.display())))?,
            feature_path: PathBuf::from(fields[3]),
            n_frames: fields[4]
                .parse()
                .map_err(|e| Error::Format(format!("{}:{row}: bad n_frames: {e}", path.display())))?,
        });
    }
    let dir = path.parent().unwrap_or_else(|| Path::new(".")).to_path_buf();
    Ok(Manifest { rows, metadata, dir })
}

pub fn write_manifest(
    path: &Path,
    rows: &[ManifestRow],
    metadata: &BTreeMap<String, String>,
) -> Result<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    for (k, v) in metadata {
        writeln!(w, "# {k}={v}")?;
    }
    writeln!(w, "video_id,split,label,feature_path,n_frames")?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{},{}",
            r.video_id,
            r.split,
            r.label,
            r.feature_path.display(),
            r.n_frames
        )?;
    }
    w.flush()?;
    Ok(())
}
