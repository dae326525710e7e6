//! Binary model checkpoints.
//!
//! Layout, all little-endian: magic `TEDC`, format version `u32`, the
//! network config echo (input_dim, bag_size, kernel_length, the filter
//! counts, leaky_slope, dropout_rate, epsilon, seed), the training
//! position (iteration, train seed), then the ten parameter arrays in
//! [`crate::network::PARAM_ARRAY_NAMES`] order, each as `len: u64`
//! followed by `len` values and `len` Adagrad accumulators as 64-bit
//! floats. Round-trips are bit-exact.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::network::{ModelParams, NetworkConfig};

pub const CHECKPOINT_MAGIC: [u8; 4] = *b"TEDC";
pub const CHECKPOINT_VERSION: u32 = 1;

/// A model snapshot plus where training stood when it was taken.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub params: ModelParams,
    pub iteration: u64,
    pub train_seed: u64,
}

pub fn save(path: &Path, checkpoint: &Checkpoint) -> Result<()> {
    let cfg = &checkpoint.params.config;
    let mut w = BufWriter::new(fs::File::create(path)?);
    w.write_all(&CHECKPOINT_MAGIC)?;
    w.write_all(&CHECKPOINT_VERSION.to_le_bytes())?;

    w.write_all(&(cfg.input_dim as u32).to_le_bytes())?;
    w.write_all(&(cfg.bag_size as u32).to_le_bytes())?;
    w.write_all(&(cfg.kernel_length as u32).to_le_bytes())?;
    w.write_all(&(cfg.encoder_filters.len() as u32).to_le_bytes())?;
    for f in cfg.encoder_filters {
        w.write_all(&(f as u32).to_le_bytes())?;
    }
    w.write_all(&cfg.leaky_slope.to_le_bytes())?;
    w.write_all(&cfg.dropout_rate.to_le_bytes())?;
    w.write_all(&cfg.epsilon.to_le_bytes())?;
    w.write_all(&cfg.seed.to_le_bytes())?;

    w.write_all(&checkpoint.iteration.to_le_bytes())?;
    w.write_all(&checkpoint.train_seed.to_le_bytes())?;

    let arrays = checkpoint.params.arrays();
    w.write_all(&(arrays.len() as u32).to_le_bytes())?;
    for arr in arrays {
        w.write_all(&(arr.len() as u64).to_le_bytes())?;
        for v in &arr.values {
            w.write_all(&v.to_le_bytes())?;
        }
        for a in &arr.accum {
            w.write_all(&a.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

struct Reader<'a> {
    bytes: &'a [u8],
    offset: usize,
    path: String,
}

impl<'a> Reader<'a> {
    fn take(&mut self, len: usize) -> Result<&'a [u8]> {
        let chunk = self.bytes.get(self.offset..self.offset + len).ok_or_else(|| {
            Error::Format(format!(
                "{}: truncated at byte {}: expected {} bytes, file has {}",
                self.path,
                self.offset,
                self.offset + len,
                self.bytes.len()
            ))
        })?;
        self.offset += len;
        Ok(chunk)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64_vec(&mut self, len: usize) -> Result<Vec<f64>> {
        let mut out = Vec::with_capacity(len);
        for _ in 0..len {
            out.push(self.f64()?);
        }
        Ok(out)
    }
}

pub fn load(path: &Path) -> Result<Checkpoint> {
    let bytes = fs::read(path)
        .map_err(|e| Error::Validation(format!("cannot read checkpoint {}: {e}", path.display())))?;
    let mut r = Reader { bytes: &bytes, offset: 0, path: path.display().to_string() };

    let magic = r.take(4)?;
    if magic != CHECKPOINT_MAGIC {
        return Err(Error::Format(format!(
            "{}: bad magic {magic:?} at byte 0, expected {CHECKPOINT_MAGIC:?}",
            path.display()
        )));
    }
    let version = r.u32()?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::Format(format!(
            "{}: unsupported checkpoint version {version}",
            path.display()
        )));
    }

    let input_dim = r.u32()? as usize;
    let bag_size = r.u32()? as usize;
    let kernel_length = r.u32()? as usize;
    let n_filters = r.u32()? as usize;
    if n_filters != 2 {
        return Err(Error::Format(format!(
            "{}: expected 2 encoder filter counts, got {n_filters}",
            path.display()
        )));
    }
    let f1 = r.u32()? as usize;
    let f2 = r.u32()? as usize;
    let leaky_slope = r.f64()?;
    let dropout_rate = r.f64()?;
    let epsilon = r.f64()?;
    let seed = r.u64()?;
    let iteration = r.u64()?;
    let train_seed = r.u64()?;

    let config = NetworkConfig {
        input_dim,
        bag_size,
        kernel_length,
        encoder_filters: [f1, f2],
        leaky_slope,
        dropout_rate,
        epsilon,
        seed,
    };
    let mut params = ModelParams::init(&config)?;

    let n_arrays = r.u32()? as usize;
    if n_arrays != params.arrays().len() {
        return Err(Error::Format(format!(
            "{}: expected {} parameter arrays, got {n_arrays}",
            path.display(),
            params.arrays().len()
        )));
    }
    for arr in params.arrays_mut() {
        let len = r.u64()? as usize;
        if len != arr.len() {
            return Err(Error::Format(format!(
                "{}: array length {len} does not match the config echo ({})",
                path.display(),
                arr.len()
            )));
        }
        arr.values = r.f64_vec(len)?;
        arr.accum = r.f64_vec(len)?;
        arr.clear_grad();
    }
    if r.offset != bytes.len() {
        return Err(Error::Format(format!(
            "{}: {} trailing bytes after the payload",
            path.display(),
            bytes.len() - r.offset
        )));
    }
    Ok(Checkpoint { params, iteration, train_seed })
}
