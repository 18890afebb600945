//! On-disk weights. A parameter file holds the magic `PBPV`, a version, the
//! layer count, `(fan_out, fan_in)` per layer, then little-endian f64 values.
//! A training run is saved as two parameter files plus `train.json`.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{NetSpec, ParamVector, TrainConfig, TrainRecord};
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"PBPV";
const VERSION: u32 = 1;

pub const THETA0_FILE: &str = "theta0.bin";
pub const THETA_STAR_FILE: &str = "theta_star.bin";
pub const RECORD_FILE: &str = "train.json";

pub fn write_params(path: &Path, theta: &ParamVector) -> Result<()> {
    let layers = theta.layout().layers();
    let mut buf = Vec::with_capacity(12 + layers.len() * 8 + theta.len() * 8);
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    buf.extend_from_slice(&(layers.len() as u32).to_le_bytes());
    for l in layers {
        buf.extend_from_slice(&(l.fan_out as u32).to_le_bytes());
        buf.extend_from_slice(&(l.fan_in as u32).to_le_bytes());
    }
    for v in theta.values() {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    fs::write(path, buf).map_err(|e| Error::io(path, e))
}

/// Reads a parameter file and checks it against `spec`.
pub fn read_params(path: &Path, spec: &NetSpec) -> Result<ParamVector> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let truncated = |detail: &str| Error::Truncated { path: path.to_path_buf(), detail: detail.into() };
    if bytes.len() < 12 {
        return Err(truncated("header"));
    }
    if &bytes[..4] != MAGIC {
        return Err(Error::BadMagic {
            path: path.to_path_buf(),
            expected: u32::from_be_bytes(*MAGIC),
            found: u32::from_be_bytes(bytes[..4].try_into().unwrap()),
        });
    }
    let u32_at = |at: usize| u32::from_le_bytes(bytes[at..at + 4].try_into().unwrap()) as usize;
    if u32_at(4) != VERSION as usize {
        return Err(Error::InvalidArgument(format!("unsupported parameter file version {}", u32_at(4))));
    }
    let count = u32_at(8);
    let body = 12 + count * 8;
    if bytes.len() < body {
        return Err(truncated("layer shapes"));
    }
    let layout = spec.layout();
    let shapes_match = count == layout.layers().len()
        && layout.layers().iter().enumerate().all(|(i, l)| u32_at(12 + 8 * i) == l.fan_out && u32_at(16 + 8 * i) == l.fan_in);
    if !shapes_match {
        return Err(Error::InvalidArgument(format!("{} does not match network widths {:?}", path.display(), spec.widths())));
    }
    if bytes.len() != body + layout.len() * 8 {
        return Err(truncated("parameter values"));
    }
    let values = bytes[body..].chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
    ParamVector::new(layout, values)
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RecordMeta {
    spec: NetSpec,
    config: TrainConfig,
    seed: u64,
    epoch_losses: Vec<f64>,
    train_error: f64,
    test_error: Option<f64>,
    theta0: String,
    theta_star: String,
}

/// Writes the record into `dir` and returns the paths written.
pub fn save_record(dir: &Path, record: &TrainRecord) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let p0 = dir.join(THETA0_FILE);
    let p1 = dir.join(THETA_STAR_FILE);
    let pm = dir.join(RECORD_FILE);
    write_params(&p0, &record.theta0)?;
    write_params(&p1, &record.theta_star)?;
    let meta = RecordMeta {
        spec: record.spec.clone(),
        config: record.config.clone(),
        seed: record.seed,
        epoch_losses: record.epoch_losses.clone(),
        train_error: record.train_error,
        test_error: record.test_error,
        theta0: THETA0_FILE.into(),
        theta_star: THETA_STAR_FILE.into(),
    };
    let json = serde_json::to_string_pretty(&meta)?;
    fs::write(&pm, json).map_err(|e| Error::io(&pm, e))?;
    Ok(vec![p0, p1, pm])
}

pub fn load_record(dir: &Path) -> Result<TrainRecord> {
    let pm = dir.join(RECORD_FILE);
    let text = fs::read_to_string(&pm).map_err(|e| Error::io(&pm, e))?;
    let meta: RecordMeta = serde_json::from_str(&text)?;
    let theta0 = read_params(&dir.join(&meta.theta0), &meta.spec)?;
    let theta_star = read_params(&dir.join(&meta.theta_star), &meta.spec)?;
    Ok(TrainRecord {
        spec: meta.spec,
        config: meta.config,
        seed: meta.seed,
        theta0,
        theta_star,
        epoch_losses: meta.epoch_losses,
        train_error: meta.train_error,
        test_error: meta.test_error,
    })
}
