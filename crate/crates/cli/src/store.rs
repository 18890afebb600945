//! Curvature cache inside a run directory.

use std::fs;
use std::path::Path;

use nalgebra::DMatrix;
use pacbayes::curvature::BlockHessian;

use crate::CliError;

const MAGIC: &[u8; 4] = b"PBMX";

/// Layout: magic, `u32` layer, `u32` neurons, `u64` rows used, `u32` size,
/// then the matrix in column-major little-endian `f64`.
pub fn write_block(path: &Path, block: &BlockHessian) -> Result<(), CliError> {
    let k = block.fan_in();
    let mut bytes = Vec::with_capacity(24 + 8 * k * k);
    bytes.extend_from_slice(MAGIC);
    bytes.extend_from_slice(&(block.layer() as u32).to_le_bytes());
    bytes.extend_from_slice(&(block.neurons() as u32).to_le_bytes());
    bytes.extend_from_slice(&(block.n_used() as u64).to_le_bytes());
    bytes.extend_from_slice(&(k as u32).to_le_bytes());
    for v in block.matrix().iter() {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    fs::write(path, bytes).map_err(|e| CliError::Runtime(format!("cannot write {}: {e}", path.display())))
}

pub fn read_block(path: &Path) -> Result<BlockHessian, CliError> {
    let bytes = fs::read(path).map_err(|e| CliError::Runtime(format!("cannot read {}: {e}", path.display())))?;
    let bad = || CliError::Runtime(format!("{} is not a curvature block", path.display()));
    if bytes.len() < 24 || &bytes[..4] != MAGIC {
        return Err(bad());
    }
    let u32_at = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().unwrap()) as usize;
    let (layer, neurons, k) = (u32_at(4), u32_at(8), u32_at(20));
    let n_used = u64::from_le_bytes(bytes[12..20].try_into().unwrap()) as usize;
    if bytes.len() != 24 + 8 * k * k {
        return Err(bad());
    }
    let values: Vec<f64> = bytes[24..].chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
    Ok(BlockHessian::from_matrix(layer, neurons, DMatrix::from_vec(k, k, values), n_used))
}
