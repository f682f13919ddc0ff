//! Binary checkpoints: `MRBMCKPT`, a little-endian `u64` header length, a
//! JSON header with the layer shapes and training config, then every
//! parameter as a little-endian `f64` in flatten order.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::mlp::{MlpParams, ScoreModel};
use super::train::TrainConfig;
use crate::error::{Error, Result};

const MAGIC: &[u8; 8] = b"MRBMCKPT";
const VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub version: u32,
    pub state_dim: usize,
    pub width: usize,
    /// `[rows, cols]` of each parameter tensor in flatten order.
    pub shapes: Vec<[usize; 2]>,
    pub config: Option<TrainConfig>,
}

fn corrupt(reason: impl Into<String>) -> Error {
    Error::Parse {
        line: 0,
        reason: reason.into(),
    }
}

pub fn write_checkpoint<W: Write>(mut w: W, params: &MlpParams, config: Option<&TrainConfig>) -> Result<()> {
    let header = CheckpointHeader {
        version: VERSION,
        state_dim: params.state_dim,
        width: params.width,
        shapes: (0..params.num_params())
            .map(|i| {
                let (r, c) = params.param(i).dim();
                [r, c]
            })
            .collect(),
        config: config.cloned(),
    };
    let json = serde_json::to_vec(&header)?;
    w.write_all(MAGIC)?;
    w.write_all(&(json.len() as u64).to_le_bytes())?;
    w.write_all(&json)?;
    for v in params.flatten() {
        w.write_all(&v.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_checkpoint<R: Read>(mut r: R) -> Result<(MlpParams, Option<TrainConfig>)> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(corrupt("not a checkpoint file"));
    }
    let mut len = [0u8; 8];
    r.read_exact(&mut len)?;
    let len = u64::from_le_bytes(len);
    if len > 1 << 24 {
        return Err(corrupt("checkpoint header is implausibly large"));
    }
    let mut json = vec![0u8; len as usize];
    r.read_exact(&mut json)?;
    let header: CheckpointHeader = serde_json::from_slice(&json)?;
    if header.version != VERSION {
        return Err(corrupt(format!("unsupported checkpoint version {}", header.version)));
    }
    let mut params = MlpParams::zeros(header.state_dim, header.width);
    let expected: Vec<[usize; 2]> = (0..params.num_params())
        .map(|i| {
            let (a, b) = params.param(i).dim();
            [a, b]
        })
        .collect();
    if expected != header.shapes {
        return Err(corrupt("layer shapes do not match the network architecture"));
    }
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    if bytes.len() != 8 * params.param_count() {
        return Err(corrupt(format!(
            "expected {} parameter bytes, found {}",
            8 * params.param_count(),
            bytes.len()
        )));
    }
    let flat: Vec<f64> = bytes
        .chunks_exact(8)
        .map(|b| f64::from_le_bytes(b.try_into().expect("8-byte chunk")))
        .collect();
    params.unflatten(&flat)?;
    params.check()?;
    Ok((params, header.config))
}

pub fn save_checkpoint(path: &Path, params: &MlpParams, config: Option<&TrainConfig>) -> Result<()> {
    let f = std::fs::File::create(path)?;
    write_checkpoint(std::io::BufWriter::new(f), params, config)
}

pub fn load_checkpoint(path: &Path) -> Result<(MlpParams, Option<TrainConfig>)> {
    let f = std::fs::File::open(path)?;
    read_checkpoint(std::io::BufReader::new(f))
}
