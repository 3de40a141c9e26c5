//! Versioned flat binary checkpoints.
//!
//! Layout: magic `NWB1`, u32 LE format version, u32 LE length of a UTF-8 JSON
//! config block, the config block, u64 LE parameter count, then the parameters
//! as little-endian f64 in declaration order.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::{Forecaster, ModelSpec, Normalizer, TargetScale, WindowConfig};
use crate::error::{Error, Result};
use crate::types::Seed;

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"NWB1";
const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub name: String,
    pub spec: ModelSpec,
    pub window: WindowConfig,
    pub normalizer: Normalizer,
    pub target: TargetScale,
    #[serde(skip)]
    pub params: Vec<f64>,
}

impl Checkpoint {
    pub fn from_model(model: &dyn Forecaster, window: WindowConfig, normalizer: Normalizer) -> Self {
        let (target, params) = model.state();
        Checkpoint {
            name: model.name().to_string(),
            spec: model.spec().clone(),
            window,
            normalizer,
            target,
            params,
        }
    }

    pub fn restore(&self) -> Result<Box<dyn Forecaster>> {
        let mut model = self
            .spec
            .build(&self.name, self.window.l_in, self.window.l_out, Seed(0))?;
        model.load_state(self.target, &self.params)?;
        Ok(model)
    }
}

pub fn write_checkpoint<W: Write>(mut w: W, ckpt: &Checkpoint) -> Result<()> {
    let config = serde_json::to_vec(ckpt)?;
    let io = |e| Error::Checkpoint(format!("write failed: {e}"));
    w.write_all(CHECKPOINT_MAGIC).map_err(io)?;
    w.write_all(&FORMAT_VERSION.to_le_bytes()).map_err(io)?;
    w.write_all(&(config.len() as u32).to_le_bytes()).map_err(io)?;
    w.write_all(&config).map_err(io)?;
    w.write_all(&(ckpt.params.len() as u64).to_le_bytes()).map_err(io)?;
    for p in &ckpt.params {
        w.write_all(&p.to_le_bytes()).map_err(io)?;
    }
    w.flush().map_err(io)
}

pub fn read_checkpoint<R: Read>(mut r: R) -> Result<Checkpoint> {
    let io = |e: std::io::Error| Error::Checkpoint(format!("truncated or unreadable: {e}"));
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic).map_err(io)?;
    if &magic != CHECKPOINT_MAGIC {
        return Err(Error::Checkpoint(format!("bad magic {magic:?}")));
    }
    let mut u32buf = [0u8; 4];
    r.read_exact(&mut u32buf).map_err(io)?;
    let version = u32::from_le_bytes(u32buf);
    if version != FORMAT_VERSION {
        return Err(Error::Checkpoint(format!("unsupported version {version}")));
    }
    r.read_exact(&mut u32buf).map_err(io)?;
    let mut config = vec![0u8; u32::from_le_bytes(u32buf) as usize];
    r.read_exact(&mut config).map_err(io)?;
    let mut ckpt: Checkpoint = serde_json::from_slice(&config)?;
    let mut u64buf = [0u8; 8];
    r.read_exact(&mut u64buf).map_err(io)?;
    let n = u64::from_le_bytes(u64buf) as usize;
    ckpt.params = Vec::with_capacity(n);
    for _ in 0..n {
        r.read_exact(&mut u64buf).map_err(io)?;
        ckpt.params.push(f64::from_le_bytes(u64buf));
    }
    Ok(ckpt)
}
