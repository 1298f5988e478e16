//! Binary network checkpoints.
//!
//! Layout (all integers u32 little-endian):
//! magic `OPUMLP\0\0`, format version, layer count, then per layer
//! `n_in, n_out, activation tag`, then for each layer the row-major weights
//! followed by the biases as little-endian f64.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{Activation, Layer, MlpParams, NnetError};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"OPUMLP\0\0";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerShape {
    pub n_in: usize,
    pub n_out: usize,
    pub activation: Activation,
}

/// JSON description written next to every checkpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointSidecar {
    pub format_version: u32,
    pub layers: Vec<LayerShape>,
    pub param_count: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config_hash: Option<String>,
}

impl CheckpointSidecar {
    pub fn describe(params: &MlpParams, config_hash: Option<&str>) -> Self {
        Self {
            format_version: CHECKPOINT_VERSION,
            layers: params
                .layers()
                .iter()
                .map(|l| LayerShape { n_in: l.n_in, n_out: l.n_out, activation: l.activation })
                .collect(),
            param_count: params.param_count(),
            config_hash: config_hash.map(str::to_owned),
        }
    }
}

pub fn write_checkpoint(params: &MlpParams) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + 12 * params.n_layers() + 8 * params.param_count());
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    out.extend_from_slice(&(params.n_layers() as u32).to_le_bytes());
    for l in params.layers() {
        out.extend_from_slice(&(l.n_in as u32).to_le_bytes());
        out.extend_from_slice(&(l.n_out as u32).to_le_bytes());
        out.extend_from_slice(&(l.activation.tag() as u32).to_le_bytes());
    }
    for l in params.layers() {
        for v in l.weights.iter().chain(&l.bias) {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8], NnetError> {
        if self.pos + n > self.buf.len() {
            return Err(NnetError::Checkpoint(format!("truncated at byte {}", self.pos)));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, NnetError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn f64(&mut self) -> Result<f64, NnetError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}

pub fn read_checkpoint(bytes: &[u8]) -> Result<MlpParams, NnetError> {
    let mut r = Reader { buf: bytes, pos: 0 };
    if r.take(8)? != CHECKPOINT_MAGIC {
        return Err(NnetError::Checkpoint("bad magic".into()));
    }
    let version = r.u32()?;
    if version != CHECKPOINT_VERSION {
        return Err(NnetError::Checkpoint(format!("unsupported format version {version}")));
    }
    let n = r.u32()? as usize;
    let mut shapes = Vec::with_capacity(n);
    for _ in 0..n {
        let n_in = r.u32()? as usize;
        let n_out = r.u32()? as usize;
        let tag = r.u32()?;
        let act = u8::try_from(tag)
            .ok()
            .and_then(Activation::from_tag)
            .ok_or_else(|| NnetError::Checkpoint(format!("unknown activation tag {tag}")))?;
        shapes.push((n_in, n_out, act));
    }
    let mut layers = Vec::with_capacity(n);
    for (n_in, n_out, activation) in shapes {
        let weights = (0..n_in * n_out).map(|_| r.f64()).collect::<Result<Vec<_>, _>>()?;
        let bias = (0..n_out).map(|_| r.f64()).collect::<Result<Vec<_>, _>>()?;
        layers.push(Layer { n_in, n_out, weights, bias, activation });
    }
    if r.pos != bytes.len() {
        return Err(NnetError::Checkpoint(format!("{} trailing bytes", bytes.len() - r.pos)));
    }
    MlpParams::new(layers)
}

fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

/// Writes `path` and the JSON sidecar `path.json`.
pub fn save_checkpoint(path: &Path, params: &MlpParams, config_hash: Option<&str>) -> Result<(), NnetError> {
    fs::write(path, write_checkpoint(params))?;
    let side = CheckpointSidecar::describe(params, config_hash);
    let json = serde_json::to_string_pretty(&side).map_err(|e| NnetError::Checkpoint(e.to_string()))?;
    fs::write(sidecar_path(path), json + "\n")?;
    Ok(())
}

/// Reads a checkpoint and checks it against its sidecar.
pub fn load_checkpoint(path: &Path) -> Result<(MlpParams, CheckpointSidecar), NnetError> {
    let params = read_checkpoint(&fs::read(path)?)?;
    let side_path = sidecar_path(path);
    let side: CheckpointSidecar = serde_json::from_slice(&fs::read(&side_path)?)
        .map_err(|e| NnetError::Checkpoint(format!("{}: {e}", side_path.display())))?;
    let expect = CheckpointSidecar::describe(&params, side.config_hash.as_deref());
    if expect != side {
        return Err(NnetError::Checkpoint(format!("{} disagrees with the binary checkpoint", side_path.display())));
    }
    Ok((params, side))
}
