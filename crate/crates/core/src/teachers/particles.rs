//! Particle files: one record of K little-endian f64 per (input, sample),
//! input-major, with a JSON sidecar `<path>.json` describing the layout.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{ParticleCloud, TeacherError, TeacherKind};
use crate::numerics::SimplexPoint;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParticleSidecar {
    #[serde(rename = "K")]
    pub k: usize,
    #[serde(rename = "S")]
    pub s: usize,
    pub input_count: usize,
    pub teacher_kind: TeacherKind,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config_hash: Option<String>,
}

/// Particle clouds for a whole input set; cloud `i` belongs to input `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct ParticleStore {
    pub teacher_kind: TeacherKind,
    pub seed: u64,
    pub clouds: Vec<ParticleCloud>,
}

impl ParticleStore {
    pub fn new(teacher_kind: TeacherKind, seed: u64, clouds: Vec<ParticleCloud>) -> Result<Self, TeacherError> {
        let first = clouds.first().ok_or_else(|| TeacherError::Store("no clouds".into()))?;
        let (k, s) = (first.k(), first.len());
        if clouds.iter().any(|c| c.k() != k || c.len() != s) {
            return Err(TeacherError::Store("clouds differ in K or S".into()));
        }
        Ok(Self { teacher_kind, seed, clouds })
    }

    pub fn k(&self) -> usize {
        self.clouds[0].k()
    }

    pub fn s(&self) -> usize {
        self.clouds[0].len()
    }

    pub fn sidecar(&self, config_hash: Option<&str>) -> ParticleSidecar {
        ParticleSidecar {
            k: self.k(),
            s: self.s(),
            input_count: self.clouds.len(),
            teacher_kind: self.teacher_kind,
            seed: self.seed,
            config_hash: config_hash.map(str::to_owned),
        }
    }
}

fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

pub fn write_particle_store(path: &Path, store: &ParticleStore, config_hash: Option<&str>) -> Result<(), TeacherError> {
    let mut bytes = Vec::with_capacity(store.clouds.len() * store.s() * store.k() * 8);
    for cloud in &store.clouds {
        for p in &cloud.points {
            for v in p.probs() {
                bytes.extend_from_slice(&v.to_le_bytes());
            }
        }
    }
    fs::write(path, bytes)?;
    let json = serde_json::to_string_pretty(&store.sidecar(config_hash)).map_err(|e| TeacherError::Store(e.to_string()))?;
    fs::write(sidecar_path(path), json + "\n")?;
    Ok(())
}

pub fn read_particle_store(path: &Path) -> Result<(ParticleStore, ParticleSidecar), TeacherError> {
    let side_path = sidecar_path(path);
    let side: ParticleSidecar = serde_json::from_slice(&fs::read(&side_path)?)
        .map_err(|e| TeacherError::Store(format!("{}: {e}", side_path.display())))?;
    let bytes = fs::read(path)?;
    let expected = side.input_count * side.s * side.k * 8;
    if bytes.len() != expected {
        return Err(TeacherError::Store(format!(
            "{} holds {} bytes, sidecar implies {expected}",
            path.display(),
            bytes.len()
        )));
    }
    let mut values = bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")));
    let mut clouds = Vec::with_capacity(side.input_count);
    for i in 0..side.input_count {
        let points = (0..side.s)
            .map(|_| SimplexPoint::new(values.by_ref().take(side.k).collect()))
            .collect::<Result<Vec<_>, _>>()?;
        clouds.push(ParticleCloud::new(i, points)?);
    }
    Ok((ParticleStore::new(side.teacher_kind, side.seed, clouds)?, side))
}
