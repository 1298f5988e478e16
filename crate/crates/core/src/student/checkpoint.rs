//! Student directory layout: `pm.bin`, `cm.bin` (network checkpoints with
//! their sidecars) and `student.json`.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{StudentError, StudentModel};
use crate::losses::LossKind;
use crate::nnet::{load_checkpoint, save_checkpoint};

pub const STUDENT_MANIFEST: &str = "student.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudentManifest {
    #[serde(rename = "K")]
    pub k: usize,
    pub alpha_floor: f64,
    pub loss_kind: LossKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config_hash: Option<String>,
}

pub fn save_student(dir: &Path, m: &StudentModel, manifest: &StudentManifest) -> Result<(), StudentError> {
    if manifest.k != m.k() {
        return Err(StudentError::Config(format!("manifest K = {}, model K = {}", manifest.k, m.k())));
    }
    fs::create_dir_all(dir)?;
    let hash = manifest.config_hash.as_deref();
    save_checkpoint(&dir.join("pm.bin"), &m.pm, hash)?;
    save_checkpoint(&dir.join("cm.bin"), &m.cm, hash)?;
    let json = serde_json::to_string_pretty(manifest).map_err(|e| StudentError::Config(e.to_string()))?;
    fs::write(dir.join(STUDENT_MANIFEST), json + "\n")?;
    Ok(())
}

pub fn load_student(dir: &Path) -> Result<(StudentModel, StudentManifest), StudentError> {
    let path = dir.join(STUDENT_MANIFEST);
    let manifest: StudentManifest = serde_json::from_slice(&fs::read(&path)?)
        .map_err(|e| StudentError::Config(format!("{}: {e}", path.display())))?;
    let (pm, _) = load_checkpoint(&dir.join("pm.bin"))?;
    let (cm, _) = load_checkpoint(&dir.join("cm.bin"))?;
    let mut m = StudentModel::new(pm, cm)?;
    if m.k() != manifest.k {
        return Err(StudentError::Config(format!("manifest K = {}, checkpoint K = {}", manifest.k, m.k())));
    }
    m.alpha_floor = manifest.alpha_floor;
    Ok((m, manifest))
}
