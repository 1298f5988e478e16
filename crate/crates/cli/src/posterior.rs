//! On-disk form of a posterior sample set.
//!
//! `posterior.json` holds the kind, count and provenance. MC dropout adds
//! `shared.bin` (network checkpoint) and `masks.json`; SGLD adds
//! `snapshots.bin`, a u64 LE count followed by length-prefixed checkpoints;
//! BLR adds `thetas.json`.

use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use opu_core::nnet::{load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint, DropoutMask};
use opu_core::teachers::{PosteriorSampleSet, PosteriorSamples, Provenance, TeacherKind};

use crate::run::{read_json, require, write_json};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorManifest {
    pub teacher_kind: TeacherKind,
    #[serde(rename = "S")]
    pub s: usize,
    pub provenance: Provenance,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub intercept: Option<bool>,
    pub config_hash: String,
}

/// Writes the sample set into `dir` and returns the file names written.
pub fn save_posterior(dir: &Path, set: &PosteriorSampleSet, hash: &str) -> Result<Vec<&'static str>> {
    let mut files = vec!["posterior.json"];
    let mut intercept = None;
    match &set.samples {
        PosteriorSamples::Mcdp { shared, masks } => {
            save_checkpoint(&dir.join("shared.bin"), shared, Some(hash))?;
            write_json(&dir.join("masks.json"), masks)?;
            files.extend(["shared.bin", "shared.bin.json", "masks.json"]);
        }
        PosteriorSamples::Sgld { snapshots } => {
            let mut out = (snapshots.len() as u64).to_le_bytes().to_vec();
            for net in snapshots {
                let bytes = write_checkpoint(net);
                out.extend_from_slice(&(bytes.len() as u64).to_le_bytes());
                out.extend_from_slice(&bytes);
            }
            fs::write(dir.join("snapshots.bin"), out)?;
            files.push("snapshots.bin");
        }
        PosteriorSamples::Blr { thetas, intercept: i } => {
            write_json(&dir.join("thetas.json"), thetas)?;
            intercept = Some(*i);
            files.push("thetas.json");
        }
    }
    let manifest = PosteriorManifest {
        teacher_kind: set.kind(),
        s: set.len(),
        provenance: set.provenance.clone(),
        intercept,
        config_hash: hash.into(),
    };
    write_json(&dir.join("posterior.json"), &manifest)?;
    Ok(files)
}

fn take_u64(bytes: &[u8], pos: &mut usize, path: &Path) -> Result<u64> {
    let Some(chunk) = bytes.get(*pos..*pos + 8) else {
        bail!("{}: truncated", path.display());
    };
    *pos += 8;
    Ok(u64::from_le_bytes(chunk.try_into().expect("8 bytes")))
}

pub fn load_posterior(dir: &Path) -> Result<PosteriorSampleSet> {
    let m: PosteriorManifest = read_json(&dir.join("posterior.json"))?;
    let samples = match m.teacher_kind {
        TeacherKind::Mcdp => {
            let path = dir.join("shared.bin");
            require(&path)?;
            let (shared, _) = load_checkpoint(&path).with_context(|| format!("reading {}", path.display()))?;
            let masks: Vec<DropoutMask> = read_json(&dir.join("masks.json"))?;
            PosteriorSamples::Mcdp { shared, masks }
        }
        TeacherKind::Sgld => {
            let path = dir.join("snapshots.bin");
            require(&path)?;
            let bytes = fs::read(&path)?;
            let mut pos = 0;
            let n = take_u64(&bytes, &mut pos, &path)?;
            let mut snapshots = Vec::new();
            for _ in 0..n {
                let len = take_u64(&bytes, &mut pos, &path)? as usize;
                let Some(chunk) = bytes.get(pos..pos + len) else {
                    bail!("{}: truncated", path.display());
                };
                snapshots.push(read_checkpoint(chunk).with_context(|| format!("reading {}", path.display()))?);
                pos += len;
            }
            if pos != bytes.len() {
                bail!("{}: {} trailing bytes", path.display(), bytes.len() - pos);
            }
            PosteriorSamples::Sgld { snapshots }
        }
        TeacherKind::Blr => {
            let thetas: Vec<Vec<f64>> = read_json(&dir.join("thetas.json"))?;
            PosteriorSamples::Blr { thetas, intercept: m.intercept.unwrap_or(false) }
        }
    };
    let set = PosteriorSampleSet { samples, provenance: m.provenance };
    if set.len() != m.s || set.is_empty() {
        bail!("{}: manifest says S = {} but {} samples were read", dir.display(), m.s, set.len());
    }
    Ok(set)
}

#[cfg(test)]
mod tests {
    use super::*;
    use opu_core::nnet::{Activation, MlpParams};
    use opu_core::numerics::RngState;
    use opu_core::teachers::{mcdp_sample, McdpDropout};

    fn provenance() -> Provenance {
        Provenance { burn_in: 2, thinning: 1, seed: 9 }
    }

    #[test]
    fn every_kind_round_trips() {
        let mut rng = RngState::new(4);
        let net = |rng: &mut RngState| MlpParams::init(&[2, 5, 3], Activation::Relu, Activation::Softmax, rng).unwrap();
        let shared = net(&mut rng);
        let sets = [
            mcdp_sample(&shared, McdpDropout { rate: 0.3, input: false }, 4, &mut rng).unwrap(),
            PosteriorSampleSet {
                samples: PosteriorSamples::Sgld { snapshots: (0..3).map(|_| net(&mut rng)).collect() },
                provenance: provenance(),
            },
            PosteriorSampleSet {
                samples: PosteriorSamples::Blr { thetas: vec![vec![0.5, -1.0, 0.25]; 2], intercept: true },
                provenance: provenance(),
            },
        ];
        for set in sets {
            let dir = tempfile::tempdir().unwrap();
            save_posterior(dir.path(), &set, "h").unwrap();
            assert_eq!(load_posterior(dir.path()).unwrap(), set);
        }
    }

    #[test]
    fn missing_files_name_the_path() {
        let dir = tempfile::tempdir().unwrap();
        let err = load_posterior(dir.path()).unwrap_err().to_string();
        assert!(err.contains("posterior.json"), "{err}");
    }
}
