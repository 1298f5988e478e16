//! Labeled feature matrices: synthetic Gaussian blobs and CSV ingestion.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::numerics::RngState;

#[derive(Debug, thiserror::Error)]
pub enum DataError {
    #[error("line {line}: {message}")]
    Parse { line: u64, message: String },
    #[error("line {line}, column {column}: non-finite value")]
    NonFinite { line: u64, column: String },
    #[error("schema: {0}")]
    Schema(String),
    #[error("invalid blob specification: {0}")]
    Spec(String),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
    Distill,
    Ood,
}

impl Split {
    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "test",
            Split::Distill => "distill",
            Split::Ood => "ood",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub name: String,
    pub split: Split,
    pub features: Vec<Vec<f64>>,
    pub labels: Option<Vec<usize>>,
}

impl Dataset {
    pub fn new(name: &str, split: Split, features: Vec<Vec<f64>>, labels: Option<Vec<usize>>) -> Result<Self, DataError> {
        let d = features.first().map_or(0, Vec::len);
        if features.iter().any(|r| r.len() != d) {
            return Err(DataError::Schema("ragged feature rows".into()));
        }
        if features.iter().flatten().any(|v| !v.is_finite()) {
            return Err(DataError::Schema("non-finite feature".into()));
        }
        if let Some(l) = &labels {
            if l.len() != features.len() {
                return Err(DataError::Schema(format!("{} labels for {} rows", l.len(), features.len())));
            }
            if split == Split::Ood {
                return Err(DataError::Schema("OOD splits carry no labels".into()));
            }
        }
        Ok(Self { name: name.to_owned(), split, features, labels })
    }

    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.features.first().map_or(0, Vec::len)
    }

    pub fn labels(&self) -> Result<&[usize], DataError> {
        self.labels.as_deref().ok_or_else(|| DataError::Schema(format!("{} split of {} has no labels", self.split.name(), self.name)))
    }

    /// Largest label + 1.
    pub fn n_classes(&self) -> Option<usize> {
        self.labels.as_ref().and_then(|l| l.iter().max()).map(|m| m + 1)
    }

    /// Writes `x0..x{d-1}` columns plus `label` when present.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<(), DataError> {
        let mut wtr = csv::Writer::from_writer(w);
        let mut header: Vec<String> = (0..self.dim()).map(|j| format!("x{j}")).collect();
        if self.labels.is_some() {
            header.push("label".into());
        }
        wtr.write_record(&header)?;
        for (i, row) in self.features.iter().enumerate() {
            let mut rec: Vec<String> = row.iter().map(|v| format!("{v:?}")).collect();
            if let Some(l) = &self.labels {
                rec.push(l[i].to_string());
            }
            wtr.write_record(&rec)?;
        }
        wtr.flush()?;
        Ok(())
    }
}

/// Which columns to read from a CSV file.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CsvSchema {
    /// Feature columns; empty means every column except the label column.
    #[serde(default)]
    pub feature_columns: Vec<String>,
    #[serde(default)]
    pub label_column: Option<String>,
    /// Scale each feature column to unit L2 norm.
    #[serde(default)]
    pub l2_normalize: bool,
}

pub fn load_csv(path: &Path, schema: &CsvSchema, name: &str, split: Split) -> Result<Dataset, DataError> {
    read_csv(std::fs::File::open(path)?, schema, name, split)
}

pub fn read_csv<R: Read>(reader: R, schema: &CsvSchema, name: &str, split: Split) -> Result<Dataset, DataError> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(reader);
    let headers: Vec<String> = rdr.headers()?.iter().map(str::to_owned).collect();
    let find = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| DataError::Schema(format!("missing column {name:?}")))
    };
    let label_idx = schema.label_column.as_deref().map(find).transpose()?;
    let feature_idx: Vec<usize> = if schema.feature_columns.is_empty() {
        (0..headers.len()).filter(|i| Some(*i) != label_idx).collect()
    } else {
        schema.feature_columns.iter().map(|c| find(c)).collect::<Result<_, _>>()?
    };
    if feature_idx.is_empty() {
        return Err(DataError::Schema("no feature columns".into()));
    }
    let mut features = Vec::new();
    let mut labels = label_idx.map(|_| Vec::new());
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        let row = feature_idx
            .iter()
            .map(|&j| {
                let raw = rec.get(j).ok_or_else(|| DataError::Parse { line, message: format!("missing field {}", headers[j]) })?;
                let v: f64 = raw
                    .parse()
                    .map_err(|_| DataError::Parse { line, message: format!("{}: cannot parse {raw:?} as a number", headers[j]) })?;
                if !v.is_finite() {
                    return Err(DataError::NonFinite { line, column: headers[j].clone() });
                }
                Ok(v)
            })
            .collect::<Result<Vec<_>, _>>()?;
        features.push(row);
        if let (Some(j), Some(l)) = (label_idx, labels.as_mut()) {
            let raw = rec.get(j).unwrap_or("");
            let v: usize = raw
                .parse()
                .map_err(|_| DataError::Parse { line, message: format!("label {raw:?} is not a class index") })?;
            l.push(v);
        }
    }
    if schema.l2_normalize {
        l2_normalize_columns(&mut features);
    }
    Dataset::new(name, split, features, labels)
}

/// Scales every column to unit Euclidean norm; all-zero columns are left alone.
pub fn l2_normalize_columns(features: &mut [Vec<f64>]) {
    let d = features.first().map_or(0, Vec::len);
    for j in 0..d {
        let norm = features.iter().map(|r| r[j] * r[j]).sum::<f64>().sqrt();
        if norm > 0.0 {
            features.iter_mut().for_each(|r| r[j] /= norm);
        }
    }
}

/// Gaussian-blob scenario description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BlobSpec {
    pub k: usize,
    /// Points per class in each labeled split.
    pub per_class: usize,
    /// Class centers; defaults to a regular K-gon of radius `radius` whose
    /// first vertex points up.
    #[serde(default)]
    pub centers: Option<Vec<Vec<f64>>>,
    #[serde(default = "default_radius")]
    pub radius: f64,
    /// Isotropic standard deviation of every blob.
    pub std: f64,
    /// Displacement of the OOD set, in units of `std`.
    pub ood_offset: f64,
    /// Direction of the OOD displacement; defaults to pointing from the
    /// first center through the origin.
    #[serde(default)]
    pub ood_direction: Option<Vec<f64>>,
    /// OOD point count; defaults to `k * per_class`.
    #[serde(default)]
    pub ood_count: Option<usize>,
}

fn default_radius() -> f64 {
    2.0
}

impl BlobSpec {
    pub fn centers(&self) -> Vec<Vec<f64>> {
        if let Some(c) = &self.centers {
            return c.clone();
        }
        (0..self.k)
            .map(|i| {
                let a = std::f64::consts::FRAC_PI_2 + 2.0 * std::f64::consts::PI * i as f64 / self.k as f64;
                vec![self.radius * a.cos(), self.radius * a.sin()]
            })
            .collect()
    }

    fn ood_unit(&self, centers: &[Vec<f64>]) -> Vec<f64> {
        let raw = self.ood_direction.clone().unwrap_or_else(|| centers[0].iter().map(|v| -v).collect());
        let n = raw.iter().map(|v| v * v).sum::<f64>().sqrt();
        if n > 0.0 {
            raw.iter().map(|v| v / n).collect()
        } else {
            raw
        }
    }

    fn validate(&self) -> Result<Vec<Vec<f64>>, DataError> {
        if self.k < 2 {
            return Err(DataError::Spec(format!("K = {} < 2", self.k)));
        }
        if self.per_class == 0 {
            return Err(DataError::Spec("per_class must be positive".into()));
        }
        if !(self.std > 0.0 && self.std.is_finite()) || !self.ood_offset.is_finite() || self.ood_offset < 0.0 {
            return Err(DataError::Spec("std must be positive and ood_offset nonnegative".into()));
        }
        let centers = self.centers();
        let d = centers.first().map_or(0, Vec::len);
        if centers.len() != self.k || d == 0 || centers.iter().any(|c| c.len() != d) {
            return Err(DataError::Spec("need K centers of equal, nonzero dimension".into()));
        }
        if let Some(u) = &self.ood_direction {
            if u.len() != d {
                return Err(DataError::Spec("ood_direction dimension differs from centers".into()));
            }
        }
        Ok(centers)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticData {
    pub train: Dataset,
    pub distill: Dataset,
    pub test: Dataset,
    pub ood: Dataset,
}

fn blob_split(centers: &[Vec<f64>], per_class: usize, std: f64, rng: &mut RngState) -> (Vec<Vec<f64>>, Vec<usize>) {
    let mut x = Vec::with_capacity(centers.len() * per_class);
    let mut y = Vec::with_capacity(centers.len() * per_class);
    for _ in 0..per_class {
        for (k, c) in centers.iter().enumerate() {
            x.push(c.iter().map(|m| m + std * rng.normal()).collect());
            y.push(k);
        }
    }
    (x, y)
}

/// Draws train/distill/test splits from the blob mixture and an OOD set
/// from the same mixture translated by `ood_offset · std` along the OOD
/// direction.
pub fn gen_synthetic(spec: &BlobSpec, rng: &mut RngState) -> Result<SyntheticData, DataError> {
    let centers = spec.validate()?;
    let split = |s: Split, rng: &mut RngState| -> Result<Dataset, DataError> {
        let (x, y) = blob_split(&centers, spec.per_class, spec.std, rng);
        Dataset::new("blobs", s, x, Some(y))
    };
    let train = split(Split::Train, rng)?;
    let distill = split(Split::Distill, rng)?;
    let test = split(Split::Test, rng)?;
    let u = spec.ood_unit(&centers);
    let shift: Vec<f64> = u.iter().map(|v| v * spec.ood_offset * spec.std).collect();
    let n_ood = spec.ood_count.unwrap_or(spec.k * spec.per_class);
    let ood_x = (0..n_ood)
        .map(|_| {
            let c = &centers[rng.below(spec.k)];
            c.iter().zip(&shift).map(|(m, s)| m + s + spec.std * rng.normal()).collect()
        })
        .collect();
    let ood = Dataset::new("blobs", Split::Ood, ood_x, None)?;
    Ok(SyntheticData { train, distill, test, ood })
}
