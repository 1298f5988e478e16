//! Run configuration (TOML) and its content hash.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use opu_core::data::{BlobSpec, CsvSchema};
use opu_core::eval::GapConfig;
use opu_core::losses::DistillConfig;
use opu_core::teachers::{BlrConfig, McdpConfig, McdpDropout, SgldConfig};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schema_version: u32,
    /// Root of every random stream in the run.
    pub seed: u64,
    pub data: DataConfig,
    pub teacher: TeacherConfig,
    pub student: StudentConfig,
    /// `seed` is ignored here; distillation draws from the run seed.
    pub distill: DistillConfig,
    #[serde(default)]
    pub eval: EvalConfig,
    #[serde(default)]
    pub plot: PlotConfig,
    #[serde(default)]
    pub report: ReportConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", deny_unknown_fields)]
pub enum DataConfig {
    Blobs(BlobSpec),
    Csv(CsvData),
}

/// Four CSV files; relative paths resolve against the config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CsvData {
    pub train: PathBuf,
    pub distill: PathBuf,
    pub test: PathBuf,
    pub ood: PathBuf,
    #[serde(default)]
    pub schema: CsvSchema,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", deny_unknown_fields)]
pub enum TeacherConfig {
    Mcdp(McdpTeacher),
    Sgld(SgldTeacher),
    Blr(BlrConfig),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct McdpTeacher {
    /// Hidden widths; input and output widths come from the data.
    pub hidden: Vec<usize>,
    pub dropout: McdpDropout,
    pub train: McdpConfig,
    /// Posterior samples S.
    pub samples: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SgldTeacher {
    pub hidden: Vec<usize>,
    pub chain: SgldConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StudentConfig {
    pub pm_hidden: Vec<usize>,
    pub cm_hidden: Vec<usize>,
    /// Start the prediction model from the teacher's mean network.
    #[serde(default)]
    pub init_from_teacher: bool,
    /// Constant initial concentration output g(x) = g0.
    #[serde(default)]
    pub initial_log_precision: Option<f64>,
}

fn all_measures() -> Vec<String> {
    ["E", "P", "D", "C"].map(String::from).to_vec()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalConfig {
    /// Student measures among E, P, D, C.
    #[serde(default = "all_measures")]
    pub measures: Vec<String>,
    /// Sample counts for the timing comparison; empty skips it.
    #[serde(default)]
    pub timing_samples: Vec<usize>,
    /// Amortization gap on the first `gap_inputs` distillation inputs.
    #[serde(default)]
    pub gap_inputs: usize,
    #[serde(default)]
    pub gap: GapConfig,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self { measures: all_measures(), timing_samples: Vec::new(), gap_inputs: 0, gap: GapConfig::default() }
    }
}

fn first_input() -> Vec<usize> {
    vec![0]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlotConfig {
    /// Distillation inputs whose clouds are drawn.
    #[serde(default = "first_input")]
    pub inputs: Vec<usize>,
}

impl Default for PlotConfig {
    fn default() -> Self {
        Self { inputs: first_input() }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReportConfig {
    /// Further metrics files to aggregate with this run's.
    #[serde(default)]
    pub include: Vec<PathBuf>,
}

/// A parsed config together with where it came from and its hash.
pub struct LoadedConfig {
    pub config: RunConfig,
    pub base_dir: PathBuf,
    pub hash: String,
}

impl LoadedConfig {
    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }
}

pub fn parse_config(text: &str) -> Result<RunConfig> {
    let cfg: RunConfig = toml::from_str(text)?;
    validate(&cfg)?;
    Ok(cfg)
}

fn validate(cfg: &RunConfig) -> Result<()> {
    if cfg.schema_version != SCHEMA_VERSION {
        bail!("schema_version {} is not supported (expected {SCHEMA_VERSION})", cfg.schema_version);
    }
    for m in &cfg.eval.measures {
        if !["E", "P", "D", "C"].contains(&m.as_str()) {
            bail!("unknown measure {m:?}; use E, P, D or C");
        }
    }
    let s = match &cfg.teacher {
        TeacherConfig::Mcdp(t) => t.samples,
        TeacherConfig::Sgld(t) => t.chain.samples,
        TeacherConfig::Blr(b) => b.samples,
    };
    if s == 0 {
        bail!("the teacher must draw at least one posterior sample");
    }
    if let Some(&bad) = cfg.eval.timing_samples.iter().find(|&&t| t == 0 || t > s) {
        bail!("timing_samples entry {bad} must lie in 1..={s}");
    }
    if cfg.student.init_from_teacher {
        match &cfg.teacher {
            TeacherConfig::Blr(_) => bail!("init_from_teacher needs a network teacher"),
            TeacherConfig::Mcdp(McdpTeacher { hidden, .. }) | TeacherConfig::Sgld(SgldTeacher { hidden, .. }) => {
                if hidden != &cfg.student.pm_hidden {
                    bail!("init_from_teacher needs pm_hidden {:?} to equal the teacher's hidden {hidden:?}", cfg.student.pm_hidden);
                }
            }
        }
    }
    cfg.distill.validate()?;
    Ok(())
}

pub fn load_config(path: &Path) -> Result<LoadedConfig> {
    let text = fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
    let config = parse_config(&text).with_context(|| format!("invalid config {}", path.display()))?;
    let base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
    let mut loaded = LoadedConfig { config, base_dir, hash: String::new() };
    loaded.hash = config_hash(&loaded)?;
    Ok(loaded)
}

/// SHA-256 over the canonical JSON form of the config, plus the bytes of
/// any CSV inputs it names.
fn config_hash(l: &LoadedConfig) -> Result<String> {
    let mut h = Sha256::new();
    h.update(serde_json::to_vec(&l.config)?);
    if let DataConfig::Csv(c) = &l.config.data {
        for p in [&c.train, &c.distill, &c.test, &c.ood] {
            let path = l.resolve(p);
            let bytes = fs::read(&path).with_context(|| format!("missing artifact: {}", path.display()))?;
            h.update(Sha256::digest(&bytes));
        }
    }
    Ok(hex::encode(h.finalize()))
}
