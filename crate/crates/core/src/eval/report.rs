use std::collections::BTreeMap;
use std::io::{BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::EvalError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    /// `misc` or `ood`.
    pub task: String,
    pub model: String,
    /// E, P, D or C.
    pub measure: String,
    pub auroc: f64,
    pub aupr: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub accuracy: Option<f64>,
    pub wall_seconds: f64,
    pub n_positive: usize,
    pub n_negative: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    /// What counts as a positive example.
    pub positive: String,
    pub score_direction: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config_hash: Option<String>,
}

pub fn write_metrics(path: &Path, records: &[MetricsRecord]) -> Result<(), EvalError> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    for r in records {
        serde_json::to_writer(&mut out, r).map_err(|e| EvalError::Config(e.to_string()))?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_metrics(path: &Path) -> Result<Vec<MetricsRecord>, EvalError> {
    let file = std::io::BufReader::new(std::fs::File::open(path)?);
    let mut out = Vec::new();
    for (i, line) in file.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(
            serde_json::from_str(&line)
                .map_err(|e| EvalError::Config(format!("{} line {}: {e}", path.display(), i + 1)))?,
        );
    }
    Ok(out)
}

/// Plain-text grid: one row per model, AUROC/AUPR per task and measure,
/// plus accuracy where a misclassification record carries it.
pub fn format_table(records: &[MetricsRecord]) -> String {
    let mut columns: Vec<(String, String)> = Vec::new();
    let mut rows: BTreeMap<&str, BTreeMap<(String, String), &MetricsRecord>> = BTreeMap::new();
    for r in records {
        let key = (r.task.clone(), r.measure.clone());
        if !columns.contains(&key) {
            columns.push(key.clone());
        }
        rows.entry(&r.model).or_default().insert(key, r);
    }
    columns.sort();
    let mut header = vec!["model".to_string(), "acc".to_string()];
    for (task, measure) in &columns {
        header.push(format!("{task}-{measure} AUROC"));
        header.push(format!("{task}-{measure} AUPR"));
    }
    let mut lines = vec![header];
    for (model, cells) in &rows {
        let acc = cells.values().find_map(|r| r.accuracy).map_or("-".to_string(), |a| format!("{:.1}", 100.0 * a));
        let mut line = vec![model.to_string(), acc];
        for key in &columns {
            match cells.get(key) {
                Some(r) => {
                    line.push(format!("{:.1}", 100.0 * r.auroc));
                    line.push(format!("{:.1}", 100.0 * r.aupr));
                }
                None => line.extend(["-".to_string(), "-".to_string()]),
            }
        }
        lines.push(line);
    }
    let widths: Vec<usize> = (0..lines[0].len()).map(|c| lines.iter().map(|l| l[c].chars().count()).max().unwrap_or(0)).collect();
    let mut out = String::new();
    for line in &lines {
        let cells: Vec<String> = line.iter().zip(&widths).map(|(s, w)| format!("{s:>w$}")).collect();
        out.push_str(cells.join("  ").trim_end());
        out.push('\n');
    }
    out
}
