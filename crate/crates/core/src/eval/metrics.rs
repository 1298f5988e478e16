use serde::{Deserialize, Serialize};

use super::EvalError;

/// A score (higher = more uncertain) and whether the example is a positive
/// event (misclassified, or out of domain).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoredExample {
    pub score: f64,
    pub label: bool,
}

impl ScoredExample {
    pub fn new(score: f64, label: bool) -> Self {
        Self { score, label }
    }
}

fn counts(examples: &[ScoredExample]) -> Result<(usize, usize), EvalError> {
    if let Some(e) = examples.iter().find(|e| !e.score.is_finite()) {
        return Err(EvalError::NonFinite(format!("score {}", e.score)));
    }
    let pos = examples.iter().filter(|e| e.label).count();
    Ok((pos, examples.len() - pos))
}

/// Examples sorted by score with equal scores grouped.
fn tie_groups(examples: &[ScoredExample], descending: bool) -> Vec<(usize, usize)> {
    let mut sorted = examples.to_vec();
    sorted.sort_by(|a, b| if descending { b.score.total_cmp(&a.score) } else { a.score.total_cmp(&b.score) });
    let mut groups = Vec::new();
    let mut i = 0;
    while i < sorted.len() {
        let mut j = i;
        let (mut pos, mut neg) = (0, 0);
        while j < sorted.len() && sorted[j].score == sorted[i].score {
            if sorted[j].label {
                pos += 1;
            } else {
                neg += 1;
            }
            j += 1;
        }
        groups.push((pos, neg));
        i = j;
    }
    groups
}

/// Mann–Whitney AUROC: P(score_pos > score_neg) with ties counting ½.
pub fn auroc(examples: &[ScoredExample]) -> Result<f64, EvalError> {
    let (n_pos, n_neg) = counts(examples)?;
    if n_pos == 0 || n_neg == 0 {
        return Err(EvalError::SingleClass { positives: n_pos, negatives: n_neg });
    }
    let mut below = 0usize;
    let mut wins = 0.0;
    for (pos, neg) in tie_groups(examples, false) {
        wins += pos as f64 * (below as f64 + 0.5 * neg as f64);
        below += neg;
    }
    Ok(wins / (n_pos as f64 * n_neg as f64))
}

/// Σ over descending tie-grouped thresholds of ΔRecall × Precision.
pub fn aupr(examples: &[ScoredExample]) -> Result<f64, EvalError> {
    let (n_pos, _) = counts(examples)?;
    if n_pos == 0 {
        return Err(EvalError::NoPositives);
    }
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut area = 0.0;
    for (pos, neg) in tie_groups(examples, true) {
        tp += pos;
        fp += neg;
        if pos > 0 {
            area += (pos as f64 / n_pos as f64) * (tp as f64 / (tp + fp) as f64);
        }
    }
    Ok(area)
}
