use std::time::Instant;

use super::{aupr, auroc, EvalError, MetricsRecord, ScoredExample};
use crate::data::Dataset;
use crate::numerics::SimplexPoint;

type ScoreFn<'a> = dyn Fn(&[f64]) -> Result<f64, EvalError> + 'a;

/// A named uncertainty score; higher means more uncertain.
pub struct Scorer<'a> {
    pub model: String,
    pub measure: String,
    pub score: Box<ScoreFn<'a>>,
}

impl<'a> Scorer<'a> {
    pub fn new(model: &str, measure: &str, score: impl Fn(&[f64]) -> Result<f64, EvalError> + 'a) -> Self {
        Self { model: model.into(), measure: measure.into(), score: Box::new(score) }
    }
}

fn finish(task: &str, scorer: &Scorer, examples: &[ScoredExample], start: Instant) -> Result<MetricsRecord, EvalError> {
    let wrap = |e| EvalError::Task { task: format!("{task} ({} {})", scorer.model, scorer.measure), source: Box::new(e) };
    let n_positive = examples.iter().filter(|e| e.label).count();
    Ok(MetricsRecord {
        task: task.into(),
        model: scorer.model.clone(),
        measure: scorer.measure.clone(),
        auroc: auroc(examples).map_err(wrap)?,
        aupr: aupr(examples).map_err(wrap)?,
        accuracy: None,
        wall_seconds: start.elapsed().as_secs_f64(),
        n_positive,
        n_negative: examples.len() - n_positive,
        seed: None,
        positive: String::new(),
        score_direction: "higher score = more uncertain; P and C enter negated".into(),
        config_hash: None,
    })
}

/// Misclassification detection: positives are test points whose argmax
/// prediction differs from the label.
pub fn misc_task(
    predict: impl Fn(&[f64]) -> Result<SimplexPoint, EvalError>,
    scorer: &Scorer,
    test: &Dataset,
) -> Result<MetricsRecord, EvalError> {
    let labels = test.labels().map_err(|e| EvalError::Config(e.to_string()))?;
    if test.is_empty() {
        return Err(EvalError::Config("empty test set".into()));
    }
    let start = Instant::now();
    let mut examples = Vec::with_capacity(test.len());
    let mut correct = 0usize;
    for (x, &y) in test.features.iter().zip(labels) {
        let wrong = predict(x)?.argmax() != y;
        correct += usize::from(!wrong);
        examples.push(ScoredExample::new((scorer.score)(x)?, wrong));
    }
    let mut rec = finish("misc", scorer, &examples, start)?;
    rec.accuracy = Some(correct as f64 / test.len() as f64);
    rec.positive = "misclassified".into();
    Ok(rec)
}

/// OOD detection: positives are the OOD inputs.
pub fn ood_task(scorer: &Scorer, in_domain: &[Vec<f64>], ood: &[Vec<f64>]) -> Result<MetricsRecord, EvalError> {
    if in_domain.is_empty() || ood.is_empty() {
        return Err(EvalError::Config("OOD task needs in-domain and OOD inputs".into()));
    }
    let start = Instant::now();
    let mut examples = Vec::with_capacity(in_domain.len() + ood.len());
    for x in in_domain {
        examples.push(ScoredExample::new((scorer.score)(x)?, false));
    }
    for x in ood {
        examples.push(ScoredExample::new((scorer.score)(x)?, true));
    }
    let mut rec = finish("ood", scorer, &examples, start)?;
    rec.positive = "ood".into();
    Ok(rec)
}
