//! Wall-clock comparison of S-sample Monte Carlo prediction against one
//! student pass (PM + CM). Both arms run on the calling thread.

use std::hint::black_box;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::EvalError;
use crate::student::{student_alpha, StudentModel};
use crate::teachers::{mc_predict, pushforward, PosteriorSampleSet};

pub const TIMING_REPETITIONS: usize = 5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingReport {
    #[serde(rename = "S")]
    pub s: usize,
    pub n_inputs: usize,
    pub mc_seconds: f64,
    pub one_pass_seconds: f64,
    pub speedup: f64,
    pub repetitions: usize,
}

fn median_seconds<F: FnMut() -> Result<(), EvalError>>(mut f: F) -> Result<f64, EvalError> {
    let mut times = Vec::with_capacity(TIMING_REPETITIONS);
    for _ in 0..TIMING_REPETITIONS {
        let start = Instant::now();
        f()?;
        times.push(start.elapsed().as_secs_f64());
    }
    times.sort_by(f64::total_cmp);
    Ok(times[TIMING_REPETITIONS / 2])
}

/// Median of five timed repetitions per arm; forward computation only.
pub fn timing_harness(
    samples: &PosteriorSampleSet,
    m: &StudentModel,
    inputs: &[Vec<f64>],
    s: usize,
) -> Result<TimingReport, EvalError> {
    if s == 0 || s > samples.len() {
        return Err(EvalError::Config(format!("S = {s} but {} posterior samples are available", samples.len())));
    }
    if inputs.is_empty() {
        return Err(EvalError::Config("no inputs to time".into()));
    }
    let teacher = samples.prefix(s);
    let mc_seconds = median_seconds(|| {
        for (i, x) in inputs.iter().enumerate() {
            black_box(mc_predict(&pushforward(&teacher, i, black_box(x))?));
        }
        Ok(())
    })?;
    let one_pass_seconds = median_seconds(|| {
        for x in inputs {
            black_box(student_alpha(m, black_box(x))?);
        }
        Ok(())
    })?;
    Ok(TimingReport {
        s,
        n_inputs: inputs.len(),
        mc_seconds,
        one_pass_seconds,
        speedup: mc_seconds / one_pass_seconds,
        repetitions: TIMING_REPETITIONS,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nnet::{Activation, MlpParams};
    use crate::numerics::RngState;
    use crate::teachers::{PosteriorSamples, Provenance};

    fn setup(n: usize) -> (PosteriorSampleSet, StudentModel, Vec<Vec<f64>>) {
        let mut rng = RngState::new(1);
        let nets = (0..n)
            .map(|_| MlpParams::init(&[4, 32, 32, 3], Activation::Relu, Activation::Softmax, &mut rng).unwrap())
            .collect();
        let samples = PosteriorSampleSet {
            samples: PosteriorSamples::Sgld { snapshots: nets },
            provenance: Provenance { burn_in: 0, thinning: 1, seed: 1 },
        };
        let m = StudentModel::init(4, &[32, 32], &[32, 32], 3, &mut rng).unwrap();
        let inputs = (0..100).map(|_| (0..4).map(|_| rng.normal()).collect()).collect();
        (samples, m, inputs)
    }

    #[test]
    fn single_sample_costs_about_half_a_student_pass() {
        let (samples, m, inputs) = setup(1);
        let r = timing_harness(&samples, &m, &inputs, 1).unwrap();
        assert!(r.speedup > 0.25 && r.speedup < 1.0, "{r:?}");
    }

    #[test]
    fn rejects_too_many_samples() {
        let (samples, m, inputs) = setup(2);
        assert!(timing_harness(&samples, &m, &inputs, 3).is_err());
    }
}
