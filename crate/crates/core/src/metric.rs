//! Training-free attack over mean duration vectors.

use crate::alignment::Corpus;
use crate::error::{Error, Result};
use crate::eval::{Polarity, ScoreSet, TrialList};
use crate::features::{mean_duration_vector, MeanDurationVector};

pub const MODEL_NAME: &str = "metric";

/// Dissimilarity in `[0, 1)`; zero only for identical profiles.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct MetricScore(pub f64);

impl MetricScore {
    pub const POLARITY: Polarity = Polarity::SmallerIsSimilar;

    pub fn value(self) -> f64 {
        self.0
    }
}

/// `1 - mean_n min(a_n / b_n, b_n / a_n)`.
pub fn rho(a: &MeanDurationVector, b: &MeanDurationVector) -> Result<MetricScore> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            left: a.len(),
            right: b.len(),
        });
    }
    if a.is_empty() {
        return Err(Error::EmptyInput);
    }
    for v in [a, b] {
        if let Some((index, &value)) = v.values.iter().enumerate().find(|(_, &x)| x.is_nan() || x <= 0.0) {
            return Err(Error::NonPositiveComponent { index, value });
        }
    }
    let total: f64 = a
        .values
        .iter()
        .zip(&b.values)
        .map(|(&x, &y)| (x / y).min(y / x))
        .sum();
    Ok(MetricScore(1.0 - total / a.len() as f64))
}

pub fn score_trials_metric(corpus: &Corpus, trials: &TrialList) -> Result<ScoreSet> {
    let inventory = corpus.inventory();
    let mut scores = Vec::with_capacity(trials.trials.len());
    let mut labels = Vec::with_capacity(trials.trials.len());
    let mut keys = Vec::with_capacity(trials.trials.len());
    // Enrollment sets repeat across consecutive trials.
    let mut cached: Option<(String, MeanDurationVector)> = None;
    for trial in &trials.trials {
        let key = trial.enroll_key();
        let enroll = match &cached {
            Some((k, v)) if *k == key => v.clone(),
            _ => {
                let v = mean_duration_vector(&corpus.lookup(&trial.enroll_utts)?, inventory)?;
                cached = Some((key.clone(), v.clone()));
                v
            }
        };
        let test = mean_duration_vector(&corpus.lookup(&trial.trial_utts)?, inventory)?;
        scores.push(rho(&enroll, &test)?.value());
        labels.push(trial.is_target);
        keys.push((key, trial.trial_key()));
    }
    Ok(ScoreSet {
        scores,
        labels,
        polarity: MetricScore::POLARITY,
        keys,
        model: MODEL_NAME.into(),
        setup: (trials.n_enroll, trials.n_trial),
    })
}
