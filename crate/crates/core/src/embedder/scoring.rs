use super::network::forward_item;
use super::params::ModelParams;
use crate::alignment::{AlignedPhone, AlignedUtterance, Corpus};
use crate::error::{Error, Result};
use crate::eval::{Polarity, ScoreSet, TrialList};

pub const MODEL_NAME: &str = "embedding";

#[derive(Debug, Clone, PartialEq)]
pub struct SpeakerEmbedding {
    pub vector: Vec<f64>,
    pub speaker_id: String,
    pub utterance_ids: Vec<String>,
}

/// Embeds the concatenation of `utterances` in the given order, without
/// chunking or shifting.
pub fn embed(params: &ModelParams, utterances: &[&AlignedUtterance]) -> Result<SpeakerEmbedding> {
    let phones: Vec<AlignedPhone> = utterances
        .iter()
        .flat_map(|u| u.phones.iter().copied())
        .collect();
    if phones.is_empty() {
        return Err(Error::EmptyInput);
    }
    let trace = forward_item(params, &phones)?;
    Ok(SpeakerEmbedding {
        vector: trace.embedding.to_vec(),
        speaker_id: utterances[0].speaker_id.clone(),
        utterance_ids: utterances.iter().map(|u| u.utterance_id.clone()).collect(),
    })
}

/// Cosine similarity; larger is more similar.
pub fn cosine_score(a: &SpeakerEmbedding, b: &SpeakerEmbedding) -> Result<f64> {
    cosine(&a.vector, &b.vector)
}

pub fn cosine(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            left: a.len(),
            right: b.len(),
        });
    }
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let aa: f64 = a.iter().map(|x| x * x).sum();
    let bb: f64 = b.iter().map(|x| x * x).sum();
    let denom = (aa * bb).sqrt();
    if !(denom > 0.0 && denom.is_finite()) {
        return Err(Error::ZeroNorm);
    }
    // sqrt(aa * aa) == aa, so identical vectors score exactly 1
    Ok((dot / denom).clamp(-1.0, 1.0))
}

pub fn score_trials_embedding(
    params: &ModelParams,
    corpus: &Corpus,
    trials: &TrialList,
) -> Result<ScoreSet> {
    let n = trials.trials.len();
    let mut scores = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    let mut keys = Vec::with_capacity(n);
    let mut cached: Option<(String, SpeakerEmbedding)> = None;
    for trial in &trials.trials {
        let key = trial.enroll_key();
        let enroll = match &cached {
            Some((k, e)) if *k == key => e.clone(),
            _ => {
                let e = embed(params, &corpus.lookup(&trial.enroll_utts)?)?;
                cached = Some((key.clone(), e.clone()));
                e
            }
        };
        let test = embed(params, &corpus.lookup(&trial.trial_utts)?)?;
        scores.push(cosine_score(&enroll, &test)?);
        labels.push(trial.is_target);
        keys.push((key, trial.trial_key()));
    }
    Ok(ScoreSet {
        scores,
        labels,
        polarity: Polarity::LargerIsSimilar,
        keys,
        model: MODEL_NAME.into(),
        setup: (trials.n_enroll, trials.n_trial),
    })
}
