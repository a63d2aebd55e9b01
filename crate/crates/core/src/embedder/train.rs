use rand::seq::SliceRandom;

use super::config::{ModelConfig, TrainConfig};
use super::network::{loss_and_grad_inner, Batch};
use super::params::ModelParams;
use crate::alignment::{AlignedPhone, Corpus};
use crate::error::{Error, Result};
use crate::features::{make_chunks, ChunkLengths};
use crate::rng::{indexed_stream, stream};

/// Adaptive-moment optimizer state.
#[derive(Debug, Clone)]
pub struct Adam {
    first: ModelParams,
    second: ModelParams,
    step: u64,
    learning_rate: f64,
    beta1: f64,
    beta2: f64,
    epsilon: f64,
}

impl Adam {
    pub fn new(params: &ModelParams, train: &TrainConfig) -> Self {
        Adam {
            first: params.zeros_like(),
            second: params.zeros_like(),
            step: 0,
            learning_rate: train.learning_rate,
            beta1: train.beta1,
            beta2: train.beta2,
            epsilon: train.epsilon,
        }
    }

    pub fn update(&mut self, params: &mut ModelParams, grads: &ModelParams) {
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        let (b1, b2, lr, eps) = (self.beta1, self.beta2, self.learning_rate, self.epsilon);
        let grads = grads.tensors();
        let tensors = params
            .tensors_mut()
            .into_iter()
            .zip(self.first.tensors_mut())
            .zip(self.second.tensors_mut())
            .zip(grads);
        for (((p, m), v), (_, _, g)) in tensors {
            for i in 0..p.len() {
                m[i] = b1 * m[i] + (1.0 - b1) * g[i];
                v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
                let m_hat = m[i] / c1;
                let v_hat = v[i] / c2;
                p[i] -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainingLog {
    /// Mean per-chunk cross-entropy of each epoch.
    pub epoch_losses: Vec<f64>,
    pub epoch_chunks: Vec<usize>,
}

impl TrainingLog {
    pub fn to_text(&self) -> String {
        let mut out = String::from("# epoch chunks mean_loss\n");
        for (e, (loss, chunks)) in self.epoch_losses.iter().zip(&self.epoch_chunks).enumerate() {
            out.push_str(&format!("{} {chunks} {loss}\n", e + 1));
        }
        out
    }
}

/// Trains a speaker classifier and returns the final parameters.
///
/// Speaker labels follow the corpus' speaker order. Each epoch re-draws
/// chunks for every speaker from its own seeded stream, shuffles them, and
/// takes one optimizer step per batch.
pub fn train(
    corpus: &Corpus,
    config: &ModelConfig,
    hyper: &TrainConfig,
) -> Result<(ModelParams, TrainingLog)> {
    train_with_callback(corpus, config, hyper, |_, _| {})
}

/// [`train`] with a hook called after each epoch with `(epoch, mean_loss)`.
pub fn train_with_callback<F: FnMut(usize, f64)>(
    corpus: &Corpus,
    config: &ModelConfig,
    hyper: &TrainConfig,
    mut on_epoch: F,
) -> Result<(ModelParams, TrainingLog)> {
    let n_speakers = corpus.n_speakers();
    if n_speakers < 2 {
        return Err(Error::InsufficientSpeakers(n_speakers));
    }
    if config.n_speakers != n_speakers {
        return Err(Error::InvalidConfig(format!(
            "model has {} outputs but corpus has {n_speakers} speakers",
            config.n_speakers
        )));
    }
    if config.n_classes != corpus.inventory().len() {
        return Err(Error::InvalidConfig(format!(
            "model expects {} classes, inventory has {}",
            config.n_classes,
            corpus.inventory().len()
        )));
    }
    if hyper.batch_size == 0 {
        return Err(Error::InvalidConfig("batch_size must be at least 1".into()));
    }
    let lengths = ChunkLengths {
        min_len: hyper.min_chunk_len,
        max_len: hyper.max_chunk_len,
    };

    let mut params = ModelParams::init(config, &mut stream(hyper.seed, "init"))?;
    let mut optimizer = Adam::new(&params, hyper);
    let mut log = TrainingLog::default();

    for epoch in 0..hyper.epochs {
        let mut items: Vec<(Vec<AlignedPhone>, usize)> = Vec::new();
        for (label, (_, idx)) in corpus.by_speaker().iter().enumerate() {
            let utts: Vec<_> = idx.iter().map(|&i| &corpus.utterances()[i]).collect();
            let mut rng = indexed_stream(
                hyper.seed,
                "chunks",
                (epoch as u64) * (n_speakers as u64) + label as u64,
            );
            for chunk in make_chunks(&utts, corpus.inventory(), &mut rng, lengths)? {
                items.push((chunk.rows.rows, label));
            }
        }
        items.shuffle(&mut indexed_stream(hyper.seed, "shuffle", epoch as u64));

        let mut total = 0.0;
        for group in items.chunks(hyper.batch_size) {
            let seqs: Vec<&[AlignedPhone]> = group.iter().map(|(s, _)| s.as_slice()).collect();
            let labels = group.iter().map(|&(_, l)| l).collect();
            let batch = Batch::pad(&seqs, Some(labels))?;
            let (_, grads, item_losses) = loss_and_grad_inner(&params, &batch)?;
            total += item_losses.iter().sum::<f64>();
            optimizer.update(&mut params, &grads);
        }
        if !params.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "parameters diverged in epoch {}",
                epoch + 1
            )));
        }
        let mean = total / items.len() as f64;
        log.epoch_losses.push(mean);
        log.epoch_chunks.push(items.len());
        on_epoch(epoch, mean);
    }
    Ok((params, log))
}
