//! Forward pass and exact backpropagation for the duration encoder.
//!
//! Per item: every phone row is projected (`length * projection[class]`),
//! passed through dilated temporal convolution blocks with `tanh`
//! activations (residual when the channel count is unchanged), pooled with
//! masked attentive statistics (weighted mean and standard deviation), and
//! mapped linearly to the embedding and then to speaker logits.
//!
//! Only the unmasked prefix of each padded row is read. Convolutions see
//! zeros outside it, exactly as for an unpadded sequence.

use ndarray::linalg::general_mat_mul;
use ndarray::{s, Array1, Array2, ArrayView2, Axis};

use super::params::ModelParams;
use crate::alignment::AlignedPhone;
use crate::error::{Error, Result};

const POOL_EPS: f64 = 1e-6;

/// Right-padded sequences with a prefix mask.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    /// Every row has the same length; entries past the mask are padding.
    pub sequences: Vec<Vec<AlignedPhone>>,
    /// `(batch, time)`; `true` marks a real phone.
    pub mask: Array2<bool>,
    pub labels: Option<Vec<usize>>,
}

impl Batch {
    /// Pads each sequence on the right to the longest one.
    pub fn pad(sequences: &[&[AlignedPhone]], labels: Option<Vec<usize>>) -> Result<Self> {
        let width = sequences.iter().map(|s| s.len()).max().unwrap_or(0);
        Batch::pad_to(sequences, width, labels)
    }

    pub fn pad_to(
        sequences: &[&[AlignedPhone]],
        width: usize,
        labels: Option<Vec<usize>>,
    ) -> Result<Self> {
        Batch::pad_with(sequences, width, labels, AlignedPhone::new(0, 0))
    }

    /// Pads with a caller-chosen filler, which the encoder must ignore.
    pub fn pad_with(
        sequences: &[&[AlignedPhone]],
        width: usize,
        labels: Option<Vec<usize>>,
        filler: AlignedPhone,
    ) -> Result<Self> {
        if let Some(l) = &labels {
            if l.len() != sequences.len() {
                return Err(Error::ShapeMismatch(format!(
                    "{} labels for {} sequences",
                    l.len(),
                    sequences.len()
                )));
            }
        }
        let mut mask = Array2::from_elem((sequences.len(), width), false);
        let mut padded = Vec::with_capacity(sequences.len());
        for (i, seq) in sequences.iter().enumerate() {
            if seq.is_empty() || seq.len() > width {
                return Err(Error::ShapeMismatch(format!(
                    "sequence of {} phones in batch of width {width}",
                    seq.len()
                )));
            }
            let mut row = seq.to_vec();
            row.resize(width, filler);
            mask.slice_mut(s![i, ..seq.len()]).fill(true);
            padded.push(row);
        }
        Ok(Batch {
            sequences: padded,
            mask,
            labels,
        })
    }

    pub fn len(&self) -> usize {
        self.sequences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sequences.is_empty()
    }

    /// Number of real phones per item; fails unless the mask is a prefix.
    pub fn lengths(&self) -> Result<Vec<usize>> {
        let (b, t) = self.mask.dim();
        if b != self.sequences.len() || self.sequences.iter().any(|s| s.len() != t) {
            return Err(Error::ShapeMismatch("mask does not match sequences".into()));
        }
        self.mask
            .rows()
            .into_iter()
            .map(|row| {
                let len = row.iter().take_while(|&&m| m).count();
                if len == 0 || row.iter().skip(len).any(|&m| m) {
                    Err(Error::ShapeMismatch("mask must be a non-empty prefix".into()))
                } else {
                    Ok(len)
                }
            })
            .collect()
    }
}

/// Intermediate values of one item kept for backpropagation.
pub(crate) struct ItemTrace {
    phones: Vec<AlignedPhone>,
    /// Block inputs; `acts[0]` is the projected input, the last entry the
    /// encoder output.
    acts: Vec<Array2<f64>>,
    /// `tanh` outputs per block.
    taus: Vec<Array2<f64>>,
    att: Array2<f64>,
    pub(crate) alpha: Array1<f64>,
    mu: Array1<f64>,
    sigma: Array1<f64>,
    pooled: Array1<f64>,
    pub(crate) embedding: Array1<f64>,
    pub(crate) logits: Array1<f64>,
}

fn check_phones(params: &ModelParams, phones: &[AlignedPhone]) -> Result<()> {
    let n = params.config.n_classes;
    match phones.iter().find(|p| p.class_index >= n) {
        Some(p) => Err(Error::ShapeMismatch(format!(
            "class index {} for {n} classes",
            p.class_index
        ))),
        None => Ok(()),
    }
}

/// `out[t] += input[t + offset] . weight` for every `t` with a valid source row.
fn accumulate_shifted(
    out: &mut Array2<f64>,
    input: &Array2<f64>,
    weight: ArrayView2<f64>,
    offset: isize,
) {
    let len = input.nrows() as isize;
    let lo = (-offset).max(0);
    let hi = (len - offset).min(len);
    if lo >= hi {
        return;
    }
    let src = input.slice(s![(lo + offset)..(hi + offset), ..]);
    let mut dst = out.slice_mut(s![lo..hi, ..]);
    general_mat_mul(1.0, &src, &weight, 1.0, &mut dst);
}

pub(crate) fn forward_item(params: &ModelParams, phones: &[AlignedPhone]) -> Result<ItemTrace> {
    check_phones(params, phones)?;
    if phones.is_empty() {
        return Err(Error::EmptyInput);
    }
    let cfg = &params.config;
    let len = phones.len();

    let mut x = Array2::<f64>::zeros((len, cfg.proj_dim));
    for (t, p) in phones.iter().enumerate() {
        let scale = f64::from(p.length_frames);
        x.row_mut(t)
            .scaled_add(scale, &params.projection.row(p.class_index));
    }

    let mut acts = vec![x];
    let mut taus = Vec::with_capacity(cfg.n_blocks);
    for (b, block) in params.blocks.iter().enumerate() {
        let input = acts.last().expect("non-empty");
        let mut z = Array2::<f64>::zeros((len, cfg.encoder_channels));
        z += &block.bias;
        for (k, offset) in cfg.tap_offsets(b).into_iter().enumerate() {
            accumulate_shifted(&mut z, input, block.weight.index_axis(Axis(0), k), offset);
        }
        z.mapv_inplace(f64::tanh);
        let out = if cfg.block_in(b) == cfg.encoder_channels {
            input + &z
        } else {
            z.clone()
        };
        taus.push(z);
        acts.push(out);
    }
    let h = acts.last().expect("non-empty");

    let mut att = h.dot(&params.attention_weight);
    att += &params.attention_bias;
    att.mapv_inplace(f64::tanh);
    let scores = att.dot(&params.attention_vector);
    let max = scores.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
    let mut alpha = scores.mapv(|v| (v - max).exp());
    let total = alpha.sum();
    alpha /= total;

    let mu = alpha.dot(h);
    let centered = h - &mu;
    let var = alpha.dot(&(&centered * &centered));
    let sigma = var.mapv(|v| (v + POOL_EPS).sqrt());
    let mut pooled = Array1::zeros(2 * cfg.encoder_channels);
    pooled.slice_mut(s![..cfg.encoder_channels]).assign(&mu);
    pooled.slice_mut(s![cfg.encoder_channels..]).assign(&sigma);

    let embedding = pooled.dot(&params.embedding_weight) + &params.embedding_bias;
    let logits = embedding.dot(&params.classifier_weight) + &params.classifier_bias;

    Ok(ItemTrace {
        phones: phones.to_vec(),
        acts,
        taus,
        att,
        alpha,
        mu,
        sigma,
        pooled,
        embedding,
        logits,
    })
}

/// Accumulates into `grads` the gradient of `dot(dlogits, logits)`.
pub(crate) fn backward_item(
    params: &ModelParams,
    trace: &ItemTrace,
    dlogits: &Array1<f64>,
    grads: &mut ModelParams,
) {
    let cfg = &params.config;
    let c = cfg.encoder_channels;
    let col = |v: &Array1<f64>| v.view().insert_axis(Axis(1)).to_owned();
    let row = |v: &Array1<f64>| v.view().insert_axis(Axis(0)).to_owned();

    // classifier and embedding layers
    general_mat_mul(
        1.0,
        &col(&trace.embedding),
        &row(dlogits),
        1.0,
        &mut grads.classifier_weight,
    );
    grads.classifier_bias += dlogits;
    let demb = params.classifier_weight.dot(dlogits);
    general_mat_mul(
        1.0,
        &col(&trace.pooled),
        &row(&demb),
        1.0,
        &mut grads.embedding_weight,
    );
    grads.embedding_bias += &demb;
    let dpooled = params.embedding_weight.dot(&demb);
    let dmu = dpooled.slice(s![..c]).to_owned();
    let dvar = &dpooled.slice(s![c..]) / &(2.0 * &trace.sigma);

    // attentive statistics pooling
    let h = trace.acts.last().expect("non-empty");
    let centered = h - &trace.mu;
    // d(out)/d(alpha_t) = dmu . h_t + dvar . (h_t - mu)^2
    let dalpha = h.dot(&dmu) + (&centered * &centered).dot(&dvar);
    let mean_dalpha = trace.alpha.dot(&dalpha);
    let dscore = &trace.alpha * &(dalpha - mean_dalpha);
    // d(out)/d(h_t) = alpha_t * (dmu + 2 * dvar * (h_t - mu))
    let mut dh = centered * &(2.0 * &dvar);
    dh += &dmu;
    dh *= &trace.alpha.view().insert_axis(Axis(1));

    let dscore_col = dscore.view().insert_axis(Axis(1));
    grads.attention_vector += &trace.att.t().dot(&dscore);
    let mut dpre = &dscore_col * &params.attention_vector.view().insert_axis(Axis(0));
    dpre *= &trace.att.mapv(|a| 1.0 - a * a);
    general_mat_mul(1.0, &h.t(), &dpre, 1.0, &mut grads.attention_weight);
    grads.attention_bias += &dpre.sum_axis(Axis(0));
    general_mat_mul(1.0, &dpre, &params.attention_weight.t(), 1.0, &mut dh);

    // convolution blocks, last to first
    for b in (0..cfg.n_blocks).rev() {
        let input = &trace.acts[b];
        let tau = &trace.taus[b];
        let dz = &dh * &tau.mapv(|v| 1.0 - v * v);
        let mut dinput = if cfg.block_in(b) == c {
            dh.clone()
        } else {
            Array2::zeros(input.raw_dim())
        };
        let len = input.nrows() as isize;
        let grad_block = &mut grads.blocks[b];
        grad_block.bias += &dz.sum_axis(Axis(0));
        for (k, offset) in cfg.tap_offsets(b).into_iter().enumerate() {
            let lo = (-offset).max(0);
            let hi = (len - offset).min(len);
            if lo >= hi {
                continue;
            }
            let src = input.slice(s![(lo + offset)..(hi + offset), ..]);
            let dz_rows = dz.slice(s![lo..hi, ..]);
            let mut gw = grad_block.weight.index_axis_mut(Axis(0), k);
            general_mat_mul(1.0, &src.t(), &dz_rows, 1.0, &mut gw);
            let w = params.blocks[b].weight.index_axis(Axis(0), k);
            let mut dsrc = dinput.slice_mut(s![(lo + offset)..(hi + offset), ..]);
            general_mat_mul(1.0, &dz_rows, &w.t(), 1.0, &mut dsrc);
        }
        dh = dinput;
    }

    // projection: x_t = len_t * P[class_t]
    for (t, p) in trace.phones.iter().enumerate() {
        grads
            .projection
            .row_mut(p.class_index)
            .scaled_add(f64::from(p.length_frames), &dh.row(t));
    }
}

/// Output of [`forward`].
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardOutput {
    /// `(batch, embed_dim)`.
    pub embeddings: Array2<f64>,
    /// `(batch, n_speakers)`.
    pub logits: Array2<f64>,
    /// Attention weights over the real phones of each item.
    pub attention: Vec<Array1<f64>>,
}

fn real_prefix(batch: &Batch, i: usize, len: usize) -> &[AlignedPhone] {
    &batch.sequences[i][..len]
}

pub fn forward(params: &ModelParams, batch: &Batch) -> Result<ForwardOutput> {
    let lengths = batch.lengths()?;
    let cfg = &params.config;
    let mut embeddings = Array2::zeros((batch.len(), cfg.embed_dim));
    let mut logits = Array2::zeros((batch.len(), cfg.n_speakers));
    let mut attention = Vec::with_capacity(batch.len());
    for (i, &len) in lengths.iter().enumerate() {
        let trace = forward_item(params, real_prefix(batch, i, len))?;
        embeddings.row_mut(i).assign(&trace.embedding);
        logits.row_mut(i).assign(&trace.logits);
        attention.push(trace.alpha);
    }
    Ok(ForwardOutput {
        embeddings,
        logits,
        attention,
    })
}

/// Numerically stable softmax.
pub fn softmax(logits: &Array1<f64>) -> Array1<f64> {
    let max = logits.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
    let e = logits.mapv(|v| (v - max).exp());
    let total = e.sum();
    e / total
}

/// Mean softmax cross-entropy over the batch and its exact gradient.
pub fn loss_and_grad(params: &ModelParams, batch: &Batch) -> Result<(f64, ModelParams)> {
    let (loss, grads, _) = loss_and_grad_inner(params, batch)?;
    Ok((loss, grads))
}

pub(crate) fn loss_and_grad_inner(
    params: &ModelParams,
    batch: &Batch,
) -> Result<(f64, ModelParams, Vec<f64>)> {
    let labels = batch
        .labels
        .as_ref()
        .ok_or_else(|| Error::ShapeMismatch("batch has no labels".into()))?;
    let lengths = batch.lengths()?;
    if batch.is_empty() {
        return Err(Error::EmptyInput);
    }
    let n_speakers = params.config.n_speakers;
    if let Some(&bad) = labels.iter().find(|&&l| l >= n_speakers) {
        return Err(Error::ShapeMismatch(format!(
            "label {bad} for {n_speakers} speakers"
        )));
    }
    let scale = 1.0 / batch.len() as f64;
    let mut grads = params.zeros_like();
    let mut item_losses = Vec::with_capacity(batch.len());
    for (i, &len) in lengths.iter().enumerate() {
        let trace = forward_item(params, real_prefix(batch, i, len))?;
        let probs = softmax(&trace.logits);
        let label = labels[i];
        let max = trace.logits.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
        let log_z = max + trace.logits.mapv(|v| (v - max).exp()).sum().ln();
        item_losses.push(log_z - trace.logits[label]);
        let mut dlogits = probs;
        dlogits[label] -= 1.0;
        dlogits *= scale;
        backward_item(params, &trace, &dlogits, &mut grads);
    }
    let loss = item_losses.iter().sum::<f64>() * scale;
    Ok((loss, grads, item_losses))
}
