use ndarray::{Array1, Array2, Array3};
use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::config::ModelConfig;
use crate::error::{Error, Result};

/// Temporal convolution over `kernel_width` dilated taps.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvBlock {
    /// `(kernel_width, in_channels, out_channels)`.
    pub weight: Array3<f64>,
    pub bias: Array1<f64>,
}

/// All trainable tensors of the encoder. Gradients use the same type.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub config: ModelConfig,
    /// `(n_classes, proj_dim)`, no bias.
    pub projection: Array2<f64>,
    pub blocks: Vec<ConvBlock>,
    /// `(encoder_channels, attention_hidden)`.
    pub attention_weight: Array2<f64>,
    pub attention_bias: Array1<f64>,
    pub attention_vector: Array1<f64>,
    /// `(2 * encoder_channels, embed_dim)`.
    pub embedding_weight: Array2<f64>,
    pub embedding_bias: Array1<f64>,
    /// `(embed_dim, n_speakers)`.
    pub classifier_weight: Array2<f64>,
    pub classifier_bias: Array1<f64>,
}

fn normal2<R: Rng + ?Sized>(rng: &mut R, shape: (usize, usize), fan_in: usize) -> Array2<f64> {
    let dist = Normal::new(0.0, 1.0 / (fan_in as f64).sqrt()).expect("positive std");
    Array2::from_shape_simple_fn(shape, || dist.sample(rng))
}

impl ModelParams {
    pub fn zeros(config: &ModelConfig) -> Self {
        let c = config.encoder_channels;
        ModelParams {
            config: config.clone(),
            projection: Array2::zeros((config.n_classes, config.proj_dim)),
            blocks: (0..config.n_blocks)
                .map(|b| ConvBlock {
                    weight: Array3::zeros((config.kernel_width, config.block_in(b), c)),
                    bias: Array1::zeros(c),
                })
                .collect(),
            attention_weight: Array2::zeros((c, config.attention_hidden)),
            attention_bias: Array1::zeros(config.attention_hidden),
            attention_vector: Array1::zeros(config.attention_hidden),
            embedding_weight: Array2::zeros((2 * c, config.embed_dim)),
            embedding_bias: Array1::zeros(config.embed_dim),
            classifier_weight: Array2::zeros((config.embed_dim, config.n_speakers)),
            classifier_bias: Array1::zeros(config.n_speakers),
        }
    }

    /// Weights ~ N(0, 1/fan_in), biases zero.
    pub fn init<R: Rng + ?Sized>(config: &ModelConfig, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let mut p = ModelParams::zeros(config);
        let c = config.encoder_channels;
        p.projection = normal2(rng, (config.n_classes, config.proj_dim), config.n_classes);
        for (b, block) in p.blocks.iter_mut().enumerate() {
            let cin = config.block_in(b);
            let fan_in = config.kernel_width * cin;
            let dist = Normal::new(0.0, 1.0 / (fan_in as f64).sqrt()).expect("positive std");
            block.weight =
                Array3::from_shape_simple_fn((config.kernel_width, cin, c), || dist.sample(rng));
        }
        p.attention_weight = normal2(rng, (c, config.attention_hidden), c);
        let v = normal2(rng, (1, config.attention_hidden), config.attention_hidden);
        p.attention_vector = v.row(0).to_owned();
        p.embedding_weight = normal2(rng, (2 * c, config.embed_dim), 2 * c);
        p.classifier_weight = normal2(rng, (config.embed_dim, config.n_speakers), config.embed_dim);
        Ok(p)
    }

    pub fn zeros_like(&self) -> Self {
        ModelParams::zeros(&self.config)
    }

    /// Tensor shapes in declaration order.
    pub fn shapes(config: &ModelConfig) -> Vec<Vec<usize>> {
        ModelParams::zeros(config)
            .tensors()
            .into_iter()
            .map(|(_, shape, _)| shape)
            .collect()
    }

    /// `(name, shape, data)` for every tensor in declaration order.
    pub fn tensors(&self) -> Vec<(String, Vec<usize>, &[f64])> {
        let mut out: Vec<(String, Vec<usize>, &[f64])> = Vec::new();
        out.push(("projection".into(), self.projection.shape().to_vec(), slice(&self.projection)));
        for (b, block) in self.blocks.iter().enumerate() {
            out.push((format!("block{b}.weight"), block.weight.shape().to_vec(), slice(&block.weight)));
            out.push((format!("block{b}.bias"), block.bias.shape().to_vec(), slice(&block.bias)));
        }
        out.push(("attention.weight".into(), self.attention_weight.shape().to_vec(), slice(&self.attention_weight)));
        out.push(("attention.bias".into(), self.attention_bias.shape().to_vec(), slice(&self.attention_bias)));
        out.push(("attention.vector".into(), self.attention_vector.shape().to_vec(), slice(&self.attention_vector)));
        out.push(("embedding.weight".into(), self.embedding_weight.shape().to_vec(), slice(&self.embedding_weight)));
        out.push(("embedding.bias".into(), self.embedding_bias.shape().to_vec(), slice(&self.embedding_bias)));
        out.push(("classifier.weight".into(), self.classifier_weight.shape().to_vec(), slice(&self.classifier_weight)));
        out.push(("classifier.bias".into(), self.classifier_bias.shape().to_vec(), slice(&self.classifier_bias)));
        out
    }

    /// Mutable views of every tensor, in the order of [`tensors`](Self::tensors).
    pub fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = Vec::new();
        out.push(slice_mut(&mut self.projection));
        for block in &mut self.blocks {
            out.push(slice_mut(&mut block.weight));
            out.push(slice_mut(&mut block.bias));
        }
        out.push(slice_mut(&mut self.attention_weight));
        out.push(slice_mut(&mut self.attention_bias));
        out.push(slice_mut(&mut self.attention_vector));
        out.push(slice_mut(&mut self.embedding_weight));
        out.push(slice_mut(&mut self.embedding_bias));
        out.push(slice_mut(&mut self.classifier_weight));
        out.push(slice_mut(&mut self.classifier_bias));
        out
    }

    pub fn n_params(&self) -> usize {
        self.tensors().iter().map(|(_, _, d)| d.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors()
            .iter()
            .all(|(_, _, d)| d.iter().all(|x| x.is_finite()))
    }

    /// `self += scale * other`.
    pub fn add_scaled(&mut self, other: &ModelParams, scale: f64) -> Result<()> {
        if self.config != other.config {
            return Err(Error::ShapeMismatch("parameter sets have different configs".into()));
        }
        let src: Vec<Vec<f64>> = other.tensors().into_iter().map(|(_, _, d)| d.to_vec()).collect();
        for (dst, src) in self.tensors_mut().into_iter().zip(src) {
            for (d, s) in dst.iter_mut().zip(src) {
                *d += scale * s;
            }
        }
        Ok(())
    }

    /// Reads the flat parameter at `index` over all tensors.
    pub fn get_flat(&self, mut index: usize) -> Option<f64> {
        for (_, _, d) in self.tensors() {
            if index < d.len() {
                return Some(d[index]);
            }
            index -= d.len();
        }
        None
    }

    pub fn set_flat(&mut self, mut index: usize, value: f64) -> bool {
        for d in self.tensors_mut() {
            if index < d.len() {
                d[index] = value;
                return true;
            }
            index -= d.len();
        }
        false
    }
}

fn slice<S, D>(a: &ndarray::ArrayBase<S, D>) -> &[f64]
where
    S: ndarray::Data<Elem = f64>,
    D: ndarray::Dimension,
{
    a.as_slice().expect("parameters are stored contiguously")
}

fn slice_mut<S, D>(a: &mut ndarray::ArrayBase<S, D>) -> &mut [f64]
where
    S: ndarray::DataMut<Elem = f64>,
    D: ndarray::Dimension,
{
    a.as_slice_mut().expect("parameters are stored contiguously")
}
