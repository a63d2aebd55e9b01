//! Learned duration embeddings: a dilated convolutional encoder with
//! attentive statistics pooling, trained as a speaker classifier and scored
//! by cosine similarity of its embedding layer.

mod config;
mod io;
mod network;
mod params;
mod scoring;
mod train;

pub use config::{ModelConfig, TrainConfig};
pub use io::{load_model, load_model_bytes, save_model, save_model_bytes, FORMAT_VERSION, MAGIC};
pub use network::{forward, loss_and_grad, softmax, Batch, ForwardOutput};
pub use params::{ConvBlock, ModelParams};
pub use scoring::{cosine, cosine_score, embed, score_trials_embedding, SpeakerEmbedding, MODEL_NAME};
pub use train::{train, train_with_callback, Adam, TrainingLog};

pub fn init_model<R: rand::Rng + ?Sized>(
    config: &ModelConfig,
    rng: &mut R,
) -> crate::error::Result<ModelParams> {
    ModelParams::init(config, rng)
}
