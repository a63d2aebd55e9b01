//! Finite-difference check of the encoder's analytic gradient.

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::alignment::AlignedPhone;
use crate::embedder::{loss_and_grad, Batch, ModelConfig, ModelParams};
use crate::error::Result;
use crate::rng::indexed_stream;

pub const STEP: f64 = 1e-5;
/// Gradients smaller than this are compared in absolute terms.
pub const MAGNITUDE_FLOOR: f64 = 1e-6;
pub const TOLERANCE: f64 = 1e-4;

/// The small configuration used for checks: 5 classes, width 4, 3 speakers.
pub fn tiny_config() -> ModelConfig {
    ModelConfig {
        proj_dim: 4,
        encoder_channels: 4,
        embed_dim: 4,
        attention_hidden: 4,
        ..ModelConfig::new(5, 3)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradcheckReport {
    pub draws: usize,
    pub n_params: usize,
    pub max_rel_error: f64,
    pub tolerance: f64,
}

impl GradcheckReport {
    pub fn passed(&self) -> bool {
        self.max_rel_error < self.tolerance
    }
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(MAGNITUDE_FLOOR)
}

/// Random parameters (biases included) and a random labelled batch with
/// uneven lengths.
pub fn random_problem<R: Rng + ?Sized>(config: &ModelConfig, rng: &mut R) -> Result<(ModelParams, Batch)> {
    let mut params = ModelParams::init(config, rng)?;
    let jitter = Normal::new(0.0, 0.3).expect("positive std");
    for t in params.tensors_mut() {
        for v in t.iter_mut() {
            *v += jitter.sample(rng);
        }
    }
    let items = rng.random_range(2..=4);
    let seqs: Vec<Vec<AlignedPhone>> = (0..items)
        .map(|_| {
            let len = rng.random_range(3..=14);
            (0..len)
                .map(|_| {
                    AlignedPhone::new(rng.random_range(0..config.n_classes), rng.random_range(1..=6))
                })
                .collect()
        })
        .collect();
    let labels = (0..items).map(|_| rng.random_range(0..config.n_speakers)).collect();
    let refs: Vec<&[AlignedPhone]> = seqs.iter().map(Vec::as_slice).collect();
    Ok((params, Batch::pad(&refs, Some(labels))?))
}

/// Worst relative error between analytic and central-difference gradients
/// over every parameter. `corrupt` perturbs the analytic gradient, so the
/// check can be seen to fail.
pub fn check_gradients(params: &ModelParams, batch: &Batch, corrupt: bool) -> Result<f64> {
    let (_, mut grads) = loss_and_grad(params, batch)?;
    if corrupt {
        let last = grads.n_params() - 1;
        let v = grads.get_flat(last).unwrap_or(0.0);
        grads.set_flat(last, v * 1.01 + 1e-3);
    }
    let mut probe = params.clone();
    let mut worst: f64 = 0.0;
    for i in 0..params.n_params() {
        let base = params.get_flat(i).expect("in range");
        probe.set_flat(i, base + STEP);
        let (up, _) = loss_and_grad(&probe, batch)?;
        probe.set_flat(i, base - STEP);
        let (down, _) = loss_and_grad(&probe, batch)?;
        probe.set_flat(i, base);
        let numeric = (up - down) / (2.0 * STEP);
        worst = worst.max(relative_error(grads.get_flat(i).expect("in range"), numeric));
    }
    Ok(worst)
}

pub fn run(config: &ModelConfig, seed: u64, draws: usize, corrupt: bool) -> Result<GradcheckReport> {
    let mut worst: f64 = 0.0;
    let mut n_params = 0;
    for d in 0..draws {
        let mut rng = indexed_stream(seed, "gradcheck", d as u64);
        let (params, batch) = random_problem(config, &mut rng)?;
        n_params = params.n_params();
        worst = worst.max(check_gradients(&params, &batch, corrupt)?);
    }
    Ok(GradcheckReport {
        draws,
        n_params,
        max_rel_error: worst,
        tolerance: TOLERANCE,
    })
}
