use durembed::embedder::{
    cosine_score, embed, forward, init_model, load_model_bytes, loss_and_grad, save_model_bytes, train,
    Batch, ModelConfig, TrainConfig,
};
use durembed::synth::{generate_corpus, sample_speakers, SynthConfig};
use durembed::{rng, AlignedPhone, Corpus, Error, PhonemeInventory};
use rand::Rng;

fn small_config(n_classes: usize, n_speakers: usize) -> ModelConfig {
    ModelConfig {
        proj_dim: 12,
        encoder_channels: 12,
        embed_dim: 8,
        attention_hidden: 6,
        ..ModelConfig::new(n_classes, n_speakers)
    }
}

fn random_sequence(rng: &mut impl Rng, n_classes: usize, len: usize) -> Vec<AlignedPhone> {
    (0..len)
        .map(|_| AlignedPhone::new(rng.random_range(0..n_classes), rng.random_range(1..30)))
        .collect()
}

fn small_corpus(seed: u64) -> Corpus {
    let config = SynthConfig {
        n_speakers: 4,
        utts_per_speaker: 16,
        phones_per_utt: (20, 40),
        sigma_speaker: 0.5,
        seed,
        ..SynthConfig::default()
    };
    let inv = PhonemeInventory::new((0..6).map(|i| format!("p{i}"))).unwrap();
    let profiles = sample_speakers(&config, inv.len(), &mut rng::stream(seed, "speakers")).unwrap();
    generate_corpus(&profiles, &config, &inv, &mut rng::stream(seed, "corpus")).unwrap()
}

#[test]
fn init_is_deterministic_with_expected_shapes() {
    let config = ModelConfig::new(336, 40);
    let a = init_model(&config, &mut rng::stream(1, "init")).unwrap();
    let b = init_model(&config, &mut rng::stream(1, "init")).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.classifier_weight.dim(), (128, 40));
    assert_eq!(a.projection.dim(), (336, 128));
}

#[test]
fn forward_is_finite_and_shaped() {
    let config = ModelConfig::new(336, 7);
    let params = init_model(&config, &mut rng::stream(2, "init")).unwrap();
    let mut r = rng::stream(2, "data");
    let seqs: Vec<Vec<AlignedPhone>> = [32, 5, 100].iter().map(|&n| random_sequence(&mut r, 336, n)).collect();
    let refs: Vec<&[AlignedPhone]> = seqs.iter().map(Vec::as_slice).collect();
    let out = forward(&params, &Batch::pad(&refs, None).unwrap()).unwrap();
    assert_eq!(out.embeddings.dim(), (3, 128));
    assert_eq!(out.logits.dim(), (3, 7));
    assert!(out.embeddings.iter().chain(out.logits.iter()).all(|v| v.is_finite()));
}

#[test]
fn padding_does_not_change_embeddings() {
    let config = small_config(9, 3);
    let params = init_model(&config, &mut rng::stream(3, "init")).unwrap();
    let mut r = rng::stream(3, "data");
    for _ in 0..20 {
        let len = r.random_range(1..60);
        let seq = random_sequence(&mut r, 9, len);
        let filler = AlignedPhone::new(r.random_range(0..9), r.random_range(1..500));
        let plain = forward(&params, &Batch::pad(&[&seq], None).unwrap()).unwrap();
        let padded = forward(&params, &Batch::pad_with(&[&seq], len + 10, None, filler).unwrap()).unwrap();
        for (a, b) in plain.embeddings.iter().zip(padded.embeddings.iter()) {
            assert!((a - b).abs() <= 1e-6);
        }
    }
}

#[test]
fn small_step_along_negative_gradient_reduces_loss() {
    let config = small_config(9, 4);
    let mut params = init_model(&config, &mut rng::stream(4, "init")).unwrap();
    let mut r = rng::stream(4, "data");
    let seqs: Vec<Vec<AlignedPhone>> = (0..5).map(|_| random_sequence(&mut r, 9, 25)).collect();
    let refs: Vec<&[AlignedPhone]> = seqs.iter().map(Vec::as_slice).collect();
    let batch = Batch::pad(&refs, Some(vec![0, 1, 2, 3, 0])).unwrap();
    let (before, grads) = loss_and_grad(&params, &batch).unwrap();
    params.add_scaled(&grads, -1e-3).unwrap();
    let (after, _) = loss_and_grad(&params, &batch).unwrap();
    assert!(after < before, "{after} >= {before}");
}

#[test]
fn model_bytes_round_trip() {
    for seed in 0..4 {
        let config = small_config(5 + seed as usize, 2 + seed as usize);
        let params = init_model(&config, &mut rng::stream(seed, "init")).unwrap();
        let bytes = save_model_bytes(&params);
        assert_eq!(load_model_bytes(&bytes).unwrap(), params);
    }
}

#[test]
fn garbage_model_rejected() {
    assert!(load_model_bytes(b"").is_err());
    assert!(load_model_bytes(b"NOPE\x01").is_err());
    let params = init_model(&small_config(5, 2), &mut rng::stream(0, "init")).unwrap();
    let mut bytes = save_model_bytes(&params);
    bytes.truncate(bytes.len() / 2);
    assert!(matches!(load_model_bytes(&bytes), Err(Error::CorruptPayload(_))));
}

#[test]
fn training_is_reproducible_and_learns() {
    let corpus = small_corpus(11);
    let config = small_config(6, 4);
    let hyper = TrainConfig {
        epochs: 25,
        batch_size: 4,
        learning_rate: 3e-3,
        seed: 5,
        min_chunk_len: 8,
        max_chunk_len: 48,
        ..TrainConfig::default()
    };
    let (params, log) = train(&corpus, &config, &hyper).unwrap();
    let (_, again) = train(&corpus, &config, &hyper).unwrap();
    assert_eq!(log, again);
    assert_eq!(log.epoch_losses.len(), 25);
    let first = log.epoch_losses[0];
    let last = *log.epoch_losses.last().unwrap();
    assert!(last < 0.5 * first, "{first} -> {last}");

    // 1 vs 8 utterances of one speaker, against another speaker's 8
    let utts = |spk: &str| -> Vec<&durembed::AlignedUtterance> {
        corpus.speaker_utterances(spk).unwrap().iter().map(|&i| &corpus.utterances()[i]).collect()
    };
    let (a, b) = (utts("spk000"), utts("spk001"));
    let one = embed(&params, &a[..1]).unwrap();
    let eight = embed(&params, &a[8..16]).unwrap();
    let other = embed(&params, &b[..8]).unwrap();
    assert_eq!(one.vector.len(), 8);
    assert!(cosine_score(&one, &eight).unwrap() > cosine_score(&one, &other).unwrap());
    assert_eq!(embed(&params, &a[..3]).unwrap(), embed(&params, &a[..3]).unwrap());
}

#[test]
fn zero_epochs_return_initial_params() {
    let corpus = small_corpus(2);
    let config = small_config(6, 4);
    let hyper = TrainConfig { epochs: 0, seed: 9, ..TrainConfig::default() };
    let (params, log) = train(&corpus, &config, &hyper).unwrap();
    assert!(log.epoch_losses.is_empty());
    assert_eq!(params, init_model(&config, &mut rng::stream(9, "init")).unwrap());
}

#[test]
fn single_speaker_cannot_train() {
    let corpus = small_corpus(2);
    let only: Vec<_> = corpus.utterances().iter().filter(|u| u.speaker_id == "spk000").cloned().collect();
    let corpus = Corpus::new(corpus.inventory().clone(), only).unwrap();
    let err = train(&corpus, &small_config(6, 1), &TrainConfig::default()).unwrap_err();
    assert!(matches!(err, Error::InsufficientSpeakers(1)));
}
