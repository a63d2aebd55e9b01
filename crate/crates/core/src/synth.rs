//! Synthetic alignment corpora with controllable speaker idiosyncrasy.
//!
//! Each speaker has, per phoneme class, a log-duration mean drawn around a
//! population mean with spread `sigma_speaker`. Phone lengths are
//! log-normal around the speaker's class mean with spread `sigma_token`,
//! rounded to whole frames and clamped to at least one.

use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::alignment::{AlignedPhone, AlignedUtterance, Corpus};
use crate::error::{Error, Result};
use crate::inventory::PhonemeInventory;

pub const BUILTIN_INVENTORY: &str = "arpabet336";

/// Population log-duration mean, shared by all classes or given per class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum LogMeans {
    Shared(f64),
    PerClass(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthConfig {
    pub n_speakers: usize,
    pub utts_per_speaker: usize,
    /// Inclusive range of phones per utterance.
    pub phones_per_utt: (usize, usize),
    pub population_log_mean: LogMeans,
    pub sigma_speaker: f64,
    pub sigma_token: f64,
    pub seed: u64,
    /// `arpabet336` or a path to an inventory file.
    #[serde(default = "default_inventory")]
    pub inventory: String,
    /// Inserted between speaker id and utterance number in utterance ids.
    #[serde(default = "default_tag")]
    pub utterance_tag: String,
}

fn default_inventory() -> String {
    BUILTIN_INVENTORY.to_string()
}

fn default_tag() -> String {
    "u".to_string()
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_speakers: 20,
            utts_per_speaker: 50,
            phones_per_utt: (30, 90),
            population_log_mean: LogMeans::Shared(6f64.ln()),
            sigma_speaker: 0.2,
            sigma_token: 0.35,
            seed: 0,
            inventory: default_inventory(),
            utterance_tag: default_tag(),
        }
    }
}

impl SynthConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let config: SynthConfig =
            toml::from_str(text).map_err(|e| Error::InvalidConfig(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = self.phones_per_utt;
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if self.n_speakers == 0 || self.utts_per_speaker == 0 {
            return bad("n_speakers and utts_per_speaker must be positive".into());
        }
        if lo < 1 || lo > hi {
            return bad(format!("phones_per_utt must satisfy 1 <= lo <= hi, got ({lo}, {hi})"));
        }
        if !(self.sigma_speaker >= 0.0 && self.sigma_speaker.is_finite()) {
            return bad(format!("sigma_speaker must be >= 0, got {}", self.sigma_speaker));
        }
        if !(self.sigma_token > 0.0 && self.sigma_token.is_finite()) {
            return bad(format!("sigma_token must be > 0, got {}", self.sigma_token));
        }
        let finite = match &self.population_log_mean {
            LogMeans::Shared(m) => m.is_finite(),
            LogMeans::PerClass(v) => !v.is_empty() && v.iter().all(|m| m.is_finite()),
        };
        if !finite {
            return bad("population_log_mean must be finite".into());
        }
        Ok(())
    }

    /// Resolves the inventory, reading relative paths against `base_dir`.
    pub fn load_inventory(&self, base_dir: &Path) -> Result<PhonemeInventory> {
        if self.inventory == BUILTIN_INVENTORY {
            return Ok(PhonemeInventory::arpabet_positional());
        }
        let path = base_dir.join(&self.inventory);
        let file = std::fs::File::open(path)?;
        PhonemeInventory::load(std::io::BufReader::new(file))
    }

    pub fn class_log_means(&self, n_classes: usize) -> Result<Vec<f64>> {
        match &self.population_log_mean {
            LogMeans::Shared(m) => Ok(vec![*m; n_classes]),
            LogMeans::PerClass(v) if v.len() == n_classes => Ok(v.clone()),
            LogMeans::PerClass(v) => Err(Error::DimensionMismatch {
                left: v.len(),
                right: n_classes,
            }),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpeakerProfile {
    pub speaker_id: String,
    pub log_mean: Vec<f64>,
    pub log_std: Vec<f64>,
}

impl SpeakerProfile {
    /// Expected length per class before rounding, `exp(m + s^2 / 2)`.
    pub fn expected_lengths(&self) -> Vec<f64> {
        self.log_mean
            .iter()
            .zip(&self.log_std)
            .map(|(m, s)| (m + s * s / 2.0).exp())
            .collect()
    }
}

pub fn speaker_id(index: usize) -> String {
    format!("spk{index:03}")
}

pub fn sample_speakers<R: Rng + ?Sized>(
    config: &SynthConfig,
    n_classes: usize,
    rng: &mut R,
) -> Result<Vec<SpeakerProfile>> {
    config.validate()?;
    let population = config.class_log_means(n_classes)?;
    let spread = Normal::new(0.0, config.sigma_speaker)
        .map_err(|e| Error::InvalidConfig(e.to_string()))?;
    Ok((0..config.n_speakers)
        .map(|s| SpeakerProfile {
            speaker_id: speaker_id(s),
            log_mean: population.iter().map(|m| m + spread.sample(rng)).collect(),
            log_std: vec![config.sigma_token; n_classes],
        })
        .collect())
}

pub fn generate_corpus<R: Rng + ?Sized>(
    profiles: &[SpeakerProfile],
    config: &SynthConfig,
    inventory: &PhonemeInventory,
    rng: &mut R,
) -> Result<Corpus> {
    config.validate()?;
    let n = inventory.len();
    let (lo, hi) = config.phones_per_utt;
    let standard = Normal::new(0.0, 1.0).expect("unit normal");
    let mut utterances = Vec::with_capacity(profiles.len() * config.utts_per_speaker);
    for profile in profiles {
        if profile.log_mean.len() != n || profile.log_std.len() != n {
            return Err(Error::DimensionMismatch {
                left: profile.log_mean.len(),
                right: n,
            });
        }
        for u in 0..config.utts_per_speaker {
            let count = rng.random_range(lo..=hi);
            let phones = (0..count)
                .map(|_| {
                    let class = rng.random_range(0..n);
                    let z: f64 = standard.sample(rng);
                    let log_len = profile.log_mean[class] + profile.log_std[class] * z;
                    let frames = log_len.exp().round().clamp(1.0, f64::from(u32::MAX)) as u32;
                    AlignedPhone::new(class, frames)
                })
                .collect();
            utterances.push(AlignedUtterance {
                utterance_id: format!("{}_{}{u:03}", profile.speaker_id, config.utterance_tag),
                speaker_id: profile.speaker_id.clone(),
                phones,
            });
        }
    }
    Corpus::new(inventory.clone(), utterances)
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;

    fn small_inventory() -> PhonemeInventory {
        PhonemeInventory::new((0..6).map(|i| format!("P{i}"))).unwrap()
    }

    #[test]
    fn zero_spread_gives_identical_profiles() {
        let config = SynthConfig {
            sigma_speaker: 0.0,
            n_speakers: 5,
            ..SynthConfig::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let profiles = sample_speakers(&config, 6, &mut rng).unwrap();
        assert!(profiles.windows(2).all(|w| w[0].log_mean == w[1].log_mean));
    }

    #[test]
    fn profiles_are_seeded_and_distinct() {
        let config = SynthConfig::default();
        let draw = || sample_speakers(&config, 6, &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
        let profiles = draw();
        assert_eq!(profiles, draw());
        let ids: std::collections::HashSet<_> = profiles.iter().map(|p| &p.speaker_id).collect();
        assert_eq!(ids.len(), 20);
    }

    #[test]
    fn lengths_are_at_least_one_frame() {
        let config = SynthConfig {
            n_speakers: 3,
            utts_per_speaker: 10,
            population_log_mean: LogMeans::Shared(-1.0),
            sigma_token: 1.0,
            ..SynthConfig::default()
        };
        let inv = small_inventory();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let profiles = sample_speakers(&config, inv.len(), &mut rng).unwrap();
        let corpus = generate_corpus(&profiles, &config, &inv, &mut rng).unwrap();
        assert_eq!(corpus.len(), 30);
        for u in corpus.utterances() {
            assert!((30..=90).contains(&u.phones.len()));
            assert!(u.phones.iter().all(|p| p.length_frames >= 1));
        }
    }

    #[test]
    fn config_validation() {
        let good = SynthConfig::default();
        assert!(good.validate().is_ok());
        for bad in [
            SynthConfig { sigma_token: 0.0, ..good.clone() },
            SynthConfig { sigma_speaker: -0.1, ..good.clone() },
            SynthConfig { phones_per_utt: (5, 2), ..good.clone() },
            SynthConfig { phones_per_utt: (0, 2), ..good.clone() },
            SynthConfig { n_speakers: 0, ..good.clone() },
        ] {
            assert!(bad.validate().is_err(), "{bad:?}");
        }
        assert!(good.class_log_means(3).is_ok());
        let per = SynthConfig {
            population_log_mean: LogMeans::PerClass(vec![1.0, 2.0]),
            ..good
        };
        assert!(per.class_log_means(3).is_err());
    }

    #[test]
    fn toml_round_trip() {
        let config = SynthConfig::default();
        let back = SynthConfig::from_toml(&config.to_toml()).unwrap();
        assert_eq!(back, config);
        let text = "n_speakers = 2\nutts_per_speaker = 3\nphones_per_utt = [4, 8]\n\
                    population_log_mean = [1.0, 2.0]\nsigma_speaker = 0.1\n\
                    sigma_token = 0.2\nseed = 5\n";
        let parsed = SynthConfig::from_toml(text).unwrap();
        assert_eq!(parsed.population_log_mean, LogMeans::PerClass(vec![1.0, 2.0]));
        assert_eq!(parsed.inventory, BUILTIN_INVENTORY);
        assert!(SynthConfig::from_toml("n_speakers = 2\n").is_err());
        assert!(SynthConfig::from_toml(&format!("{text}bogus = 1\n")).is_err());
    }
}
