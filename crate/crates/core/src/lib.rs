//! Speaker verification from phoneme durations.
//!
//! Two attacks on speech whose phone timings survive anonymization: a
//! training-free comparison of mean phone-duration profiles
//! ([`metric`]) and a learned encoder over per-phone duration sequences
//! ([`embedder`]). [`eval`] builds verification trials and reports equal
//! error rates, and [`synth`] generates corpora with known speaker
//! structure for checking both.

pub mod alignment;
pub mod embedder;
pub mod error;
pub mod eval;
pub mod features;
pub mod gradcheck;
pub mod inventory;
pub mod metric;
pub mod rng;
pub mod synth;

pub use alignment::{AlignedPhone, AlignedUtterance, Corpus};
pub use error::{Error, Result};
pub use inventory::PhonemeInventory;
