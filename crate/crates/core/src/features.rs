//! Duration representations: per-phone duration rows, mean duration
//! profiles, and variable-length training chunks.

use std::io::Write;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::alignment::{write_utterance, AlignedPhone, AlignedUtterance};
use crate::error::{Error, Result};
use crate::inventory::PhonemeInventory;

pub const MIN_CHUNK_LEN: usize = 32;
pub const MAX_CHUNK_LEN: usize = 256;

/// One row per phone. Row `k` stands for the N-vector that is zero except
/// for `length_frames` at `class_index`; rows are kept in sparse form.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DurationFeatureSequence {
    pub rows: Vec<AlignedPhone>,
    pub n_classes: usize,
}

impl DurationFeatureSequence {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Materializes row `k` as a dense vector.
    pub fn dense_row(&self, k: usize) -> Vec<u32> {
        let mut v = vec![0; self.n_classes];
        let p = self.rows[k];
        v[p.class_index] = p.length_frames;
        v
    }

    pub fn total_frames(&self) -> u64 {
        self.rows.iter().map(|p| u64::from(p.length_frames)).sum()
    }
}

pub fn raw_duration_sequence(
    utterances: &[&AlignedUtterance],
    inventory: &PhonemeInventory,
) -> Result<DurationFeatureSequence> {
    if utterances.is_empty() || utterances.iter().all(|u| u.phones.is_empty()) {
        return Err(Error::EmptyInput);
    }
    let n = inventory.len();
    let rows: Vec<AlignedPhone> = utterances.iter().flat_map(|u| u.phones.iter().copied()).collect();
    if let Some(bad) = rows.iter().find(|p| p.class_index >= n) {
        return Err(Error::DimensionMismatch {
            left: bad.class_index,
            right: n,
        });
    }
    Ok(DurationFeatureSequence { rows, n_classes: n })
}

/// Per-class average duration with a coverage mask.
#[derive(Debug, Clone, PartialEq)]
pub struct MeanDurationVector {
    pub values: Vec<f64>,
    pub present: Vec<bool>,
}

impl MeanDurationVector {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Classes never observed receive the token-level mean duration over all
/// phones in the input.
pub fn mean_duration_vector(
    utterances: &[&AlignedUtterance],
    inventory: &PhonemeInventory,
) -> Result<MeanDurationVector> {
    let n = inventory.len();
    let mut sums = vec![0u64; n];
    let mut counts = vec![0u64; n];
    for p in utterances.iter().flat_map(|u| u.phones.iter()) {
        if p.class_index >= n {
            return Err(Error::DimensionMismatch {
                left: p.class_index,
                right: n,
            });
        }
        sums[p.class_index] += u64::from(p.length_frames);
        counts[p.class_index] += 1;
    }
    let tokens: u64 = counts.iter().sum();
    if tokens == 0 {
        return Err(Error::EmptyInput);
    }
    let fill = sums.iter().sum::<u64>() as f64 / tokens as f64;
    let values = sums
        .iter()
        .zip(&counts)
        .map(|(&s, &c)| if c > 0 { s as f64 / c as f64 } else { fill })
        .collect();
    let present = counts.iter().map(|&c| c > 0).collect();
    Ok(MeanDurationVector { values, present })
}

/// A training segment drawn from one speaker's phone stream.
#[derive(Debug, Clone, PartialEq)]
pub struct Chunk {
    pub speaker_id: String,
    pub rows: DurationFeatureSequence,
    pub source_utterances: Vec<String>,
    /// Phones removed from the front of the first contributing utterance.
    pub shift: usize,
    /// Phones the first utterance had available when the shift was drawn.
    pub first_utterance_len: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ChunkLengths {
    pub min_len: usize,
    pub max_len: usize,
}

impl Default for ChunkLengths {
    fn default() -> Self {
        ChunkLengths {
            min_len: MIN_CHUNK_LEN,
            max_len: MAX_CHUNK_LEN,
        }
    }
}

/// Splits one speaker's utterances into variable-length chunks.
///
/// The utterances are put in random order and concatenated. For every
/// chunk a length `c` is drawn uniformly from `min_len..=max_len`, then a
/// shift `r` uniformly from `0..=min(len(u1), c)` where `u1` is the
/// utterance the chunk would start in; `r` phones are dropped and the next
/// `c` phones form the chunk.
///
/// When the stream runs out, the leftover becomes a final, shorter chunk
/// only if it has at least `min_len` phones and at least `r` phones;
/// otherwise it is dropped. A stream that yields no chunk at all (for
/// example one shorter than `min_len`) gives a single unshifted chunk of
/// its first `min(len, max_len)` phones.
pub fn make_chunks<R: Rng + ?Sized>(
    utterances: &[&AlignedUtterance],
    inventory: &PhonemeInventory,
    rng: &mut R,
    lengths: ChunkLengths,
) -> Result<Vec<Chunk>> {
    if utterances.is_empty() || utterances.iter().all(|u| u.phones.is_empty()) {
        return Err(Error::EmptyInput);
    }
    let ChunkLengths { min_len, max_len } = lengths;
    if min_len == 0 || min_len > max_len {
        return Err(Error::InvalidConfig(format!(
            "chunk lengths must satisfy 1 <= min <= max, got {min_len}..={max_len}"
        )));
    }
    let speaker_id = utterances[0].speaker_id.clone();
    if let Some(other) = utterances.iter().find(|u| u.speaker_id != speaker_id) {
        return Err(Error::InvalidConfig(format!(
            "chunks cannot mix speakers ({speaker_id:?} and {:?})",
            other.speaker_id
        )));
    }
    let n = inventory.len();

    let mut order: Vec<usize> = (0..utterances.len()).collect();
    order.shuffle(rng);

    // (utterance slot in `order`, phone) for every phone of the stream.
    let mut stream: Vec<(usize, AlignedPhone)> = Vec::new();
    // utterance end offsets in the stream, indexed by slot
    let mut ends: Vec<usize> = Vec::with_capacity(order.len());
    for (slot, &u) in order.iter().enumerate() {
        stream.extend(utterances[u].phones.iter().map(|&p| (slot, p)));
        ends.push(stream.len());
    }
    let make = |start: usize, end: usize, shift: usize, first_len: usize| -> Chunk {
        let rows: Vec<AlignedPhone> = stream[start..end].iter().map(|&(_, p)| p).collect();
        let mut sources: Vec<String> = Vec::new();
        for &(slot, _) in &stream[start..end] {
            let id = &utterances[order[slot]].utterance_id;
            if sources.last() != Some(id) {
                sources.push(id.clone());
            }
        }
        Chunk {
            speaker_id: speaker_id.clone(),
            rows: DurationFeatureSequence { rows, n_classes: n },
            source_utterances: sources,
            shift,
            first_utterance_len: first_len,
        }
    };

    let mut chunks = Vec::new();
    let mut pos = 0;
    while pos < stream.len() {
        let c = rng.random_range(min_len..=max_len);
        let first_len = ends[stream[pos].0] - pos;
        let shift = rng.random_range(0..=first_len.min(c));
        let start = pos + shift;
        let avail = stream.len() - start;
        if avail >= c {
            chunks.push(make(start, start + c, shift, first_len));
            pos = start + c;
        } else {
            if avail >= min_len && avail >= shift {
                chunks.push(make(start, stream.len(), shift, first_len));
            }
            break;
        }
    }
    if chunks.is_empty() {
        let first_len = ends[0];
        chunks.push(make(0, stream.len().min(max_len), 0, first_len));
    }
    Ok(chunks)
}

/// Debug dump: each chunk as a `# chunk` header followed by alignment lines.
pub fn write_chunks<W: Write>(
    chunks: &[Chunk],
    inventory: &PhonemeInventory,
    sink: &mut W,
) -> Result<()> {
    for (i, chunk) in chunks.iter().enumerate() {
        writeln!(
            sink,
            "# chunk {i} speaker={} phones={} shift={} sources={}",
            chunk.speaker_id,
            chunk.rows.len(),
            chunk.shift,
            chunk.source_utterances.join(",")
        )?;
        let utt = AlignedUtterance {
            utterance_id: format!("{}_chunk{i}", chunk.speaker_id),
            speaker_id: chunk.speaker_id.clone(),
            phones: chunk.rows.rows.clone(),
        };
        write_utterance(&utt, inventory, sink)?;
    }
    Ok(())
}
