//! Phone-level alignment corpora.
//!
//! The on-disk format is one phone per line:
//!
//! ```text
//! <speaker_id> <utterance_id> <phoneme_label> <length_frames>
//! ```
//!
//! Lines of one utterance are contiguous and in temporal order. Blank lines
//! and `#` comments are ignored.

use std::collections::{HashMap, HashSet};
use std::io::{BufRead, Write};

use indexmap::IndexMap;

use crate::error::{Error, Result};
use crate::inventory::{strip_comment, PhonemeInventory};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct AlignedPhone {
    pub class_index: usize,
    pub length_frames: u32,
}

impl AlignedPhone {
    pub fn new(class_index: usize, length_frames: u32) -> Self {
        AlignedPhone {
            class_index,
            length_frames,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AlignedUtterance {
    pub utterance_id: String,
    pub speaker_id: String,
    pub phones: Vec<AlignedPhone>,
}

impl AlignedUtterance {
    pub fn total_frames(&self) -> u64 {
        self.phones.iter().map(|p| u64::from(p.length_frames)).sum()
    }
}

/// A validated set of utterances over one inventory.
#[derive(Debug, Clone)]
pub struct Corpus {
    inventory: PhonemeInventory,
    utterances: Vec<AlignedUtterance>,
    by_speaker: IndexMap<String, Vec<usize>>,
    by_id: HashMap<String, usize>,
}

impl PartialEq for Corpus {
    fn eq(&self, other: &Self) -> bool {
        self.inventory == other.inventory && self.utterances == other.utterances
    }
}

impl Corpus {
    pub fn new(inventory: PhonemeInventory, utterances: Vec<AlignedUtterance>) -> Result<Self> {
        let mut by_speaker: IndexMap<String, Vec<usize>> = IndexMap::new();
        let mut by_id = HashMap::with_capacity(utterances.len());
        for (i, utt) in utterances.iter().enumerate() {
            if utt.phones.is_empty() {
                return Err(Error::EmptyInput);
            }
            for p in &utt.phones {
                if p.class_index >= inventory.len() {
                    return Err(Error::ShapeMismatch(format!(
                        "class index {} out of range for inventory of {}",
                        p.class_index,
                        inventory.len()
                    )));
                }
                if p.length_frames == 0 {
                    return Err(Error::ShapeMismatch(format!(
                        "zero-length phone in utterance {:?}",
                        utt.utterance_id
                    )));
                }
            }
            if by_id.insert(utt.utterance_id.clone(), i).is_some() {
                return Err(Error::InvalidConfig(format!(
                    "duplicate utterance id {:?}",
                    utt.utterance_id
                )));
            }
            by_speaker.entry(utt.speaker_id.clone()).or_default().push(i);
        }
        Ok(Corpus {
            inventory,
            utterances,
            by_speaker,
            by_id,
        })
    }

    pub fn inventory(&self) -> &PhonemeInventory {
        &self.inventory
    }

    pub fn utterances(&self) -> &[AlignedUtterance] {
        &self.utterances
    }

    pub fn len(&self) -> usize {
        self.utterances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.utterances.is_empty()
    }

    /// Speakers in order of first appearance.
    pub fn speakers(&self) -> impl Iterator<Item = &str> {
        self.by_speaker.keys().map(String::as_str)
    }

    pub fn n_speakers(&self) -> usize {
        self.by_speaker.len()
    }

    pub fn speaker_utterances(&self, speaker_id: &str) -> Option<&[usize]> {
        self.by_speaker.get(speaker_id).map(Vec::as_slice)
    }

    pub fn by_speaker(&self) -> &IndexMap<String, Vec<usize>> {
        &self.by_speaker
    }

    pub fn utterance(&self, utterance_id: &str) -> Option<&AlignedUtterance> {
        self.by_id.get(utterance_id).map(|&i| &self.utterances[i])
    }

    /// Resolves a list of ids, failing on the first unknown one.
    pub fn lookup<'a, S: AsRef<str>>(&'a self, ids: &[S]) -> Result<Vec<&'a AlignedUtterance>> {
        ids.iter()
            .map(|id| {
                self.utterance(id.as_ref())
                    .ok_or_else(|| Error::UnknownUtterance(id.as_ref().to_string()))
            })
            .collect()
    }
}

/// Options for [`parse_alignment_with`].
#[derive(Debug, Clone, Default)]
pub struct ParseOptions {
    /// Labels dropped while parsing (typically silence and noise). They need
    /// not be present in the inventory. Utterances left without phones are
    /// dropped entirely.
    pub exclude: HashSet<String>,
}

pub fn parse_alignment<R: BufRead>(source: R, inventory: &PhonemeInventory) -> Result<Corpus> {
    parse_alignment_with(source, inventory, &ParseOptions::default())
}

pub fn parse_alignment_with<R: BufRead>(
    source: R,
    inventory: &PhonemeInventory,
    options: &ParseOptions,
) -> Result<Corpus> {
    let mut utterances: Vec<AlignedUtterance> = Vec::new();
    let mut seen: HashSet<String> = HashSet::new();

    for (i, line) in source.lines().enumerate() {
        let line_no = i + 1;
        let line = line?;
        let content = strip_comment(&line);
        let mut fields = content.split_whitespace();
        let Some(speaker) = fields.next() else {
            continue;
        };
        let (Some(utt), Some(label), Some(len), None) =
            (fields.next(), fields.next(), fields.next(), fields.next())
        else {
            return Err(Error::malformed(line_no, "expected 4 whitespace-separated fields"));
        };

        let length: i64 = len
            .parse()
            .map_err(|_| Error::malformed(line_no, format!("invalid frame count {len:?}")))?;
        if length <= 0 {
            return Err(Error::NonPositiveLength { line: line_no });
        }
        let length = u32::try_from(length)
            .map_err(|_| Error::malformed(line_no, "frame count out of range"))?;

        let continues = utterances
            .last()
            .is_some_and(|u| u.utterance_id == utt);
        if continues {
            if utterances.last().is_some_and(|u| u.speaker_id != speaker) {
                return Err(Error::malformed(
                    line_no,
                    format!("utterance {utt:?} changes speaker"),
                ));
            }
        } else {
            if !seen.insert(utt.to_string()) {
                return Err(Error::malformed(
                    line_no,
                    format!("utterance {utt:?} is not contiguous"),
                ));
            }
            utterances.push(AlignedUtterance {
                utterance_id: utt.to_string(),
                speaker_id: speaker.to_string(),
                phones: Vec::new(),
            });
        }

        if options.exclude.contains(label) {
            continue;
        }
        let class_index = inventory.index_of(label).ok_or_else(|| Error::UnknownPhoneme {
            label: label.to_string(),
            line: line_no,
        })?;
        utterances
            .last_mut()
            .expect("pushed above")
            .phones
            .push(AlignedPhone::new(class_index, length));
    }

    utterances.retain(|u| !u.phones.is_empty());
    Corpus::new(inventory.clone(), utterances)
}

pub fn write_utterance<W: Write>(
    utt: &AlignedUtterance,
    inventory: &PhonemeInventory,
    sink: &mut W,
) -> Result<()> {
    for p in &utt.phones {
        let label = inventory
            .symbol(p.class_index)
            .ok_or_else(|| Error::ShapeMismatch(format!("class index {}", p.class_index)))?;
        writeln!(
            sink,
            "{} {} {} {}",
            utt.speaker_id, utt.utterance_id, label, p.length_frames
        )?;
    }
    Ok(())
}

pub fn write_alignment<W: Write>(corpus: &Corpus, sink: &mut W) -> Result<()> {
    for utt in corpus.utterances() {
        write_utterance(utt, corpus.inventory(), sink)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn inv() -> PhonemeInventory {
        PhonemeInventory::new(["SIL", "AA1_B", "AH0_I"]).unwrap()
    }

    #[test]
    fn parses_single_utterance() {
        let c = parse_alignment("spkA u1 SIL 12\nspkA u1 AA1_B 7\n".as_bytes(), &inv()).unwrap();
        assert_eq!(c.len(), 1);
        let u = &c.utterances()[0];
        assert_eq!(u.speaker_id, "spkA");
        let lens: Vec<u32> = u.phones.iter().map(|p| p.length_frames).collect();
        assert_eq!(lens, vec![12, 7]);
        assert_eq!(u.phones[1].class_index, 1);
    }

    #[test]
    fn unknown_phoneme() {
        let err = parse_alignment("spkA u1 ZZZ 5\n".as_bytes(), &inv()).unwrap_err();
        assert!(matches!(err, Error::UnknownPhoneme { ref label, line: 1 } if label == "ZZZ"));
    }

    #[test]
    fn non_positive_length() {
        for text in ["spkA u1 SIL 0\n", "spkA u1 SIL -4\n"] {
            let err = parse_alignment(text.as_bytes(), &inv()).unwrap_err();
            assert!(matches!(err, Error::NonPositiveLength { line: 1 }), "{err}");
        }
    }

    #[test]
    fn malformed_lines() {
        for text in [
            "spkA u1 SIL\n",
            "spkA u1 SIL 3 extra\n",
            "spkA u1 SIL 3.5\n",
            "spkA u1 SIL 99999999999\n",
        ] {
            let err = parse_alignment(text.as_bytes(), &inv()).unwrap_err();
            assert!(matches!(err, Error::MalformedLine { line: 1, .. }), "{text}: {err}");
        }
    }

    #[test]
    fn error_line_numbers_count_comments() {
        let text = "# comment\n\nspkA u1 SIL 3\nspkA u1 XX 3\n";
        let err = parse_alignment(text.as_bytes(), &inv()).unwrap_err();
        assert!(matches!(err, Error::UnknownPhoneme { line: 4, .. }));
    }

    #[test]
    fn non_contiguous_utterance_is_rejected() {
        let text = "a u1 SIL 3\na u2 SIL 3\na u1 SIL 3\n";
        let err = parse_alignment(text.as_bytes(), &inv()).unwrap_err();
        assert!(matches!(err, Error::MalformedLine { line: 3, .. }));
    }

    #[test]
    fn exclusion_list_drops_labels() {
        let opts = ParseOptions {
            exclude: ["SIL".to_string(), "SPN".to_string()].into_iter().collect(),
        };
        let text = "a u1 SIL 3\na u1 AA1_B 4\na u1 SPN 2\nb u2 SIL 9\n";
        let c = parse_alignment_with(text.as_bytes(), &inv(), &opts).unwrap();
        assert_eq!(c.len(), 1);
        assert_eq!(c.utterances()[0].phones, vec![AlignedPhone::new(1, 4)]);
    }

    #[test]
    fn groups_by_speaker_in_order() {
        let text = "b u1 SIL 3\na u2 SIL 3\nb u3 SIL 3\n";
        let c = parse_alignment(text.as_bytes(), &inv()).unwrap();
        let speakers: Vec<&str> = c.speakers().collect();
        assert_eq!(speakers, vec!["b", "a"]);
        assert_eq!(c.speaker_utterances("b").unwrap(), &[0, 2]);
        assert!(c.lookup(&["u3", "u9"]).is_err());
    }

    #[test]
    fn empty_corpus_writes_nothing() {
        let c = parse_alignment("".as_bytes(), &inv()).unwrap();
        let mut out = Vec::new();
        write_alignment(&c, &mut out).unwrap();
        assert!(out.is_empty());
    }

    #[test]
    fn round_trip_single_utterance() {
        let text = "spkA u1 SIL 12\nspkA u1 AA1_B 7\n";
        let c = parse_alignment(text.as_bytes(), &inv()).unwrap();
        let mut out = Vec::new();
        write_alignment(&c, &mut out).unwrap();
        assert_eq!(String::from_utf8(out.clone()).unwrap(), text);
        assert_eq!(parse_alignment(out.as_slice(), &inv()).unwrap(), c);
    }
}
