use std::collections::HashMap;
use std::io::BufRead;

use crate::error::{Error, Result};

const VOWELS: [&str; 15] = [
    "AA", "AE", "AH", "AO", "AW", "AY", "EH", "ER", "EY", "IH", "IY", "OW", "OY", "UH", "UW",
];
const CONSONANTS: [&str; 24] = [
    "B", "CH", "D", "DH", "F", "G", "HH", "JH", "K", "L", "M", "N", "NG", "P", "R", "S", "SH", "T",
    "TH", "V", "W", "Y", "Z", "ZH",
];
const STRESS_MARKS: [&str; 4] = ["", "0", "1", "2"];
/// Word-begin, word-end, word-internal and singleton positions.
const WORD_POSITIONS: [&str; 4] = ["B", "E", "I", "S"];

/// Ordered set of phoneme-class labels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PhonemeInventory {
    symbols: Vec<String>,
    index: HashMap<String, usize>,
}

impl PhonemeInventory {
    pub fn new<I, S>(labels: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut inv = PhonemeInventory {
            symbols: Vec::new(),
            index: HashMap::new(),
        };
        for (i, label) in labels.into_iter().enumerate() {
            inv.push(label.into(), i + 1)?;
        }
        if inv.symbols.is_empty() {
            return Err(Error::EmptyInventory);
        }
        Ok(inv)
    }

    fn push(&mut self, label: String, line: usize) -> Result<()> {
        if label.is_empty() || label.chars().any(char::is_whitespace) {
            return Err(Error::malformed(line, "label must be a single non-empty token"));
        }
        if self.index.contains_key(&label) {
            return Err(Error::DuplicateLabel { label, line });
        }
        self.index.insert(label.clone(), self.symbols.len());
        self.symbols.push(label);
        Ok(())
    }

    /// Reads one label per line. Blank lines and `#` comments are skipped;
    /// error line numbers refer to the physical line in `source`.
    pub fn load<R: BufRead>(source: R) -> Result<Self> {
        let mut inv = PhonemeInventory {
            symbols: Vec::new(),
            index: HashMap::new(),
        };
        for (i, line) in source.lines().enumerate() {
            let line = line?;
            let content = strip_comment(&line).trim();
            if content.is_empty() {
                continue;
            }
            inv.push(content.to_string(), i + 1)?;
        }
        if inv.symbols.is_empty() {
            return Err(Error::EmptyInventory);
        }
        Ok(inv)
    }

    /// The 336-class ARPAbet table used with positional and stress-marked
    /// alignments: every vowel in four stress variants (unmarked, 0, 1, 2),
    /// every consonant unmarked, each crossed with the four word positions.
    /// Silence and spoken-noise labels are not part of it.
    pub fn arpabet_positional() -> Self {
        let mut bases: Vec<String> = Vec::with_capacity(84);
        for v in VOWELS {
            for s in STRESS_MARKS {
                bases.push(format!("{v}{s}"));
            }
        }
        bases.extend(CONSONANTS.iter().map(|c| c.to_string()));
        bases.sort();
        let labels = bases
            .iter()
            .flat_map(|b| WORD_POSITIONS.iter().map(move |p| format!("{b}_{p}")));
        PhonemeInventory::new(labels).expect("static table is valid")
    }

    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }

    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.index.get(label).copied()
    }

    pub fn symbol(&self, index: usize) -> Option<&str> {
        self.symbols.get(index).map(String::as_str)
    }

    pub fn symbols(&self) -> &[String] {
        &self.symbols
    }

    /// Inventory file contents, one label per line.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for s in &self.symbols {
            out.push_str(s);
            out.push('\n');
        }
        out
    }
}

pub(crate) fn strip_comment(line: &str) -> &str {
    match line.find('#') {
        Some(pos) => &line[..pos],
        None => line,
    }
}
