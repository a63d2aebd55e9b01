use std::collections::HashSet;

use durembed::alignment::{parse_alignment, parse_alignment_with, write_alignment, ParseOptions};
use durembed::{AlignedPhone, AlignedUtterance, Corpus, Error, PhonemeInventory};
use proptest::prelude::*;

fn inventory(n: usize) -> PhonemeInventory {
    PhonemeInventory::new((0..n).map(|i| format!("PH{i}_B"))).unwrap()
}

fn corpus_strategy() -> impl Strategy<Value = Corpus> {
    let utt = prop::collection::vec((0usize..12, 1u32..400), 1..30);
    prop::collection::vec((0usize..5, utt), 1..25).prop_map(|raw| {
        let utterances = raw
            .into_iter()
            .enumerate()
            .map(|(i, (spk, phones))| AlignedUtterance {
                utterance_id: format!("utt{i}"),
                speaker_id: format!("spk{spk}"),
                phones: phones
                    .into_iter()
                    .map(|(c, l)| AlignedPhone::new(c, l))
                    .collect(),
            })
            .collect();
        Corpus::new(inventory(12), utterances).unwrap()
    })
}

proptest! {
    #[test]
    fn alignment_round_trips(corpus in corpus_strategy()) {
        let mut text = Vec::new();
        write_alignment(&corpus, &mut text).unwrap();
        let back = parse_alignment(text.as_slice(), corpus.inventory()).unwrap();
        prop_assert_eq!(back, corpus);
    }

    #[test]
    fn inventory_round_trips(labels in prop::collection::hash_set("[A-Z]{1,3}[012]?_[BEIS]", 1..50)) {
        let inv = PhonemeInventory::new(labels.iter().cloned()).unwrap();
        let back = PhonemeInventory::load(inv.to_text().as_bytes()).unwrap();
        prop_assert_eq!(back, inv);
    }
}

#[test]
fn builtin_inventory_has_336_classes() {
    let inv = PhonemeInventory::arpabet_positional();
    assert_eq!(inv.len(), 336);
    assert!(inv.index_of("AH0_I").is_some());
    assert!(inv.index_of("SIL").is_none());
    let back = PhonemeInventory::load(inv.to_text().as_bytes()).unwrap();
    assert_eq!(back, inv);
}

#[test]
fn unknown_label_reports_line() {
    let inv = inventory(3);
    let text = "s1 u1 PH0_B 4\n\ns1 u1 XX 2\n";
    match parse_alignment(text.as_bytes(), &inv) {
        Err(Error::UnknownPhoneme { label, line }) => {
            assert_eq!(label, "XX");
            assert_eq!(line, 3);
        }
        other => panic!("unexpected {other:?}"),
    }
}

#[test]
fn zero_and_negative_lengths_rejected() {
    let inv = inventory(3);
    for bad in ["0", "-3"] {
        let text = format!("s1 u1 PH0_B 4\ns1 u1 PH1_B {bad}\n");
        assert!(matches!(
            parse_alignment(text.as_bytes(), &inv),
            Err(Error::NonPositiveLength { line: 2 })
        ));
    }
}

#[test]
fn excluded_labels_are_dropped() {
    let inv = inventory(3);
    let text = "s1 u1 SIL 10\ns1 u1 PH2_B 4\ns1 u2 SIL 3\ns2 u3 PH0_B 7\n";
    let options = ParseOptions {
        exclude: HashSet::from(["SIL".to_string()]),
    };
    let corpus = parse_alignment_with(text.as_bytes(), &inv, &options).unwrap();
    // u2 held only silence
    assert_eq!(corpus.len(), 2);
    assert_eq!(corpus.utterance("u1").unwrap().phones, vec![AlignedPhone::new(2, 4)]);
    assert!(corpus.utterance("u2").is_none());
}

#[test]
fn split_utterance_is_malformed() {
    let inv = inventory(3);
    let text = "s1 u1 PH0_B 1\ns1 u2 PH0_B 1\ns1 u1 PH0_B 1\n";
    assert!(matches!(
        parse_alignment(text.as_bytes(), &inv),
        Err(Error::MalformedLine { line: 3, .. })
    ));
}

#[test]
fn wrong_field_count_is_malformed() {
    let inv = inventory(3);
    for text in ["s1 u1 PH0_B\n", "s1 u1 PH0_B 3 extra\n", "s1 u1 PH0_B x\n"] {
        assert!(matches!(
            parse_alignment(text.as_bytes(), &inv),
            Err(Error::MalformedLine { line: 1, .. })
        ));
    }
}

#[test]
fn comments_and_blank_lines_ignored() {
    let inv = inventory(2);
    let text = "# header\n\ns1 u1 PH1_B 5 # trailing\n";
    let corpus = parse_alignment(text.as_bytes(), &inv).unwrap();
    assert_eq!(corpus.utterances()[0].phones, vec![AlignedPhone::new(1, 5)]);
}

#[test]
fn lookup_of_missing_utterance_fails() {
    let inv = inventory(2);
    let corpus = parse_alignment("s1 u1 PH1_B 5\n".as_bytes(), &inv).unwrap();
    assert!(matches!(corpus.lookup(&["u1", "nope"]), Err(Error::UnknownUtterance(id)) if id == "nope"));
}
