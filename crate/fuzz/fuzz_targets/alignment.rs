#![no_main]

use std::collections::HashSet;

use durembed::alignment::{parse_alignment_with, write_alignment, ParseOptions};
use durembed::PhonemeInventory;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let inv = PhonemeInventory::new(["AA1_B", "T_E", "S_I", "IY0_S"]).unwrap();
    let options = ParseOptions {
        exclude: HashSet::from(["SIL".to_string()]),
    };
    if let Ok(corpus) = parse_alignment_with(data, &inv, &options) {
        let mut text = Vec::new();
        write_alignment(&corpus, &mut text).unwrap();
        let back = parse_alignment_with(text.as_slice(), &inv, &options).expect("written alignment parses");
        assert_eq!(back, corpus);
    }
});
