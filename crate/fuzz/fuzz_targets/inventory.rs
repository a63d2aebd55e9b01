#![no_main]

use durembed::PhonemeInventory;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(inv) = PhonemeInventory::load(data) {
        let back = PhonemeInventory::load(inv.to_text().as_bytes()).expect("written inventory parses");
        assert_eq!(back, inv);
    }
});
