#![no_main]

use durembed::eval::{parse_trials, write_trials};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(list) = parse_trials(data) {
        let mut text = Vec::new();
        write_trials(&list, &mut text).unwrap();
        assert_eq!(parse_trials(text.as_slice()).unwrap(), list);
    }
});
