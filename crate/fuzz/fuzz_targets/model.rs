#![no_main]

use durembed::embedder::{load_model_bytes, save_model_bytes};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(params) = load_model_bytes(data) {
        let again = load_model_bytes(&save_model_bytes(&params)).expect("saved model loads");
        assert_eq!(again, params);
    }
});
