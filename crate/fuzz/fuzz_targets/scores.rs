#![no_main]

use durembed::eval::{compute_eer, parse_scores};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(set) = parse_scores(data) {
        if let Ok(point) = compute_eer(&set) {
            assert!((0.0..=1.0).contains(&point.eer));
        }
    }
});
