#![no_main]

use durembed::synth::SynthConfig;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(config) = SynthConfig::from_toml(text) {
        let _ = config.class_log_means(4);
    }
});
