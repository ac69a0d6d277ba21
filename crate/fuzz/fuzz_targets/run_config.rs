#![no_main]

use libfuzzer_sys::fuzz_target;
use spatialemb_core::runconfig::RawConfig;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(raw) = RawConfig::from_toml(text) {
        if let Ok(cfg) = raw.resolve() {
            cfg.embedding_spec(cfg.measure.mics).expect("resolved config yields a valid spec");
        }
    }
});
