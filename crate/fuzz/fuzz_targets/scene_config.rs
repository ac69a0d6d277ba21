#![no_main]

use libfuzzer_sys::fuzz_target;
use spatialemb_core::sim::SceneSpec;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(scene) = SceneSpec::from_toml(text) {
        // Parsing validates; keep synthesis cheap.
        if scene.num_samples() <= 16_000 && scene.channels <= 4 {
            let _ = spatialemb_core::sim::synthesize(&scene);
        }
    }
});
