#![no_main]

use std::io::Cursor;

use libfuzzer_sys::fuzz_target;
use spatialemb_core::wav;

fuzz_target!(|data: &[u8]| {
    if let Ok(w) = wav::decode(Cursor::new(data), None) {
        assert!(w.num_channels() >= 1);
        let _ = wav::decode(Cursor::new(data), Some(w.num_channels() - 1));
    }
});
