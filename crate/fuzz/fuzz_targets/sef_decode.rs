#![no_main]

use libfuzzer_sys::fuzz_target;
use spatialemb_core::sef;

fuzz_target!(|data: &[u8]| {
    if let Ok(t) = sef::decode(data) {
        // Whatever decodes must re-encode to a prefix-identical container.
        let again = sef::encode(&t).expect("decoded tensor encodes");
        assert!(sef::decode(&again).expect("re-decodes").bit_eq(&t));
    }
    let _ = sef::decode_prefix(data);
});
