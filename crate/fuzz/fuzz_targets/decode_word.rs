//! Single-word decoder: every successfully decoded word must re-encode to
//! itself (strict canonicality), and decode must never panic.

#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if data.len() < 4 {
        return;
    }
    let word = u32::from_le_bytes([data[0], data[1], data[2], data[3]]);
    if let Ok(instr) = etserve::isa::decode(word) {
        let back = etserve::isa::encode(&instr).expect("decoded instruction re-encodes");
        assert_eq!(back, word, "decode/encode not canonical for {word:#010x}");
    }
});
