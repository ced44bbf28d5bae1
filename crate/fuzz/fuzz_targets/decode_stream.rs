//! Byte-stream decoder: arbitrary bytes must never panic; accepted streams
//! must round-trip back to the identical byte sequence.

#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(instructions) = etserve::isa::decode_stream(data) {
        let words: Vec<u32> = instructions
            .iter()
            .map(|i| etserve::isa::encode(i).expect("decoded instruction re-encodes"))
            .collect();
        assert_eq!(etserve::isa::to_bytes(&words), data);
    }
});
