//! Text assembly parser: arbitrary text must never panic; parsed programs
//! must survive a print/re-parse round-trip.

#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(instructions) = etserve::isa::parse_asm(text) {
        for instr in &instructions {
            let printed = instr.to_string();
            let reparsed = etserve::isa::parse_asm_line(&printed, 1)
                .expect("printed instruction re-parses");
            assert_eq!(reparsed, *instr, "round-trip mismatch via {printed:?}");
        }
    }
});
