//! Taskset JSON loader: arbitrary bytes must never panic through parsing,
//! validation, hyperperiod computation, or job expansion (bounded).

#![no_main]

use etserve::domain::TaskSet;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(ts) = serde_json::from_slice::<TaskSet>(data) else {
        return;
    };
    let violations = ts.validate();
    let Ok(h) = ts.hyperperiod() else {
        return;
    };
    // keep expansion memory-bounded on adversarial inputs
    if violations.is_empty() && h <= 100_000 && ts.tasks.len() <= 64 {
        let _ = ts.expand_hyperperiod();
    }
});
