#![no_main]

use libfuzzer_sys::fuzz_target;

use reflectbench::engine::{parse_trace_line, read_traces, trace_to_line};

fuzz_target!(|data: &[u8]| {
    let _ = read_traces(data, true);
    if let Ok(s) = std::str::from_utf8(data) {
        if let Ok(t) = parse_trace_line(s, 1) {
            // anything we accept must survive a round trip
            let again = parse_trace_line(&trace_to_line(&t), 1).expect("reparse");
            assert_eq!(trace_to_line(&again), trace_to_line(&t));
        }
    }
});
