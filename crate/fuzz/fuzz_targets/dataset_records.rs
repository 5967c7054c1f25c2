#![no_main]

use std::path::Path;

use libfuzzer_sys::fuzz_target;

use reflectbench::dataset::parse_records;

fuzz_target!(|data: &[u8]| {
    if let Ok(s) = std::str::from_utf8(data) {
        let _ = parse_records(s, Path::new("fuzz.jsonl"));
    }
});
