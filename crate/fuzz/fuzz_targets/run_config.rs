#![no_main]

use std::path::Path;

use libfuzzer_sys::fuzz_target;

use reflectbench_cli::config::{parse_json, RunConfig};

fuzz_target!(|data: &[u8]| {
    if let Ok(s) = std::str::from_utf8(data) {
        let _ = parse_json::<RunConfig>(s, Path::new("fuzz.json"));
    }
});
