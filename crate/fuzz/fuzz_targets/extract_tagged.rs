#![no_main]

use libfuzzer_sys::fuzz_target;

use reflectbench::verifier::extract_tagged;

fuzz_target!(|data: &[u8]| {
    let s = String::from_utf8_lossy(data);
    for tag in ["answer", "SQL", "translation", "sentiment"] {
        if let Ok(inner) = extract_tagged(&s, tag) {
            assert!(inner.len() <= s.len());
        }
    }
});
