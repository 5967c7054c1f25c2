#![no_main]

use libfuzzer_sys::fuzz_target;

use reflectbench::verifier::normalize_latex;

fuzz_target!(|data: &[u8]| {
    let s = String::from_utf8_lossy(data);
    let once = normalize_latex(&s);
    let _ = normalize_latex(&once);
});
