#![no_main]

use libfuzzer_sys::fuzz_target;

use reflectbench::verifier::symbolic::{parse, symbolic_equivalent};

fuzz_target!(|data: &[u8]| {
    let s = String::from_utf8_lossy(&data[..data.len().min(4096)]);
    let _ = parse(&s);
    // split on the first `=` to exercise the comparison path too
    if let Some((a, b)) = s.split_once('=') {
        let _ = symbolic_equivalent(a, b);
    }
});
