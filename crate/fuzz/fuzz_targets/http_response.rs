#![no_main]

use libfuzzer_sys::fuzz_target;

use reflectbench::provider::FieldAdapter;

fuzz_target!(|data: &[u8]| {
    let _ = FieldAdapter::default().decode_response(data);
});
