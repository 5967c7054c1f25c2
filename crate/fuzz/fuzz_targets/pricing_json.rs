#![no_main]

use libfuzzer_sys::fuzz_target;

use reflectbench::economics::PricingTable;

fuzz_target!(|data: &[u8]| {
    if let Ok(s) = std::str::from_utf8(data) {
        if let Ok(table) = PricingTable::from_json(s) {
            for model in table.models.keys() {
                let _ = table.get(model);
            }
        }
    }
});
