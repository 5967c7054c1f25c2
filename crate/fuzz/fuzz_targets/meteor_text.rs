#![no_main]

use libfuzzer_sys::fuzz_target;

use reflectbench::verifier::{Meteor, SynonymTable};

fuzz_target!(|data: &[u8]| {
    let s = String::from_utf8_lossy(&data[..data.len().min(2048)]);
    let mut parts = s.splitn(3, '\u{0}');
    let (hyp, reference, synonyms) = (parts.next().unwrap_or(""), parts.next().unwrap_or(""), parts.next().unwrap_or(""));
    let m = Meteor::default().with_synonyms(SynonymTable::parse(synonyms));
    let score = m.score(hyp, reference);
    assert!((0.0..=1.0).contains(&score));
});
