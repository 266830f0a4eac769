#![no_main]
use libfuzzer_sys::fuzz_target;
use overlapsim::tsot::{deserialize, parse_tsot_text};

fuzz_target!(|data: &[u8]| {
    let Ok(lines) = parse_tsot_text(data) else { return };
    for s in &lines {
        let [a, b] = deserialize(s).unwrap();
        let words = s.tokens.iter().filter(|t| *t != "<cc>").count();
        assert_eq!(a.len() + b.len(), words);
    }
});
