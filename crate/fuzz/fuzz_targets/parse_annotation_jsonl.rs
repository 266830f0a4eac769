#![no_main]
use libfuzzer_sys::fuzz_target;
use overlapsim::simulate::parse_annotation_jsonl;

fuzz_target!(|data: &[u8]| {
    if let Ok(recs) = parse_annotation_jsonl(data) {
        for r in &recs {
            assert!(r.words.iter().all(|w| w.ch <= 1 && w.e > w.b));
        }
    }
});
