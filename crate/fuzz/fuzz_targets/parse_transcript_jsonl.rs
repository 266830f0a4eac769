#![no_main]
use libfuzzer_sys::fuzz_target;
use overlapsim::transcript::{parse_transcripts, write_jsonl, TranscriptFormat};

fuzz_target!(|data: &[u8]| {
    if let Ok(ts) = parse_transcripts(data, TranscriptFormat::Jsonl) {
        let again = parse_transcripts(write_jsonl(&ts).as_bytes(), TranscriptFormat::Jsonl).unwrap();
        assert_eq!(ts, again);
    }
});
