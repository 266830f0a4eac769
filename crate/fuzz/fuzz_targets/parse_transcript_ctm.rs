#![no_main]
use libfuzzer_sys::fuzz_target;
use overlapsim::transcript::{assign_channels, parse_transcripts, TranscriptFormat};

fuzz_target!(|data: &[u8]| {
    if let Ok(ts) = parse_transcripts(data, TranscriptFormat::Ctm) {
        for t in &ts {
            assert!(t.words().windows(2).all(|w| w[0].end <= w[1].end));
            assert_eq!(assign_channels(t).unwrap().len(), t.len());
        }
    }
});
