#![no_main]
use std::path::Path;

use libfuzzer_sys::fuzz_target;
use overlapsim::pool::{parse_manifest, UtterancePool};

fuzz_target!(|data: &[u8]| {
    if let Ok(utts) = parse_manifest(data, Path::new("/nonexistent")) {
        if let Ok(pool) = UtterancePool::from_utterances(utts) {
            assert_eq!(pool.duration_index().len(), pool.len());
        }
    }
});
