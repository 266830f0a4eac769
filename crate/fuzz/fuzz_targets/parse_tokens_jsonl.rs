#![no_main]
use libfuzzer_sys::fuzz_target;
use overlapsim::discretize::{consecutive_one, decode_tokens, parse_token_jsonl, word_indices, write_token_jsonl};

fuzz_target!(|data: &[u8]| {
    let Ok(seqs) = parse_token_jsonl(data) else { return };
    assert_eq!(parse_token_jsonl(write_token_jsonl(&seqs).as_bytes()).unwrap(), seqs);
    for s in &seqs {
        let q = decode_tokens(s);
        let owned: usize = consecutive_one(&q).iter().map(|r| word_indices(r, &q).len()).sum();
        let active = q.iter().filter(|a| a.0[0] || a.0[1]).count();
        assert_eq!(owned, active);
    }
});
