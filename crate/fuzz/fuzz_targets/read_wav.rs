#![no_main]
use libfuzzer_sys::fuzz_target;
use overlapsim::audio::{encode_wav, read_wav_bytes};

fuzz_target!(|data: &[u8]| {
    if let Ok(buf) = read_wav_bytes(data) {
        let again = read_wav_bytes(&encode_wav(&buf).unwrap()).unwrap();
        assert_eq!(again, buf);
    }
});
