#![no_main]
use libfuzzer_sys::fuzz_target;
use overlapsim::NGramModel;

fuzz_target!(|data: &[u8]| {
    if let Ok(model) = NGramModel::load(data) {
        assert_eq!(NGramModel::load(&model.save()).unwrap(), model);
        let _ = model.sample(0, 64);
    }
});
