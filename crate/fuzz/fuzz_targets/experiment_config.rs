#![no_main]

use libfuzzer_sys::fuzz_target;
use seqmtl::experiment::ExperimentConfig;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(config) = ExperimentConfig::parse(text) {
        let _ = config.validate();
        let _ = ExperimentConfig::parse(&config.to_text());
    }
});
