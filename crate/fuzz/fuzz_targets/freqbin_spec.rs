#![no_main]

use libfuzzer_sys::fuzz_target;
use seqmtl::auxgen::FreqBinSpec;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(spec) = FreqBinSpec::from_text(text) {
        // Accepted specs must survive their own serialization.
        let again = FreqBinSpec::from_text(&spec.to_text()).expect("round trip");
        assert_eq!(again, spec);
        let _ = spec.label_of_word("unseen");
    }
});
