#![no_main]

use libfuzzer_sys::fuzz_target;
use seqmtl::corpus::{parse_conll, validate_bio, write_conll_to, ColumnSpec};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    for spec in [
        ColumnSpec::new([(1, "a")]),
        ColumnSpec::new([(1, "a"), (2, "b")]),
        ColumnSpec::conllu([(3, "pos")]),
    ] {
        if let Ok(corpus) = parse_conll(text, &spec) {
            for s in corpus.label_sequences("a").unwrap_or_default() {
                let _ = validate_bio(&s);
            }
            let mut out = Vec::new();
            write_conll_to(&corpus, &mut out).unwrap();
        }
    }
});
