#![no_main]

use libfuzzer_sys::fuzz_target;
use seqmtl::model::Model;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(model) = Model::from_sidecar(text) {
        let _ = model.sidecar_text();
    }
});
