#![no_main]

use libfuzzer_sys::fuzz_target;
use seqmtl::tensor::ParamStore;

fuzz_target!(|data: &[u8]| {
    if let Ok(tensors) = ParamStore::tensors_from_bytes(data) {
        let mut store = ParamStore::new();
        for (i, t) in tensors.into_iter().enumerate() {
            store.add(format!("t{i}"), t);
        }
        assert_eq!(store.to_bytes(), data);
    }
});
