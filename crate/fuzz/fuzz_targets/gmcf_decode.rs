#![no_main]

use gmc_core::io::{decode_gmcf, encode_gmcf};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(g) = decode_gmcf(data) {
        let bytes = encode_gmcf(&g).expect("decoded files re-encode");
        let back = decode_gmcf(&bytes).expect("re-encoded files decode");
        assert_eq!(g.count(), back.count());
        assert_eq!(g.rows.len(), back.rows.len());
    }
});
