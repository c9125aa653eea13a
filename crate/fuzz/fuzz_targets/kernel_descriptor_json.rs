#![no_main]

use gmc_core::kernels::parse_kernel_json;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(k) = parse_kernel_json(text) {
        // Accepted descriptors serialize and parse back to the same wire form.
        let wire = serde_json::to_string(&k).expect("accepted kernels serialize");
        let again = parse_kernel_json(&wire).expect("serialized kernels parse");
        assert_eq!(wire, serde_json::to_string(&again).unwrap());
        let x = vec![0.25; k.d];
        let y = vec![0.5; k.d];
        let _ = k.eval(&x, &y);
    }
});
