#![no_main]

use gmc_cli::config::resolve;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(cfg) = resolve(text, &[], None) {
        let wire = serde_json::to_string(&cfg).expect("resolved configs serialize");
        resolve(&wire, &[], None).expect("serialized configs resolve");
    }
});
