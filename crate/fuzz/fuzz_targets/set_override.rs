#![no_main]

use gmc_cli::config::apply_override;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let mut doc = serde_json::json!({
        "seed": 1,
        "grid": { "lo": [0.0], "hi": [1.0] },
        "epsilon": [0.1, 0.05],
        "fusion": { "d": 1, "n": 10, "n_inner": 10 }
    });
    for line in text.lines().take(8) {
        let _ = apply_override(&mut doc, line);
    }
    let _ = gmc_cli::config::resolve(&doc.to_string(), &[], None);
});
