#![no_main]

use gmc_core::io::{read_mass_csv, write_mass_csv};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(rows) = read_mass_csv(data) {
        let mut buf = Vec::new();
        write_mass_csv(&mut buf, &rows).expect("accepted rows write");
        let back = read_mass_csv(buf.as_slice()).expect("written rows read");
        assert_eq!(rows.len(), back.len());
    }
});
