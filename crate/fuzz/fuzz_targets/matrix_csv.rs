#![no_main]
use libfuzzer_sys::fuzz_target;

use dsthcn::io::{matrix_csv, parse_matrix_csv};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(m) = parse_matrix_csv(text) {
        let written = matrix_csv(&m).expect("parsed matrix writes");
        let back = parse_matrix_csv(&written).expect("written matrix parses");
        assert_eq!(back.shape(), m.shape());
    }
});
