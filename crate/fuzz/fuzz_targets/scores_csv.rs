#![no_main]
use libfuzzer_sys::fuzz_target;

use dsthcn::io::{parse_scores_csv, scores_csv};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(table) = parse_scores_csv(text) {
        let written = scores_csv(&table).expect("parsed table writes");
        let back = parse_scores_csv(&written).expect("written table parses");
        assert_eq!(back.shape(), table.shape());
    }
});
