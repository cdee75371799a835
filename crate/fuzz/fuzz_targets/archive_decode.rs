#![no_main]
use libfuzzer_sys::fuzz_target;

use dsthcn::io::{decode_archive, encode_archive};

fuzz_target!(|data: &[u8]| {
    if let Ok(archive) = decode_archive(data) {
        let bytes = encode_archive(&archive).expect("decoded archive re-encodes");
        let again = decode_archive(&bytes).expect("re-encoded archive decodes");
        assert_eq!(encode_archive(&again).unwrap(), bytes);
        assert_eq!(again.param_count(), archive.param_count());
    }
});
