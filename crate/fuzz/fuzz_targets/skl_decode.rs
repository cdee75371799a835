#![no_main]
use libfuzzer_sys::fuzz_target;

use dsthcn::data::{decode_skl, encode_skl};

fuzz_target!(|data: &[u8]| {
    // Anything accepted must re-encode to a file that decodes to the same bytes.
    if let Ok(dataset) = decode_skl(data) {
        let bytes = encode_skl(&dataset).expect("decoded dataset re-encodes");
        let again = decode_skl(&bytes).expect("re-encoded file decodes");
        assert_eq!(encode_skl(&again).unwrap(), bytes);
        assert_eq!(again.len(), dataset.len());
    }
});
