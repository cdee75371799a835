#![no_main]
use libfuzzer_sys::fuzz_target;

use dsthcn_cli::config::parse_run_config;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(cfg) = parse_run_config(text) {
        let back = parse_run_config(&cfg.to_json()).expect("serialized config parses");
        assert_eq!(back.to_json(), cfg.to_json());
    }
});
