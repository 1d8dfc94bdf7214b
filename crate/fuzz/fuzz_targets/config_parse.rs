#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(cfg) = trapcheck_core::config::parse_config_str(text) {
            // anything accepted must survive a canonical round trip
            let again = trapcheck_core::config::parse_config_str(&cfg.to_canonical_json()).unwrap();
            assert_eq!(cfg, again);
        }
    }
});
