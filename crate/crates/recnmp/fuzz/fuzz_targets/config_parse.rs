#![no_main]

use libfuzzer_sys::fuzz_target;
use recnmp::harness::parse_config;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(cfg) = parse_config(text) {
            // A parsed config is internally consistent: validation and the
            // derived mapping geometry must both succeed.
            cfg.validate().expect("parse_config validated");
            cfg.mapping_config().expect("validated configs map");
        }
    }
});
