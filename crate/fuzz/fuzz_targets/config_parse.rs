#![no_main]

use std::path::Path;

use curiolab::config::parse_config;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(cfg) = parse_config(text, Path::new("/fuzz")) {
        cfg.validate().expect("parsed configs are valid");
    }
});
