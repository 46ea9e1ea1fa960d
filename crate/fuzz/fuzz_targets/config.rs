#![no_main]

use crowdsense::harness::{read_keys, write_keys, Config};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let _ = Config::parse(text);
    if let Ok(keys) = read_keys(text) {
        assert!(read_keys(&write_keys(&keys)).is_ok());
    }
});
