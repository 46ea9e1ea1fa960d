#![no_main]

use std::sync::OnceLock;

use crowdsense::group::GroupParams;
use libfuzzer_sys::fuzz_target;

fn pp() -> &'static GroupParams {
    static PP: OnceLock<GroupParams> = OnceLock::new();
    PP.get_or_init(|| GroupParams::generate(64, b"fuzz").unwrap())
}

fuzz_target!(|data: &[u8]| {
    let pp = pp();
    if let Ok(s) = pp.decode_scalar(data) {
        assert_eq!(pp.encode_scalar(&s), data);
    }
    if let Ok(e) = pp.decode_element(data) {
        assert_eq!(pp.encode_element(&e), data);
    }
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(s) = pp.scalar_from_hex(text) {
            assert_eq!(pp.scalar_from_hex(&pp.scalar_hex(&s)), Ok(s));
        }
        if let Ok(e) = pp.element_from_hex(text) {
            assert_eq!(pp.element_from_hex(&pp.element_hex(&e)), Ok(e));
        }
    }
});
