#![no_main]

use std::sync::OnceLock;

use crowdsense::group::GroupParams;
use crowdsense::protocol::Stage;
use crowdsense::wire::{decode_request, decode_response, encode_request, encode_response, WireMessage};
use libfuzzer_sys::fuzz_target;

fn pp() -> &'static GroupParams {
    static PP: OnceLock<GroupParams> = OnceLock::new();
    PP.get_or_init(|| GroupParams::generate(64, b"fuzz").unwrap())
}

fuzz_target!(|data: &[u8]| {
    let Ok(msg) = WireMessage::decode(data) else { return };
    // the text form is canonical
    assert_eq!(msg.encode(), data);
    let pp = pp();
    if let Ok(req) = decode_request(Some(pp), &msg) {
        let again = encode_request(Some(pp), &req).unwrap();
        assert_eq!(decode_request(Some(pp), &again).unwrap(), req);
    }
    let _ = decode_request(None, &msg);
    for stage in Stage::ALL {
        if let Ok(resp) = decode_response(Some(pp), stage, &msg) {
            let again = encode_response(Some(pp), stage, &resp).unwrap();
            assert_eq!(decode_response(Some(pp), stage, &again).unwrap(), resp);
        }
    }
});
