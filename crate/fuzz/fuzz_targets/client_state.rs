#![no_main]

use crowdsense::protocol::Client;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(client) = Client::from_state_str(text) {
        let saved = client.to_state_string();
        let back = Client::from_state_str(&saved).unwrap();
        assert_eq!(back.to_state_string(), saved);
    }
});
