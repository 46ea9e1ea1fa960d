#![no_main]

use crowdsense::protocol::journal::{parse_journal, Record};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(records) = parse_journal(text) {
        for r in records {
            assert_eq!(Record::parse(&r.to_string()), Ok(r));
        }
    }
});
