#![no_main]

use std::io::Cursor;

use crowdsense::wire::{parse_frame, read_frame, write_frame};
use libfuzzer_sys::fuzz_target;

const CAP: usize = 1 << 16;

fuzz_target!(|data: &[u8]| {
    let parsed = parse_frame(data, CAP);
    let read = read_frame(&mut Cursor::new(data), CAP);
    if let Ok(body) = parsed {
        assert_eq!(read.as_deref().ok(), Some(body));
        let mut out = Vec::new();
        write_frame(&mut out, body, CAP).unwrap();
        assert_eq!(out, data);
    }
});
