#![no_main]

use crowdsense::blur::{edge_sharpness, parse_pnm};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(img) = parse_pnm(data) {
        let s = edge_sharpness(&img);
        assert!(s.is_finite() && s.abs() <= 255.0);
        assert_eq!(parse_pnm(img.to_string().as_bytes()).unwrap(), img);
    }
});
