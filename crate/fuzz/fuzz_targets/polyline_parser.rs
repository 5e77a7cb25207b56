#![no_main]

use hdg_nsdarcy::config::{format_polyline, parse_polyline};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(poly) = parse_polyline(text) {
        assert!(poly.len() >= 2);
        assert!(poly.iter().flatten().all(|v| v.is_finite()));
        assert_eq!(parse_polyline(&format_polyline(&poly)).expect("formatted polyline parses"), poly);
    }
});
