#![no_main]

use libfuzzer_sys::fuzz_target;
use mvq::io::parse_layer_table;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        let _ = parse_layer_table(text);
    }
});
