#![no_main]

use libfuzzer_sys::fuzz_target;
use mvq::io::{decode_blob, encode_blob};

fuzz_target!(|data: &[u8]| {
    let Some((&dims, blob)) = data.split_first() else { return };
    let shape = [(dims & 7) as usize + 1, (dims >> 3 & 3) as usize + 1, 1, (dims >> 5) as usize + 1];
    if let Ok(w) = decode_blob(blob, shape) {
        assert_eq!(encode_blob(&w), blob);
    }
});
