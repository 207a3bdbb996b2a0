#![no_main]

use libfuzzer_sys::fuzz_target;
use mvq::codec::{decompress, deserialize, serialize};

fuzz_target!(|data: &[u8]| {
    if let Ok(layers) = deserialize(data) {
        // strict decoding accepts only canonical bytes
        assert_eq!(serialize(&layers), data);
        for l in &layers {
            let w = decompress(l).expect("decoded layer decompresses");
            assert_eq!(w.shape(), l.shape());
        }
    }
});
