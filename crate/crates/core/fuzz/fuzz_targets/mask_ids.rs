#![no_main]

use libfuzzer_sys::fuzz_target;
use mvq::sparsity::{MaskLut, NmPattern};

fuzz_target!(|data: &[u8]| {
    let [n, m, rest @ ..] = data else { return };
    let Ok(pattern) = NmPattern::new(*n as usize % 17, *m as usize % 17) else { return };
    let lut = MaskLut::new(pattern);
    for chunk in rest.chunks(8) {
        let mut raw = [0u8; 8];
        raw[..chunk.len()].copy_from_slice(chunk);
        let id = u64::from_le_bytes(raw) % (lut.len() + 1);
        if let Ok(mask) = lut.decode_chunk(id) {
            assert_eq!(mask.iter().filter(|&&b| b).count(), pattern.n());
            assert_eq!(lut.encode_chunk(&mask), Ok(id));
        }
    }
});
