#![no_main]

use libfuzzer_sys::fuzz_target;
use mvq::io::parse_layer_config;
use mvq::pipeline::LayerSettings;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(cfg) = parse_layer_config(text) {
        for (name, _) in &cfg.layers {
            let _ = cfg.resolve(name, &LayerSettings::default());
        }
    }
});
