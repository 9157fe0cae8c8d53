#![no_main]

use std::path::Path;

use genrender::scene::parse_scene_str;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    // Mesh references would read arbitrary files (e.g. /dev/zero).
    if text.contains("mesh") {
        return;
    }
    let _ = parse_scene_str(text, "fuzz.toml", Path::new("/nonexistent"));
});
