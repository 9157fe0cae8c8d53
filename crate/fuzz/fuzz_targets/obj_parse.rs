#![no_main]

use genrender::scene::obj::parse_obj;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        let _ = parse_obj(text, "fuzz.obj");
    }
});
