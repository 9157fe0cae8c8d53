#![no_main]

use genrender::GBufferFrame;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(g) = GBufferFrame::decode(data) {
        assert_eq!(GBufferFrame::decode(&g.encode()).unwrap(), g);
    }
});
