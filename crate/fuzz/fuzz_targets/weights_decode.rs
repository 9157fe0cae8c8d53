#![no_main]

use genrender::denoiser::weights::decode_weights_bytes;
use libfuzzer_sys::fuzz_target;

// Input layout: u16 little-endian descriptor length, descriptor JSON, blob.
fuzz_target!(|data: &[u8]| {
    let Some((len, rest)) = data.split_first_chunk::<2>() else { return };
    let len = u16::from_le_bytes(*len) as usize;
    if len <= rest.len() {
        let (json, blob) = rest.split_at(len);
        let _ = decode_weights_bytes(json, blob);
    }
});
