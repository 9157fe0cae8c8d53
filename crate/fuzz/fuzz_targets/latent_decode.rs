#![no_main]

use genrender::latent_io::{decode_latent, encode_latent};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(z) = decode_latent(data) {
        assert!(decode_latent(&encode_latent(&z)).unwrap().bitwise_eq(&z));
    }
});
