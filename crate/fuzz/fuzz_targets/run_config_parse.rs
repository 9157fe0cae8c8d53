#![no_main]

use genrender::RunConfig;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(cfg) = RunConfig::from_toml_str(text, "fuzz.toml") {
        let again = RunConfig::from_toml_str(&cfg.to_toml_string(), "again.toml").unwrap();
        assert_eq!(again.hash(), cfg.hash());
    }
});
