#![no_main]

use hdg_nsdarcy::RunConfig;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(cfg) = RunConfig::from_toml_str(text) {
        // Anything accepted must survive a round trip unchanged.
        let again = RunConfig::from_toml_str(&cfg.to_toml_string()).expect("canonical form parses");
        assert_eq!(again.to_toml_string(), cfg.to_toml_string());
    }
});
