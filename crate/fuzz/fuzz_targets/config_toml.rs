#![no_main]

use libfuzzer_sys::fuzz_target;
use tcrmdp::config::ExperimentConfig;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(cfg) = ExperimentConfig::from_toml_str(text) {
        let _ = cfg.hash();
        let _ = cfg.validate();
    }
});
