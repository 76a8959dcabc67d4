#![no_main]

use decaf::experiment::config::parse_override;
use decaf::experiment::ExperimentConfig;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if parse_override(text).is_ok() {
        if let Ok(cfg) = ExperimentConfig::default().with_overrides(&[text]) {
            let _ = cfg.resolve_run();
        }
    } else {
        assert!(ExperimentConfig::default().with_overrides(&[text]).is_err());
    }
});
