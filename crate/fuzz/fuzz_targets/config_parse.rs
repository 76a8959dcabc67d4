#![no_main]

use decaf::experiment::ExperimentConfig;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(cfg) = ExperimentConfig::from_json(text) {
        let _ = cfg.resolve_run();
        let _ = cfg.resolve_sweep();
        let again = ExperimentConfig::from_json(&cfg.to_json()).expect("serialized config parses");
        assert_eq!(again.to_json(), cfg.to_json());
    }
});
