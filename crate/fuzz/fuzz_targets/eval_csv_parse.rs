#![no_main]

use decaf::experiment::cmd_select;
use decaf::experiment::run::parse_csv;
use decaf::learner::EvalRow;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(rows) = cmd_select(text, 0.1, 0.9) {
        assert!(!rows.is_empty());
    }
    let _ = parse_csv::<EvalRow>(text);
});
