#![no_main]

use libfuzzer_sys::fuzz_target;
use lohe_harness::Scenario;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(scenario) = text.parse::<Scenario>() {
        // the canonical form is a fixed point of parse then print
        let canonical = scenario.to_config();
        let reparsed: Scenario = canonical.parse().expect("canonical config parses");
        assert_eq!(reparsed.to_config(), canonical);
    }
});
