#![no_main]

use edp_core::scenario::parse_scenario;
use libfuzzer_sys::fuzz_target;

// Anything that parses must serialize and parse back to the same scenario.
fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let Ok(scenario) = parse_scenario(text) else { return };
    let printed = scenario.to_toml().expect("a parsed scenario serializes");
    let back = parse_scenario(&printed).expect("serialized scenario parses");
    assert_eq!(back, scenario);
});
