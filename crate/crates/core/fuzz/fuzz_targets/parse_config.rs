#![no_main]

use accelq::harness::ExperimentConfig;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(cfg) = ExperimentConfig::from_json(text) {
        let json = cfg.to_json().expect("serializes");
        let back = ExperimentConfig::from_json(&json).expect("round trips");
        assert_eq!(back.to_json().unwrap(), json);
        let _ = cfg.resolve();
    }
});
