#![no_main]

use accelq::lqr::LinearSystem;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(sys) = LinearSystem::from_json(text) {
        let back = LinearSystem::from_json(&sys.to_json().expect("serializes")).expect("round trips");
        assert_eq!(back, sys);
    }
});
