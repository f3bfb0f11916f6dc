#![no_main]

use accelq::frozenlake::{build_mdp, parse_map, SlipModel};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(map) = parse_map(text) {
        if map.num_states() <= 4096 {
            let mdp = build_mdp(&map, SlipModel::default(), 0.9).expect("parsed maps build");
            assert_eq!(mdp.num_states(), map.num_states());
        }
        let again = parse_map(&map.to_string()).expect("display output reparses");
        assert_eq!(again.num_states(), map.num_states());
    }
});
