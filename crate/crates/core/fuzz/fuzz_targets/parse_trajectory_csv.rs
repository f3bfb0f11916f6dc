#![no_main]

use accelq::harness::{read_trajectory_csv, summarize_cell};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(table) = read_trajectory_csv(data) {
        for cell in table.cells() {
            let _ = summarize_cell(&cell, &[0.1]);
        }
    }
});
