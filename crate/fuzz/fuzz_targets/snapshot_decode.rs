#![no_main]

use libfuzzer_sys::fuzz_target;
use lohe_core::snapshot::{decode, encode};

fuzz_target!(|data: &[u8]| {
    if let Ok(state) = decode(data) {
        let bytes = encode(&state);
        let again = decode(&bytes).expect("encoded snapshots decode");
        assert_eq!(encode(&again), bytes);
    }
});
