#![no_main]

use curiolab_numcore::{decode_checkpoint, encode_checkpoint};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(map) = decode_checkpoint(data) {
        let bytes = encode_checkpoint(&map);
        let again = decode_checkpoint(&bytes).expect("re-encoded checkpoint must decode");
        assert_eq!(encode_checkpoint(&again), bytes);
    }
});
