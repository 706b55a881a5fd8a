#![no_main]

use curiolab_arena::{parse_arena, serialize_arena};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(spec) = parse_arena(text) {
        let out = serialize_arena(&spec);
        let back = parse_arena(&out).expect("serialized arena must parse");
        assert_eq!(back, spec);
        assert_eq!(serialize_arena(&back), out);
    }
});
