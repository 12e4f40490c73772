#![no_main]

use libfuzzer_sys::fuzz_target;
use recnmp::isa::{decode_inst, encode_inst};

fuzz_target!(|data: &[u8]| {
    for chunk in data.chunks_exact(16) {
        let raw = u128::from_le_bytes(chunk.try_into().unwrap());
        let word = raw & ((1u128 << 79) - 1);
        // Decode is total on 79-bit words; the round trip is exact.
        let inst = decode_inst(word).expect("79-bit words always decode");
        assert_eq!(encode_inst(&inst).expect("decoded fields re-encode"), word);
        // Out-of-range words are rejected, never panic.
        if raw >> 79 != 0 {
            assert!(decode_inst(raw).is_err());
        }
    }
});
