#![no_main]

use libfuzzer_sys::fuzz_target;
use recnmp::isa::{parse_packet_dump, write_packet_dump};

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(insts) = parse_packet_dump(text) {
            let mut buf = Vec::new();
            write_packet_dump(&insts, &mut buf).unwrap();
            let back = parse_packet_dump(std::str::from_utf8(&buf).unwrap())
                .expect("dump writer output must reparse");
            assert_eq!(back.len(), insts.len());
            for (a, b) in back.iter().zip(&insts) {
                assert_eq!(a.weight.to_bits(), b.weight.to_bits());
                assert_eq!((a.daddr, a.psum_tag, a.rank_id), (b.daddr, b.psum_tag, b.rank_id));
            }
        }
    }
});
