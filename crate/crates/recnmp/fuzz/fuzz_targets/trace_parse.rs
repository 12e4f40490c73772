#![no_main]

use libfuzzer_sys::fuzz_target;
use recnmp::workload::{read_trace, write_trace};

fuzz_target!(|data: &[u8]| {
    if let Ok(trace) = read_trace(data) {
        // Anything that parses must re-serialize and parse back equal.
        let mut buf = Vec::new();
        write_trace(&trace, &mut buf).unwrap();
        let back = read_trace(buf.as_slice()).expect("writer output must reparse");
        assert_eq!(back, trace);
    }
});
