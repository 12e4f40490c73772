//! Property tests for the trace file format and the instruction word /
//! packet dump encodings.

use proptest::collection::vec;
use proptest::prelude::*;
use recnmp::isa::{decode_inst, encode_inst, parse_packet_dump, write_packet_dump, DdrCmdFlags, NmpInst};
use recnmp::workload::{read_trace, write_trace, Dtype, OpKind, Pooling, SlsKernel, TableSpec, Trace};

fn arb_table(id: u32) -> impl Strategy<Value = TableSpec> {
    (1u64..5000, prop_oneof![Just(64u32), Just(128), Just(192), Just(256)], any::<bool>()).prop_map(
        move |(rows, vec_bytes, quant)| TableSpec {
            table_id: id,
            rows,
            vec_bytes,
            dtype: if quant { Dtype::Int8Rowwise } else { Dtype::Fp32 },
        },
    )
}

fn arb_trace() -> impl Strategy<Value = Trace> {
    (1usize..4)
        .prop_flat_map(|ntables| {
            let tables: Vec<_> = (0..ntables as u32).map(arb_table).collect();
            (tables, 0usize..4)
        })
        .prop_flat_map(|(tables, nbatches)| {
            let batches = {
                let tables = tables.clone();
                vec(
                    (0usize..tables.len(), 1usize..6, any::<bool>(), any::<u16>()).prop_map(
                        move |(ti, n, weighted, wseed)| {
                            let t = &tables[ti];
                            let indices: Vec<u64> =
                                (0..n as u64).map(|i| (i * 13 + u64::from(wseed)) % t.rows).collect();
                            let weights = weighted.then(|| {
                                indices
                                    .iter()
                                    .map(|&i| (i as f32).sin() * 1.5 + f32::from(wseed % 7))
                                    .collect()
                            });
                            Pooling { table_id: t.table_id, indices, weights }
                        },
                    ),
                    1..5,
                )
            };
            (Just(tables), vec(batches, nbatches..nbatches + 1))
        })
        .prop_map(|(tables, batch_pools)| {
            let dtypes: std::collections::HashMap<u32, Dtype> =
                tables.iter().map(|t| (t.table_id, t.dtype)).collect();
            let batches = batch_pools
                .into_iter()
                .enumerate()
                .map(|(bi, poolings)| {
                    // Canonical op kind, matching the format's inference.
                    let weighted = poolings.iter().any(|p| p.weights.is_some());
                    let quantized =
                        poolings.iter().all(|p| dtypes[&p.table_id] == Dtype::Int8Rowwise);
                    let op_kind = match (weighted, quantized) {
                        (false, false) => OpKind::Sum,
                        (true, false) => OpKind::WeightedSum,
                        (false, true) => OpKind::QuantizedSum,
                        (true, true) => OpKind::QuantizedWeightedSum,
                    };
                    SlsKernel { batch_id: bi as u64, op_kind, poolings }
                })
                .collect();
            Trace { tables, batches }
        })
}

proptest! {
    #[test]
    fn trace_text_roundtrip(trace in arb_trace()) {
        let mut buf = Vec::new();
        write_trace(&trace, &mut buf).unwrap();
        let back = read_trace(buf.as_slice()).unwrap();
        prop_assert_eq!(back, trace);
    }

    #[test]
    fn inst_word_roundtrip(
        bits in 0u8..8,
        vsize in 1u8..=4,
        daddr in 0u64..(1 << 34),
        weight in any::<u32>(),
        locality in any::<bool>(),
        tag in 0u8..16,
        rank in 0u8..8,
    ) {
        let inst = NmpInst {
            ddr_cmd: DdrCmdFlags::from_bits(bits),
            vsize,
            daddr,
            weight: f32::from_bits(weight),
            locality,
            psum_tag: tag,
            rank_id: rank,
        };
        let word = encode_inst(&inst).unwrap();
        prop_assert_eq!(word >> 79, 0);
        let back = decode_inst(word).unwrap();
        prop_assert_eq!(back.weight.to_bits(), inst.weight.to_bits());
        prop_assert_eq!(
            (back.ddr_cmd, back.vsize, back.daddr, back.locality, back.psum_tag, back.rank_id),
            (inst.ddr_cmd, inst.vsize, inst.daddr, inst.locality, inst.psum_tag, inst.rank_id)
        );
    }

    #[test]
    fn packet_dump_roundtrip(words in vec((0u8..8, 1u8..=4, 0u64..(1<<34)), 0..20)) {
        let insts: Vec<NmpInst> = words
            .into_iter()
            .map(|(bits, vsize, daddr)| NmpInst {
                ddr_cmd: DdrCmdFlags::from_bits(bits),
                vsize,
                daddr,
                weight: 1.0,
                locality: false,
                psum_tag: 0,
                rank_id: (daddr % 8) as u8,
            })
            .collect();
        let mut buf = Vec::new();
        write_packet_dump(&insts, &mut buf).unwrap();
        let back = parse_packet_dump(std::str::from_utf8(&buf).unwrap()).unwrap();
        prop_assert_eq!(back, insts);
    }

    #[test]
    fn arbitrary_trace_input_never_panics(input in ".{0,200}") {
        let _ = read_trace(input.as_bytes());
    }

    #[test]
    fn arbitrary_dump_input_never_panics(input in ".{0,100}") {
        let _ = parse_packet_dump(&input);
    }
}
