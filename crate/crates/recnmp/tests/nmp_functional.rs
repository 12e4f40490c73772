//! Functional equivalence of the NMP datapath against the reference
//! gather-reduce, plus counter conservation, the load-imbalance law and
//! cache replay parity.

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use recnmp::cache::{CacheConfig, SetAssocCache};
use recnmp::controller::{frfcfs_within_packet, host_baseline_stream};
use recnmp::dram::{run_host_reads, DdrEngine, DqScope, TimingParams};
use recnmp::isa::{assign_ddr_cmd_tags, build_packets, NmpPacket, RowStateOracle};
use recnmp::mapping::{allocate_pages, MappingConfig, PageMap};
use recnmp::pu::{run_nmp, FunctionalCtx, PuConfig};
use recnmp::workload::{
    sls_reference, Dtype, OpKind, Pooling, SlsKernel, TableData, TableSpec,
};

fn engine(cfg: &MappingConfig) -> DdrEngine {
    DdrEngine::new(cfg, TimingParams::default(), DqScope::PerRank, None).unwrap()
}

struct Rig {
    mapping: MappingConfig,
    tables: Vec<TableSpec>,
    data: HashMap<u32, TableData>,
    page_map: PageMap,
}

fn rig(vec_bytes: u32, dtype: Dtype, rows: u64, seed: u64) -> Rig {
    let tables = vec![TableSpec { table_id: 0, rows, vec_bytes, dtype }];
    let mapping = MappingConfig::with_geometry(4, 2);
    let page_map = allocate_pages(&tables, &mapping, seed).unwrap();
    let data = tables.iter().map(|t| (t.table_id, TableData::generate(*t, seed))).collect();
    Rig { mapping, tables, data, page_map }
}

fn run_kernel(rig: &Rig, kernel: &SlsKernel, ppp: u32) -> (Vec<NmpPacket>, recnmp::pu::NmpRunResult) {
    let mut packets =
        build_packets(kernel, &rig.tables, &rig.page_map, &rig.mapping, ppp, 0, true).unwrap();
    let mut reorder = RowStateOracle::new();
    for p in &mut packets {
        p.insts = frfcfs_within_packet(p, &mut reorder, &rig.mapping);
    }
    let mut tags = RowStateOracle::new();
    for p in &mut packets {
        assign_ddr_cmd_tags(&mut p.insts, &mut tags, &rig.mapping);
    }
    let mut eng = engine(&rig.mapping);
    let pu = PuConfig {
        cache: Some(CacheConfig::new(32 << 10, 64, 4)),
        ..PuConfig::default()
    };
    let ctx = FunctionalCtx { data: &rig.data, page_map: &rig.page_map };
    let result =
        run_nmp(&packets, &rig.tables, &mut eng, &rig.mapping, &pu, Some(&ctx)).unwrap();
    (packets, result)
}

fn assert_close(nmp: &[f32], oracle: &[f32]) {
    assert_eq!(nmp.len(), oracle.len());
    for (a, b) in nmp.iter().zip(oracle) {
        let tol = 1e-6 * (b.abs() + 1e-6);
        assert!((a - b).abs() <= tol.max(1e-6), "nmp {a} vs oracle {b}");
    }
}

#[test]
fn sums_match_reference_for_all_op_kinds_and_vsizes() {
    let mut rng = ChaCha12Rng::seed_from_u64(42);
    for (vec_bytes, op) in [
        (64u32, OpKind::Sum),
        (128, OpKind::WeightedSum),
        (192, OpKind::QuantizedSum),
        (256, OpKind::QuantizedWeightedSum),
        (64, OpKind::QuantizedWeightedSum),
        (256, OpKind::Sum),
    ] {
        let dtype = if op.is_quantized() { Dtype::Int8Rowwise } else { Dtype::Fp32 };
        let r = rig(vec_bytes, dtype, 500, 7 + u64::from(vec_bytes));
        let poolings: Vec<Pooling> = (0..10)
            .map(|_| {
                let n = rng.gen_range(1..=12);
                Pooling {
                    table_id: 0,
                    indices: (0..n).map(|_| rng.gen_range(0..500)).collect(),
                    weights: op
                        .is_weighted()
                        .then(|| (0..n).map(|_| rng.gen_range(-1.0..=1.0)).collect()),
                }
            })
            .collect();
        let kernel = SlsKernel { batch_id: 0, op_kind: op, poolings: poolings.clone() };
        let (packets, result) = run_kernel(&r, &kernel, 4);
        let sums = result.sums.unwrap();
        assert_eq!(sums.len(), packets.len());
        // Packets chunk the poolings in order, 4 per packet.
        for (pi, ps) in sums.iter().enumerate() {
            for (tag, vec) in &ps.sums {
                let pooling = &poolings[pi * 4 + usize::from(*tag)];
                let oracle = sls_reference(&r.data[&0], pooling, op).unwrap();
                assert_close(vec, &oracle);
            }
        }
    }
}

#[test]
fn counters_conserved_and_sums_emitted_once_per_tag() {
    let mut rng = ChaCha12Rng::seed_from_u64(3);
    let r = rig(64, Dtype::Fp32, 200, 5);
    let poolings: Vec<Pooling> = (0..16)
        .map(|_| Pooling {
            table_id: 0,
            indices: (0..rng.gen_range(1..=6)).map(|_| rng.gen_range(0..200)).collect(),
            weights: None,
        })
        .collect();
    let kernel = SlsKernel { batch_id: 1, op_kind: OpKind::Sum, poolings };
    let (packets, result) = run_kernel(&r, &kernel, 16);
    assert_eq!(packets.len(), 1);
    assert!(packets[0].check_counters());
    let tags: usize = packets[0].counters.iter().filter(|&&c| c > 0).count();
    assert_eq!(result.sums.unwrap()[0].sums.len(), tags);
    assert_eq!(result.stats.sums_emitted, tags as u64);
}

#[test]
fn single_rank_packet_completion_matches_rank_drain_plus_constants() {
    // All of one packet on one rank: completion = rank completion + tree
    // levels * 3 + transfer.
    let tables = vec![TableSpec { table_id: 0, rows: 4096, vec_bytes: 64, dtype: Dtype::Fp32 }];
    let mapping = MappingConfig::with_geometry(1, 2);
    let ranks = mapping.total_ranks();
    let page_map =
        recnmp::mapping::allocate_pages_colored(&tables, &mapping, 3, |t| t % ranks).unwrap();
    let kernel = SlsKernel {
        batch_id: 0,
        op_kind: OpKind::Sum,
        poolings: vec![Pooling { table_id: 0, indices: (0..40).collect(), weights: None }],
    };
    let mut packets = build_packets(&kernel, &tables, &page_map, &mapping, 8, 0, false).unwrap();
    let mut tags = RowStateOracle::new();
    for p in &mut packets {
        assign_ddr_cmd_tags(&mut p.insts, &mut tags, &mapping);
    }
    let mut eng = engine(&mapping);
    let pu = PuConfig::default();
    let result = run_nmp(&packets, &tables, &mut eng, &mapping, &pu, None).unwrap();
    let rank_done: u64 =
        result.stats.per_rank.iter().map(|r| r.last_completion).max().unwrap();
    let tree = u64::from(pu.tree_cycles_per_level); // 2 ranks -> 1 level
    let expect = rank_done + tree + u64::from(pu.transfer_cycles);
    assert_eq!(result.total_cycles, expect);
    // Only one rank did any work.
    let busy: Vec<u64> = result.stats.per_rank.iter().map(|r| r.insts).collect();
    assert_eq!(busy.iter().filter(|&&i| i > 0).count(), 1);
}

#[test]
fn eighty_lookups_spread_over_eight_ranks_run_near_eight_times_faster() {
    // The same pooling executed on a 1-rank and an 8-rank machine.
    let mut cycles = Vec::new();
    for (d, rk) in [(1u32, 1u32), (4, 2)] {
        let tables =
            vec![TableSpec { table_id: 0, rows: 65536, vec_bytes: 128, dtype: Dtype::Fp32 }];
        let mapping = MappingConfig::with_geometry(d, rk);
        let page_map = allocate_pages(&tables, &mapping, 11).unwrap();
        let mut rng = ChaCha12Rng::seed_from_u64(17);
        let kernels: Vec<SlsKernel> = (0..8)
            .map(|b| SlsKernel {
                batch_id: b,
                op_kind: OpKind::Sum,
                poolings: vec![Pooling {
                    table_id: 0,
                    indices: (0..80).map(|_| rng.gen_range(0..65536)).collect(),
                    weights: None,
                }],
            })
            .collect();
        let mut packets = Vec::new();
        for k in &kernels {
            packets.extend(
                build_packets(k, &tables, &page_map, &mapping, 8, packets.len() as u64, false)
                    .unwrap(),
            );
        }
        let mut tags = RowStateOracle::new();
        for p in &mut packets {
            assign_ddr_cmd_tags(&mut p.insts, &mut tags, &mapping);
        }
        let mut eng = engine(&mapping);
        let result = run_nmp(&packets, &tables, &mut eng, &mapping, &PuConfig::default(), None)
            .unwrap();
        cycles.push(result.total_cycles);
    }
    let speedup = cycles[0] as f64 / cycles[1] as f64;
    assert!(
        (5.5..=8.5).contains(&speedup),
        "8-rank vs 1-rank speedup {speedup} ({} vs {})",
        cycles[0],
        cycles[1]
    );
}

#[test]
fn rank_cache_stats_equal_standalone_replay() {
    // Replaying the post-scheduling per-rank line streams with the same
    // bypass bits through a fresh cache must reproduce the RankCache
    // stats exactly.
    let mut rng = ChaCha12Rng::seed_from_u64(23);
    let r = rig(128, Dtype::Fp32, 2000, 9);
    let poolings: Vec<Pooling> = (0..12)
        .map(|_| Pooling {
            table_id: 0,
            indices: (0..20).map(|_| rng.gen_range(0..300)).collect(), // hot subrange
            weights: None,
        })
        .collect();
    let kernel = SlsKernel { batch_id: 0, op_kind: OpKind::Sum, poolings };
    let mut packets =
        build_packets(&kernel, &r.tables, &r.page_map, &r.mapping, 8, 0, true).unwrap();
    // Scatter some bypass hints.
    for p in &mut packets {
        for (i, inst) in p.insts.iter_mut().enumerate() {
            inst.locality = i % 3 != 0;
        }
    }
    let mut tags = RowStateOracle::new();
    for p in &mut packets {
        assign_ddr_cmd_tags(&mut p.insts, &mut tags, &r.mapping);
    }
    let cache_cfg = CacheConfig::new(8 << 10, 64, 4);
    let mut eng = engine(&r.mapping);
    let pu = PuConfig { cache: Some(cache_cfg), ..PuConfig::default() };
    let result = run_nmp(&packets, &r.tables, &mut eng, &r.mapping, &pu, None).unwrap();

    // run_nmp admits instructions to ranks in dispatch order and probes
    // per 64B line; replay that stream per rank.
    let ranks = r.mapping.total_ranks() as usize;
    let mut replays: Vec<SetAssocCache> =
        (0..ranks).map(|_| SetAssocCache::new(cache_cfg).unwrap()).collect();
    for p in &packets {
        for inst in &p.insts {
            let c = &mut replays[usize::from(inst.rank_id)];
            for b in 0..u64::from(inst.vsize) {
                c.access((inst.daddr + b) * 64, inst.locality);
            }
        }
    }
    for (rk, replay) in replays.iter().enumerate() {
        assert_eq!(
            result.stats.per_rank[rk].cache,
            replay.stats(),
            "rank {rk} cache stats diverge"
        );
    }
}

#[test]
fn baseline_pooling_of_80_is_dq_bound() {
    // One pooling of 80 random 64B vectors on one rank: total data cycles
    // at least 80 bursts long.
    let tables = vec![TableSpec { table_id: 0, rows: 65536, vec_bytes: 64, dtype: Dtype::Fp32 }];
    let mapping = MappingConfig::with_geometry(1, 1);
    let page_map = allocate_pages(&tables, &mapping, 2).unwrap();
    let mut rng = ChaCha12Rng::seed_from_u64(5);
    let kernel = SlsKernel {
        batch_id: 0,
        op_kind: OpKind::Sum,
        poolings: vec![Pooling {
            table_id: 0,
            indices: (0..80).map(|_| rng.gen_range(0..65536)).collect(),
            weights: None,
        }],
    };
    let reqs = host_baseline_stream(&kernel, &tables, &page_map, &mapping).unwrap();
    assert_eq!(reqs.len(), 80);
    let mut eng =
        DdrEngine::new(&mapping, TimingParams::default(), DqScope::SharedChannel, None).unwrap();
    let res = run_host_reads(&mut eng, &reqs, 32).unwrap();
    assert!(res.cycles >= 80 * 4, "data cycles {} below the burst floor", res.cycles);
    assert_eq!(res.stats.rds, 80);
}
