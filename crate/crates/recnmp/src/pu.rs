//! The near-memory processing unit: per-rank modules (instruction decode,
//! RankCache, weighted-accumulate pipeline, psum registers and counters)
//! plus the per-DIMM adder-tree reduction.
//!
//! Execution model, one deterministic clock loop per channel:
//!
//! * The C/A interface admits up to `ca_insts_per_clock` instructions per
//!   DRAM clock, in dispatch order (packets never interleave on the bus;
//!   each packet pays an initialization gap for its counter and vector-size
//!   register writes).
//! * Each rank decodes admitted instructions in order (one per cycle into a
//!   bounded in-flight window). A set locality bit probes the RankCache —
//!   one probe per 64B line, a vector hits only if all its lines hit; a
//!   miss installs all lines and reads the vector from DRAM. A clear bit
//!   bypasses the cache entirely.
//! * DRAM commands are planned from live bank state when an instruction
//!   becomes the oldest in-flight user of its bank, and issue in order per
//!   bank (at most one command per rank per clock); data waits overlap
//!   across banks.
//! * A completed vector flows through the multiply and accumulate stages
//!   into its psum register; when a rank's counter for a (packet, tag)
//!   drains, the psum is emitted to the DIMM buffer, and when every
//!   contributing rank has emitted, the DIMM adder tree reduces them.
//!   Packet completion is the last tag's tree output plus the host
//!   transfer cycle.
//!
//! Per-rank instruction buffers are unbounded: the C/A budget is the only
//! inter-rank coupling, which is the idealization the speedup analysis
//! assumes (multiple packets in flight keep all ranks busy).

use std::collections::{HashMap, VecDeque};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cache::{Access, CacheConfig, CacheError, CacheStats, SetAssocCache};
use crate::dram::{DdrEngine, DramError};
use crate::isa::{CmdKind, DdrCommand, NmpInst, NmpPacket, NMP_INST_BITS};
use crate::mapping::{self, MappingConfig, MappingError, PageMap};
use crate::workload::{TableData, TableSpec};

#[derive(Debug, Error)]
pub enum PuError {
    #[error("psum counter underflow for packet {packet} tag {tag}")]
    CounterUnderflow { packet: u64, tag: u8 },
    #[error("instruction vsize {inst} disagrees with table {table} ({table_vsize})")]
    VsizeMismatch { inst: u8, table: u32, table_vsize: u8 },
    #[error("adder tree invoked with no contributions")]
    MissingContributor,
    #[error("simulation stalled at cycle {0}")]
    Stalled(u64),
    #[error("packet {packet}: no table data for table {table}")]
    NoTableData { packet: u64, table: u32 },
    #[error(transparent)]
    Dram(#[from] DramError),
    #[error(transparent)]
    Cache(#[from] CacheError),
    #[error(transparent)]
    Mapping(#[from] MappingError),
}

/// Processing-unit latencies and structure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PuConfig {
    /// RankCache shape; `None` disables memory-side caching entirely.
    pub cache: Option<CacheConfig>,
    /// Cycles per RankCache access; also its initiation interval.
    pub cache_latency: u32,
    /// Optional capacity -> latency table overriding `cache_latency`,
    /// for modeling slower large caches.
    pub cache_latency_table: Option<Vec<(u64, u32)>>,
    /// Max in-flight instructions per rank decoder.
    pub rank_window: usize,
    /// NMP instructions admitted per DRAM clock over C/A (double data rate).
    pub ca_insts_per_clock: u32,
    /// Per-packet configuration cycles (accumulation counters, vsize reg).
    pub init_cycles: u32,
    /// Final-sum transfer to the host.
    pub transfer_cycles: u32,
    /// Adder-tree stage latency (reuses the fp32 adder).
    pub tree_cycles_per_level: u32,
    pub mult_cycles: u32,
    pub add_cycles: u32,
}

impl Default for PuConfig {
    fn default() -> Self {
        PuConfig {
            cache: None,
            cache_latency: 1,
            cache_latency_table: None,
            rank_window: 16,
            ca_insts_per_clock: 2,
            init_cycles: 2,
            transfer_cycles: 1,
            tree_cycles_per_level: 3,
            mult_cycles: 4,
            add_cycles: 3,
        }
    }
}

impl PuConfig {
    /// Effective cache access latency for the configured capacity.
    pub fn effective_cache_latency(&self) -> u32 {
        match (&self.cache, &self.cache_latency_table) {
            (Some(c), Some(table)) => table
                .iter()
                .filter(|(cap, _)| *cap >= c.capacity_bytes)
                .map(|(_, lat)| *lat)
                .min()
                .unwrap_or(self.cache_latency),
            _ => self.cache_latency,
        }
    }
}

/// Per-rank execution counters.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RankStats {
    pub insts: u64,
    pub cache: CacheStats,
    pub dram_reads: u64,
    pub busy_cycles: u64,
    pub last_completion: u64,
}

/// Aggregated run counters for reports and energy accounting.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PuStats {
    pub per_rank: Vec<RankStats>,
    pub packet_completions: Vec<(u64, u64)>,
    pub activates: u64,
    pub dram_reads: u64,
    pub precharges: u64,
    /// fp32 operation counts, including dequantization and the adder tree.
    pub adds: u64,
    pub mults: u64,
    /// NMP instruction bits inbound over the DIMM interface.
    pub io_inst_bits: u64,
    /// Final-sum bits returned to the host.
    pub io_sum_bits: u64,
    pub sums_emitted: u64,
}

impl PuStats {
    pub fn cache_totals(&self) -> CacheStats {
        let mut t = CacheStats::default();
        for r in &self.per_rank {
            t.accesses += r.cache.accesses;
            t.hits += r.cache.hits;
            t.misses += r.cache.misses;
            t.bypasses += r.cache.bypasses;
            t.evictions += r.cache.evictions;
        }
        t
    }
}

/// Final sums of one packet, per psum tag.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PacketSums {
    pub packet_id: u64,
    pub table_id: u32,
    pub batch_id: u64,
    pub sums: Vec<(u8, Vec<f32>)>,
}

/// Result of an NMP-mode run.
#[derive(Debug, Clone, PartialEq)]
pub struct NmpRunResult {
    /// Cycle at which the last packet's sum reached the host.
    pub total_cycles: u64,
    pub stats: PuStats,
    /// Present when table data was supplied.
    pub sums: Option<Vec<PacketSums>>,
}

/// Table values plus the page map used to translate instruction addresses
/// back to (table, row) for the functional datapath.
pub struct FunctionalCtx<'a> {
    pub data: &'a HashMap<u32, TableData>,
    pub page_map: &'a PageMap,
}

/// Element-wise adder-tree reduction of rank psums, ranks in ascending
/// order, pairwise per level.
pub fn dimm_reduce(contributions: &[(u32, Vec<f32>)]) -> Result<Vec<f32>, PuError> {
    if contributions.is_empty() {
        return Err(PuError::MissingContributor);
    }
    let mut sorted: Vec<&(u32, Vec<f32>)> = contributions.iter().collect();
    sorted.sort_by_key(|(rank, _)| *rank);
    let mut level: Vec<Vec<f32>> = sorted.into_iter().map(|(_, v)| v.clone()).collect();
    while level.len() > 1 {
        let mut next = Vec::with_capacity(level.len().div_ceil(2));
        for pair in level.chunks(2) {
            if pair.len() == 2 {
                next.push(pair[0].iter().zip(&pair[1]).map(|(a, b)| a + b).collect());
            } else {
                next.push(pair[0].clone());
            }
        }
        level = next;
    }
    Ok(level.pop().expect("non-empty reduction"))
}

struct InFlight {
    inst: NmpInst,
    packet_idx: usize,
    /// Remaining DDR commands; `None` until the instruction becomes the
    /// oldest in-flight user of its bank and plans against live state.
    cmds: Option<VecDeque<DdrCommand>>,
    /// End of the last data burst (or cache-hit availability).
    data_ready: Option<u64>,
    needs_dram: bool,
}

struct RankNmp {
    queue: VecDeque<(usize, NmpInst)>,
    window: Vec<InFlight>,
    cache: Option<SetAssocCache>,
    next_lookup_free: u64,
    stats: RankStats,
}

struct TagState {
    /// Remaining instructions per rank for this (packet, tag).
    per_rank: Vec<u32>,
    remaining: u32,
    /// Max completion cycle seen per dimm.
    dimm_last: Vec<Option<u64>>,
    /// Functional psums per rank.
    psums: Vec<Option<Vec<f32>>>,
    done_cycle: Option<u64>,
}

/// Executes packets (already scheduled and intra-packet reordered) on the
/// NMP processing units of one channel.
pub fn run_nmp(
    packets: &[NmpPacket],
    tables: &[TableSpec],
    engine: &mut DdrEngine,
    cfg: &MappingConfig,
    pu: &PuConfig,
    functional: Option<&FunctionalCtx<'_>>,
) -> Result<NmpRunResult, PuError> {
    let ranks = cfg.total_ranks() as usize;
    let ranks_per_dimm = cfg.ranks_per_dimm as usize;
    let dimms = cfg.dimms_per_channel as usize;
    let tree_levels = (ranks_per_dimm as f64).log2().ceil() as u32;
    let specs: HashMap<u32, &TableSpec> = tables.iter().map(|t| (t.table_id, t)).collect();
    let cache_latency = u64::from(pu.effective_cache_latency());

    // Validate vsize against table shapes up front.
    for p in packets {
        if let Some(spec) = specs.get(&p.table_id) {
            if let Some(bad) = p.insts.iter().find(|i| i.vsize != spec.vsize()) {
                return Err(PuError::VsizeMismatch {
                    inst: bad.vsize,
                    table: p.table_id,
                    table_vsize: spec.vsize(),
                });
            }
        }
    }

    let mut rank_units: Vec<RankNmp> = (0..ranks)
        .map(|_| {
            Ok(RankNmp {
                queue: VecDeque::new(),
                window: Vec::new(),
                cache: match &pu.cache {
                    Some(c) => Some(SetAssocCache::new(*c)?),
                    None => None,
                },
                next_lookup_free: 0,
                stats: RankStats::default(),
            })
        })
        .collect::<Result<_, CacheError>>()?;

    // Per (packet, tag) bookkeeping.
    let mut tags: Vec<Vec<TagState>> = packets
        .iter()
        .map(|p| {
            (0..p.counters.len())
                .map(|t| {
                    let mut per_rank = vec![0u32; ranks];
                    for i in &p.insts {
                        if usize::from(i.psum_tag) == t {
                            per_rank[usize::from(i.rank_id)] += 1;
                        }
                    }
                    TagState {
                        per_rank,
                        remaining: p.counters[t],
                        dimm_last: vec![None; dimms],
                        psums: vec![None; ranks],
                        done_cycle: None,
                    }
                })
                .collect()
        })
        .collect();
    let mut packet_tags_left: Vec<usize> =
        packets.iter().map(|p| p.counters.iter().filter(|&&c| c > 0).count()).collect();
    let mut packet_done: Vec<Option<u64>> = vec![None; packets.len()];
    let mut packet_sums: Vec<Vec<(u8, Vec<f32>)>> = vec![Vec::new(); packets.len()];
    let mut done_count = packets.iter().filter(|p| p.insts.is_empty()).count();
    for (pi, p) in packets.iter().enumerate() {
        if p.insts.is_empty() {
            packet_done[pi] = Some(0);
        }
    }

    // Flat admission stream.
    let stream: Vec<(usize, NmpInst)> = packets
        .iter()
        .enumerate()
        .flat_map(|(pi, p)| p.insts.iter().map(move |i| (pi, *i)))
        .collect();
    let mut stats = PuStats { per_rank: vec![RankStats::default(); ranks], ..Default::default() };

    let mut next_admit = 0usize;
    let mut admit_blocked_until = 0u64;
    let mut last_admitted_packet: Option<usize> = None;
    let mut cycle = 0u64;
    let max_cycles = 2_000_000_000u64;

    while done_count < packets.len() || next_admit < stream.len() {
        if cycle > max_cycles {
            return Err(PuError::Stalled(cycle));
        }

        // C/A admission, in order, up to the per-clock budget.
        let mut admitted = 0u32;
        while admitted < pu.ca_insts_per_clock
            && next_admit < stream.len()
            && cycle >= admit_blocked_until
        {
            let (pi, inst) = stream[next_admit];
            if last_admitted_packet != Some(pi) {
                // Counter/vsize register configuration gap.
                admit_blocked_until = cycle + u64::from(pu.init_cycles);
                last_admitted_packet = Some(pi);
                break;
            }
            rank_units[usize::from(inst.rank_id)].queue.push_back((pi, inst));
            stats.io_inst_bits += u64::from(NMP_INST_BITS);
            next_admit += 1;
            admitted += 1;
        }

        // Rank decoders, ascending rank id.
        let mut completions: Vec<(usize, usize, NmpInst, u64)> = Vec::new(); // (rank, packet, inst, cycle)
        for (r, unit) in rank_units.iter_mut().enumerate() {
            if !unit.queue.is_empty() || !unit.window.is_empty() {
                unit.stats.busy_cycles += 1;
            }

            // Decode one instruction per cycle into the window.
            if unit.window.len() < pu.rank_window {
                let can_lookup = cycle >= unit.next_lookup_free;
                if let Some(&(pi, inst)) = unit.queue.front() {
                    let wants_cache = unit.cache.is_some() && inst.locality;
                    if !wants_cache || can_lookup {
                        unit.queue.pop_front();
                        unit.stats.insts += 1;
                        let mut entry = InFlight {
                            inst,
                            packet_idx: pi,
                            cmds: None,
                            data_ready: None,
                            needs_dram: true,
                        };
                        if let Some(cache) = &mut unit.cache {
                            let blocks = u64::from(inst.vsize);
                            if inst.locality {
                                let mut all_hit = true;
                                for b in 0..blocks {
                                    let line = (inst.daddr + b) * 64;
                                    if !matches!(cache.access(line, true), Access::Hit) {
                                        all_hit = false;
                                    }
                                }
                                unit.next_lookup_free = cycle + cache_latency;
                                if all_hit {
                                    entry.needs_dram = false;
                                    entry.data_ready = Some(cycle + cache_latency);
                                } else {
                                    // Miss: lines were installed; fetch the
                                    // vector from DRAM after the probe.
                                }
                            } else {
                                for b in 0..blocks {
                                    cache.access((inst.daddr + b) * 64, false);
                                }
                            }
                        }
                        unit.window.push(entry);
                    }
                }
            }

            // Plan and issue at most one DRAM command for the oldest
            // instruction whose bank has no earlier pending commands.
            let mut owned: Vec<(u32, u32)> = Vec::new();
            let mut issued = false;
            for fi in 0..unit.window.len() {
                let f = &unit.window[fi];
                if !f.needs_dram || f.data_ready.is_some() {
                    continue;
                }
                let coord = f.inst.coord(cfg);
                let key = (coord.bank_group, coord.bank);
                if owned.contains(&key) {
                    continue;
                }
                owned.push(key);
                if issued {
                    continue;
                }
                // Plan lazily against live bank state.
                if unit.window[fi].cmds.is_none() {
                    let open = engine.open_row(r, &coord, cycle);
                    let mut cmds = VecDeque::new();
                    match open {
                        Some(row) if row == coord.row => {}
                        Some(_) => {
                            cmds.push_back(DdrCommand { kind: CmdKind::Pre, coord, burst_blocks: 0 });
                            cmds.push_back(DdrCommand { kind: CmdKind::Act, coord, burst_blocks: 0 });
                        }
                        None => {
                            cmds.push_back(DdrCommand { kind: CmdKind::Act, coord, burst_blocks: 0 });
                        }
                    }
                    for b in 0..u32::from(unit.window[fi].inst.vsize) {
                        let mut c = coord;
                        c.column += b;
                        cmds.push_back(DdrCommand { kind: CmdKind::Rd, coord: c, burst_blocks: 1 });
                    }
                    unit.window[fi].cmds = Some(cmds);
                }
                let next_cmd = *unit.window[fi].cmds.as_ref().and_then(|c| c.front()).expect("planned");
                match engine.earliest_issue_cycle(r, &next_cmd, cycle) {
                    Ok(earliest) if earliest <= cycle => {
                        let data = engine.issue(r, &next_cmd, cycle)?;
                        let f = &mut unit.window[fi];
                        f.cmds.as_mut().unwrap().pop_front();
                        if next_cmd.kind == CmdKind::Rd {
                            unit.stats.dram_reads += 1;
                        }
                        if f.cmds.as_ref().unwrap().is_empty() {
                            // End of the last burst.
                            f.data_ready = Some(data.expect("last command is RD") + u64::from(engine.timing.t_bl));
                        }
                        issued = true;
                    }
                    Ok(_) => {
                        // Timing-blocked; a younger instruction on another
                        // bank may still use this cycle's command slot.
                    }
                    Err(DramError::ReadClosedRow { .. }) | Err(DramError::ActivateOpenBank(_)) => {
                        // Refresh closed or reopened the bank since
                        // planning; replan next cycle.
                        unit.window[fi].cmds = None;
                    }
                    Err(e) => return Err(e.into()),
                }
            }

            // Retire instructions whose data passed the multiply and
            // accumulate stages.
            let pipe = u64::from(pu.mult_cycles) + u64::from(pu.add_cycles);
            let mut fi = 0;
            while fi < unit.window.len() {
                let ready = unit.window[fi].data_ready;
                match ready {
                    Some(dr) if dr + pipe <= cycle => {
                        let f = unit.window.remove(fi);
                        unit.stats.last_completion = cycle;
                        completions.push((r, f.packet_idx, f.inst, cycle));
                    }
                    _ => fi += 1,
                }
            }
        }

        // Accumulate completions into psums; emit drained tags.
        for (r, pi, inst, at) in completions {
            let packet = &packets[pi];
            let tag = usize::from(inst.psum_tag);
            let ts = &mut tags[pi][tag];
            if ts.remaining == 0 || ts.per_rank[r] == 0 {
                return Err(PuError::CounterUnderflow { packet: packet.packet_id, tag: inst.psum_tag });
            }
            let spec = specs.get(&packet.table_id);
            let elems = spec.map_or(usize::from(inst.vsize) * 16, |s| s.out_elems());
            // Weighted accumulate; dequantization adds one mult+add per
            // element on quantized tables.
            stats.mults += elems as u64;
            stats.adds += elems as u64;
            if spec.is_some_and(|s| matches!(s.dtype, crate::workload::Dtype::Int8Rowwise)) {
                stats.mults += elems as u64;
                stats.adds += elems as u64;
            }
            if let Some(ctx) = functional {
                let phys = mapping::dram_to_phys(&inst.coord(cfg), cfg)?;
                let (table, row) = ctx
                    .page_map
                    .phys_to_row(phys, |t| specs[&t].vec_bytes, cfg)
                    .ok_or(MappingError::UnmappedPage { table: packet.table_id, page: 0 })?;
                let data = ctx
                    .data
                    .get(&table)
                    .ok_or(PuError::NoTableData { packet: packet.packet_id, table })?;
                let vals = data.row_f32(row);
                let psum = ts.psums[r].get_or_insert_with(|| vec![0.0; vals.len()]);
                for (a, v) in psum.iter_mut().zip(vals) {
                    *a += inst.weight * v;
                }
            }
            ts.per_rank[r] -= 1;
            ts.remaining -= 1;
            if ts.per_rank[r] == 0 {
                let dimm = r / ranks_per_dimm;
                let prev = ts.dimm_last[dimm].unwrap_or(0);
                ts.dimm_last[dimm] = Some(prev.max(at));
            }
            if ts.remaining == 0 {
                // All contributing ranks drained: fire the per-DIMM trees.
                let tree_lat = u64::from(tree_levels) * u64::from(pu.tree_cycles_per_level);
                let done = ts
                    .dimm_last
                    .iter()
                    .flatten()
                    .map(|&c| c + tree_lat)
                    .max()
                    .expect("at least one contributing dimm");
                ts.done_cycle = Some(done);
                stats.sums_emitted += 1;
                let out_elems = specs.get(&packet.table_id).map_or(16, |s| s.out_elems());
                stats.io_sum_bits += out_elems as u64 * 32;
                // Tree adds within each dimm.
                for d in 0..dimms {
                    let contributors =
                        (0..ranks_per_dimm).filter(|i| ts.psums[d * ranks_per_dimm + i].is_some()
                            || packet_rank_contributed(packet, (d * ranks_per_dimm + i) as u8, inst.psum_tag))
                            .count();
                    if contributors > 1 {
                        stats.adds += (contributors as u64 - 1) * out_elems as u64;
                    }
                }
                if functional.is_some() {
                    let mut per_dimm: Vec<Vec<f32>> = Vec::new();
                    for d in 0..dimms {
                        let contribs: Vec<(u32, Vec<f32>)> = (0..ranks_per_dimm)
                            .filter_map(|i| {
                                let gr = d * ranks_per_dimm + i;
                                ts.psums[gr].clone().map(|v| (gr as u32, v))
                            })
                            .collect();
                        if !contribs.is_empty() {
                            per_dimm.push(dimm_reduce(&contribs)?);
                        }
                    }
                    // Cross-DIMM accumulation happens host-side, in
                    // ascending dimm order.
                    let mut total = per_dimm.first().cloned().unwrap_or_default();
                    for v in per_dimm.iter().skip(1) {
                        for (a, b) in total.iter_mut().zip(v) {
                            *a += b;
                        }
                    }
                    packet_sums[pi].push((inst.psum_tag, total));
                }
                packet_tags_left[pi] -= 1;
                if packet_tags_left[pi] == 0 {
                    let last_tag_done = tags[pi]
                        .iter()
                        .filter_map(|t| t.done_cycle)
                        .max()
                        .expect("all tags done");
                    packet_done[pi] = Some(last_tag_done + u64::from(pu.transfer_cycles));
                    done_count += 1;
                }
            }
        }

        cycle += 1;
    }

    let total_cycles = packet_done.iter().flatten().copied().max().unwrap_or(0);
    for (r, unit) in rank_units.into_iter().enumerate() {
        let mut rs = unit.stats;
        if let Some(c) = unit.cache {
            rs.cache = c.stats();
        }
        stats.per_rank[r] = rs;
    }
    stats.activates = engine.stats().acts;
    stats.dram_reads = engine.stats().rds;
    stats.precharges = engine.stats().pres;
    stats.packet_completions = packets
        .iter()
        .enumerate()
        .map(|(pi, p)| (p.packet_id, packet_done[pi].expect("all packets complete")))
        .collect();

    let sums = functional.map(|_| {
        packets
            .iter()
            .enumerate()
            .map(|(pi, p)| {
                let mut sums = packet_sums[pi].clone();
                sums.sort_by_key(|(t, _)| *t);
                PacketSums {
                    packet_id: p.packet_id,
                    table_id: p.table_id,
                    batch_id: p.batch_id,
                    sums,
                }
            })
            .collect()
    });

    Ok(NmpRunResult { total_cycles, stats, sums })
}

fn packet_rank_contributed(packet: &NmpPacket, rank: u8, tag: u8) -> bool {
    packet.insts.iter().any(|i| i.rank_id == rank && i.psum_tag == tag)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reduce_single_contributor_is_identity() {
        let v = vec![(3u32, vec![1.0f32, 2.0])];
        assert_eq!(dimm_reduce(&v).unwrap(), vec![1.0, 2.0]);
    }

    #[test]
    fn reduce_eight_ones() {
        let contribs: Vec<(u32, Vec<f32>)> = (0..8).map(|r| (r, vec![1.0f32, 1.0])).collect();
        assert_eq!(dimm_reduce(&contribs).unwrap(), vec![8.0, 8.0]);
    }

    #[test]
    fn reduce_matches_sequential_sum_within_tolerance() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(3);
        for n in [2usize, 3, 5, 8] {
            let contribs: Vec<(u32, Vec<f32>)> = (0..n)
                .map(|r| (r as u32, (0..16).map(|_| rng.gen_range(-1.0f32..=1.0)).collect()))
                .collect();
            let tree = dimm_reduce(&contribs).unwrap();
            for e in 0..16 {
                let seq: f32 = contribs.iter().map(|(_, v)| v[e]).sum();
                assert!((tree[e] - seq).abs() <= 1e-6 * (seq.abs() + 1.0));
            }
        }
    }

    #[test]
    fn reduce_requires_contributors() {
        assert!(matches!(dimm_reduce(&[]), Err(PuError::MissingContributor)));
    }

    #[test]
    fn latency_table_selects_by_capacity() {
        let mut pu = PuConfig {
            cache: Some(CacheConfig::new(512 << 10, 64, 4)),
            cache_latency_table: Some(vec![
                (128 << 10, 1),
                (256 << 10, 2),
                (512 << 10, 4),
                (1 << 20, 8),
            ]),
            ..PuConfig::default()
        };
        assert_eq!(pu.effective_cache_latency(), 4);
        pu.cache = Some(CacheConfig::new(8 << 10, 64, 4));
        assert_eq!(pu.effective_cache_latency(), 1);
        pu.cache_latency_table = None;
        assert_eq!(pu.effective_cache_latency(), 1);
    }
}
