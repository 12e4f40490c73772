//! NMP extension of the host memory controller: packet queueing and
//! scheduling, hot-entry profiling, intra-packet FR-FCFS reordering, and
//! the non-NMP baseline request stream.

use std::collections::{HashMap, HashSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cache::{CacheConfig, CacheError, SetAssocCache};
use crate::dram::ReadRequest;
use crate::isa::{NmpInst, NmpPacket, RowStateOracle};
use crate::mapping::{self, MappingConfig, MappingError, PageMap};
use crate::workload::{SlsKernel, TableSpec, WorkloadError};

#[derive(Debug, Error)]
pub enum ControllerError {
    #[error("profiling threshold must be >= 1")]
    InvalidThreshold,
    #[error("threshold candidate list is empty")]
    NoCandidates,
    #[error(transparent)]
    Cache(#[from] CacheError),
    #[error(transparent)]
    Mapping(#[from] MappingError),
    #[error(transparent)]
    Workload(#[from] WorkloadError),
}

/// Packet dispatch policy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SchedulerPolicy {
    #[serde(rename = "fcfs")]
    Fcfs,
    #[serde(rename = "table_aware")]
    TableAware,
}

/// Pending NMP packets in arrival order.
///
/// `table_aware` keeps dispatching the (table, batch) group of the
/// previously dispatched packet while any of it is pending, then moves to
/// the oldest remaining group (ties broken by smallest table id). Every
/// packet is dispatched exactly once; groups drain fully, so nothing
/// starves.
#[derive(Debug)]
pub struct PacketQueue {
    pending: Vec<(u64, NmpPacket)>,
    policy: SchedulerPolicy,
    next_arrival: u64,
    last_group: Option<(u32, u64)>,
}

impl PacketQueue {
    pub fn new(policy: SchedulerPolicy) -> Self {
        PacketQueue { pending: Vec::new(), policy, next_arrival: 0, last_group: None }
    }

    pub fn push(&mut self, packet: NmpPacket) {
        self.pending.push((self.next_arrival, packet));
        self.next_arrival += 1;
    }

    pub fn len(&self) -> usize {
        self.pending.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pending.is_empty()
    }

    /// Dispatches the next packet, or `None` when the queue is empty.
    pub fn schedule_next(&mut self) -> Option<NmpPacket> {
        if self.pending.is_empty() {
            return None;
        }
        let pick = match self.policy {
            SchedulerPolicy::Fcfs => 0,
            SchedulerPolicy::TableAware => {
                let same_group = self.last_group.and_then(|g| {
                    self.pending
                        .iter()
                        .position(|(_, p)| (p.table_id, p.batch_id) == g)
                });
                match same_group {
                    Some(i) => i,
                    None => {
                        // Oldest group next; among equally old arrivals the
                        // ordering already favors the earliest push, and
                        // group age is the age of its oldest packet.
                        let (mut best, mut best_key) = (0usize, (u64::MAX, u32::MAX));
                        let mut group_age: HashMap<(u32, u64), u64> = HashMap::new();
                        for (arr, p) in &self.pending {
                            let e = group_age.entry((p.table_id, p.batch_id)).or_insert(*arr);
                            *e = (*e).min(*arr);
                        }
                        for (i, (_, p)) in self.pending.iter().enumerate() {
                            let key = (group_age[&(p.table_id, p.batch_id)], p.table_id);
                            if key < best_key {
                                best_key = key;
                                best = i;
                            }
                        }
                        best
                    }
                }
            }
        };
        let (_, packet) = self.pending.remove(pick);
        self.last_group = Some((packet.table_id, packet.batch_id));
        Some(packet)
    }

    /// Drains the whole queue in dispatch order.
    pub fn drain_order(&mut self) -> Vec<NmpPacket> {
        let mut out = Vec::with_capacity(self.pending.len());
        while let Some(p) = self.schedule_next() {
            out.push(p);
        }
        out
    }
}

/// Hot-entry profiler settings.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProfilerConfig {
    /// Repeat-count threshold; indices seen more than `t` times within a
    /// batch are marked hot.
    pub threshold: u32,
    pub sweep_candidates: Vec<u32>,
}

impl Default for ProfilerConfig {
    fn default() -> Self {
        ProfilerConfig { threshold: 1, sweep_candidates: vec![1, 2, 4, 8] }
    }
}

/// Per-table set of hot indices within one batch.
pub type HotIndexSet = HashMap<u32, HashSet<u64>>;

/// Marks every index that occurs more than `t` times within the batch
/// (counted per table across all of the batch's poolings).
pub fn profile_hot_entries(batch: &SlsKernel, t: u32) -> Result<HotIndexSet, ControllerError> {
    if t == 0 {
        return Err(ControllerError::InvalidThreshold);
    }
    let mut counts: HashMap<(u32, u64), u32> = HashMap::new();
    for p in &batch.poolings {
        for &idx in &p.indices {
            *counts.entry((p.table_id, idx)).or_insert(0) += 1;
        }
    }
    let mut hot: HotIndexSet = HashMap::new();
    for ((table, idx), n) in counts {
        if n > t {
            hot.entry(table).or_default().insert(idx);
        }
    }
    Ok(hot)
}

/// Applies profiling bits: an instruction's locality hint is set exactly
/// when its vector's index was marked hot. Indices are recovered through
/// the inverse page map.
pub fn apply_locality_bits(
    packets: &mut [NmpPacket],
    hot: &HotIndexSet,
    tables: &[TableSpec],
    page_map: &PageMap,
    cfg: &MappingConfig,
) -> Result<(), ControllerError> {
    let specs: HashMap<u32, &TableSpec> = tables.iter().map(|t| (t.table_id, t)).collect();
    let empty = HashSet::new();
    for packet in packets.iter_mut() {
        let hot_set = hot.get(&packet.table_id).unwrap_or(&empty);
        for inst in &mut packet.insts {
            let phys = mapping::dram_to_phys(&inst.coord(cfg), cfg)?;
            let (table, idx) = page_map
                .phys_to_row(phys, |t| specs[&t].vec_bytes, cfg)
                .ok_or(MappingError::UnmappedPage { table: packet.table_id, page: 0 })?;
            debug_assert_eq!(table, packet.table_id);
            inst.locality = hot_set.contains(&idx);
        }
    }
    Ok(())
}

/// Picks the threshold whose locality bits give the highest simulated
/// cache hit rate on this batch; ties go to the smallest candidate.
///
/// The sweep replays the batch's line stream (table-relative, one line per
/// 64B block of each vector) through a fresh cache per candidate, with
/// non-hot lookups bypassing.
pub fn sweep_threshold(
    batch: &SlsKernel,
    candidates: &[u32],
    cache_config: CacheConfig,
    tables: &[TableSpec],
) -> Result<u32, ControllerError> {
    if candidates.is_empty() {
        return Err(ControllerError::NoCandidates);
    }
    let specs: HashMap<u32, &TableSpec> = tables.iter().map(|t| (t.table_id, t)).collect();
    let mut best: Option<(u32, f64)> = None;
    let mut sorted: Vec<u32> = candidates.to_vec();
    sorted.sort_unstable();
    for &t in &sorted {
        let hot = profile_hot_entries(batch, t)?;
        let mut cache = SetAssocCache::new(cache_config)?;
        let empty = HashSet::new();
        for p in &batch.poolings {
            let spec = specs.get(&p.table_id).ok_or(WorkloadError::UnknownTable(p.table_id))?;
            let hot_set = hot.get(&p.table_id).unwrap_or(&empty);
            let blocks = u64::from(spec.vsize());
            for &idx in &p.indices {
                let cacheable = hot_set.contains(&idx);
                for b in 0..blocks {
                    // Table-relative line address; tables are offset so they
                    // never alias.
                    let line = (u64::from(p.table_id) << 40) | (idx * blocks + b);
                    cache.access(line * u64::from(cache_config.line_bytes), cacheable);
                }
            }
        }
        let rate = cache.stats().hit_rate();
        if best.is_none_or(|(_, r)| rate > r) {
            best = Some((t, rate));
        }
    }
    Ok(best.expect("candidates non-empty").0)
}

/// Row-hit-first, then oldest-first reordering of one packet's
/// instructions against the predicted bank state. Instructions never move
/// across packet boundaries; the oracle carries over between packets.
pub fn frfcfs_within_packet(
    packet: &NmpPacket,
    oracle: &mut RowStateOracle,
    cfg: &MappingConfig,
) -> Vec<NmpInst> {
    let mut remaining: Vec<NmpInst> = packet.insts.clone();
    let mut out = Vec::with_capacity(remaining.len());
    while !remaining.is_empty() {
        let hit = remaining.iter().position(|inst| {
            let c = inst.coord(cfg);
            oracle.open_row(inst.rank_id, c.bank_group, c.bank) == Some(c.row)
        });
        let inst = remaining.remove(hit.unwrap_or(0));
        let c = inst.coord(cfg);
        oracle.observe(inst.rank_id, c.bank_group, c.bank, c.row);
        out.push(inst);
    }
    out
}

/// The baseline (non-NMP) memory request stream for one kernel: one 64B
/// read per block of every looked-up vector, in trace order. Timing comes
/// from running it through the DRAM engine in host mode.
pub fn host_baseline_stream(
    kernel: &SlsKernel,
    tables: &[TableSpec],
    page_map: &PageMap,
    cfg: &MappingConfig,
) -> Result<Vec<ReadRequest>, ControllerError> {
    let specs: HashMap<u32, &TableSpec> = tables.iter().map(|t| (t.table_id, t)).collect();
    let mut reqs = Vec::new();
    for p in &kernel.poolings {
        let spec = *specs.get(&p.table_id).ok_or(WorkloadError::UnknownTable(p.table_id))?;
        for &idx in &p.indices {
            let phys = page_map.row_phys(spec, idx, cfg)?;
            for b in 0..u64::from(spec.vsize()) {
                let coord = mapping::phys_to_dram(phys + b * 64, cfg)?;
                reqs.push(ReadRequest { coord, global_rank: coord.global_rank(cfg) });
            }
        }
    }
    Ok(reqs)
}
