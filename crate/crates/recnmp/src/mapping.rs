//! Logical-to-physical page allocation and physical-to-DRAM address
//! translation.
//!
//! A channel is described by its device geometry plus an ordered assignment
//! of physical-address bit ranges to DRAM coordinates. The default slicing
//! keeps an embedding vector's 64B bursts row-contiguous and spreads pages
//! across banks and ranks; the exact production mapping is proprietary, so
//! arbitrary contiguous slices (plus optional bank XOR hashing) can be
//! configured instead.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::workload::TableSpec;

pub const LINE_BYTES: u32 = 64;
pub const PAGE_BYTES: u64 = 4096;

#[derive(Debug, Error)]
pub enum MappingError {
    #[error("bit slice `{0}` is malformed; expected bits[msb:lsb]")]
    BadSlice(String),
    #[error("slices must cover bits [0, {expected}) exactly; got {got} bits")]
    SliceCoverage { expected: u32, got: u32 },
    #[error("slice `{field}` width {width} does not match extent {extent}")]
    SliceExtent { field: &'static str, width: u8, extent: u64 },
    #[error("geometry extents must be powers of two (found {0})")]
    NotPowerOfTwo(u64),
    #[error("physical address {addr:#x} out of range (capacity {capacity:#x})")]
    AddressOutOfRange { addr: u64, capacity: u64 },
    #[error("tables need {needed} pages but the channel has {available}")]
    OutOfMemory { needed: u64, available: u64 },
    #[error("rank {rank} overflows: table {table} needs {needed} pages, {available} free")]
    RankOverflow { rank: u32, table: u32, needed: u64, available: u64 },
    #[error("page coloring requires rank and dimm bits at or above the page offset")]
    ColoringUnsupported,
    #[error("table {table} page {page} is not mapped")]
    UnmappedPage { table: u32, page: u64 },
    #[error("coordinate field {field} value {value} exceeds extent {extent}")]
    CoordOutOfRange { field: &'static str, value: u64, extent: u64 },
}

/// A contiguous physical-address bit range `[lsb, lsb+width)`.
///
/// The textual form is `bits[msb:lsb]` (inclusive); width 0 is spelled
/// `none` and used for degenerate dimensions such as a single DIMM.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct BitSlice {
    pub lsb: u8,
    pub width: u8,
}

impl BitSlice {
    pub fn new(lsb: u8, width: u8) -> Self {
        BitSlice { lsb, width }
    }

    pub fn none() -> Self {
        BitSlice { lsb: 0, width: 0 }
    }

    pub fn extract(&self, addr: u64) -> u64 {
        if self.width == 0 {
            0
        } else {
            (addr >> self.lsb) & ((1u64 << self.width) - 1)
        }
    }

    pub fn insert(&self, value: u64) -> u64 {
        if self.width == 0 {
            0
        } else {
            (value & ((1u64 << self.width) - 1)) << self.lsb
        }
    }
}

impl fmt::Display for BitSlice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.width == 0 {
            write!(f, "none")
        } else {
            write!(f, "bits[{}:{}]", self.lsb + self.width - 1, self.lsb)
        }
    }
}

impl FromStr for BitSlice {
    type Err = MappingError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "none" {
            return Ok(BitSlice::none());
        }
        let body = s
            .strip_prefix("bits[")
            .and_then(|r| r.strip_suffix(']'))
            .ok_or_else(|| MappingError::BadSlice(s.into()))?;
        let (msb_s, lsb_s) = body.split_once(':').ok_or_else(|| MappingError::BadSlice(s.into()))?;
        let msb: u8 = msb_s.trim().parse().map_err(|_| MappingError::BadSlice(s.into()))?;
        let lsb: u8 = lsb_s.trim().parse().map_err(|_| MappingError::BadSlice(s.into()))?;
        if msb < lsb || msb >= 64 {
            return Err(MappingError::BadSlice(s.into()));
        }
        Ok(BitSlice { lsb, width: msb - lsb + 1 })
    }
}

impl TryFrom<String> for BitSlice {
    type Error = MappingError;
    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<BitSlice> for String {
    fn from(b: BitSlice) -> String {
        b.to_string()
    }
}

/// Assignment of physical-address bits to DRAM coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BitSlices {
    pub offset: BitSlice,
    pub column: BitSlice,
    pub bank_group: BitSlice,
    pub bank: BitSlice,
    pub rank: BitSlice,
    pub dimm: BitSlice,
    pub row: BitSlice,
}

/// Geometry and address-mapping description of one memory channel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MappingConfig {
    pub channels: u32,
    pub dimms_per_channel: u32,
    pub ranks_per_dimm: u32,
    pub bank_groups: u32,
    pub banks_per_group: u32,
    pub rows_per_bank: u64,
    /// Columns in 64B blocks per row.
    pub columns_per_row: u32,
    pub line_bytes: u32,
    pub page_bytes: u64,
    pub bit_slices: BitSlices,
    /// XOR low row bits into the bank/bank-group index.
    pub xor_bank_hash: bool,
}

impl MappingConfig {
    /// Default mapping for a `dimms x ranks_per_dimm` channel of 8Gb x8
    /// devices (8GB per rank, 8KB rows, 16 banks in 4 groups).
    ///
    /// Slicing, LSB to MSB: offset[5:0], column[12:6], bank_group[14:13],
    /// bank[16:15], rank, dimm, row.
    pub fn with_geometry(dimms: u32, ranks_per_dimm: u32) -> Self {
        let rank_w = log2(u64::from(ranks_per_dimm)) as u8;
        let dimm_w = log2(u64::from(dimms)) as u8;
        let rank_lsb = 17u8;
        let dimm_lsb = rank_lsb + rank_w;
        let row_lsb = dimm_lsb + dimm_w;
        MappingConfig {
            channels: 1,
            dimms_per_channel: dimms,
            ranks_per_dimm,
            bank_groups: 4,
            banks_per_group: 4,
            rows_per_bank: 65536,
            columns_per_row: 128,
            line_bytes: LINE_BYTES,
            page_bytes: PAGE_BYTES,
            bit_slices: BitSlices {
                offset: BitSlice::new(0, 6),
                column: BitSlice::new(6, 7),
                bank_group: BitSlice::new(13, 2),
                bank: BitSlice::new(15, 2),
                rank: BitSlice::new(rank_lsb, rank_w),
                dimm: BitSlice::new(dimm_lsb, dimm_w),
                row: BitSlice::new(row_lsb, 16),
            },
            xor_bank_hash: false,
        }
    }

    /// Parses a `DIMMxRANK` label such as `"4x2"`.
    pub fn from_label(label: &str) -> Result<Self, MappingError> {
        let (d, r) = label
            .split_once('x')
            .ok_or_else(|| MappingError::BadSlice(label.into()))?;
        let dimms: u32 = d.trim().parse().map_err(|_| MappingError::BadSlice(label.into()))?;
        let ranks: u32 = r.trim().parse().map_err(|_| MappingError::BadSlice(label.into()))?;
        if dimms == 0 || ranks == 0 {
            return Err(MappingError::BadSlice(label.into()));
        }
        let cfg = Self::with_geometry(dimms, ranks);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn total_ranks(&self) -> u32 {
        self.dimms_per_channel * self.ranks_per_dimm
    }

    /// Per-channel capacity in bytes.
    pub fn capacity_bytes(&self) -> u64 {
        u64::from(self.total_ranks())
            * u64::from(self.bank_groups)
            * u64::from(self.banks_per_group)
            * self.rows_per_bank
            * u64::from(self.columns_per_row)
            * u64::from(self.line_bytes)
    }

    pub fn addr_bits(&self) -> u32 {
        log2(self.capacity_bytes()) as u32
    }

    pub fn frames(&self) -> u64 {
        self.capacity_bytes() / self.page_bytes
    }

    /// Rank-local block addresses span this many bits.
    pub fn daddr_bits(&self) -> u32 {
        u32::from(self.col_bits() + self.bank_bits() + self.bg_bits()) + log2(self.rows_per_bank) as u32
    }

    fn col_bits(&self) -> u8 {
        log2(u64::from(self.columns_per_row)) as u8
    }

    fn bg_bits(&self) -> u8 {
        log2(u64::from(self.bank_groups)) as u8
    }

    fn bank_bits(&self) -> u8 {
        log2(u64::from(self.banks_per_group)) as u8
    }

    pub fn validate(&self) -> Result<(), MappingError> {
        for extent in [
            u64::from(self.dimms_per_channel),
            u64::from(self.ranks_per_dimm),
            u64::from(self.bank_groups),
            u64::from(self.banks_per_group),
            self.rows_per_bank,
            u64::from(self.columns_per_row),
            u64::from(self.line_bytes),
            self.page_bytes,
        ] {
            if !extent.is_power_of_two() {
                return Err(MappingError::NotPowerOfTwo(extent));
            }
        }
        let s = &self.bit_slices;
        let checks: [(&'static str, BitSlice, u64); 7] = [
            ("offset", s.offset, u64::from(self.line_bytes)),
            ("column", s.column, u64::from(self.columns_per_row)),
            ("bank_group", s.bank_group, u64::from(self.bank_groups)),
            ("bank", s.bank, u64::from(self.banks_per_group)),
            ("rank", s.rank, u64::from(self.ranks_per_dimm)),
            ("dimm", s.dimm, u64::from(self.dimms_per_channel)),
            ("row", s.row, self.rows_per_bank),
        ];
        let mut covered = 0u64;
        let mut total = 0u32;
        for (field, slice, extent) in checks {
            if (1u64 << slice.width) != extent {
                return Err(MappingError::SliceExtent { field, width: slice.width, extent });
            }
            if slice.width > 0 {
                let mask = ((1u64 << slice.width) - 1) << slice.lsb;
                if covered & mask != 0 {
                    return Err(MappingError::SliceCoverage {
                        expected: self.addr_bits(),
                        got: total,
                    });
                }
                covered |= mask;
            }
            total += u32::from(slice.width);
        }
        if total != self.addr_bits() || covered != (1u64 << total) - 1 {
            return Err(MappingError::SliceCoverage { expected: self.addr_bits(), got: total });
        }
        Ok(())
    }

    /// Whole embedding vectors never straddle a page: a page holds
    /// `page_bytes / vec_bytes` vectors (192B tables leave a 64B pad).
    pub fn vectors_per_page(&self, vec_bytes: u32) -> u64 {
        self.page_bytes / u64::from(vec_bytes)
    }

    pub fn pages_for_table(&self, spec: &TableSpec) -> u64 {
        let vpp = self.vectors_per_page(spec.vec_bytes);
        spec.rows.div_ceil(vpp)
    }
}

fn log2(v: u64) -> u64 {
    debug_assert!(v.is_power_of_two());
    v.trailing_zeros() as u64
}

/// DRAM coordinates of one 64B block.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct DramCoord {
    pub dimm: u32,
    pub rank: u32,
    pub bank_group: u32,
    pub bank: u32,
    pub row: u64,
    /// Column at 64B-block granularity.
    pub column: u32,
}

impl DramCoord {
    /// Rank index within the channel (used as NMP-Inst Rank-ID).
    pub fn global_rank(&self, cfg: &MappingConfig) -> u32 {
        self.dimm * cfg.ranks_per_dimm + self.rank
    }

    /// Packs (bank_group, bank, row, column) into the rank-local block
    /// address carried by NMP instructions. Column occupies the low bits so
    /// a vector's blocks are consecutive.
    pub fn daddr(&self, cfg: &MappingConfig) -> u64 {
        let col_b = cfg.col_bits();
        let bank_b = cfg.bank_bits();
        let row_b = log2(cfg.rows_per_bank) as u8;
        let banks = (u64::from(self.bank_group) << bank_b) | u64::from(self.bank);
        ((banks << row_b | self.row) << col_b) | u64::from(self.column)
    }

    /// Inverse of [`DramCoord::daddr`] for a given rank.
    pub fn from_daddr(daddr: u64, global_rank: u32, cfg: &MappingConfig) -> Self {
        let col_b = cfg.col_bits();
        let bank_b = cfg.bank_bits();
        let row_b = log2(cfg.rows_per_bank) as u8;
        let column = (daddr & ((1 << col_b) - 1)) as u32;
        let rest = daddr >> col_b;
        let row = rest & ((1 << row_b) - 1);
        let rest = rest >> row_b;
        let bank = (rest & ((1 << bank_b) - 1)) as u32;
        let bank_group = (rest >> bank_b) as u32;
        DramCoord {
            dimm: global_rank / cfg.ranks_per_dimm,
            rank: global_rank % cfg.ranks_per_dimm,
            bank_group,
            bank,
            row,
            column,
        }
    }

    pub fn validate(&self, cfg: &MappingConfig) -> Result<(), MappingError> {
        let checks: [(&'static str, u64, u64); 6] = [
            ("dimm", u64::from(self.dimm), u64::from(cfg.dimms_per_channel)),
            ("rank", u64::from(self.rank), u64::from(cfg.ranks_per_dimm)),
            ("bank_group", u64::from(self.bank_group), u64::from(cfg.bank_groups)),
            ("bank", u64::from(self.bank), u64::from(cfg.banks_per_group)),
            ("row", self.row, cfg.rows_per_bank),
            ("column", u64::from(self.column), u64::from(cfg.columns_per_row)),
        ];
        for (field, value, extent) in checks {
            if value >= extent {
                return Err(MappingError::CoordOutOfRange { field, value, extent });
            }
        }
        Ok(())
    }
}

/// Translates a physical address into DRAM coordinates by bit-slice
/// extraction (64B-block granularity; the in-block offset is dropped).
pub fn phys_to_dram(phys: u64, cfg: &MappingConfig) -> Result<DramCoord, MappingError> {
    if phys >= cfg.capacity_bytes() {
        return Err(MappingError::AddressOutOfRange { addr: phys, capacity: cfg.capacity_bytes() });
    }
    let s = &cfg.bit_slices;
    let row = s.row.extract(phys);
    let mut bank_group = s.bank_group.extract(phys) as u32;
    let mut bank = s.bank.extract(phys) as u32;
    if cfg.xor_bank_hash {
        bank_group ^= (row as u32) & (cfg.bank_groups - 1);
        bank ^= ((row >> cfg.bg_bits()) as u32) & (cfg.banks_per_group - 1);
    }
    Ok(DramCoord {
        dimm: s.dimm.extract(phys) as u32,
        rank: s.rank.extract(phys) as u32,
        bank_group,
        bank,
        row,
        column: s.column.extract(phys) as u32,
    })
}

/// Inverse of [`phys_to_dram`]; returns the block-aligned address.
pub fn dram_to_phys(coord: &DramCoord, cfg: &MappingConfig) -> Result<u64, MappingError> {
    coord.validate(cfg)?;
    let s = &cfg.bit_slices;
    let mut bank_group = coord.bank_group;
    let mut bank = coord.bank;
    if cfg.xor_bank_hash {
        bank_group ^= (coord.row as u32) & (cfg.bank_groups - 1);
        bank ^= ((coord.row >> cfg.bg_bits()) as u32) & (cfg.banks_per_group - 1);
    }
    Ok(s.row.insert(coord.row)
        | s.dimm.insert(u64::from(coord.dimm))
        | s.rank.insert(u64::from(coord.rank))
        | s.bank.insert(u64::from(bank))
        | s.bank_group.insert(u64::from(bank_group))
        | s.column.insert(u64::from(coord.column)))
}

/// Immutable logical-page to physical-frame map for a set of tables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PageMap {
    pub seed: u64,
    /// Per table: frame number of each logical page.
    frames: HashMap<u32, Vec<u64>>,
    /// frame -> (table, logical page); the map is injective.
    inverse: HashMap<u64, (u32, u64)>,
}

impl PageMap {
    pub fn frame(&self, table: u32, lpage: u64) -> Result<u64, MappingError> {
        self.frames
            .get(&table)
            .and_then(|v| v.get(lpage as usize).copied())
            .ok_or(MappingError::UnmappedPage { table, page: lpage })
    }

    /// Physical byte address of logical row `index` of `table`.
    pub fn row_phys(&self, spec: &TableSpec, index: u64, cfg: &MappingConfig) -> Result<u64, MappingError> {
        let vpp = cfg.vectors_per_page(spec.vec_bytes);
        let frame = self.frame(spec.table_id, index / vpp)?;
        Ok(frame * cfg.page_bytes + (index % vpp) * u64::from(spec.vec_bytes))
    }

    /// Maps a physical address back to (table, row); used by the
    /// functional datapath to fetch vector values.
    pub fn phys_to_row(&self, phys: u64, vec_bytes_of: impl Fn(u32) -> u32, cfg: &MappingConfig) -> Option<(u32, u64)> {
        let frame = phys / cfg.page_bytes;
        let (table, lpage) = *self.inverse.get(&frame)?;
        let vec_bytes = vec_bytes_of(table);
        let vpp = cfg.vectors_per_page(vec_bytes);
        let off = phys % cfg.page_bytes;
        Some((table, lpage * vpp + off / u64::from(vec_bytes)))
    }

    pub fn tables(&self) -> impl Iterator<Item = u32> + '_ {
        self.frames.keys().copied()
    }

    pub fn pages(&self, table: u32) -> Option<&[u64]> {
        self.frames.get(&table).map(Vec::as_slice)
    }
}

/// Uniform random frame assignment without replacement over the whole
/// channel, mimicking an OS picking free pages at random.
pub fn allocate_pages(
    tables: &[TableSpec],
    cfg: &MappingConfig,
    seed: u64,
) -> Result<PageMap, MappingError> {
    let needed: u64 = tables.iter().map(|t| cfg.pages_for_table(t)).sum();
    let available = cfg.frames();
    if needed > available {
        return Err(MappingError::OutOfMemory { needed, available });
    }
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let picks = rand::seq::index::sample(&mut rng, available as usize, needed as usize);
    let mut it = picks.iter();
    build_page_map(tables, cfg, seed, |_| it.next().unwrap() as u64)
}

/// Page-colored allocation: every frame of a table lands on the rank
/// `color_fn(table_id)`. The default color function is
/// `table_id % total_ranks`.
pub fn allocate_pages_colored(
    tables: &[TableSpec],
    cfg: &MappingConfig,
    seed: u64,
    color_fn: impl Fn(u32) -> u32,
) -> Result<PageMap, MappingError> {
    let s = &cfg.bit_slices;
    let page_bits = log2(cfg.page_bytes) as u8;
    if s.rank.lsb < page_bits || (s.dimm.width > 0 && s.dimm.lsb < page_bits) {
        return Err(MappingError::ColoringUnsupported);
    }
    let ranks = cfg.total_ranks();
    let frames_per_rank = cfg.frames() / u64::from(ranks);
    let mut rng = ChaCha12Rng::seed_from_u64(seed);

    // Free pool per rank, sampled lazily per table.
    let mut used: HashMap<u32, Vec<bool>> = HashMap::new();
    let mut assignment: Vec<(u32, Vec<u64>)> = Vec::new();
    for t in tables {
        let color = color_fn(t.table_id) % ranks;
        let needed = cfg.pages_for_table(t);
        let pool = used.entry(color).or_insert_with(|| vec![false; frames_per_rank as usize]);
        let free = pool.iter().filter(|u| !**u).count() as u64;
        if needed > free {
            return Err(MappingError::RankOverflow {
                rank: color,
                table: t.table_id,
                needed,
                available: free,
            });
        }
        let free_local: Vec<u64> = pool
            .iter()
            .enumerate()
            .filter_map(|(i, u)| (!*u).then_some(i as u64))
            .collect();
        let picks = rand::seq::index::sample(&mut rng, free_local.len(), needed as usize);
        let mut frames = Vec::with_capacity(needed as usize);
        for p in picks.iter() {
            let local = free_local[p];
            pool[local as usize] = true;
            frames.push(rank_local_to_frame(local, color, cfg));
        }
        assignment.push((t.table_id, frames));
    }
    let mut by_id: HashMap<u32, std::vec::IntoIter<u64>> =
        assignment.into_iter().map(|(t, f)| (t, f.into_iter())).collect();
    build_page_map(tables, cfg, seed, move |t| by_id.get_mut(&t).unwrap().next().unwrap())
}

/// Expands a rank-local frame index into a channel frame number by
/// distributing its bits around the rank/dimm slices.
fn rank_local_to_frame(local: u64, global_rank: u32, cfg: &MappingConfig) -> u64 {
    let page_bits = log2(cfg.page_bytes) as u8;
    let s = &cfg.bit_slices;
    let rank = u64::from(global_rank) % u64::from(cfg.ranks_per_dimm);
    let dimm = u64::from(global_rank) / u64::from(cfg.ranks_per_dimm);
    let mut phys = s.rank.insert(rank) | s.dimm.insert(dimm);
    let mut remaining = local;
    let mut bit = page_bits;
    while remaining != 0 {
        let in_rank = s.rank.width > 0 && bit >= s.rank.lsb && bit < s.rank.lsb + s.rank.width;
        let in_dimm = s.dimm.width > 0 && bit >= s.dimm.lsb && bit < s.dimm.lsb + s.dimm.width;
        if !in_rank && !in_dimm {
            phys |= (remaining & 1) << bit;
            remaining >>= 1;
        }
        bit += 1;
    }
    phys >> page_bits
}

fn build_page_map(
    tables: &[TableSpec],
    cfg: &MappingConfig,
    seed: u64,
    mut next_frame: impl FnMut(u32) -> u64,
) -> Result<PageMap, MappingError> {
    let mut frames = HashMap::new();
    let mut inverse = HashMap::new();
    for t in tables {
        let n = cfg.pages_for_table(t);
        let mut list = Vec::with_capacity(n as usize);
        for lpage in 0..n {
            let frame = next_frame(t.table_id);
            inverse.insert(frame, (t.table_id, lpage));
            list.push(frame);
        }
        frames.insert(t.table_id, list);
    }
    Ok(PageMap { seed, frames, inverse })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::workload::Dtype;
    use rand::Rng;

    fn spec(id: u32, rows: u64, vec_bytes: u32) -> TableSpec {
        TableSpec { table_id: id, rows, vec_bytes, dtype: Dtype::Fp32 }
    }

    #[test]
    fn default_configs_validate() {
        for (d, r) in [(1, 1), (1, 2), (1, 4), (2, 2), (4, 2)] {
            let cfg = MappingConfig::with_geometry(d, r);
            cfg.validate().unwrap();
            assert_eq!(cfg.capacity_bytes(), u64::from(d * r) * (8 << 30));
        }
    }

    #[test]
    fn zero_maps_to_origin_and_block_one_to_column_one() {
        let cfg = MappingConfig::with_geometry(4, 2);
        let zero = phys_to_dram(0, &cfg).unwrap();
        assert_eq!(
            zero,
            DramCoord { dimm: 0, rank: 0, bank_group: 0, bank: 0, row: 0, column: 0 }
        );
        let c = phys_to_dram(64, &cfg).unwrap();
        assert_eq!(c.column, 1);
        assert_eq!((c.dimm, c.rank, c.bank_group, c.bank, c.row), (0, 0, 0, 0, 0));
    }

    #[test]
    fn roundtrip_random_addresses() {
        let cfg = MappingConfig::with_geometry(4, 2);
        let mut rng = ChaCha12Rng::seed_from_u64(1);
        for _ in 0..100_000 {
            let phys = rng.gen_range(0..cfg.capacity_bytes()) & !63;
            let coord = phys_to_dram(phys, &cfg).unwrap();
            assert_eq!(dram_to_phys(&coord, &cfg).unwrap(), phys);
        }
    }

    #[test]
    fn roundtrip_with_xor_hash() {
        let mut cfg = MappingConfig::with_geometry(2, 2);
        cfg.xor_bank_hash = true;
        let mut rng = ChaCha12Rng::seed_from_u64(2);
        for _ in 0..10_000 {
            let phys = rng.gen_range(0..cfg.capacity_bytes()) & !63;
            let coord = phys_to_dram(phys, &cfg).unwrap();
            assert_eq!(dram_to_phys(&coord, &cfg).unwrap(), phys);
        }
    }

    #[test]
    fn daddr_roundtrip_exhaustive_on_shrunk_geometry() {
        let mut cfg = MappingConfig::with_geometry(1, 2);
        cfg.rows_per_bank = 16;
        cfg.columns_per_row = 8;
        // Shrunk geometry: rebuild slices for the smaller extents.
        cfg.bit_slices = BitSlices {
            offset: BitSlice::new(0, 6),
            column: BitSlice::new(6, 3),
            bank_group: BitSlice::new(9, 2),
            bank: BitSlice::new(11, 2),
            rank: BitSlice::new(13, 1),
            dimm: BitSlice::none(),
            row: BitSlice::new(14, 4),
        };
        cfg.page_bytes = 512;
        cfg.validate().unwrap();
        for phys in (0..cfg.capacity_bytes()).step_by(64) {
            let coord = phys_to_dram(phys, &cfg).unwrap();
            let daddr = coord.daddr(&cfg);
            let back = DramCoord::from_daddr(daddr, coord.global_rank(&cfg), &cfg);
            assert_eq!(back, coord);
            assert_eq!(dram_to_phys(&back, &cfg).unwrap(), phys);
        }
    }

    #[test]
    fn blocks_within_line_share_coords() {
        let cfg = MappingConfig::with_geometry(1, 2);
        let mut rng = ChaCha12Rng::seed_from_u64(3);
        for _ in 0..10_000 {
            let phys = rng.gen_range(0..cfg.capacity_bytes());
            let a = phys_to_dram(phys & !63, &cfg).unwrap();
            let b = phys_to_dram(phys, &cfg).unwrap();
            assert_eq!(a, b, "addresses within one 64B line must share coordinates");
        }
    }

    #[test]
    fn consecutive_blocks_in_page_share_row() {
        let cfg = MappingConfig::with_geometry(4, 2);
        let mut rng = ChaCha12Rng::seed_from_u64(4);
        for _ in 0..10_000 {
            let page = rng.gen_range(0..cfg.frames());
            let blk = rng.gen_range(0..(cfg.page_bytes / 64 - 1));
            let a = phys_to_dram(page * cfg.page_bytes + blk * 64, &cfg).unwrap();
            let b = phys_to_dram(page * cfg.page_bytes + (blk + 1) * 64, &cfg).unwrap();
            assert_eq!(
                (a.dimm, a.rank, a.bank_group, a.bank, a.row),
                (b.dimm, b.rank, b.bank_group, b.bank, b.row)
            );
            assert_eq!(b.column, a.column + 1);
        }
    }

    #[test]
    fn allocation_is_deterministic_and_injective() {
        let cfg = MappingConfig::with_geometry(1, 2);
        let tables = [spec(0, 100_000, 64), spec(1, 50_000, 128)];
        let a = allocate_pages(&tables, &cfg, 9).unwrap();
        let b = allocate_pages(&tables, &cfg, 9).unwrap();
        assert_eq!(a, b);
        let mut seen = std::collections::HashSet::new();
        for t in &tables {
            for &f in a.pages(t.table_id).unwrap() {
                assert!(seen.insert(f), "frame {f} assigned twice");
            }
        }
    }

    #[test]
    fn forced_single_page_allocation() {
        let mut cfg = MappingConfig::with_geometry(1, 1);
        cfg.rows_per_bank = 1;
        cfg.columns_per_row = 64;
        cfg.bit_slices = BitSlices {
            offset: BitSlice::new(0, 6),
            column: BitSlice::new(6, 6),
            bank_group: BitSlice::new(12, 2),
            bank: BitSlice::new(14, 2),
            rank: BitSlice::none(),
            dimm: BitSlice::none(),
            row: BitSlice::none(),
        };
        cfg.validate().unwrap();
        assert_eq!(cfg.frames(), 16);
        let tables = [spec(0, 16 * 64, 64)];
        let pm = allocate_pages(&tables, &cfg, 5).unwrap();
        assert_eq!(pm.pages(0).unwrap().len(), 16);
        let too_big = [spec(0, 17 * 64, 64)];
        assert!(matches!(
            allocate_pages(&too_big, &cfg, 5),
            Err(MappingError::OutOfMemory { .. })
        ));
    }

    #[test]
    fn random_allocation_spreads_ranks_uniformly() {
        let cfg = MappingConfig::with_geometry(4, 2);
        let tables = [spec(0, (PAGE_BYTES / 64) * 1000, 64)];
        let pm = allocate_pages(&tables, &cfg, 17).unwrap();
        let ranks = cfg.total_ranks() as usize;
        let mut counts = vec![0u64; ranks];
        for &f in pm.pages(0).unwrap() {
            let coord = phys_to_dram(f * cfg.page_bytes, &cfg).unwrap();
            counts[coord.global_rank(&cfg) as usize] += 1;
        }
        let n: u64 = counts.iter().sum();
        let expect = n as f64 / ranks as f64;
        let chi2: f64 = counts.iter().map(|&c| (c as f64 - expect).powi(2) / expect).sum();
        // 99.9% quantile for df = 7.
        assert!(chi2 < 24.32, "chi2 {chi2} too high: {counts:?}");
    }

    #[test]
    fn colored_allocation_pins_each_table_to_one_rank() {
        let cfg = MappingConfig::with_geometry(4, 2);
        let tables: Vec<TableSpec> = (0..8).map(|i| spec(i, 64 * 200, 64)).collect();
        let ranks = cfg.total_ranks();
        let pm = allocate_pages_colored(&tables, &cfg, 7, |t| t % ranks).unwrap();
        let mut rng = ChaCha12Rng::seed_from_u64(0);
        for t in &tables {
            for _ in 0..10_000 / tables.len() {
                let idx = rng.gen_range(0..t.rows);
                let phys = pm.row_phys(t, idx, &cfg).unwrap();
                let coord = phys_to_dram(phys, &cfg).unwrap();
                assert_eq!(coord.global_rank(&cfg), t.table_id % ranks);
            }
        }
        // Distinct tables with distinct colors land on distinct ranks.
        let c0 = phys_to_dram(pm.frame(0, 0).unwrap() * PAGE_BYTES, &cfg).unwrap();
        let c1 = phys_to_dram(pm.frame(1, 0).unwrap() * PAGE_BYTES, &cfg).unwrap();
        assert_ne!(c0.global_rank(&cfg), c1.global_rank(&cfg));
    }

    #[test]
    fn inverse_row_lookup() {
        let cfg = MappingConfig::with_geometry(1, 2);
        let tables = [spec(0, 10_000, 64), spec(1, 5_000, 192)];
        let pm = allocate_pages(&tables, &cfg, 3).unwrap();
        let vb = |t: u32| tables.iter().find(|s| s.table_id == t).unwrap().vec_bytes;
        for t in &tables {
            for idx in [0u64, 1, 63, 64, 100, t.rows - 1] {
                let phys = pm.row_phys(t, idx, &cfg).unwrap();
                assert_eq!(pm.phys_to_row(phys, vb, &cfg), Some((t.table_id, idx)));
            }
        }
    }

    #[test]
    fn slice_parse_and_display() {
        let s: BitSlice = "bits[16:16]".parse().unwrap();
        assert_eq!(s, BitSlice::new(16, 1));
        assert_eq!(s.to_string(), "bits[16:16]");
        assert_eq!("none".parse::<BitSlice>().unwrap(), BitSlice::none());
        assert!("bits[3:7]".parse::<BitSlice>().is_err());
    }
}
