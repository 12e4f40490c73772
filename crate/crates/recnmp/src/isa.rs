//! The 79-bit NMP instruction, packet construction, DDR-command tagging
//! and expansion.
//!
//! Bit layout, MSB to LSB (see `docs/nmp-inst-format.md`):
//!
//! ```text
//! [78:76] ddr_cmd   presence of ACT(78) / RD(77) / PRE(76)
//! [75:74] vsize     64B burst count minus one (1..=4 bursts)
//! [73:40] daddr     rank-local block address
//! [39:8]  weight    fp32 bits
//! [7]     locality  cache-in-RankCache hint
//! [6:3]   psum_tag  pooling tag within the packet
//! [2:0]   rank_id   rank within the channel
//! ```

use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mapping::{self, DramCoord, MappingConfig, MappingError, PageMap};
use crate::workload::{SlsKernel, TableSpec, WorkloadError};

/// Total encoded width.
pub const NMP_INST_BITS: u32 = 79;
/// Poolings per packet are capped by the 4-bit psum tag.
pub const MAX_POOLINGS_PER_PACKET: u32 = 16;

const DADDR_BITS: u32 = 34;
const _: () = assert!(3 + 2 + DADDR_BITS + 32 + 1 + 4 + 3 == NMP_INST_BITS);

#[derive(Debug, Error)]
pub enum IsaError {
    #[error("field {field} value {value} exceeds {bits} bits")]
    FieldOverflow { field: &'static str, value: u64, bits: u32 },
    #[error("vsize {0} outside 1..=4")]
    BadVsize(u8),
    #[error("encoded word exceeds 79 bits")]
    WordOverflow,
    #[error("poolings_per_packet {0} exceeds the 16 psum tags")]
    TooManyPoolings(u32),
    #[error("packet dump line {line}: {msg}")]
    DumpParse { line: usize, msg: String },
    #[error(transparent)]
    Mapping(#[from] MappingError),
    #[error(transparent)]
    Workload(#[from] WorkloadError),
}

/// Presence bits for the DDR command sequence of one instruction.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DdrCmdFlags {
    pub act: bool,
    pub rd: bool,
    pub pre: bool,
}

impl DdrCmdFlags {
    pub const fn bits(self) -> u8 {
        (self.act as u8) << 2 | (self.rd as u8) << 1 | self.pre as u8
    }

    pub const fn from_bits(b: u8) -> Self {
        DdrCmdFlags { act: b & 0b100 != 0, rd: b & 0b010 != 0, pre: b & 0b001 != 0 }
    }
}

/// One decoded NMP instruction: all the DDR commands for a single
/// embedding vector, compressed into one C/A transfer.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NmpInst {
    pub ddr_cmd: DdrCmdFlags,
    /// 64B bursts in the vector (1..=4).
    pub vsize: u8,
    /// Rank-local block address of the vector's first 64B block.
    pub daddr: u64,
    pub weight: f32,
    /// Set: look up / install in the RankCache. Clear: bypass to DRAM.
    pub locality: bool,
    pub psum_tag: u8,
    pub rank_id: u8,
}

impl NmpInst {
    pub fn coord(&self, cfg: &MappingConfig) -> DramCoord {
        DramCoord::from_daddr(self.daddr, u32::from(self.rank_id), cfg)
    }
}

/// Packs an instruction into the low 79 bits of a `u128`.
pub fn encode_inst(inst: &NmpInst) -> Result<u128, IsaError> {
    if !(1..=4).contains(&inst.vsize) {
        return Err(IsaError::BadVsize(inst.vsize));
    }
    if inst.daddr >= 1 << DADDR_BITS {
        return Err(IsaError::FieldOverflow { field: "daddr", value: inst.daddr, bits: DADDR_BITS });
    }
    if inst.psum_tag >= 16 {
        return Err(IsaError::FieldOverflow {
            field: "psum_tag",
            value: u64::from(inst.psum_tag),
            bits: 4,
        });
    }
    if inst.rank_id >= 8 {
        return Err(IsaError::FieldOverflow {
            field: "rank_id",
            value: u64::from(inst.rank_id),
            bits: 3,
        });
    }
    let mut w = 0u128;
    w |= u128::from(inst.ddr_cmd.bits()) << 76;
    w |= u128::from(inst.vsize - 1) << 74;
    w |= u128::from(inst.daddr) << 40;
    w |= u128::from(inst.weight.to_bits()) << 8;
    w |= u128::from(inst.locality) << 7;
    w |= u128::from(inst.psum_tag) << 3;
    w |= u128::from(inst.rank_id);
    Ok(w)
}

/// Inverse of [`encode_inst`]; total on any 79-bit word.
pub fn decode_inst(word: u128) -> Result<NmpInst, IsaError> {
    if word >> NMP_INST_BITS != 0 {
        return Err(IsaError::WordOverflow);
    }
    Ok(NmpInst {
        ddr_cmd: DdrCmdFlags::from_bits((word >> 76) as u8 & 0b111),
        vsize: ((word >> 74) as u8 & 0b11) + 1,
        daddr: (word >> 40) as u64 & ((1 << DADDR_BITS) - 1),
        weight: f32::from_bits((word >> 8) as u32),
        locality: (word >> 7) & 1 != 0,
        psum_tag: (word >> 3) as u8 & 0b1111,
        rank_id: word as u8 & 0b111,
    })
}

/// A scheduling unit: instructions for up to 16 poolings of one table in
/// one batch, plus the per-tag accumulation counts the host programs into
/// the processing unit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NmpPacket {
    pub packet_id: u64,
    pub table_id: u32,
    pub batch_id: u64,
    pub insts: Vec<NmpInst>,
    /// counters[tag] = number of instructions carrying that tag.
    pub counters: Vec<u32>,
}

impl NmpPacket {
    /// Distinct tags in use.
    pub fn tags(&self) -> impl Iterator<Item = u8> + '_ {
        self.counters
            .iter()
            .enumerate()
            .filter(|(_, &c)| c > 0)
            .map(|(t, _)| t as u8)
    }

    pub fn check_counters(&self) -> bool {
        let mut seen = [0u32; 16];
        for i in &self.insts {
            seen[usize::from(i.psum_tag)] += 1;
        }
        seen[..self.counters.len()] == self.counters[..]
            && seen[self.counters.len()..].iter().all(|&c| c == 0)
    }
}

/// DDR command kinds in the read-only inference path.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CmdKind {
    Act,
    Rd,
    Pre,
}

impl std::fmt::Display for CmdKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CmdKind::Act => write!(f, "ACT"),
            CmdKind::Rd => write!(f, "RD"),
            CmdKind::Pre => write!(f, "PRE"),
        }
    }
}

/// A single timed DRAM command.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DdrCommand {
    pub kind: CmdKind,
    pub coord: DramCoord,
    /// 64B bursts moved by a RD (fixed burst length 8 = one block).
    pub burst_blocks: u8,
}

/// Compiles one kernel into packets: poolings are grouped by table in
/// first-appearance order, split into chunks of `poolings_per_packet`,
/// and each vector lookup becomes one instruction. Weights are copied or
/// set to 1.0; `ddr_cmd` tags stay clear until issue-order assignment.
pub fn build_packets(
    kernel: &SlsKernel,
    tables: &[TableSpec],
    page_map: &PageMap,
    cfg: &MappingConfig,
    poolings_per_packet: u32,
    first_packet_id: u64,
    default_locality: bool,
) -> Result<Vec<NmpPacket>, IsaError> {
    if poolings_per_packet == 0 || poolings_per_packet > MAX_POOLINGS_PER_PACKET {
        return Err(IsaError::TooManyPoolings(poolings_per_packet));
    }
    let specs: HashMap<u32, &TableSpec> = tables.iter().map(|t| (t.table_id, t)).collect();
    // Group pooling indices by table, preserving first-appearance order.
    let mut order: Vec<u32> = Vec::new();
    let mut groups: HashMap<u32, Vec<usize>> = HashMap::new();
    for (pi, p) in kernel.poolings.iter().enumerate() {
        let g = groups.entry(p.table_id).or_insert_with(|| {
            order.push(p.table_id);
            Vec::new()
        });
        g.push(pi);
    }

    let mut packets = Vec::new();
    let mut packet_id = first_packet_id;
    for table_id in order {
        let spec = *specs.get(&table_id).ok_or(WorkloadError::UnknownTable(table_id))?;
        let vsize = spec.vsize();
        if !(1..=4).contains(&vsize) {
            return Err(IsaError::BadVsize(vsize));
        }
        for chunk in groups[&table_id].chunks(poolings_per_packet as usize) {
            let mut insts = Vec::new();
            let mut counters = vec![0u32; chunk.len()];
            for (tag, &pi) in chunk.iter().enumerate() {
                let pooling = &kernel.poolings[pi];
                for (i, &idx) in pooling.indices.iter().enumerate() {
                    if idx >= spec.rows {
                        return Err(WorkloadError::IndexOutOfRange {
                            table: table_id,
                            index: idx,
                            rows: spec.rows,
                        }
                        .into());
                    }
                    let phys = page_map.row_phys(spec, idx, cfg)?;
                    let coord = mapping::phys_to_dram(phys, cfg)?;
                    insts.push(NmpInst {
                        ddr_cmd: DdrCmdFlags::default(),
                        vsize,
                        daddr: coord.daddr(cfg),
                        weight: if kernel.op_kind.is_weighted() { pooling.weight(i) } else { 1.0 },
                        locality: default_locality,
                        psum_tag: tag as u8,
                        rank_id: coord.global_rank(cfg) as u8,
                    });
                    counters[tag] += 1;
                }
            }
            packets.push(NmpPacket {
                packet_id,
                table_id,
                batch_id: kernel.batch_id,
                insts,
                counters,
            });
            packet_id += 1;
        }
    }
    Ok(packets)
}

/// Host-side view of per-bank open rows, used both when tagging
/// instructions and for row-hit-first reordering.
#[derive(Debug, Default, Clone)]
pub struct RowStateOracle {
    open: HashMap<(u8, u32, u32), u64>,
}

impl RowStateOracle {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn open_row(&self, rank: u8, bg: u32, bank: u32) -> Option<u64> {
        self.open.get(&(rank, bg, bank)).copied()
    }

    pub fn observe(&mut self, rank: u8, bg: u32, bank: u32, row: u64) {
        self.open.insert((rank, bg, bank), row);
    }
}

/// Sets each instruction's command presence bits from the predicted row
/// state, in issue order: row hit needs only RD, an idle bank ACT+RD, and
/// a conflicting open row the full PRE+ACT+RD (open-page policy).
pub fn assign_ddr_cmd_tags(insts: &mut [NmpInst], oracle: &mut RowStateOracle, cfg: &MappingConfig) {
    for inst in insts {
        let coord = inst.coord(cfg);
        let key = (inst.rank_id, coord.bank_group, coord.bank);
        inst.ddr_cmd = match oracle.open.get(&key) {
            Some(&row) if row == coord.row => DdrCmdFlags { act: false, rd: true, pre: false },
            Some(_) => DdrCmdFlags { act: true, rd: true, pre: true },
            None => DdrCmdFlags { act: true, rd: true, pre: false },
        };
        oracle.open.insert(key, coord.row);
    }
}

/// Expands one tagged instruction into its DDR command sequence:
/// PRE and ACT as tagged, then one RD per 64B burst at consecutive
/// column addresses.
pub fn expand_to_ddr(inst: &NmpInst, cfg: &MappingConfig) -> Vec<DdrCommand> {
    let coord = inst.coord(cfg);
    let mut cmds = Vec::with_capacity(2 + usize::from(inst.vsize));
    if inst.ddr_cmd.pre {
        cmds.push(DdrCommand { kind: CmdKind::Pre, coord, burst_blocks: 0 });
    }
    if inst.ddr_cmd.act {
        cmds.push(DdrCommand { kind: CmdKind::Act, coord, burst_blocks: 0 });
    }
    for b in 0..u32::from(inst.vsize) {
        let mut c = coord;
        c.column += b;
        cmds.push(DdrCommand { kind: CmdKind::Rd, coord: c, burst_blocks: 1 });
    }
    cmds
}

/// Writes packets as one hex-encoded 79-bit word per line.
pub fn write_packet_dump<W: std::io::Write>(insts: &[NmpInst], mut out: W) -> std::io::Result<()> {
    for inst in insts {
        let word = encode_inst(inst).expect("instruction fields validated on construction");
        writeln!(out, "{word:020x}")?;
    }
    Ok(())
}

/// Parses the hex packet dump format.
pub fn parse_packet_dump(text: &str) -> Result<Vec<NmpInst>, IsaError> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            let word = u128::from_str_radix(l.trim(), 16)
                .map_err(|e| IsaError::DumpParse { line: i + 1, msg: e.to_string() })?;
            decode_inst(word).map_err(|e| IsaError::DumpParse { line: i + 1, msg: e.to_string() })
        })
        .collect()
}
