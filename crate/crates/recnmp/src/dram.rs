//! Cycle-level DDR4 rank/bank-group/bank state machines.
//!
//! The engine enforces the configured timing constraints when commands are
//! issued, models per-rank or shared-channel data-bus occupancy, and
//! optionally blacks out ranks periodically for refresh. It executes both
//! the host baseline read stream (shared DQ, one command per clock on the
//! C/A bus, FR-FCFS over a bounded read queue) and, driven from the
//! processing-unit model, the NMP command streams (per-rank DQ).

use serde::{Deserialize, Serialize};
use std::collections::VecDeque;
use std::io::Write;
use thiserror::Error;

use crate::isa::{CmdKind, DdrCommand};
use crate::mapping::{DramCoord, MappingConfig};

/// DRAM clock in MHz (DDR4-2400: 1200 MHz command clock).
pub const DRAM_CLOCK_MHZ: f64 = 1200.0;

/// Converts DRAM cycles to nanoseconds.
pub fn cycles_to_ns(cycles: u64) -> f64 {
    cycles as f64 * 1000.0 / DRAM_CLOCK_MHZ
}

#[derive(Debug, Error)]
pub enum DramError {
    #[error("RD to bank with row {open:?} open, wanted {want}")]
    ReadClosedRow { open: Option<u64>, want: u64 },
    #[error("ACT to bank with row {0} still open")]
    ActivateOpenBank(u64),
    #[error("PRE to an already precharged bank")]
    PrechargeClosedBank,
    #[error("command issued at {at} before earliest legal cycle {earliest}")]
    TooEarly { at: u64, earliest: u64 },
    #[error("timing params inconsistent: {0}")]
    BadTiming(String),
}

/// DDR4 timing constraints in DRAM clock cycles.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct TimingParams {
    pub t_rc: u32,
    pub t_rcd: u32,
    pub t_cl: u32,
    pub t_rp: u32,
    pub t_bl: u32,
    pub t_ccd_s: u32,
    pub t_ccd_l: u32,
    pub t_rrd_s: u32,
    pub t_rrd_l: u32,
    pub t_faw: u32,
}

impl Default for TimingParams {
    fn default() -> Self {
        TimingParams {
            t_rc: 55,
            t_rcd: 16,
            t_cl: 16,
            t_rp: 16,
            t_bl: 4,
            t_ccd_s: 4,
            t_ccd_l: 6,
            t_rrd_s: 4,
            t_rrd_l: 6,
            t_faw: 26,
        }
    }
}

impl TimingParams {
    pub fn validate(&self) -> Result<(), DramError> {
        let all = [
            self.t_rc, self.t_rcd, self.t_cl, self.t_rp, self.t_bl, self.t_ccd_s, self.t_ccd_l,
            self.t_rrd_s, self.t_rrd_l, self.t_faw,
        ];
        if all.contains(&0) {
            return Err(DramError::BadTiming("all parameters must be positive".into()));
        }
        if self.t_rc < self.t_rcd + self.t_rp {
            return Err(DramError::BadTiming("tRC < tRCD + tRP".into()));
        }
        if self.t_ccd_l < self.t_ccd_s || self.t_rrd_l < self.t_rrd_s {
            return Err(DramError::BadTiming("long-gap constraints shorter than short-gap".into()));
        }
        Ok(())
    }
}

/// Periodic per-rank refresh blackout (coarse tREFI/tRFC model).
/// Defaults are DDR4-2400 equivalents of tREFI=7.8us, tRFC=350ns.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct RefreshParams {
    pub t_refi: u32,
    pub t_rfc: u32,
}

impl Default for RefreshParams {
    fn default() -> Self {
        RefreshParams { t_refi: 9360, t_rfc: 420 }
    }
}

/// Data-bus sharing: the host baseline returns every burst over the
/// channel pins, NMP execution keeps bursts on per-rank internal buses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DqScope {
    SharedChannel,
    PerRank,
}

#[derive(Debug, Clone, Copy)]
struct BankState {
    open_row: Option<u64>,
    last_act: Option<u64>,
    last_pre: Option<u64>,
}

impl BankState {
    fn new() -> Self {
        BankState { open_row: None, last_act: None, last_pre: None }
    }
}

struct RankState {
    banks: Vec<BankState>,
    /// Issue cycles of the most recent ACTs (tFAW window).
    act_history: VecDeque<u64>,
    last_act_per_bg: Vec<Option<u64>>,
    last_rd_per_bg: Vec<Option<u64>>,
    dq_free_at: u64,
    /// End of the last refresh blackout already applied to bank state.
    refresh_applied_until: u64,
}

/// One timestamped command, as dumped to the command trace and replayed
/// by the independent constraint checker.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CommandRecord {
    pub cycle: u64,
    pub kind: CmdKind,
    pub rank: u32,
    pub bank_group: u32,
    pub bank: u32,
    pub row: u64,
    pub column: u32,
}

/// Writes a command trace as CSV (`cycle,kind,rank,bg,bank,row,col`).
pub fn write_command_trace<W: Write>(records: &[CommandRecord], mut out: W) -> std::io::Result<()> {
    writeln!(out, "cycle,kind,rank,bg,bank,row,col")?;
    for r in records {
        writeln!(out, "{},{},{},{},{},{},{}", r.cycle, r.kind, r.rank, r.bank_group, r.bank, r.row, r.column)?;
    }
    Ok(())
}

/// Aggregate event counters.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EngineStats {
    pub acts: u64,
    pub rds: u64,
    pub pres: u64,
    pub commands: u64,
    /// Total burst cycles, summed over the scoped buses.
    pub dq_busy_cycles: u64,
    pub per_rank_reads: Vec<u64>,
    pub last_data_end: u64,
}

/// DDR timing engine for one channel.
pub struct DdrEngine {
    pub timing: TimingParams,
    pub dq: DqScope,
    refresh: Option<RefreshParams>,
    ranks: Vec<RankState>,
    banks_per_group: u32,
    channel_dq_free_at: u64,
    stats: EngineStats,
    log: Option<Vec<CommandRecord>>,
}

impl DdrEngine {
    pub fn new(
        cfg: &MappingConfig,
        timing: TimingParams,
        dq: DqScope,
        refresh: Option<RefreshParams>,
    ) -> Result<Self, DramError> {
        timing.validate()?;
        let ranks = (0..cfg.total_ranks())
            .map(|_| RankState {
                banks: vec![BankState::new(); (cfg.bank_groups * cfg.banks_per_group) as usize],
                act_history: VecDeque::with_capacity(4),
                last_act_per_bg: vec![None; cfg.bank_groups as usize],
                last_rd_per_bg: vec![None; cfg.bank_groups as usize],
                dq_free_at: 0,
                refresh_applied_until: 0,
            })
            .collect::<Vec<_>>();
        let n = ranks.len();
        Ok(DdrEngine {
            timing,
            dq,
            refresh,
            ranks,
            banks_per_group: cfg.banks_per_group,
            channel_dq_free_at: 0,
            stats: EngineStats { per_rank_reads: vec![0; n], ..Default::default() },
            log: None,
        })
    }

    pub fn enable_logging(&mut self) {
        self.log = Some(Vec::new());
    }

    pub fn take_log(&mut self) -> Vec<CommandRecord> {
        self.log.take().unwrap_or_default()
    }

    pub fn stats(&self) -> &EngineStats {
        &self.stats
    }

    pub fn rank_count(&self) -> usize {
        self.ranks.len()
    }

    fn bank_index(&self, coord: &DramCoord) -> usize {
        (coord.bank_group * self.banks_per_group + coord.bank) as usize
    }

    /// Current open row of the addressed bank (after refresh bookkeeping).
    pub fn open_row(&mut self, global_rank: usize, coord: &DramCoord, now: u64) -> Option<u64> {
        self.sync_refresh(global_rank, now);
        self.ranks[global_rank].banks[self.bank_index(coord)].open_row
    }

    /// [start, end) of the blackout window covering or next after `cycle`.
    fn blackout_window(&self, rank: usize, cycle: u64) -> Option<(u64, u64)> {
        let r = self.refresh?;
        let period = u64::from(r.t_refi);
        let phase = rank as u64 * period / self.ranks.len() as u64;
        if cycle < phase {
            return Some((phase, phase + u64::from(r.t_rfc)));
        }
        let k = (cycle - phase) / period;
        let start = phase + k * period;
        Some((start, start + u64::from(r.t_rfc)))
    }

    /// Applies every refresh blackout that started at or before `now`:
    /// all banks of the rank close at the blackout start.
    fn sync_refresh(&mut self, rank: usize, now: u64) {
        let Some(r) = self.refresh else { return };
        let period = u64::from(r.t_refi);
        let phase = rank as u64 * period / self.ranks.len() as u64;
        if now < phase {
            return;
        }
        let k = (now - phase) / period;
        let latest_start = phase + k * period;
        let latest_end = latest_start + u64::from(r.t_rfc);
        let st = &mut self.ranks[rank];
        if latest_end > st.refresh_applied_until {
            // Refresh precharges all banks; re-activation is legal at the
            // blackout end.
            let pre_equiv = latest_end.saturating_sub(u64::from(self.timing.t_rp));
            for b in &mut st.banks {
                if b.open_row.is_some() {
                    b.open_row = None;
                    b.last_pre = Some(pre_equiv);
                }
            }
            st.refresh_applied_until = latest_end;
        }
    }

    /// Pushes `cycle` past any blackout window it falls into.
    fn skip_blackout(&self, rank: usize, mut cycle: u64) -> u64 {
        if self.refresh.is_none() {
            return cycle;
        }
        // A command can land at most one window forward.
        for _ in 0..2 {
            if let Some((start, end)) = self.blackout_window(rank, cycle) {
                if cycle >= start && cycle < end {
                    cycle = end;
                }
            }
        }
        cycle
    }

    /// Smallest cycle >= `now` at which `cmd` may legally issue.
    pub fn earliest_issue_cycle(
        &mut self,
        global_rank: usize,
        cmd: &DdrCommand,
        now: u64,
    ) -> Result<u64, DramError> {
        self.sync_refresh(global_rank, now);
        let t = self.timing;
        let bank_idx = self.bank_index(&cmd.coord);
        let bg = cmd.coord.bank_group as usize;
        let st = &self.ranks[global_rank];
        let bank = &st.banks[bank_idx];
        let mut cycle = now;

        match cmd.kind {
            CmdKind::Act => {
                if let Some(row) = bank.open_row {
                    return Err(DramError::ActivateOpenBank(row));
                }
                if let Some(c) = bank.last_act {
                    cycle = cycle.max(c + u64::from(t.t_rc));
                }
                if let Some(c) = bank.last_pre {
                    cycle = cycle.max(c + u64::from(t.t_rp));
                }
                for (g, last) in st.last_act_per_bg.iter().enumerate() {
                    if let Some(c) = last {
                        let gap = if g == bg { t.t_rrd_l } else { t.t_rrd_s };
                        cycle = cycle.max(c + u64::from(gap));
                    }
                }
                if st.act_history.len() == 4 {
                    cycle = cycle.max(st.act_history[0] + u64::from(t.t_faw));
                }
            }
            CmdKind::Rd => {
                match bank.open_row {
                    Some(row) if row == cmd.coord.row => {}
                    open => return Err(DramError::ReadClosedRow { open, want: cmd.coord.row }),
                }
                if let Some(c) = bank.last_act {
                    cycle = cycle.max(c + u64::from(t.t_rcd));
                }
                for (g, last) in st.last_rd_per_bg.iter().enumerate() {
                    if let Some(c) = last {
                        let gap = if g == bg { t.t_ccd_l } else { t.t_ccd_s };
                        cycle = cycle.max(c + u64::from(gap));
                    }
                }
                let dq_free = match self.dq {
                    DqScope::SharedChannel => self.channel_dq_free_at,
                    DqScope::PerRank => st.dq_free_at,
                };
                cycle = cycle.max(dq_free.saturating_sub(u64::from(t.t_cl)));
            }
            CmdKind::Pre => {
                if bank.open_row.is_none() {
                    return Err(DramError::PrechargeClosedBank);
                }
                if let Some(c) = bank.last_act {
                    cycle = cycle.max(c + 1);
                }
            }
        }
        Ok(self.skip_blackout(global_rank, cycle))
    }

    /// Issues `cmd` at `cycle`, which must be legal. For RD returns the
    /// cycle the first data beat appears (`cycle + tCL`); the burst ends
    /// tBL cycles later.
    pub fn issue(
        &mut self,
        global_rank: usize,
        cmd: &DdrCommand,
        cycle: u64,
    ) -> Result<Option<u64>, DramError> {
        let earliest = self.earliest_issue_cycle(global_rank, cmd, cycle)?;
        if cycle < earliest {
            return Err(DramError::TooEarly { at: cycle, earliest });
        }
        let t = self.timing;
        let bank_idx = self.bank_index(&cmd.coord);
        let bg = cmd.coord.bank_group as usize;
        let st = &mut self.ranks[global_rank];
        let mut data_start = None;
        match cmd.kind {
            CmdKind::Act => {
                let bank = &mut st.banks[bank_idx];
                bank.open_row = Some(cmd.coord.row);
                bank.last_act = Some(cycle);
                st.last_act_per_bg[bg] = Some(cycle);
                if st.act_history.len() == 4 {
                    st.act_history.pop_front();
                }
                st.act_history.push_back(cycle);
                self.stats.acts += 1;
            }
            CmdKind::Rd => {
                st.last_rd_per_bg[bg] = Some(cycle);
                let end = cycle + u64::from(t.t_cl) + u64::from(t.t_bl);
                match self.dq {
                    DqScope::SharedChannel => self.channel_dq_free_at = end,
                    DqScope::PerRank => st.dq_free_at = end,
                }
                self.stats.rds += 1;
                self.stats.per_rank_reads[global_rank] += 1;
                self.stats.dq_busy_cycles += u64::from(t.t_bl);
                self.stats.last_data_end = self.stats.last_data_end.max(end);
                data_start = Some(cycle + u64::from(t.t_cl));
            }
            CmdKind::Pre => {
                let bank = &mut st.banks[bank_idx];
                bank.open_row = None;
                bank.last_pre = Some(cycle);
                self.stats.pres += 1;
            }
        }
        self.stats.commands += 1;
        if let Some(log) = &mut self.log {
            log.push(CommandRecord {
                cycle,
                kind: cmd.kind,
                rank: global_rank as u32,
                bank_group: cmd.coord.bank_group,
                bank: cmd.coord.bank,
                row: cmd.coord.row,
                column: cmd.coord.column,
            });
        }
        Ok(data_start)
    }
}

/// One 64B read of the host baseline stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ReadRequest {
    pub coord: DramCoord,
    pub global_rank: u32,
}

/// Result of a host-mode run.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct HostRunResult {
    /// Cycle after the last data beat.
    pub cycles: u64,
    pub stats: EngineStats,
}

/// Executes a 64B read-request stream the way the host memory controller
/// would: FR-FCFS over a bounded read queue, open-page policy, one command
/// per clock on the C/A bus, all data returned over the shared channel DQ.
pub fn run_host_reads(
    engine: &mut DdrEngine,
    requests: &[ReadRequest],
    queue_depth: usize,
) -> Result<HostRunResult, DramError> {
    // Queue order is arrival order; "oldest" means lowest position.
    struct Slot {
        req: ReadRequest,
    }
    let mut queue: Vec<Slot> = Vec::with_capacity(queue_depth);
    let mut next = 0usize;
    let mut cycle = 0u64;

    while next < requests.len() || !queue.is_empty() {
        while queue.len() < queue_depth && next < requests.len() {
            queue.push(Slot { req: requests[next] });
            next += 1;
        }

        // Row-hit first: any queued request whose row is open and whose RD
        // may issue now.
        let mut chosen: Option<(usize, DdrCommand)> = None;
        for (qi, slot) in queue.iter().enumerate() {
            let rank = slot.req.global_rank as usize;
            if engine.open_row(rank, &slot.req.coord, cycle) == Some(slot.req.coord.row) {
                let cmd = DdrCommand { kind: CmdKind::Rd, coord: slot.req.coord, burst_blocks: 1 };
                if engine.earliest_issue_cycle(rank, &cmd, cycle)? <= cycle {
                    chosen = Some((qi, cmd));
                    break;
                }
            }
        }

        if chosen.is_none() {
            // Oldest-first PRE/ACT, one leader per bank, and never close a
            // row another queued request could still hit.
            for (qi, slot) in queue.iter().enumerate() {
                let rank = slot.req.global_rank as usize;
                let key = (rank, slot.req.coord.bank_group, slot.req.coord.bank);
                let is_leader = !queue[..qi].iter().any(|s| {
                    (s.req.global_rank as usize, s.req.coord.bank_group, s.req.coord.bank) == key
                });
                if !is_leader {
                    continue;
                }
                let open = engine.open_row(rank, &slot.req.coord, cycle);
                let cmd = match open {
                    Some(row) if row == slot.req.coord.row => continue, // RD not ready yet
                    Some(row) => {
                        let someone_hits = queue.iter().any(|s| {
                            (s.req.global_rank as usize, s.req.coord.bank_group, s.req.coord.bank)
                                == key
                                && s.req.coord.row == row
                        });
                        if someone_hits {
                            continue;
                        }
                        DdrCommand { kind: CmdKind::Pre, coord: slot.req.coord, burst_blocks: 0 }
                    }
                    None => DdrCommand { kind: CmdKind::Act, coord: slot.req.coord, burst_blocks: 0 },
                };
                if engine.earliest_issue_cycle(rank, &cmd, cycle)? <= cycle {
                    chosen = Some((qi, cmd));
                    break;
                }
            }
        }

        if let Some((qi, cmd)) = chosen {
            let rank = queue[qi].req.global_rank as usize;
            engine.issue(rank, &cmd, cycle)?;
            if cmd.kind == CmdKind::Rd {
                queue.remove(qi);
            }
        }
        cycle += 1;
    }
    Ok(HostRunResult { cycles: engine.stats.last_data_end, stats: engine.stats.clone() })
}
