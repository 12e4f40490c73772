//! Shared test support: an independent DDR constraint checker that
//! replays command traces against the timing parameters.
//!
//! The checker is deliberately structured unlike the engine: it keeps full
//! per-bank / per-rank command histories and verifies pairwise gaps, so it
//! can catch scheduling bugs the engine's own bookkeeping would repeat.

use recnmp::dram::{CommandRecord, TimingParams};
use recnmp::isa::CmdKind;
use std::collections::HashMap;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DqKind {
    PerRank,
    SharedChannel,
}

pub struct CheckerConfig {
    pub timing: TimingParams,
    pub dq: DqKind,
    /// (t_refi, t_rfc, total_ranks) when refresh blackouts are enabled.
    pub refresh: Option<(u32, u32, u32)>,
}

#[allow(dead_code)]
pub fn check_commands(records: &[CommandRecord], cfg: &CheckerConfig) -> Vec<String> {
    let t = cfg.timing;
    let mut violations = Vec::new();
    let mut v = |cond: bool, msg: String| {
        if !cond {
            violations.push(msg);
        }
    };

    // Full histories, grouped the way each rule needs them.
    let mut bank_events: HashMap<(u32, u32, u32), Vec<CommandRecord>> = HashMap::new();
    let mut rank_acts: HashMap<u32, Vec<CommandRecord>> = HashMap::new();
    let mut rank_rds: HashMap<u32, Vec<CommandRecord>> = HashMap::new();
    let mut channel_rds: Vec<CommandRecord> = Vec::new();
    let mut last_cycle = 0u64;

    for (i, r) in records.iter().enumerate() {
        v(r.cycle >= last_cycle, format!("cmd {i}: cycles not monotone ({} < {last_cycle})", r.cycle));
        last_cycle = r.cycle;

        if let Some((t_refi, t_rfc, ranks)) = cfg.refresh {
            let period = u64::from(t_refi);
            let phase = u64::from(r.rank) * period / u64::from(ranks);
            if r.cycle >= phase {
                let into = (r.cycle - phase) % period;
                v(
                    into >= u64::from(t_rfc),
                    format!("cmd {i}: {} at {} inside rank {} refresh blackout", r.kind, r.cycle, r.rank),
                );
            } else {
                // Before the first window of this rank; fine.
            }
        }

        let bank_key = (r.rank, r.bank_group, r.bank);
        let bank_hist = bank_events.entry(bank_key).or_default();
        match r.kind {
            CmdKind::Act => {
                for prev in bank_hist.iter().rev() {
                    match prev.kind {
                        CmdKind::Act => {
                            v(
                                r.cycle >= prev.cycle + u64::from(t.t_rc),
                                format!("cmd {i}: ACT-ACT same bank gap {} < tRC", r.cycle - prev.cycle),
                            );
                            break;
                        }
                        CmdKind::Pre => {
                            v(
                                r.cycle >= prev.cycle + u64::from(t.t_rp),
                                format!("cmd {i}: PRE-ACT gap {} < tRP", r.cycle - prev.cycle),
                            );
                            // Keep scanning for the previous ACT (tRC).
                            continue;
                        }
                        CmdKind::Rd => continue,
                    }
                }
                // Open-bank check: most recent ACT/PRE must not leave the
                // bank open (refresh closes banks implicitly).
                if let Some(prev) = bank_hist.iter().rev().find(|p| p.kind != CmdKind::Rd) {
                    if prev.kind == CmdKind::Act {
                        let closed_by_refresh = cfg.refresh.is_some_and(|(t_refi, _, ranks)| {
                            blackout_between(prev.cycle, r.cycle, r.rank, t_refi, ranks)
                        });
                        v(
                            closed_by_refresh,
                            format!("cmd {i}: ACT at {} to a bank still open since {}", r.cycle, prev.cycle),
                        );
                    }
                }
                let acts = rank_acts.entry(r.rank).or_default();
                // Pairwise against every recent ACT, not just the last.
                for prev in acts.iter().rev().take(8) {
                    let gap = if prev.bank_group == r.bank_group { t.t_rrd_l } else { t.t_rrd_s };
                    v(
                        r.cycle >= prev.cycle + u64::from(gap),
                        format!("cmd {i}: ACT-ACT rank pairwise gap {} < tRRD", r.cycle - prev.cycle),
                    );
                }
                if acts.len() >= 4 {
                    let fourth_back = &acts[acts.len() - 4];
                    v(
                        r.cycle >= fourth_back.cycle + u64::from(t.t_faw),
                        format!(
                            "cmd {i}: five ACTs within {} cycles < tFAW on rank {}",
                            r.cycle - fourth_back.cycle,
                            r.rank
                        ),
                    );
                }
                acts.push(*r);
            }
            CmdKind::Rd => {
                // The row must have been activated, with no PRE or refresh
                // blackout in between, at least tRCD ago.
                let mut found = false;
                for prev in bank_hist.iter().rev() {
                    match prev.kind {
                        CmdKind::Act => {
                            found = true;
                            v(
                                prev.row == r.row,
                                format!("cmd {i}: RD row {} but open row {}", r.row, prev.row),
                            );
                            v(
                                r.cycle >= prev.cycle + u64::from(t.t_rcd),
                                format!("cmd {i}: ACT-RD gap {} < tRCD", r.cycle - prev.cycle),
                            );
                            if let Some((t_refi, _, ranks)) = cfg.refresh {
                                v(
                                    !blackout_between(prev.cycle, r.cycle, r.rank, t_refi, ranks),
                                    format!("cmd {i}: RD at {} after refresh closed the bank", r.cycle),
                                );
                            }
                            break;
                        }
                        CmdKind::Pre => {
                            v(false, format!("cmd {i}: RD at {} to a precharged bank", r.cycle));
                            found = true;
                            break;
                        }
                        CmdKind::Rd => continue,
                    }
                }
                v(found, format!("cmd {i}: RD with no prior ACT"));

                let rds = rank_rds.entry(r.rank).or_default();
                for prev in rds.iter().rev().take(8) {
                    let gap = if prev.bank_group == r.bank_group { t.t_ccd_l } else { t.t_ccd_s };
                    v(
                        r.cycle >= prev.cycle + u64::from(gap),
                        format!("cmd {i}: RD-RD rank gap {} < tCCD", r.cycle - prev.cycle),
                    );
                }
                rds.push(*r);
                // DQ occupancy: bursts within the scope may not overlap.
                let scope_prev = match cfg.dq {
                    DqKind::PerRank => rank_rds[&r.rank].iter().rev().nth(1).copied(),
                    DqKind::SharedChannel => channel_rds.last().copied(),
                };
                if let Some(prev) = scope_prev {
                    v(
                        r.cycle >= prev.cycle + u64::from(t.t_bl),
                        format!("cmd {i}: DQ bursts overlap (gap {})", r.cycle - prev.cycle),
                    );
                }
                channel_rds.push(*r);
            }
            CmdKind::Pre => {
                if let Some(prev) = bank_hist.iter().rev().find(|p| p.kind != CmdKind::Rd) {
                    v(
                        prev.kind == CmdKind::Act,
                        format!("cmd {i}: PRE at {} on a bank precharged since {}", r.cycle, prev.cycle),
                    );
                }
            }
        }
        bank_events.get_mut(&bank_key).unwrap().push(*r);
    }
    violations
}

/// Whether a refresh blackout for `rank` starts in (from, to].
fn blackout_between(from: u64, to: u64, rank: u32, t_refi: u32, ranks: u32) -> bool {
    let period = u64::from(t_refi);
    let phase = u64::from(rank) * period / u64::from(ranks);
    let first_after = if from < phase {
        phase
    } else {
        let k = (from - phase) / period + 1;
        phase + k * period
    };
    first_after <= to
}
