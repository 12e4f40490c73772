//! Memory-system energy accounting from event counts.
//!
//! Leakage/static power is excluded; reports carry that note. NMP
//! instruction traffic is billed at the off-chip IO rate since it crosses
//! the same DIMM interface the data it replaces would have.

use serde::{Deserialize, Serialize};

use crate::dram::HostRunResult;
use crate::pu::PuStats;

/// Per-event energy costs; units are nJ and pJ as the field names say.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EnergyParams {
    pub act_nj: f64,
    pub rdwr_pj_per_bit: f64,
    pub io_pj_per_bit: f64,
    pub cache_pj_per_access: f64,
    pub add_pj: f64,
    pub mult_pj: f64,
}

impl Default for EnergyParams {
    fn default() -> Self {
        EnergyParams {
            act_nj: 2.1,
            rdwr_pj_per_bit: 14.0,
            io_pj_per_bit: 22.0,
            cache_pj_per_access: 50.0,
            add_pj: 7.89,
            mult_pj: 25.2,
        }
    }
}

/// Raw event counts an energy report is computed from.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EnergyCounters {
    pub activates: u64,
    /// Bits read out of DRAM devices.
    pub dram_read_bits: u64,
    /// Bits crossing the DIMM interface (data, instructions, final sums).
    pub io_bits: u64,
    /// RankCache array touches: lookups plus miss fills.
    pub cache_accesses: u64,
    pub adds: u64,
    pub mults: u64,
}

impl EnergyCounters {
    /// Baseline counters: every 64B read crosses the interface.
    pub fn from_baseline(host: &HostRunResult) -> Self {
        EnergyCounters {
            activates: host.stats.acts,
            dram_read_bits: host.stats.rds * 512,
            io_bits: host.stats.rds * 512,
            ..Default::default()
        }
    }

    /// NMP counters: instructions inbound, one sum per tag outbound,
    /// DRAM reads only for cache misses and bypasses.
    pub fn from_nmp(stats: &PuStats) -> Self {
        let cache = stats.cache_totals();
        EnergyCounters {
            activates: stats.activates,
            dram_read_bits: stats.dram_reads * 512,
            io_bits: stats.io_inst_bits + stats.io_sum_bits,
            // Bypassed requests never touch the array.
            cache_accesses: cache.hits + cache.misses,
            adds: stats.adds,
            mults: stats.mults,
        }
    }
}

/// Energy by category, in nanojoules.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct EnergyReport {
    pub activate_nj: f64,
    pub dram_rd_nj: f64,
    pub io_nj: f64,
    pub cache_nj: f64,
    pub arithmetic_nj: f64,
    pub total_nj: f64,
    /// Percentage saved versus a baseline run, when one is present.
    pub savings_vs_baseline_pct: Option<f64>,
}

/// Converts event counts into an energy report.
pub fn account(counters: &EnergyCounters, params: &EnergyParams) -> EnergyReport {
    let activate_nj = counters.activates as f64 * params.act_nj;
    let dram_rd_nj = counters.dram_read_bits as f64 * params.rdwr_pj_per_bit / 1000.0;
    let io_nj = counters.io_bits as f64 * params.io_pj_per_bit / 1000.0;
    let cache_nj = counters.cache_accesses as f64 * params.cache_pj_per_access / 1000.0;
    let arithmetic_nj =
        (counters.adds as f64 * params.add_pj + counters.mults as f64 * params.mult_pj) / 1000.0;
    EnergyReport {
        activate_nj,
        dram_rd_nj,
        io_nj,
        cache_nj,
        arithmetic_nj,
        total_nj: activate_nj + dram_rd_nj + io_nj + cache_nj + arithmetic_nj,
        savings_vs_baseline_pct: None,
    }
}

impl EnergyReport {
    pub fn with_baseline(mut self, baseline_total_nj: f64) -> Self {
        if baseline_total_nj > 0.0 {
            self.savings_vs_baseline_pct =
                Some((1.0 - self.total_nj / baseline_total_nj) * 100.0);
        }
        self
    }
}
