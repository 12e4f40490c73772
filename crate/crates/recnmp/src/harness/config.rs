//! Experiment configuration: a TOML document whose keys mirror the
//! `ExperimentConfig` fields. Variant invariants are validated with field
//! paths in the error messages.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cache::CacheConfig;
use crate::controller::SchedulerPolicy;
use crate::dram::{RefreshParams, TimingParams};
use crate::energy::EnergyParams;
use crate::mapping::{BitSlices, MappingConfig, MappingError};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("config parse error: {0}")]
    Toml(#[from] toml::de::Error),
    #[error("{field}: {msg}")]
    Invalid { field: String, msg: String },
    #[error(transparent)]
    Mapping(#[from] MappingError),
}

fn invalid(field: &str, msg: impl Into<String>) -> ConfigError {
    ConfigError::Invalid { field: field.into(), msg: msg.into() }
}

/// The four system variants under study.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Variant {
    #[serde(rename = "baseline")]
    Baseline,
    #[serde(rename = "nmp-base")]
    NmpBase,
    #[serde(rename = "nmp-cache")]
    NmpCache,
    #[serde(rename = "nmp-opt")]
    NmpOpt,
}

impl Variant {
    pub fn label(&self) -> &'static str {
        match self {
            Variant::Baseline => "baseline",
            Variant::NmpBase => "nmp-base",
            Variant::NmpCache => "nmp-cache",
            Variant::NmpOpt => "nmp-opt",
        }
    }

    pub fn has_cache(&self) -> bool {
        matches!(self, Variant::NmpCache | Variant::NmpOpt)
    }
}

/// Page-frame placement policy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum PagePolicy {
    #[serde(rename = "random")]
    #[default]
    Random,
    /// Each table pinned to rank `table_id % total_ranks`.
    #[serde(rename = "colored")]
    Colored,
}

/// Where the workload comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum TraceSource {
    #[serde(rename = "file")]
    File { path: String },
    #[serde(rename = "random")]
    Random {
        tables: u32,
        rows: u64,
        vec_bytes: u32,
        #[serde(default = "default_dtype")]
        dtype: String,
        num_batches: u32,
        poolings_per_batch: u32,
        #[serde(default = "default_pooling_factor")]
        pooling_factor: u32,
        #[serde(default = "default_replication")]
        replication: u32,
    },
    #[serde(rename = "locality")]
    Locality {
        tables: u32,
        rows: u64,
        vec_bytes: u32,
        #[serde(default = "default_dtype")]
        dtype: String,
        num_batches: u32,
        poolings_per_batch: u32,
        #[serde(default = "default_pooling_factor")]
        pooling_factor: u32,
        /// Popularity skew; the shipped default reproduces the Comb-8
        /// hit-rate band (see README).
        #[serde(default = "default_zipf")]
        zipf_exponent: f64,
        #[serde(default = "default_replication")]
        replication: u32,
    },
}

fn default_dtype() -> String {
    "fp32".into()
}

/// DLRM-style default pooling factor.
fn default_pooling_factor() -> u32 {
    80
}

fn default_replication() -> u32 {
    1
}

/// Calibrated so a Comb-8 of 1M-row 64B tables lands in the 20-60%
/// hit-rate band over 8-64MB caches.
pub const DEFAULT_ZIPF_EXPONENT: f64 = 0.9;

fn default_zipf() -> f64 {
    DEFAULT_ZIPF_EXPONENT
}

/// RankCache settings (128KB, 4-way, 64B lines by default).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CacheSettings {
    pub capacity_bytes: u64,
    pub line_bytes: u32,
    pub ways: u32,
    /// Optional capacity -> access-latency table (cycles).
    pub latency_table: Option<Vec<(u64, u32)>>,
}

impl Default for CacheSettings {
    fn default() -> Self {
        CacheSettings { capacity_bytes: 128 << 10, line_bytes: 64, ways: 4, latency_table: None }
    }
}

impl CacheSettings {
    pub fn to_config(&self) -> CacheConfig {
        CacheConfig::new(self.capacity_bytes, self.line_bytes, self.ways)
    }
}

/// Hot-entry profiler threshold selection.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ThresholdMode {
    /// Per-batch sweep picking the highest hit rate.
    Auto(String),
    Fixed(u32),
}

impl Default for ThresholdMode {
    fn default() -> Self {
        ThresholdMode::Auto("auto".into())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProfilerSettings {
    pub enabled: bool,
    pub t: ThresholdMode,
    pub candidates: Vec<u32>,
}

impl Default for ProfilerSettings {
    fn default() -> Self {
        ProfilerSettings {
            enabled: false,
            t: ThresholdMode::default(),
            candidates: vec![1, 2, 4, 8],
        }
    }
}

/// Optional geometry/slicing overrides on top of the memory label.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MappingOverrides {
    pub rows_per_bank: Option<u64>,
    pub columns_per_row: Option<u32>,
    pub bit_slices: Option<BitSlices>,
    pub xor_bank_hash: Option<bool>,
}

/// One experiment: workload, machine shape, variant and knobs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    /// `DIMMxRANK` channel label, e.g. "1x2", "1x4", "2x2", "4x2".
    pub memory: String,
    pub variant: Variant,
    #[serde(default = "default_seed")]
    pub seed: u64,
    pub trace: TraceSource,
    #[serde(default = "default_ppp")]
    pub poolings_per_packet: u32,
    #[serde(default)]
    pub page_policy: PagePolicy,
    /// Defaults per variant; table-aware is forced (and checked) for
    /// nmp-opt.
    #[serde(default)]
    pub scheduler: Option<SchedulerPolicy>,
    #[serde(default)]
    pub cache: CacheSettings,
    #[serde(default)]
    pub profiler: ProfilerSettings,
    #[serde(default)]
    pub mapping: MappingOverrides,
    #[serde(default = "default_refresh")]
    pub refresh: bool,
    #[serde(default)]
    pub timing: Option<TimingParams>,
    #[serde(default)]
    pub energy: EnergyParams,
    /// NMP packet queue window for table-aware scheduling.
    #[serde(default = "default_queue_depth")]
    pub queue_depth: usize,
}

fn default_seed() -> u64 {
    0
}

/// Best point of the packet-size sweep.
fn default_ppp() -> u32 {
    8
}

fn default_refresh() -> bool {
    true
}

fn default_queue_depth() -> usize {
    64
}

impl ExperimentConfig {
    /// Scheduler after variant defaults are applied.
    pub fn effective_scheduler(&self) -> SchedulerPolicy {
        self.scheduler.unwrap_or(match self.variant {
            Variant::NmpOpt => SchedulerPolicy::TableAware,
            _ => SchedulerPolicy::Fcfs,
        })
    }

    pub fn profiler_enabled(&self) -> bool {
        match self.variant {
            Variant::NmpOpt => true,
            Variant::Baseline | Variant::NmpBase => false,
            Variant::NmpCache => self.profiler.enabled,
        }
    }

    /// Builds the channel mapping from the label plus overrides.
    pub fn mapping_config(&self) -> Result<MappingConfig, ConfigError> {
        let mut cfg = MappingConfig::from_label(&self.memory)
            .map_err(|e| invalid("memory", e.to_string()))?;
        if let Some(r) = self.mapping.rows_per_bank {
            cfg.rows_per_bank = r;
        }
        if let Some(c) = self.mapping.columns_per_row {
            cfg.columns_per_row = c;
        }
        if let Some(s) = self.mapping.bit_slices {
            cfg.bit_slices = s;
        }
        if let Some(x) = self.mapping.xor_bank_hash {
            cfg.xor_bank_hash = x;
        }
        cfg.validate().map_err(|e| invalid("mapping", e.to_string()))?;
        Ok(cfg)
    }

    pub fn refresh_params(&self) -> Option<RefreshParams> {
        self.refresh.then(RefreshParams::default)
    }

    /// Checks the variant invariants, reporting the offending field.
    pub fn validate(&self) -> Result<(), ConfigError> {
        self.mapping_config()?;
        if self.poolings_per_packet == 0 || self.poolings_per_packet > 16 {
            return Err(invalid("poolings_per_packet", "must be in 1..=16"));
        }
        if self.variant == Variant::NmpOpt {
            if self.scheduler == Some(SchedulerPolicy::Fcfs) {
                return Err(invalid("scheduler", "nmp-opt requires the table_aware scheduler"));
            }
            if self.profiler.enabled && self.profiler.candidates.is_empty() {
                return Err(invalid("profiler.candidates", "must be non-empty"));
            }
        }
        if self.variant.has_cache() {
            self.cache
                .to_config()
                .validate()
                .map_err(|e| invalid("cache", e.to_string()))?;
        }
        if let ThresholdMode::Auto(s) = &self.profiler.t {
            if s != "auto" {
                return Err(invalid("profiler.t", "must be \"auto\" or an integer"));
            }
        }
        if let ThresholdMode::Fixed(0) = self.profiler.t {
            return Err(invalid("profiler.t", "threshold must be >= 1"));
        }
        match &self.trace {
            TraceSource::Random { tables, rows, vec_bytes, dtype, .. }
            | TraceSource::Locality { tables, rows, vec_bytes, dtype, .. } => {
                if *tables == 0 || *rows == 0 {
                    return Err(invalid("trace", "tables and rows must be >= 1"));
                }
                if vec_bytes % 64 != 0 || *vec_bytes == 0 || *vec_bytes > 256 {
                    return Err(invalid("trace.vec_bytes", "must be one of 64/128/192/256"));
                }
                if dtype != "fp32" && dtype != "int8q" {
                    return Err(invalid("trace.dtype", "must be fp32 or int8q"));
                }
                if let TraceSource::Locality { zipf_exponent, .. } = &self.trace {
                    if !zipf_exponent.is_finite() || *zipf_exponent < 0.0 {
                        return Err(invalid("trace.zipf_exponent", "must be finite and >= 0"));
                    }
                }
            }
            TraceSource::File { path } => {
                if path.is_empty() {
                    return Err(invalid("trace.path", "must not be empty"));
                }
            }
        }
        if let Some(t) = self.timing {
            t.validate().map_err(|e| invalid("timing", e.to_string()))?;
        }
        Ok(())
    }
}

/// Parses and validates a TOML config document.
pub fn parse_config(text: &str) -> Result<ExperimentConfig, ConfigError> {
    let cfg: ExperimentConfig = toml::from_str(text)?;
    cfg.validate()?;
    Ok(cfg)
}
