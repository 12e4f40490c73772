//! Wires a configured experiment end to end: workload -> page mapping ->
//! packets -> scheduling -> NMP execution and the host baseline over the
//! same trace, then energy accounting and the report.

use std::collections::HashMap;
use std::fs::File;
use std::io::BufReader;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::cache::CacheError;
use crate::controller::{self, ControllerError, PacketQueue};
use crate::dram::{
    run_host_reads, CommandRecord, DdrEngine, DqScope, DramError, HostRunResult, TimingParams,
};
use crate::energy::{account, EnergyCounters, EnergyReport};
use crate::harness::config::{
    ConfigError, ExperimentConfig, PagePolicy, ThresholdMode, TraceSource, Variant,
};
use crate::harness::report::SimReport;
use crate::isa::{self, IsaError, NmpPacket, RowStateOracle};
use crate::mapping::{allocate_pages, allocate_pages_colored, MappingConfig, MappingError, PageMap};
use crate::pu::{run_nmp, FunctionalCtx, PuConfig, PuError};
use crate::workload::{
    gen_locality_trace, gen_random_trace, interleave_traces, read_trace, Dtype, TableData,
    TableSpec, Trace, TraceParseError, WorkloadError,
};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Workload(#[from] WorkloadError),
    #[error(transparent)]
    TraceParse(#[from] TraceParseError),
    #[error(transparent)]
    Mapping(#[from] MappingError),
    #[error(transparent)]
    Isa(#[from] IsaError),
    #[error(transparent)]
    Controller(#[from] ControllerError),
    #[error(transparent)]
    Cache(#[from] CacheError),
    #[error(transparent)]
    Dram(#[from] DramError),
    #[error(transparent)]
    Pu(#[from] PuError),
    #[error("io error on {path}: {source}")]
    Io { path: String, source: std::io::Error },
}

/// Per-packet distribution of the share of work landing on the most
/// loaded rank.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoadStats {
    pub packets: u64,
    pub mean_max_share: f64,
    /// Ten equal share buckets over (0, 1].
    pub histogram: Vec<u64>,
}

/// For each packet, the fraction of its instructions on its busiest rank.
pub fn rank_load_stats(packets: &[NmpPacket], total_ranks: u32) -> LoadStats {
    let mut histogram = vec![0u64; 10];
    let mut sum = 0.0;
    let mut n = 0u64;
    for p in packets {
        if p.insts.is_empty() {
            continue;
        }
        let mut per_rank = vec![0u64; total_ranks as usize];
        for i in &p.insts {
            per_rank[usize::from(i.rank_id)] += 1;
        }
        let share = *per_rank.iter().max().unwrap() as f64 / p.insts.len() as f64;
        sum += share;
        n += 1;
        let bucket = ((share * 10.0).ceil() as usize).clamp(1, 10) - 1;
        histogram[bucket] += 1;
    }
    LoadStats { packets: n, mean_max_share: if n == 0 { 0.0 } else { sum / n as f64 }, histogram }
}

/// Workload, mapping and baseline shared by every variant of one
/// experiment (identical trace, seed and page placement by construction).
pub struct Prepared {
    pub config: ExperimentConfig,
    pub mapping: MappingConfig,
    pub timing: TimingParams,
    pub trace: Trace,
    pub page_map: PageMap,
    pub baseline: HostRunResult,
    pub baseline_energy: EnergyReport,
    pub baseline_commands: Option<Vec<CommandRecord>>,
    pub config_hash: String,
}

/// One variant's outputs.
pub struct RunArtifacts {
    pub report: SimReport,
    pub nmp_commands: Option<Vec<CommandRecord>>,
}

fn build_trace(source: &TraceSource, seed: u64) -> Result<Trace, HarnessError> {
    let specs = |tables: u32, rows: u64, vec_bytes: u32, dtype: &str| -> Vec<TableSpec> {
        let dtype = if dtype == "int8q" { Dtype::Int8Rowwise } else { Dtype::Fp32 };
        (0..tables).map(|i| TableSpec { table_id: i, rows, vec_bytes, dtype }).collect()
    };
    let trace = match source {
        TraceSource::File { path } => {
            let f = File::open(path).map_err(|e| HarnessError::Io { path: path.clone(), source: e })?;
            read_trace(BufReader::new(f))?
        }
        TraceSource::Random {
            tables,
            rows,
            vec_bytes,
            dtype,
            num_batches,
            poolings_per_batch,
            pooling_factor,
            replication,
        } => {
            let t = gen_random_trace(
                &specs(*tables, *rows, *vec_bytes, dtype),
                *num_batches,
                *poolings_per_batch,
                *pooling_factor,
                seed,
            )?;
            if *replication > 1 {
                interleave_traces(std::slice::from_ref(&t), *replication)?
            } else {
                t
            }
        }
        TraceSource::Locality {
            tables,
            rows,
            vec_bytes,
            dtype,
            num_batches,
            poolings_per_batch,
            pooling_factor,
            zipf_exponent,
            replication,
        } => {
            let t = gen_locality_trace(
                &specs(*tables, *rows, *vec_bytes, dtype),
                *num_batches,
                *poolings_per_batch,
                *pooling_factor,
                *zipf_exponent,
                seed,
            )?;
            if *replication > 1 {
                interleave_traces(std::slice::from_ref(&t), *replication)?
            } else {
                t
            }
        }
    };
    trace.validate()?;
    Ok(trace)
}

/// Hash of everything that must be identical for speedup comparisons:
/// workload, placement, machine shape and seed (not the variant knobs).
fn config_hash(cfg: &ExperimentConfig) -> String {
    #[derive(Serialize)]
    struct HashedPart<'a> {
        memory: &'a str,
        trace: &'a TraceSource,
        seed: u64,
        poolings_per_packet: u32,
        page_policy: &'a PagePolicy,
        mapping: &'a crate::harness::config::MappingOverrides,
        refresh: bool,
        timing: &'a Option<TimingParams>,
    }
    let part = HashedPart {
        memory: &cfg.memory,
        trace: &cfg.trace,
        seed: cfg.seed,
        poolings_per_packet: cfg.poolings_per_packet,
        page_policy: &cfg.page_policy,
        mapping: &cfg.mapping,
        refresh: cfg.refresh,
        timing: &cfg.timing,
    };
    let json = serde_json::to_vec(&part).expect("hash subset serializes");
    let mut h = Sha256::new();
    h.update(&json);
    hex_string(&h.finalize())
}

fn hex_string(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Builds the workload, places pages, and times the host baseline.
pub fn prepare(cfg: &ExperimentConfig, log_commands: bool) -> Result<Prepared, HarnessError> {
    cfg.validate()?;
    let mapping = cfg.mapping_config()?;
    let timing = cfg.timing.unwrap_or_default();
    let trace = build_trace(&cfg.trace, cfg.seed)?;
    let page_map = match cfg.page_policy {
        PagePolicy::Random => allocate_pages(&trace.tables, &mapping, cfg.seed)?,
        PagePolicy::Colored => {
            let ranks = mapping.total_ranks();
            allocate_pages_colored(&trace.tables, &mapping, cfg.seed, |t| t % ranks)?
        }
    };

    let mut reqs = Vec::new();
    for kernel in &trace.batches {
        reqs.extend(controller::host_baseline_stream(kernel, &trace.tables, &page_map, &mapping)?);
    }
    let mut engine = DdrEngine::new(&mapping, timing, DqScope::SharedChannel, cfg.refresh_params())?;
    if log_commands {
        engine.enable_logging();
    }
    let baseline = run_host_reads(&mut engine, &reqs, 32)?;
    let baseline_commands = log_commands.then(|| engine.take_log());
    let baseline_energy = account(&EnergyCounters::from_baseline(&baseline), &cfg.energy);

    Ok(Prepared {
        config: cfg.clone(),
        mapping,
        timing,
        trace,
        page_map,
        baseline,
        baseline_energy,
        baseline_commands,
        config_hash: config_hash(cfg),
    })
}

/// Builds, profiles and schedules the packet stream for one variant.
/// Returns packets in dispatch order with tags assigned, plus the chosen
/// profiler thresholds per batch.
fn build_dispatch(
    prep: &Prepared,
    cfg: &ExperimentConfig,
) -> Result<(Vec<NmpPacket>, Vec<u32>), HarnessError> {
    let profiler_on = cfg.profiler_enabled();
    let default_locality = cfg.variant.has_cache() && !profiler_on;
    let mut thresholds = Vec::new();
    let mut by_table: HashMap<u32, Vec<NmpPacket>> = HashMap::new();
    let mut next_packet = 0u64;
    for kernel in &prep.trace.batches {
        let mut packets = isa::build_packets(
            kernel,
            &prep.trace.tables,
            &prep.page_map,
            &prep.mapping,
            cfg.poolings_per_packet,
            next_packet,
            default_locality,
        )?;
        next_packet += packets.len() as u64;
        if profiler_on {
            let t = match cfg.profiler.t {
                ThresholdMode::Fixed(t) => t,
                ThresholdMode::Auto(_) => controller::sweep_threshold(
                    kernel,
                    &cfg.profiler.candidates,
                    cfg.cache.to_config(),
                    &prep.trace.tables,
                )?,
            };
            thresholds.push(t);
            let hot = controller::profile_hot_entries(kernel, t)?;
            controller::apply_locality_bits(
                &mut packets,
                &hot,
                &prep.trace.tables,
                &prep.page_map,
                &prep.mapping,
            )?;
        }
        for p in packets {
            by_table.entry(p.table_id).or_default().push(p);
        }
    }

    // Parallel host threads (one per table) interleave their packet
    // streams; the merge order is seeded.
    let mut table_ids: Vec<u32> = by_table.keys().copied().collect();
    table_ids.sort_unstable();
    let mut streams: Vec<std::collections::VecDeque<NmpPacket>> = table_ids
        .iter()
        .map(|t| by_table.remove(t).unwrap().into())
        .collect();
    let mut rng = ChaCha12Rng::seed_from_u64(cfg.seed ^ 0xa15e_ed00);
    let mut arrivals = Vec::new();
    while streams.iter().any(|s| !s.is_empty()) {
        let nonempty: Vec<usize> =
            (0..streams.len()).filter(|&i| !streams[i].is_empty()).collect();
        let pick = nonempty[rng.gen_range(0..nonempty.len())];
        arrivals.push(streams[pick].pop_front().unwrap());
    }

    // Sliding-window packet scheduling.
    let mut queue = PacketQueue::new(cfg.effective_scheduler());
    let mut inflow = arrivals.into_iter();
    let mut dispatch = Vec::new();
    loop {
        while queue.len() < cfg.queue_depth {
            match inflow.next() {
                Some(p) => queue.push(p),
                None => break,
            }
        }
        match queue.schedule_next() {
            Some(p) => dispatch.push(p),
            None => break,
        }
    }

    // Intra-packet FR-FCFS, then DDR command tags over the final order.
    let mut reorder_oracle = RowStateOracle::new();
    for p in &mut dispatch {
        p.insts = controller::frfcfs_within_packet(p, &mut reorder_oracle, &prep.mapping);
    }
    let mut tag_oracle = RowStateOracle::new();
    for p in &mut dispatch {
        isa::assign_ddr_cmd_tags(&mut p.insts, &mut tag_oracle, &prep.mapping);
    }
    Ok((dispatch, thresholds))
}

fn pu_config(cfg: &ExperimentConfig) -> PuConfig {
    PuConfig {
        cache: cfg.variant.has_cache().then(|| cfg.cache.to_config()),
        cache_latency_table: cfg.cache.latency_table.clone(),
        ..PuConfig::default()
    }
}

/// Runs one variant against a prepared workload, inheriting every other
/// knob from the prepared config.
pub fn run_prepared(
    prep: &Prepared,
    variant: Variant,
    log_commands: bool,
) -> Result<RunArtifacts, HarnessError> {
    let mut cfg = prep.config.clone();
    cfg.variant = variant;
    run_prepared_config(prep, &cfg, log_commands, None)
}

/// Runs an explicit configuration against a prepared workload. The
/// config must agree with the preparation on everything the config hash
/// covers (trace, mapping, placement, seed), so the shared baseline stays
/// an apples-to-apples comparison.
pub fn run_prepared_config(
    prep: &Prepared,
    cfg: &ExperimentConfig,
    log_commands: bool,
    table_data: Option<&HashMap<u32, TableData>>,
) -> Result<RunArtifacts, HarnessError> {
    cfg.validate()?;
    assert_eq!(
        config_hash(cfg),
        prep.config_hash,
        "variant config must share the prepared workload"
    );

    if cfg.variant == Variant::Baseline {
        let report = SimReport::for_baseline(prep, cfg);
        return Ok(RunArtifacts { report, nmp_commands: None });
    }

    let (dispatch, thresholds) = build_dispatch(prep, cfg)?;
    let mut engine =
        DdrEngine::new(&prep.mapping, prep.timing, DqScope::PerRank, cfg.refresh_params())?;
    if log_commands {
        engine.enable_logging();
    }
    let functional = table_data.map(|data| FunctionalCtx { data, page_map: &prep.page_map });
    let result = run_nmp(
        &dispatch,
        &prep.trace.tables,
        &mut engine,
        &prep.mapping,
        &pu_config(cfg),
        functional.as_ref(),
    )?;
    let nmp_commands = log_commands.then(|| engine.take_log());

    let energy = account(&EnergyCounters::from_nmp(&result.stats), &cfg.energy)
        .with_baseline(prep.baseline_energy.total_nj);
    let load = rank_load_stats(&dispatch, prep.mapping.total_ranks());
    let report = SimReport::for_nmp(prep, cfg, &dispatch, &result, energy, load, thresholds);
    Ok(RunArtifacts { report, nmp_commands })
}

/// Runs several variants over one prepared workload (shared baseline).
pub fn run_variants(
    cfg: &ExperimentConfig,
    variants: &[Variant],
    log_commands: bool,
) -> Result<(Prepared, Vec<RunArtifacts>), HarnessError> {
    let prep = prepare(cfg, log_commands)?;
    let runs = variants
        .iter()
        .map(|&v| run_prepared(&prep, v, log_commands))
        .collect::<Result<Vec<_>, _>>()?;
    Ok((prep, runs))
}

/// Runs the configured experiment and returns its report.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<SimReport, HarnessError> {
    let (_, mut runs) = run_variants(cfg, &[cfg.variant], false)?;
    Ok(runs.pop().expect("one variant requested").report)
}

/// As [`run_experiment`], also returning the NMP and baseline command
/// traces for replay checking.
pub fn run_experiment_logged(
    cfg: &ExperimentConfig,
) -> Result<(SimReport, Vec<CommandRecord>, Vec<CommandRecord>), HarnessError> {
    let (prep, mut runs) = run_variants(cfg, &[cfg.variant], true)?;
    let art = runs.pop().expect("one variant requested");
    Ok((
        art.report,
        art.nmp_commands.unwrap_or_default(),
        prep.baseline_commands.unwrap_or_default(),
    ))
}
