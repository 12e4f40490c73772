//! Experiment driver: `simulate`, `locality`, `sweep`, `estimate` and
//! `gen-trace` verbs over the simulator library.
//!
//! Exit codes: 0 success, 2 configuration error, 3 runtime error.

use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use recnmp::cache::{sweep_capacity, sweep_line, Assoc};
use recnmp::controller::SchedulerPolicy;
use recnmp::dram::write_command_trace;
use recnmp::harness::{
    emit_report, emit_sweep_csv, end_to_end_speedup, parse_config, run_experiment,
    run_experiment_logged, sls_fraction, sweep_row, ConfigError, ExperimentConfig, HarnessError,
    PagePolicy, ReportFormat, ThresholdMode, Variant,
};
use recnmp::workload::{
    gen_locality_trace, gen_random_trace, interleave_traces, read_trace, write_trace, Dtype,
    TableSpec, Trace,
};

#[derive(Parser)]
#[command(name = "recnmp", about = "Cycle-level near-memory gather-reduce simulator", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment from a TOML config and emit its report.
    Simulate(SimulateArgs),
    /// Cache locality characterization of a trace file (capacity and
    /// line-size sweeps), emitting `capacity,line,ways,hit_rate` CSV.
    Locality(LocalityArgs),
    /// Run an experiment config across swept parameter values.
    Sweep(SweepArgs),
    /// Analytic end-to-end speedup from operator latency fractions.
    Estimate(EstimateArgs),
    /// Generate a synthetic trace file.
    GenTrace(GenTraceArgs),
}

#[derive(Args)]
struct SimulateArgs {
    /// Experiment config (TOML).
    config: PathBuf,
    /// Report destination (stdout when omitted).
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_parser = ["json", "csv"], default_value = "json")]
    format: String,
    /// Also dump the NMP and baseline DDR command traces as CSV.
    #[arg(long)]
    dump_commands: Option<PathBuf>,
}

#[derive(Args)]
struct LocalityArgs {
    /// Trace file (see `gen-trace`).
    trace: PathBuf,
    /// Cache capacities for the temporal sweep, e.g. 8MB,16MB,32MB,64MB.
    #[arg(long, default_value = "8MB,16MB,32MB,64MB", value_delimiter = ',')]
    capacities: Vec<String>,
    /// Line sizes (bytes) for the spatial sweep at --line-capacity.
    #[arg(long, default_value = "64,128,256,512", value_delimiter = ',')]
    lines: Vec<u32>,
    #[arg(long, default_value = "16MB")]
    line_capacity: String,
    #[arg(long, default_value_t = 4)]
    ways: u32,
    /// Run the spatial sweep fully associative instead of set-associative.
    #[arg(long)]
    full_assoc: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    /// Base experiment config (TOML).
    config: PathBuf,
    /// Swept parameter, `key=v1,v2,...`; repeatable (cartesian product).
    /// Keys: memory, variant, scheduler, seed, poolings_per_packet,
    /// page_policy, refresh, cache.capacity_bytes, cache.ways,
    /// profiler.t, trace.zipf_exponent.
    #[arg(long = "param")]
    params: Vec<String>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct EstimateArgs {
    /// SLS fraction of end-to-end time (0..=1).
    #[arg(long)]
    f: Option<f64>,
    /// Model name from the shipped fraction table (e.g. RM2-large).
    #[arg(long, conflicts_with = "f")]
    model: Option<String>,
    /// Batch size for the table lookup.
    #[arg(long, default_value_t = 8)]
    batch: u32,
    /// SLS speedup (>= 1).
    #[arg(long)]
    s: f64,
    /// Fractional improvement of the non-SLS remainder (0..1).
    #[arg(long, default_value_t = 0.0)]
    fc: f64,
}

#[derive(Args)]
struct GenTraceArgs {
    #[arg(long, default_value_t = 1)]
    tables: u32,
    #[arg(long)]
    rows: u64,
    #[arg(long, default_value_t = 64)]
    vec_bytes: u32,
    #[arg(long, value_parser = ["fp32", "int8q"], default_value = "fp32")]
    dtype: String,
    #[arg(long)]
    batches: u32,
    #[arg(long)]
    poolings_per_batch: u32,
    #[arg(long, default_value_t = 80)]
    pooling_factor: u32,
    /// Zipf popularity exponent; omit for uniform indices.
    #[arg(long)]
    zipf: Option<f64>,
    /// Clone the table set this many times (Comb-N construction).
    #[arg(long, default_value_t = 1)]
    replication: u32,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output path (stdout when omitted).
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Simulate(a) => simulate(a),
        Command::Locality(a) => locality(a),
        Command::Sweep(a) => sweep(a),
        Command::Estimate(a) => estimate(a),
        Command::GenTrace(a) => gen_trace(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if is_config_error(&e) {
                ExitCode::from(2)
            } else {
                ExitCode::from(3)
            }
        }
    }
}

fn is_config_error(e: &anyhow::Error) -> bool {
    e.chain().any(|c| {
        c.downcast_ref::<ConfigError>().is_some()
            || matches!(c.downcast_ref::<HarnessError>(), Some(HarnessError::Config(_)))
            || c.downcast_ref::<clap::Error>().is_some()
    })
}

fn out_writer(path: &Option<PathBuf>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).with_context(|| format!("creating {}", p.display()))?,
        )),
        None => Box::new(io::stdout().lock()),
    })
}

fn load_config(path: &Path) -> Result<ExperimentConfig> {
    let mut text = String::new();
    File::open(path)
        .with_context(|| format!("opening {}", path.display()))?
        .read_to_string(&mut text)?;
    let mut cfg = parse_config(&text)?;
    if let Ok(seed) = std::env::var("RECNMP_SEED") {
        cfg.seed = seed
            .parse()
            .map_err(|_| ConfigError::Invalid {
                field: "RECNMP_SEED".into(),
                msg: format!("`{seed}` is not an unsigned integer"),
            })?;
    }
    Ok(cfg)
}

fn simulate(args: SimulateArgs) -> Result<()> {
    let cfg = load_config(&args.config)?;
    let format = if args.format == "csv" { ReportFormat::Csv } else { ReportFormat::Json };
    let report = if let Some(dump) = &args.dump_commands {
        let (report, nmp_cmds, base_cmds) = run_experiment_logged(&cfg)?;
        let mut w = BufWriter::new(
            File::create(dump).with_context(|| format!("creating {}", dump.display()))?,
        );
        writeln!(w, "# nmp commands")?;
        write_command_trace(&nmp_cmds, &mut w)?;
        writeln!(w, "# baseline commands")?;
        write_command_trace(&base_cmds, &mut w)?;
        report
    } else {
        run_experiment(&cfg)?
    };
    emit_report(&report, format, out_writer(&args.out)?)?;
    Ok(())
}

fn parse_size(s: &str) -> Result<u64> {
    let t = s.trim().to_ascii_uppercase();
    let (num, mult) = if let Some(n) = t.strip_suffix("GB") {
        (n, 1u64 << 30)
    } else if let Some(n) = t.strip_suffix("MB") {
        (n, 1 << 20)
    } else if let Some(n) = t.strip_suffix("KB") {
        (n, 1 << 10)
    } else if let Some(n) = t.strip_suffix('B') {
        (n, 1)
    } else {
        (t.as_str(), 1)
    };
    Ok(num.trim().parse::<u64>().with_context(|| format!("bad size `{s}`"))? * mult)
}

fn trace_line_addresses(trace: &Trace) -> Vec<u64> {
    // Each table occupies a contiguous logical range; vectors are
    // vec_bytes apart so larger cache lines see the table's spatial
    // layout.
    let mut base = std::collections::HashMap::new();
    let mut next = 0u64;
    for t in &trace.tables {
        base.insert(t.table_id, next);
        next += t.rows * u64::from(t.vec_bytes);
        next = next.next_multiple_of(1 << 20);
    }
    let vsize: std::collections::HashMap<u32, u64> =
        trace.tables.iter().map(|t| (t.table_id, u64::from(t.vec_bytes))).collect();
    let mut addrs = Vec::new();
    for b in &trace.batches {
        for p in &b.poolings {
            let vb = vsize[&p.table_id];
            for &i in &p.indices {
                let addr = base[&p.table_id] + i * vb;
                for blk in 0..vb / 64 {
                    addrs.push(addr + blk * 64);
                }
            }
        }
    }
    addrs
}

fn locality(args: LocalityArgs) -> Result<()> {
    let f = File::open(&args.trace).with_context(|| format!("opening {}", args.trace.display()))?;
    let trace = read_trace(BufReader::new(f))?;
    let addrs = trace_line_addresses(&trace);
    if addrs.is_empty() {
        bail!("trace has no lookups");
    }
    let caps = args
        .capacities
        .iter()
        .map(|c| parse_size(c))
        .collect::<Result<Vec<_>>>()?;
    let mut out = out_writer(&args.out)?;
    writeln!(out, "capacity,line,ways,hit_rate")?;
    for (cap, rate) in sweep_capacity(&addrs, &caps, 64, args.ways)? {
        writeln!(out, "{cap},64,{},{rate}", args.ways)?;
    }
    let line_cap = parse_size(&args.line_capacity)?;
    let assoc = if args.full_assoc { Assoc::Full } else { Assoc::Ways(args.ways) };
    for (line, rate) in sweep_line(&addrs, &args.lines, line_cap, assoc)? {
        let ways = match assoc {
            Assoc::Ways(w) => w,
            Assoc::Full => (line_cap / u64::from(line)) as u32,
        };
        writeln!(out, "{line_cap},{line},{ways},{rate}")?;
    }
    Ok(())
}

fn apply_param(cfg: &mut ExperimentConfig, key: &str, value: &str) -> Result<()> {
    let bad = |msg: String| anyhow!(ConfigError::Invalid { field: key.into(), msg });
    match key {
        "memory" => cfg.memory = value.into(),
        "variant" => {
            cfg.variant = match value {
                "baseline" => Variant::Baseline,
                "nmp-base" => Variant::NmpBase,
                "nmp-cache" => Variant::NmpCache,
                "nmp-opt" => Variant::NmpOpt,
                v => return Err(bad(format!("unknown variant `{v}`"))),
            }
        }
        "scheduler" => {
            cfg.scheduler = Some(match value {
                "fcfs" => SchedulerPolicy::Fcfs,
                "table_aware" => SchedulerPolicy::TableAware,
                v => return Err(bad(format!("unknown scheduler `{v}`"))),
            })
        }
        "seed" => cfg.seed = value.parse().map_err(|_| bad("not an integer".into()))?,
        "poolings_per_packet" => {
            cfg.poolings_per_packet = value.parse().map_err(|_| bad("not an integer".into()))?
        }
        "page_policy" => {
            cfg.page_policy = match value {
                "random" => PagePolicy::Random,
                "colored" => PagePolicy::Colored,
                v => return Err(bad(format!("unknown page policy `{v}`"))),
            }
        }
        "refresh" => cfg.refresh = value.parse().map_err(|_| bad("not a bool".into()))?,
        "cache.capacity_bytes" => {
            cfg.cache.capacity_bytes = parse_size(value)?;
        }
        "cache.ways" => cfg.cache.ways = value.parse().map_err(|_| bad("not an integer".into()))?,
        "profiler.t" => {
            cfg.profiler.t = if value == "auto" {
                ThresholdMode::Auto("auto".into())
            } else {
                ThresholdMode::Fixed(value.parse().map_err(|_| bad("not an integer".into()))?)
            }
        }
        "trace.zipf_exponent" =>

        {
            let z: f64 = value.parse().map_err(|_| bad("not a number".into()))?;
            match &mut cfg.trace {
                recnmp::harness::TraceSource::Locality { zipf_exponent, .. } => *zipf_exponent = z,
                _ => return Err(bad("trace kind is not `locality`".into())),
            }
        }
        other => {
            return Err(anyhow!(ConfigError::Invalid {
                field: other.into(),
                msg: "unknown sweep parameter".into(),
            }))
        }
    }
    Ok(())
}

fn sweep(args: SweepArgs) -> Result<()> {
    let base = load_config(&args.config)?;
    // Cartesian product of all --param axes.
    let mut axes = Vec::new();
    for p in &args.params {
        let (key, values) = p
            .split_once('=')
            .ok_or_else(|| anyhow!(ConfigError::Invalid {
                field: p.clone(),
                msg: "expected key=v1,v2,...".into(),
            }))?;
        let values: Vec<String> = values.split(',').map(str::to_string).collect();
        if values.is_empty() {
            bail!(ConfigError::Invalid { field: key.into(), msg: "no values".into() });
        }
        axes.push((key.to_string(), values));
    }
    let mut combos: Vec<Vec<(String, String)>> = vec![Vec::new()];
    for (key, values) in &axes {
        let mut next = Vec::new();
        for combo in &combos {
            for v in values {
                let mut c = combo.clone();
                c.push((key.clone(), v.clone()));
                next.push(c);
            }
        }
        combos = next;
    }

    let mut rows = Vec::new();
    for combo in &combos {
        let mut cfg = base.clone();
        for (k, v) in combo {
            apply_param(&mut cfg, k, v)?;
        }
        cfg.validate()?;
        let report = run_experiment(&cfg)?;
        rows.push(sweep_row(&report));
    }
    emit_sweep_csv(&rows, out_writer(&args.out)?)?;
    Ok(())
}

fn estimate(args: EstimateArgs) -> Result<()> {
    let f = match (&args.f, &args.model) {
        (Some(f), _) => *f,
        (None, Some(model)) => sls_fraction(model, args.batch).ok_or_else(|| {
            anyhow!(ConfigError::Invalid {
                field: "model".into(),
                msg: format!("no shipped fraction for {model} at batch {}", args.batch),
            })
        })?,
        (None, None) => bail!(ConfigError::Invalid {
            field: "f".into(),
            msg: "provide --f or --model".into()
        }),
    };
    let speedup = end_to_end_speedup(f, args.s, args.fc)
        .map_err(|e| anyhow!(ConfigError::Invalid { field: "estimate".into(), msg: e.to_string() }))?;
    println!(
        "{}",
        serde_json::json!({
            "sls_fraction": f,
            "sls_speedup": args.s,
            "fc_fraction_improvement": args.fc,
            "end_to_end_speedup": speedup,
        })
    );
    Ok(())
}

fn gen_trace(args: GenTraceArgs) -> Result<()> {
    let dtype = if args.dtype == "int8q" { Dtype::Int8Rowwise } else { Dtype::Fp32 };
    let specs: Vec<TableSpec> = (0..args.tables)
        .map(|i| TableSpec { table_id: i, rows: args.rows, vec_bytes: args.vec_bytes, dtype })
        .collect();
    let trace = match args.zipf {
        Some(z) => gen_locality_trace(
            &specs,
            args.batches,
            args.poolings_per_batch,
            args.pooling_factor,
            z,
            args.seed,
        )?,
        None => gen_random_trace(
            &specs,
            args.batches,
            args.poolings_per_batch,
            args.pooling_factor,
            args.seed,
        )?,
    };
    let trace = if args.replication > 1 {
        interleave_traces(std::slice::from_ref(&trace), args.replication)?
    } else {
        trace
    };
    write_trace(&trace, out_writer(&args.out)?)?;
    Ok(())
}
