//! Embedding tables, gather-reduce kernels, trace generation and the
//! functional reference implementation used as the golden oracle.
//!
//! All types are immutable after construction; the generators are pure
//! functions of their parameters and a seed.

use std::collections::HashMap;
use std::fmt;
use std::io::{self, BufRead, Write};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, Zipf};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Header line of the text trace format.
pub const TRACE_HEADER: &str = "# recnmp-trace v1";

/// Supported embedding vector sizes in bytes.
pub const VEC_BYTES_CHOICES: [u32; 4] = [64, 128, 192, 256];

#[derive(Debug, Error)]
pub enum WorkloadError {
    #[error("table {0} not declared")]
    UnknownTable(u32),
    #[error("table {table}: index {index} out of range (rows={rows})")]
    IndexOutOfRange { table: u32, index: u64, rows: u64 },
    #[error("weight vector length {weights} does not match {indices} indices")]
    WeightLengthMismatch { weights: usize, indices: usize },
    #[error("table {table}: vec_bytes {vec_bytes} must be a multiple of 64 in 64..=256")]
    BadVectorSize { table: u32, vec_bytes: u32 },
    #[error("table {table}: rows must be >= 1")]
    EmptyTable { table: u32 },
    #[error("duplicate table id {0}")]
    DuplicateTable(u32),
    #[error("trace has no tables")]
    EmptyTableList,
    #[error("pooling_factor must be >= 1")]
    ZeroPoolingFactor,
    #[error("zipf exponent must be finite and >= 0")]
    BadZipfExponent,
    #[error("op kind {op:?} incompatible with table {table} dtype {dtype:?}")]
    OpDtypeMismatch { op: OpKind, table: u32, dtype: Dtype },
}

/// Element data type of an embedding table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Dtype {
    #[serde(rename = "fp32")]
    Fp32,
    /// Rowwise-quantized int8 payload with a per-row (scalar, bias) pair
    /// stored alongside the vector.
    #[serde(rename = "int8q")]
    Int8Rowwise,
}

impl fmt::Display for Dtype {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Dtype::Fp32 => write!(f, "fp32"),
            Dtype::Int8Rowwise => write!(f, "int8q"),
        }
    }
}

/// Shape of one embedding table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TableSpec {
    pub table_id: u32,
    /// Number of embedding vectors.
    pub rows: u64,
    /// Vector size in bytes; one of 64/128/192/256.
    pub vec_bytes: u32,
    pub dtype: Dtype,
}

impl TableSpec {
    pub fn validate(&self) -> Result<(), WorkloadError> {
        if self.rows == 0 {
            return Err(WorkloadError::EmptyTable { table: self.table_id });
        }
        if self.vec_bytes == 0 || !self.vec_bytes.is_multiple_of(64) || self.vec_bytes > 256 {
            return Err(WorkloadError::BadVectorSize {
                table: self.table_id,
                vec_bytes: self.vec_bytes,
            });
        }
        Ok(())
    }

    /// Number of f32 elements a pooled output vector has for this table.
    /// Quantized tables dequantize one int8 per byte of payload.
    pub fn out_elems(&self) -> usize {
        match self.dtype {
            Dtype::Fp32 => (self.vec_bytes / 4) as usize,
            Dtype::Int8Rowwise => self.vec_bytes as usize,
        }
    }

    /// 64-byte bursts per vector (the `vsize` field of an NMP instruction).
    pub fn vsize(&self) -> u8 {
        (self.vec_bytes / 64) as u8
    }
}

/// One pooling: a set of rows of a single table to gather and reduce.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Pooling {
    pub table_id: u32,
    pub indices: Vec<u64>,
    pub weights: Option<Vec<f32>>,
}

impl Pooling {
    pub fn weight(&self, i: usize) -> f32 {
        self.weights.as_ref().map_or(1.0, |w| w[i])
    }
}

/// Reduction flavor of a kernel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum OpKind {
    #[serde(rename = "sum")]
    Sum,
    #[serde(rename = "weighted-sum")]
    WeightedSum,
    #[serde(rename = "quantized-sum")]
    QuantizedSum,
    #[serde(rename = "quantized-weighted-sum")]
    QuantizedWeightedSum,
}

impl OpKind {
    pub fn is_weighted(&self) -> bool {
        matches!(self, OpKind::WeightedSum | OpKind::QuantizedWeightedSum)
    }

    pub fn is_quantized(&self) -> bool {
        matches!(self, OpKind::QuantizedSum | OpKind::QuantizedWeightedSum)
    }
}

/// One batch of poolings, possibly spanning several tables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlsKernel {
    pub batch_id: u64,
    pub op_kind: OpKind,
    pub poolings: Vec<Pooling>,
}

/// A full workload: table declarations plus an ordered list of batches.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trace {
    pub tables: Vec<TableSpec>,
    pub batches: Vec<SlsKernel>,
}

impl Trace {
    pub fn table(&self, table_id: u32) -> Result<&TableSpec, WorkloadError> {
        self.tables
            .iter()
            .find(|t| t.table_id == table_id)
            .ok_or(WorkloadError::UnknownTable(table_id))
    }

    /// Checks every structural invariant: unique table ids, valid shapes,
    /// in-range indices and aligned weight vectors.
    pub fn validate(&self) -> Result<(), WorkloadError> {
        let mut seen = HashMap::new();
        for t in &self.tables {
            t.validate()?;
            if seen.insert(t.table_id, t.rows).is_some() {
                return Err(WorkloadError::DuplicateTable(t.table_id));
            }
        }
        for batch in &self.batches {
            for pool in &batch.poolings {
                let rows = *seen
                    .get(&pool.table_id)
                    .ok_or(WorkloadError::UnknownTable(pool.table_id))?;
                if let Some(w) = &pool.weights {
                    if w.len() != pool.indices.len() {
                        return Err(WorkloadError::WeightLengthMismatch {
                            weights: w.len(),
                            indices: pool.indices.len(),
                        });
                    }
                }
                for &idx in &pool.indices {
                    if idx >= rows {
                        return Err(WorkloadError::IndexOutOfRange {
                            table: pool.table_id,
                            index: idx,
                            rows,
                        });
                    }
                }
            }
        }
        Ok(())
    }

    pub fn total_poolings(&self) -> usize {
        self.batches.iter().map(|b| b.poolings.len()).sum()
    }

    pub fn total_lookups(&self) -> usize {
        self.batches
            .iter()
            .flat_map(|b| &b.poolings)
            .map(|p| p.indices.len())
            .sum()
    }
}

/// Dense backing values for one table, used by the functional paths.
#[derive(Debug, Clone)]
pub struct TableData {
    pub spec: TableSpec,
    payload: Payload,
}

#[derive(Debug, Clone)]
enum Payload {
    Fp32(Vec<f32>),
    Int8 {
        q: Vec<i8>,
        /// Per-row (scalar, bias) dequantization pair.
        scale_bias: Vec<(f32, f32)>,
    },
}

impl TableData {
    /// Deterministically fills a table with values so that every
    /// dequantized element lies in [-1, 1].
    pub fn generate(spec: TableSpec, seed: u64) -> Self {
        let mut rng = ChaCha12Rng::seed_from_u64(seed ^ u64::from(spec.table_id).wrapping_mul(0x9e37_79b9_7f4a_7c15));
        let payload = match spec.dtype {
            Dtype::Fp32 => {
                let n = spec.rows as usize * (spec.vec_bytes / 4) as usize;
                Payload::Fp32((0..n).map(|_| rng.gen_range(-1.0f32..=1.0)).collect())
            }
            Dtype::Int8Rowwise => {
                let n = spec.rows as usize * spec.vec_bytes as usize;
                let q: Vec<i8> = (0..n).map(|_| rng.gen_range(-127i8..=127)).collect();
                let scale_bias = (0..spec.rows)
                    .map(|_| {
                        let scalar = rng.gen_range(0.0f32..=0.5 / 127.0);
                        let bias = rng.gen_range(-0.5f32..=0.5);
                        (scalar, bias)
                    })
                    .collect();
                Payload::Int8 { q, scale_bias }
            }
        };
        TableData { spec, payload }
    }

    /// Builds an fp32 table directly from row vectors (test convenience).
    pub fn from_rows_f32(table_id: u32, rows: Vec<Vec<f32>>) -> Self {
        let elems = rows[0].len();
        assert!(rows.iter().all(|r| r.len() == elems));
        let spec = TableSpec {
            table_id,
            rows: rows.len() as u64,
            vec_bytes: (elems * 4) as u32,
            dtype: Dtype::Fp32,
        };
        TableData {
            spec,
            payload: Payload::Fp32(rows.into_iter().flatten().collect()),
        }
    }

    /// Builds a quantized table from raw int8 rows and per-row (scalar, bias).
    pub fn from_rows_int8(table_id: u32, rows: Vec<Vec<i8>>, scale_bias: Vec<(f32, f32)>) -> Self {
        let elems = rows[0].len();
        assert_eq!(rows.len(), scale_bias.len());
        let spec = TableSpec {
            table_id,
            rows: rows.len() as u64,
            vec_bytes: elems as u32,
            dtype: Dtype::Int8Rowwise,
        };
        TableData {
            spec,
            payload: Payload::Int8 {
                q: rows.into_iter().flatten().collect(),
                scale_bias,
            },
        }
    }

    /// Dequantized row as f32 values.
    pub fn row_f32(&self, index: u64) -> Vec<f32> {
        match &self.payload {
            Payload::Fp32(data) => {
                let elems = (self.spec.vec_bytes / 4) as usize;
                let start = index as usize * elems;
                data[start..start + elems].to_vec()
            }
            Payload::Int8 { q, scale_bias } => {
                let elems = self.spec.vec_bytes as usize;
                let start = index as usize * elems;
                let (scalar, bias) = scale_bias[index as usize];
                q[start..start + elems]
                    .iter()
                    .map(|&v| scalar * v as f32 + bias)
                    .collect()
            }
        }
    }

    /// Raw quantized row plus (scalar, bias); only valid for int8q tables.
    pub fn row_quantized(&self, index: u64) -> Option<(&[i8], f32, f32)> {
        match &self.payload {
            Payload::Fp32(_) => None,
            Payload::Int8 { q, scale_bias } => {
                let elems = self.spec.vec_bytes as usize;
                let start = index as usize * elems;
                let (scalar, bias) = scale_bias[index as usize];
                Some((&q[start..start + elems], scalar, bias))
            }
        }
    }
}

/// Functional reference for a single pooling: the deterministic golden
/// result every hardware-path sum is compared against.
///
/// Accumulation is fp32, strictly left-to-right in index order. Weights
/// default to 1.0 when absent. Quantized kinds dequantize each element as
/// `scalar * q + bias` before the weighted accumulation.
pub fn sls_reference(
    table: &TableData,
    pooling: &Pooling,
    op_kind: OpKind,
) -> Result<Vec<f32>, WorkloadError> {
    let spec = &table.spec;
    if op_kind.is_quantized() != matches!(spec.dtype, Dtype::Int8Rowwise) {
        return Err(WorkloadError::OpDtypeMismatch {
            op: op_kind,
            table: spec.table_id,
            dtype: spec.dtype,
        });
    }
    if let Some(w) = &pooling.weights {
        if w.len() != pooling.indices.len() {
            return Err(WorkloadError::WeightLengthMismatch {
                weights: w.len(),
                indices: pooling.indices.len(),
            });
        }
    }
    let mut acc = vec![0.0f32; spec.out_elems()];
    for (i, &idx) in pooling.indices.iter().enumerate() {
        if idx >= spec.rows {
            return Err(WorkloadError::IndexOutOfRange {
                table: spec.table_id,
                index: idx,
                rows: spec.rows,
            });
        }
        let w = if op_kind.is_weighted() { pooling.weight(i) } else { 1.0 };
        let row = table.row_f32(idx);
        for (a, v) in acc.iter_mut().zip(row.iter()) {
            *a += w * v;
        }
    }
    Ok(acc)
}

fn check_gen_args(tables: &[TableSpec], pooling_factor: u32) -> Result<(), WorkloadError> {
    if tables.is_empty() {
        return Err(WorkloadError::EmptyTableList);
    }
    if pooling_factor == 0 {
        return Err(WorkloadError::ZeroPoolingFactor);
    }
    for t in tables {
        t.validate()?;
    }
    Ok(())
}

fn op_kind_for(tables: &[TableSpec]) -> OpKind {
    if tables.iter().all(|t| t.dtype == Dtype::Int8Rowwise) {
        OpKind::QuantizedSum
    } else {
        OpKind::Sum
    }
}

/// Uniform i.i.d. indices over each table: the worst-case locality trace.
///
/// Every batch holds `poolings_per_batch` poolings per table, in table
/// order. Bitwise reproducible for a fixed seed.
pub fn gen_random_trace(
    tables: &[TableSpec],
    num_batches: u32,
    poolings_per_batch: u32,
    pooling_factor: u32,
    seed: u64,
) -> Result<Trace, WorkloadError> {
    check_gen_args(tables, pooling_factor)?;
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let op_kind = op_kind_for(tables);
    let batches = (0..num_batches as u64)
        .map(|batch_id| {
            let mut poolings = Vec::with_capacity(tables.len() * poolings_per_batch as usize);
            for t in tables {
                for _ in 0..poolings_per_batch {
                    let indices = (0..pooling_factor).map(|_| rng.gen_range(0..t.rows)).collect();
                    poolings.push(Pooling { table_id: t.table_id, indices, weights: None });
                }
            }
            SlsKernel { batch_id, op_kind, poolings }
        })
        .collect();
    Ok(Trace { tables: tables.to_vec(), batches })
}

/// Zipfian-popularity indices with a per-table random permutation of
/// popularity rank to row, so hot rows are scattered across each table's
/// address space. `zipf_exponent = 0` degenerates to the uniform trace.
pub fn gen_locality_trace(
    tables: &[TableSpec],
    num_batches: u32,
    poolings_per_batch: u32,
    pooling_factor: u32,
    zipf_exponent: f64,
    seed: u64,
) -> Result<Trace, WorkloadError> {
    check_gen_args(tables, pooling_factor)?;
    if !zipf_exponent.is_finite() || zipf_exponent < 0.0 {
        return Err(WorkloadError::BadZipfExponent);
    }
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    // Rank-to-row permutations first, in table order, so batch sampling
    // consumes the stream identically regardless of later edits.
    let perms: Vec<Vec<u32>> = tables
        .iter()
        .map(|t| {
            assert!(t.rows <= u64::from(u32::MAX), "table rows exceed u32 range");
            let mut p: Vec<u32> = (0..t.rows as u32).collect();
            p.shuffle(&mut rng);
            p
        })
        .collect();
    let dists: Vec<Zipf<f64>> = tables
        .iter()
        .map(|t| Zipf::new(t.rows, zipf_exponent).expect("validated zipf parameters"))
        .collect();
    let op_kind = op_kind_for(tables);
    let batches = (0..num_batches as u64)
        .map(|batch_id| {
            let mut poolings = Vec::with_capacity(tables.len() * poolings_per_batch as usize);
            for (ti, t) in tables.iter().enumerate() {
                for _ in 0..poolings_per_batch {
                    let indices = (0..pooling_factor)
                        .map(|_| {
                            let rank = dists[ti].sample(&mut rng) as u64 - 1;
                            u64::from(perms[ti][rank as usize])
                        })
                        .collect();
                    poolings.push(Pooling { table_id: t.table_id, indices, weights: None });
                }
            }
            SlsKernel { batch_id, op_kind, poolings }
        })
        .collect();
    Ok(Trace { tables: tables.to_vec(), batches })
}

/// Round-robin interleave of several traces, cloning every source table
/// `replication` times with fresh table ids (the Comb-N construction).
pub fn interleave_traces(traces: &[Trace], replication: u32) -> Result<Trace, WorkloadError> {
    if traces.is_empty() || traces.iter().all(|t| t.tables.is_empty()) {
        return Err(WorkloadError::EmptyTableList);
    }
    let mut tables = Vec::new();
    // remap[(replica, trace_idx)][old_id] -> new_id
    let mut remap: Vec<Vec<HashMap<u32, u32>>> = Vec::new();
    let mut next_id = 0u32;
    for _r in 0..replication {
        let mut per_trace = Vec::new();
        for tr in traces {
            let mut m = HashMap::new();
            for spec in &tr.tables {
                let mut clone = *spec;
                clone.table_id = next_id;
                m.insert(spec.table_id, next_id);
                tables.push(clone);
                next_id += 1;
            }
            per_trace.push(m);
        }
        remap.push(per_trace);
    }
    let max_batches = traces.iter().map(|t| t.batches.len()).max().unwrap_or(0);
    let mut batches = Vec::new();
    let mut next_batch = 0u64;
    for i in 0..max_batches {
        for (r, per_trace) in remap.iter().enumerate() {
            let _ = r;
            for (ti, tr) in traces.iter().enumerate() {
                if let Some(kernel) = tr.batches.get(i) {
                    let poolings = kernel
                        .poolings
                        .iter()
                        .map(|p| Pooling {
                            table_id: per_trace[ti][&p.table_id],
                            indices: p.indices.clone(),
                            weights: p.weights.clone(),
                        })
                        .collect();
                    batches.push(SlsKernel {
                        batch_id: next_batch,
                        op_kind: kernel.op_kind,
                        poolings,
                    });
                    next_batch += 1;
                }
            }
        }
    }
    Ok(Trace { tables, batches })
}

#[derive(Debug, Error)]
pub enum TraceParseError {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("line {line}: unknown dtype `{dtype}`")]
    UnknownDtype { line: usize, dtype: String },
    #[error("line {line}: index overflow in `{field}`")]
    IndexOverflow { line: usize, field: String },
    #[error("line {line}: {source}")]
    Invalid {
        line: usize,
        #[source]
        source: WorkloadError,
    },
    #[error(transparent)]
    Io(#[from] io::Error),
}

fn perr(line: usize, msg: impl Into<String>) -> TraceParseError {
    TraceParseError::Parse { line, msg: msg.into() }
}

/// Serializes a trace in the line-oriented text format:
///
/// ```text
/// # recnmp-trace v1
/// table <id> rows=<n> vec_bytes=<64|128|192|256> dtype=<fp32|int8q>
/// batch <batch_id>
/// pool <table_id> <i0,i1,...>[ weights=<w0,w1,...>]
/// ```
pub fn write_trace<W: Write>(trace: &Trace, mut out: W) -> io::Result<()> {
    writeln!(out, "{TRACE_HEADER}")?;
    for t in &trace.tables {
        writeln!(
            out,
            "table {} rows={} vec_bytes={} dtype={}",
            t.table_id, t.rows, t.vec_bytes, t.dtype
        )?;
    }
    for b in &trace.batches {
        writeln!(out, "batch {}", b.batch_id)?;
        for p in &b.poolings {
            let idx = p.indices.iter().map(u64::to_string).collect::<Vec<_>>().join(",");
            match &p.weights {
                Some(w) => {
                    let ws = w.iter().map(|v| format!("{v:?}")).collect::<Vec<_>>().join(",");
                    writeln!(out, "pool {} {} weights={}", p.table_id, idx, ws)?;
                }
                None => writeln!(out, "pool {} {}", p.table_id, idx)?,
            }
        }
    }
    Ok(())
}

/// Parses the text trace format, reporting the offending line on error.
///
/// The kernel op kind is inferred: poolings carrying weights make a batch
/// weighted, and batches whose tables are all int8q are quantized.
pub fn read_trace<R: BufRead>(input: R) -> Result<Trace, TraceParseError> {
    let mut tables: Vec<TableSpec> = Vec::new();
    let mut batches: Vec<SlsKernel> = Vec::new();
    let mut saw_header = false;

    for (lineno, line) in input.lines().enumerate() {
        let lineno = lineno + 1;
        let line = line?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if lineno == 1 || !saw_header {
            if line != TRACE_HEADER {
                return Err(perr(lineno, format!("expected header `{TRACE_HEADER}`")));
            }
            saw_header = true;
            continue;
        }
        let mut parts = line.split_whitespace();
        match parts.next() {
            Some("table") => {
                let id_s = parts.next().ok_or_else(|| perr(lineno, "missing table id"))?;
                let table_id: u32 = id_s
                    .parse()
                    .map_err(|_| TraceParseError::IndexOverflow { line: lineno, field: id_s.into() })?;
                let mut rows = None;
                let mut vec_bytes = None;
                let mut dtype = None;
                for kv in parts {
                    let (k, v) = kv
                        .split_once('=')
                        .ok_or_else(|| perr(lineno, format!("expected key=value, got `{kv}`")))?;
                    match k {
                        "rows" => {
                            rows = Some(v.parse::<u64>().map_err(|_| {
                                TraceParseError::IndexOverflow { line: lineno, field: v.into() }
                            })?)
                        }
                        "vec_bytes" => {
                            vec_bytes = Some(v.parse::<u32>().map_err(|_| {
                                TraceParseError::IndexOverflow { line: lineno, field: v.into() }
                            })?)
                        }
                        "dtype" => {
                            dtype = Some(match v {
                                "fp32" => Dtype::Fp32,
                                "int8q" => Dtype::Int8Rowwise,
                                other => {
                                    return Err(TraceParseError::UnknownDtype {
                                        line: lineno,
                                        dtype: other.into(),
                                    })
                                }
                            })
                        }
                        other => return Err(perr(lineno, format!("unknown table field `{other}`"))),
                    }
                }
                let spec = TableSpec {
                    table_id,
                    rows: rows.ok_or_else(|| perr(lineno, "missing rows="))?,
                    vec_bytes: vec_bytes.ok_or_else(|| perr(lineno, "missing vec_bytes="))?,
                    dtype: dtype.ok_or_else(|| perr(lineno, "missing dtype="))?,
                };
                spec.validate().map_err(|e| TraceParseError::Invalid { line: lineno, source: e })?;
                if tables.iter().any(|t| t.table_id == table_id) {
                    return Err(TraceParseError::Invalid {
                        line: lineno,
                        source: WorkloadError::DuplicateTable(table_id),
                    });
                }
                tables.push(spec);
            }
            Some("batch") => {
                let id_s = parts.next().ok_or_else(|| perr(lineno, "missing batch id"))?;
                let batch_id: u64 = id_s
                    .parse()
                    .map_err(|_| TraceParseError::IndexOverflow { line: lineno, field: id_s.into() })?;
                batches.push(SlsKernel { batch_id, op_kind: OpKind::Sum, poolings: Vec::new() });
            }
            Some("pool") => {
                let batch = batches
                    .last_mut()
                    .ok_or_else(|| perr(lineno, "pool before any batch"))?;
                let id_s = parts.next().ok_or_else(|| perr(lineno, "missing table id"))?;
                let table_id: u32 = id_s
                    .parse()
                    .map_err(|_| TraceParseError::IndexOverflow { line: lineno, field: id_s.into() })?;
                let idx_s = parts.next().ok_or_else(|| perr(lineno, "missing index list"))?;
                let indices = idx_s
                    .split(',')
                    .map(|s| {
                        s.parse::<u64>().map_err(|_| TraceParseError::IndexOverflow {
                            line: lineno,
                            field: s.into(),
                        })
                    })
                    .collect::<Result<Vec<_>, _>>()?;
                let mut weights = None;
                if let Some(kv) = parts.next() {
                    let v = kv
                        .strip_prefix("weights=")
                        .ok_or_else(|| perr(lineno, format!("unexpected token `{kv}`")))?;
                    let w = v
                        .split(',')
                        .map(|s| {
                            s.parse::<f32>()
                                .map_err(|_| perr(lineno, format!("bad weight literal `{s}`")))
                        })
                        .collect::<Result<Vec<_>, _>>()?;
                    if w.len() != indices.len() {
                        return Err(TraceParseError::Invalid {
                            line: lineno,
                            source: WorkloadError::WeightLengthMismatch {
                                weights: w.len(),
                                indices: indices.len(),
                            },
                        });
                    }
                    weights = Some(w);
                }
                if let Some(tok) = parts.next() {
                    return Err(perr(lineno, format!("unexpected trailing token `{tok}`")));
                }
                batch.poolings.push(Pooling { table_id, indices, weights });
            }
            Some(other) => return Err(perr(lineno, format!("unknown directive `{other}`"))),
            None => unreachable!(),
        }
    }
    if !saw_header {
        return Err(perr(1, format!("expected header `{TRACE_HEADER}`")));
    }

    // Infer op kinds now that all tables are known.
    let by_id: HashMap<u32, Dtype> = tables.iter().map(|t| (t.table_id, t.dtype)).collect();
    for (bi, b) in batches.iter_mut().enumerate() {
        let weighted = b.poolings.iter().any(|p| p.weights.is_some());
        let quantized = !b.poolings.is_empty()
            && b.poolings.iter().all(|p| {
                by_id.get(&p.table_id).is_some_and(|d| *d == Dtype::Int8Rowwise)
            });
        b.op_kind = match (weighted, quantized) {
            (false, false) => OpKind::Sum,
            (true, false) => OpKind::WeightedSum,
            (false, true) => OpKind::QuantizedSum,
            (true, true) => OpKind::QuantizedWeightedSum,
        };
        let _ = bi;
    }

    let trace = Trace { tables, batches };
    trace.validate().map_err(|e| TraceParseError::Invalid { line: 0, source: e })?;
    Ok(trace)
}
