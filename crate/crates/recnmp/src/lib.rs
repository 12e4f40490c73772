//! Cycle-level simulator for a DIMM-based near-memory processing (NMP) unit
//! that executes sparse embedding gather-reduce operators inside the memory
//! system.
//!
//! The crate is organized around the pipeline an experiment flows through:
//!
//! * [`workload`] — embedding tables, pooling kernels, trace generation and
//!   the functional reference for gather-reduce sums.
//! * [`mapping`] — logical page to physical frame allocation (random or
//!   page-colored) and physical address to DRAM coordinate translation.
//! * [`cache`] — a set-associative LRU cache simulator, used standalone for
//!   locality studies and embedded as the per-rank memory-side cache.
//! * [`isa`] — the 79-bit NMP instruction, packet construction, and
//!   expansion into DDR command sequences.
//! * [`controller`] — host-side packet scheduling, hot-entry profiling and
//!   the non-NMP baseline read stream.
//! * [`dram`] — DDR4 bank/rank timing state machines and the baseline
//!   FR-FCFS read engine.
//! * [`pu`] — the per-rank NMP execution model (cache, datapath pipeline,
//!   partial-sum registers) and the DIMM-level adder-tree reduction.
//! * [`energy`] — memory-system energy accounting from event counts.
//! * [`harness`] — experiment configuration, orchestration, sweeps and
//!   report emission.

pub mod cache;
pub mod controller;
pub mod dram;
pub mod energy;
pub mod harness;
pub mod isa;
pub mod mapping;
pub mod pu;
pub mod workload;
