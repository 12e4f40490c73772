//! Replays engine command traces through the independent constraint
//! checker on randomized workloads, both execution paths, refresh on and
//! off.

mod support;

use recnmp::dram::{RefreshParams, TimingParams};
use recnmp::harness::{parse_config, run_experiment_logged};
use support::{check_commands, CheckerConfig, DqKind};

fn config(variant: &str, refresh: bool, seed: u64) -> String {
    format!(
        r#"
memory = "2x2"
variant = "{variant}"
seed = {seed}
refresh = {refresh}
page_policy = "random"

[trace]
kind = "locality"
tables = 3
rows = 20000
vec_bytes = 128
num_batches = 3
poolings_per_batch = 6
pooling_factor = 20
zipf_exponent = 0.9
"#
    )
}

fn checker_cfg(dq: DqKind, refresh: bool, ranks: u32) -> CheckerConfig {
    let r = RefreshParams::default();
    CheckerConfig {
        timing: TimingParams::default(),
        dq,
        refresh: refresh.then_some((r.t_refi, r.t_rfc, ranks)),
    }
}

#[test]
fn randomized_runs_replay_clean_without_refresh() {
    for seed in [1u64, 2, 3] {
        let cfg = parse_config(&config("nmp-opt", false, seed)).unwrap();
        let (report, nmp_cmds, base_cmds) = run_experiment_logged(&cfg).unwrap();
        assert!(report.total_cycles > 0);
        assert!(!nmp_cmds.is_empty() && !base_cmds.is_empty());
        let nv = check_commands(&nmp_cmds, &checker_cfg(DqKind::PerRank, false, 4));
        assert!(nv.is_empty(), "NMP violations (seed {seed}): {:?}", &nv[..nv.len().min(5)]);
        let bv = check_commands(&base_cmds, &checker_cfg(DqKind::SharedChannel, false, 4));
        assert!(bv.is_empty(), "baseline violations (seed {seed}): {:?}", &bv[..bv.len().min(5)]);
    }
}

#[test]
fn randomized_runs_replay_clean_with_refresh() {
    let cfg = parse_config(&config("nmp-cache", true, 9)).unwrap();
    let (_, nmp_cmds, base_cmds) = run_experiment_logged(&cfg).unwrap();
    let nv = check_commands(&nmp_cmds, &checker_cfg(DqKind::PerRank, true, 4));
    assert!(nv.is_empty(), "NMP violations: {:?}", &nv[..nv.len().min(5)]);
    let bv = check_commands(&base_cmds, &checker_cfg(DqKind::SharedChannel, true, 4));
    assert!(bv.is_empty(), "baseline violations: {:?}", &bv[..bv.len().min(5)]);
}

#[test]
fn checker_rejects_corrupted_traces() {
    // Sanity that the oracle can actually fail: run a clean trace, then
    // tamper with it.
    let cfg = parse_config(&config("nmp-base", false, 4)).unwrap();
    let (_, nmp_cmds, _) = run_experiment_logged(&cfg).unwrap();
    let checker = checker_cfg(DqKind::PerRank, false, 4);
    assert!(check_commands(&nmp_cmds, &checker).is_empty());

    // Squeeze every command into a tiny window: gaps collapse.
    let mut squeezed = nmp_cmds.clone();
    for (i, c) in squeezed.iter_mut().enumerate() {
        c.cycle = i as u64 / 4;
    }
    assert!(!check_commands(&squeezed, &checker).is_empty());

    // Flip a read's row so it no longer matches its activation.
    let mut wrong_row = nmp_cmds.clone();
    if let Some(rd) = wrong_row.iter_mut().find(|c| c.kind == recnmp::isa::CmdKind::Rd) {
        rd.row ^= 1;
    }
    assert!(!check_commands(&wrong_row, &checker).is_empty());
}
