//! End-to-end pipeline runs across the benchmark matrix: every stage's
//! invariants hold and the independent simulator reproduces every
//! trajectory from the compiled pin frames alone.

use dmfb_core::arch::{build_efppc, build_egfpc, ArchitectureSpec};
use dmfb_core::assay::{preset, DurationTable, PRESET_NAMES};
use dmfb_core::report::run;
use std::collections::BTreeSet;

fn archs() -> Vec<ArchitectureSpec> {
    vec![
        build_egfpc(4, 8, 1.0, &(0..8).collect::<BTreeSet<_>>()).unwrap(),
        build_egfpc(6, 12, 1.0, &(0..12).collect::<BTreeSet<_>>()).unwrap(),
        build_efppc(8, 14, 1.0).unwrap(),
    ]
}

#[test]
fn full_benchmark_matrix_is_sound() {
    let durations = DurationTable::default();
    for spec in archs() {
        for name in PRESET_NAMES {
            let dag = preset(name).unwrap();
            let artifacts = run(&spec, &dag, name, &durations, 0)
                .unwrap_or_else(|e| panic!("{} on {}: {e}", name, spec.design_name));
            assert_eq!(
                artifacts.report.violations.total(),
                0,
                "{name} on {}",
                spec.design_name
            );
            assert!(
                (artifacts.report.total_seconds
                    - (artifacts.report.scheduling_seconds + artifacts.report.routing_seconds))
                    .abs()
                    < 1e-9
            );
        }
    }
}

#[test]
fn determinism_end_to_end() {
    let durations = DurationTable::default();
    let spec = build_egfpc(4, 8, 1.0, &(0..8).collect::<BTreeSet<_>>()).unwrap();
    let dag = preset("invitro_2").unwrap();
    let a = run(&spec, &dag, "invitro_2", &durations, 42).unwrap();
    let b = run(&spec, &dag, "invitro_2", &durations, 42).unwrap();
    assert_eq!(a.report.to_json(), b.report.to_json());
    assert_eq!(a.plan, b.plan);
    assert_eq!(a.actuation, b.actuation);
}
