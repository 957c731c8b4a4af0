//! Acceptance suite: one test per shipped guarantee, each printing a
//! PASS line with the checked figures (run with `--nocapture` to see them).

#![allow(clippy::type_complexity)]

mod common;

use common::{brute_force_optimal_span, interval_coloring_optimum, random_dag, SplitMix64};
use dmfb_core::actuate::{
    compile_actuations, expand_pins, power_report, rotation_loop_cost, verify_plan_reproduction,
};
use dmfb_core::arch::{
    build_efppc, build_egfpc, pin_table, validate, with_dedicated_mixer_pins,
    with_grouped_routing_pins, ArchitectureSpec,
};
use dmfb_core::assay::{
    preset, BioassayGraph, DurationTable, NodeId, OpKind, OpNode, PRESET_NAMES,
};
use dmfb_core::bind::left_edge_bind;
use dmfb_core::cost::{pcb_dims, shift_registers, total_cost, CostParams, MM_PER_INCH};
use dmfb_core::report::{compare, run, RunReport};
use dmfb_core::route::{check_fluidic, check_phase_spacing, route_assay, FrameKind};
use dmfb_core::schedule::list_schedule;
use dmfb_core::wire::{check_solution, escape_route, problem_from_arch, Net, WireProblem};
use dmfb_core::Cell;
use std::collections::BTreeSet;
use std::time::Instant;

fn egfpc48() -> ArchitectureSpec {
    build_egfpc(4, 8, 1.0, &(0..8).collect::<BTreeSet<_>>()).unwrap()
}

#[test]
fn criterion_01_shift_register_oracle_exact() {
    let p = CostParams::default();
    let started = Instant::now();
    let got = [
        shift_registers(36, &p),
        shift_registers(65, &p),
        shift_registers(52, &p),
        shift_registers(36, &p),
    ];
    let elapsed = started.elapsed();
    assert_eq!(got, [1, 5, 3, 1]);
    // Full closed-form agreement over 0..=512.
    for pins in 0..=512u32 {
        let want = if pins <= 32 {
            0
        } else {
            (pins - 28).div_ceil(8)
        };
        assert_eq!(shift_registers(pins, &p), want, "pins={pins}");
    }
    assert!(
        elapsed.as_micros() < 1000,
        "register counts took {elapsed:?}"
    );
    println!("PASS criterion 1: shift registers 36->1 65->5 52->3 exact in {elapsed:?}");
}

#[test]
fn criterion_02_cost_totals_exact_to_the_cent() {
    let p = CostParams::default();
    let rows = [
        ("EFPPC_4", 36, 10.0, 16.0, 2, 101, 14, 115),
        ("EGFPC_4", 36, 11.0, 11.0, 2, 93, 14, 107),
        ("EFPPC_8", 65, 10.0, 30.0, 2, 116, 70, 186),
        ("EGFPC_6", 52, 16.0, 11.0, 3, 142, 42, 184),
    ];
    for (name, pins, w, h, layers, board, sr, total) in rows {
        let r = total_cost(name, pins, w, h, layers, 1.0, &p).unwrap();
        assert_eq!(
            (r.board_cost_cents, r.sr_cost_cents, r.total_cost_cents),
            (board, sr, total),
            "{name}"
        );
    }
    println!("PASS criterion 2: cost totals $1.15 / $1.07 / $1.86 / $1.84 exact");
}

#[test]
fn criterion_03_pcb_dimensioning_within_a_mil() {
    // Footprint-fitting oracle: search the two free footprint parameters
    // against all four published rows; the fit must converge within the
    // tolerance, and the shipped defaults must match it.
    let rows: [(f64, f64, u32, f64, f64); 4] = [
        (10.0, 16.0, 1, 1.7638, 1.6299),
        (11.0, 11.0, 1, 1.8032, 1.4331),
        (10.0, 30.0, 5, 1.7638, 2.1811),
        (16.0, 11.0, 3, 2.0000, 1.4330),
    ];
    let residual = |col_w: f64, row_h: f64| -> f64 {
        rows.iter()
            .map(|(wmm, hmm, sr, pw, ph)| {
                let ah = hmm / MM_PER_INCH;
                let aw = wmm / MM_PER_INCH;
                let h = ah + 1.0;
                let rows_per_col = ((h / row_h).floor() as u32).max(1);
                let cols = sr.div_ceil(rows_per_col) as f64;
                let w = aw + cols * col_w + 1.0;
                (w - pw).powi(2) + (h - ph).powi(2)
            })
            .sum::<f64>()
            .sqrt()
    };
    let mut best = (f64::MAX, 0.0, 0.0);
    let mut col_w = 0.25;
    while col_w <= 0.45 {
        let mut row_h = 0.30;
        while row_h <= 0.55 {
            let r = residual(col_w, row_h);
            if r < best.0 {
                best = (r, col_w, row_h);
            }
            row_h += 0.0025;
        }
        col_w += 0.0001;
    }
    assert!(best.0 <= 0.001, "fit residual {} at {:?}", best.0, best);
    assert!(
        (best.1 - 0.3701).abs() < 0.0005,
        "fitted column width {}",
        best.1
    );

    let p = CostParams::default();
    assert!(residual(p.sr_column_width_in, p.sr_row_height_in) <= 0.001);
    for (wmm, hmm, sr, pw, ph) in rows {
        let (w, h) = pcb_dims(wmm / MM_PER_INCH, hmm / MM_PER_INCH, sr, &p);
        assert!((w - pw).abs() <= 0.001, "{wmm}x{hmm}: width {w} vs {pw}");
        assert!((h - ph).abs() <= 0.001, "{wmm}x{hmm}: height {h} vs {ph}");
        assert!((h - (hmm / MM_PER_INCH + 1.0)).abs() < 1e-9, "height rule");
    }
    println!(
        "PASS criterion 3: adjusted PCB dims within 0.001\" (fit residual {:.5}, column width {:.4}\")",
        best.0, best.1
    );
}

#[test]
fn criterion_04_pin_map_regression_matches_published_table() {
    let spec = egfpc48();
    assert_eq!(spec.pin_count, 40);
    assert!(validate(&spec).is_empty());
    let table = pin_table(&spec);
    for row in [
        "Left Vertical Routing Path        1 - 3",
        "Right Vertical Routing Path       4 - 6",
        "Top Horizontal Routing Path       7 - 9",
        "Bottom Horizontal Routing Path    10 - 12",
        "Mixing module (Shared)            13 - 16",
        "Mixing module I/O                 17 - 20",
        "Mixing module Hold                21 - 24",
        "SSD module I/O                    25 - 32",
        "SSD module Hold                   33 - 40",
    ] {
        assert!(table.contains(row), "missing row `{row}` in:\n{table}");
    }
    println!("PASS criterion 4: 40-pin map with published group ranges");
}

#[test]
fn criterion_05_mixer_rotation_power_ten_vs_eight() {
    let proposed = egfpc48();
    let original = with_dedicated_mixer_pins(&proposed);
    for m in proposed.mixers() {
        assert_eq!(rotation_loop_cost(m), Some(10));
    }
    for m in original.mixers() {
        assert_eq!(rotation_loop_cost(m), Some(8));
    }
    assert!((10.0_f64 / 8.0 - 1.25).abs() < 1e-12);

    // Fixed-point regression on compiled frames: during steady rotation,
    // every 6 operation frames fire exactly 10 electrodes inside a mixer.
    let dag = mix_only_assay();
    let durations = DurationTable::default();
    let schedule = list_schedule(&dag, &proposed, &durations).unwrap();
    let binding = left_edge_bind(&schedule, &dag, &proposed).unwrap();
    let plan = route_assay(&schedule, &binding, &dag, &proposed).unwrap();
    let seq = compile_actuations(&plan, &proposed).unwrap();
    let mix_node = dag
        .nodes
        .values()
        .find(|n| matches!(n.kind, OpKind::Mix))
        .unwrap()
        .id;
    let module = proposed.module(binding.module(mix_node).unwrap());
    let module_cells: BTreeSet<Cell> = module.cells().into_iter().collect();
    let op_frames: Vec<usize> = plan
        .frames
        .iter()
        .enumerate()
        .filter(|(_, f)| matches!(f.kind, Some(FrameKind::Op { .. })) && !f.moves.is_empty())
        .map(|(i, _)| i)
        .collect();
    assert!(op_frames.len() >= 12, "rotation never reached steady state");
    let window = &op_frames[op_frames.len() / 2..op_frames.len() / 2 + 6];
    let fired: usize = window
        .iter()
        .map(|i| {
            expand_pins(&proposed, &seq.frames[*i].pins)
                .intersection(&module_cells)
                .count()
        })
        .sum();
    assert_eq!(fired, 10, "steady-state loop cost");
    println!("PASS criterion 5: rotation loop 10 vs 8 actuations (+25%), compiled frames agree");
}

#[test]
fn criterion_06_per_path_pins_halve_routing_power() {
    let proposed = egfpc48();
    let grouped = with_grouped_routing_pins(&proposed);
    let dag = preset("invitro_1").unwrap();
    let durations = DurationTable::default();
    let schedule = list_schedule(&dag, &proposed, &durations).unwrap();
    let binding = left_edge_bind(&schedule, &dag, &proposed).unwrap();
    let plan = route_assay(&schedule, &binding, &dag, &proposed).unwrap();

    let seq_proposed = compile_actuations(&plan, &proposed).unwrap();
    let seq_grouped = compile_actuations(&plan, &grouped).unwrap();
    let p = power_report(&seq_proposed, &proposed);
    let g = power_report(&seq_grouped, &grouped);
    assert!(p.routing > 0);
    assert!(
        2 * p.routing <= g.routing,
        "proposed {} vs grouped {}",
        p.routing,
        g.routing
    );
    println!(
        "PASS criterion 6: routing actuations {} (per-path pins) <= 50% of {} (shared groups)",
        p.routing, g.routing
    );
}

#[test]
fn criterion_07_pipeline_soundness_over_benchmark_matrix() {
    let started = Instant::now();
    let durations = DurationTable::default();
    let specs = vec![
        egfpc48(),
        build_egfpc(6, 12, 1.0, &(0..12).collect::<BTreeSet<_>>()).unwrap(),
        build_efppc(8, 14, 1.0).unwrap(),
    ];
    let mut runs = 0;
    for spec in &specs {
        for name in PRESET_NAMES {
            let dag = preset(name).unwrap();
            let artifacts = run(spec, &dag, name, &durations, 0)
                .unwrap_or_else(|e| panic!("{} on {}: {e}", name, spec.design_name));
            assert_eq!(artifacts.report.violations.total(), 0);
            // Re-run the independent checks explicitly.
            assert!(check_fluidic(&artifacts.plan).is_empty());
            assert!(check_phase_spacing(&artifacts.plan, spec).is_empty());
            verify_plan_reproduction(&artifacts.actuation, &artifacts.plan, spec).unwrap();
            runs += 1;
        }
    }
    let elapsed = started.elapsed();
    assert_eq!(runs, 27);
    assert!(elapsed.as_secs() < 60, "matrix took {elapsed:?}");
    println!(
        "PASS criterion 7: 27 matrix runs, zero violations, simulator reproduces every trajectory ({elapsed:?})"
    );
}

#[test]
fn criterion_08_directional_routing_advantage() {
    let durations = DurationTable::default();
    let egfpc = egfpc48();
    let efppc = build_efppc(8, 14, 1.0).unwrap();
    let mut lines = Vec::new();
    for name in [
        "invitro_1",
        "invitro_2",
        "invitro_3",
        "invitro_4",
        "invitro_5",
    ] {
        let dag = preset(name).unwrap();
        let a = run(&egfpc, &dag, name, &durations, 0).unwrap().report;
        let b = run(&efppc, &dag, name, &durations, 0).unwrap().report;
        assert!(
            a.routing_seconds < b.routing_seconds,
            "{name}: {} !< {}",
            a.routing_seconds,
            b.routing_seconds
        );
        lines.push(format!(
            "{name} {:.2}s < {:.2}s",
            a.routing_seconds, b.routing_seconds
        ));
    }
    println!(
        "PASS criterion 8: routing seconds lower on every in-vitro variant ({})",
        lines.join(", ")
    );
}

#[test]
fn criterion_09_published_comparison_arithmetic() {
    let fp: [(&str, f64, f64, f64); 9] = [
        ("pcr", 11.0, 2.2, 13.2),
        ("invitro_1", 14.0, 3.4, 17.4),
        ("invitro_2", 16.0, 5.0, 21.0),
        ("invitro_3", 16.0, 7.6, 23.6),
        ("invitro_4", 18.0, 10.1, 28.1),
        ("invitro_5", 21.0, 13.2, 34.2),
        ("protein_split_1", 52.0, 2.7, 54.7),
        ("protein_split_2", 62.0, 8.4, 70.4),
        ("protein_split_3", 83.0, 18.2, 101.2),
    ];
    let pd: [(&str, f64, f64, f64); 9] = [
        ("pcr", 11.0, 1.7, 12.7),
        ("invitro_1", 14.0, 1.9, 15.9),
        ("invitro_2", 18.0, 2.8, 20.8),
        ("invitro_3", 18.0, 4.5, 22.5),
        ("invitro_4", 19.0, 6.4, 25.4),
        ("invitro_5", 25.0, 9.1, 34.1),
        ("protein_split_1", 52.0, 1.6, 53.6),
        ("protein_split_2", 62.0, 7.4, 69.4),
        ("protein_split_3", 83.0, 16.0, 99.0),
    ];
    let mut reports = Vec::new();
    for (assay, sch, rout, total) in fp.iter().chain(pd.iter()) {
        // Every published row's Total equals Scheduling + Routing.
        assert!((sch + rout - total).abs() < 1e-9, "{assay} row arithmetic");
    }
    for (assay, sch, rout, _) in fp {
        reports.push(RunReport::fixture("FP", assay, sch, rout));
    }
    for (assay, sch, rout, _) in pd {
        reports.push(RunReport::fixture("PD", assay, sch, rout));
    }
    let c = compare(&reports).unwrap();
    let (_, sch, rout, tot) = c.averages[0].clone();
    assert!((rout - 27.0).abs() <= 1.0, "routing average {rout}%");
    assert!((sch - -3.0).abs() <= 1.0);
    assert!((tot - 3.0).abs() <= 1.0);
    println!(
        "PASS criterion 9: fixture table gives routing +{rout:.1}%, scheduling {sch:.1}%, total +{tot:.1}%"
    );
}

#[test]
fn criterion_10_wire_routing_bounds_and_tiny_oracle() {
    // Capacity/connectivity invariants over the benchmark architectures.
    let specs = vec![
        egfpc48(),
        build_egfpc(6, 12, 1.0, &BTreeSet::new()).unwrap(),
        build_efppc(8, 14, 1.0).unwrap(),
    ];
    for spec in &specs {
        let problem = problem_from_arch(spec, 2);
        let solution = escape_route(&problem, 0).unwrap();
        assert!(
            check_solution(&problem, &solution).is_empty(),
            "{}",
            spec.design_name
        );
    }
    // Published bound for the proposed design at orthogonal capacity 2.
    let problem = problem_from_arch(&specs[0], 2);
    let layers = escape_route(&problem, 0).unwrap().layer_count();
    assert!(
        layers <= 4,
        "EGFPC(4,8) needed {layers} layers at capacity 2"
    );

    // Exhaustive optimum on brute-forceable instances (<= 9 cells,
    // 2-terminal nets).
    let tiny_cases: Vec<(i32, i32, Vec<(Cell, Cell)>, u32)> = vec![
        (
            3,
            3,
            vec![
                (Cell::new(0, 1), Cell::new(2, 1)),
                (Cell::new(1, 0), Cell::new(1, 2)),
            ],
            1,
        ),
        (
            2,
            1,
            vec![
                (Cell::new(0, 0), Cell::new(1, 0)),
                (Cell::new(0, 0), Cell::new(1, 0)),
            ],
            1,
        ),
        (
            3,
            3,
            vec![
                (Cell::new(0, 0), Cell::new(2, 2)),
                (Cell::new(2, 0), Cell::new(0, 2)),
                (Cell::new(0, 1), Cell::new(2, 1)),
            ],
            1,
        ),
        (
            3,
            2,
            vec![
                (Cell::new(0, 0), Cell::new(2, 0)),
                (Cell::new(0, 1), Cell::new(2, 1)),
                (Cell::new(1, 0), Cell::new(1, 1)),
            ],
            2,
        ),
    ];
    for (w, h, pairs, cap) in tiny_cases {
        let nets: Vec<Net> = pairs
            .iter()
            .enumerate()
            .map(|(i, (a, b))| Net {
                id: i as u32 + 1,
                terminals: vec![*a, *b],
            })
            .collect();
        let problem = WireProblem {
            width: w,
            height: h,
            nets,
            ortho_capacity: cap,
        };
        let got = escape_route(&problem, 0).unwrap().layer_count();
        let optimal = brute_force_layer_optimum(&problem);
        assert_eq!(got, optimal, "{w}x{h} cap {cap}");
    }
    println!(
        "PASS criterion 10: wire invariants hold, EGFPC(4,8)@cap2 = {layers} layers (<= 4), tiny instances optimal"
    );
}

#[test]
fn criterion_11_small_instance_scheduling_and_binding_oracles() {
    let durations = DurationTable {
        mix_ts: 2,
        detect_ts: 3,
        heat_ts: 3,
        dispense_ts: 1,
        timestep_seconds: 0.01,
    };
    let spec = build_egfpc(4, 4, 1.0, &(0..4).collect::<BTreeSet<_>>()).unwrap();
    // The oracle relaxes storage, so use generous caps matching the spec.
    let mut rng = SplitMix64(0xD0_5EED);
    let mut checked = 0;
    for case in 0..1000 {
        let dag = random_dag(&mut rng, 8);
        if dag.check().is_err() || dag.nodes.is_empty() {
            continue;
        }
        let schedule = match list_schedule(&dag, &spec, &durations) {
            Ok(s) => s,
            Err(e) => panic!("case {case}: {e}\n{}", dag.to_json()),
        };
        assert!(
            schedule.check(&dag, &spec, &durations).is_empty(),
            "case {case} breaks schedule invariants"
        );
        let serial: u32 = dag.nodes.values().map(|n| durations.duration_of(n)).sum();
        let optimal = brute_force_optimal_span(&dag, &durations, 4, 4, 4);
        assert!(
            optimal <= schedule.span && schedule.span <= serial,
            "case {case}: span {} outside [{optimal}, {serial}]",
            schedule.span
        );

        let binding = left_edge_bind(&schedule, &dag, &spec).unwrap();
        let mix_intervals: Vec<(u32, u32)> = dag
            .nodes
            .values()
            .filter(|n| matches!(n.kind, OpKind::Mix))
            .map(|n| {
                let s = schedule.slot(n.id);
                (s.start_ts, s.end_ts)
            })
            .collect();
        let used: BTreeSet<_> = dag
            .nodes
            .values()
            .filter(|n| matches!(n.kind, OpKind::Mix))
            .filter_map(|n| binding.module(n.id))
            .collect();
        let optimum = interval_coloring_optimum(&mix_intervals);
        assert_eq!(
            used.len(),
            optimum,
            "case {case}: left-edge used {} mixers, coloring optimum {optimum}",
            used.len()
        );
        checked += 1;
    }
    assert!(checked >= 900, "only {checked} generated DAGs were valid");
    println!(
        "PASS criterion 11: {checked} random DAGs within brute-force span bounds; left-edge matches coloring optimum"
    );
}

/// Smallest mixing assay: two dispenses into one mix, then out.
fn mix_only_assay() -> BioassayGraph {
    let mut g = BioassayGraph::default();
    let mut add = |id: u32, kind: OpKind| {
        g.nodes.insert(
            NodeId(id),
            OpNode {
                id: NodeId(id),
                kind,
                duration_ts: None,
            },
        );
    };
    add(0, OpKind::Dispense { fluid: "a".into() });
    add(1, OpKind::Dispense { fluid: "b".into() });
    add(2, OpKind::Mix);
    add(3, OpKind::Output);
    g.edges = vec![
        (NodeId(0), NodeId(2)),
        (NodeId(1), NodeId(2)),
        (NodeId(2), NodeId(3)),
    ];
    g.check().unwrap();
    g
}

/// Exact minimum layer count for tiny 2-terminal instances: try k = 1, 2,
/// ... and check every assignment of nets to k layers, routing each layer
/// by exhaustive backtracking over simple paths.
fn brute_force_layer_optimum(problem: &WireProblem) -> usize {
    fn all_paths(w: i32, h: i32, from: Cell, to: Cell) -> Vec<Vec<(Cell, Cell)>> {
        fn go(
            w: i32,
            h: i32,
            at: Cell,
            to: Cell,
            seen: &mut Vec<Cell>,
            edges: &mut Vec<(Cell, Cell)>,
            out: &mut Vec<Vec<(Cell, Cell)>>,
        ) {
            if at == to {
                out.push(edges.clone());
                return;
            }
            for n in at.neighbors4() {
                if n.in_bounds(w, h) && !seen.contains(&n) {
                    seen.push(n);
                    edges.push(if at <= n { (at, n) } else { (n, at) });
                    go(w, h, n, to, seen, edges, out);
                    edges.pop();
                    seen.pop();
                }
            }
        }
        let mut out = Vec::new();
        go(w, h, from, to, &mut vec![from], &mut Vec::new(), &mut out);
        out
    }

    fn layer_feasible(problem: &WireProblem, nets: &[&Net]) -> bool {
        fn place(
            problem: &WireProblem,
            nets: &[&Net],
            i: usize,
            usage: &mut std::collections::BTreeMap<(Cell, Cell), u32>,
        ) -> bool {
            if i == nets.len() {
                return true;
            }
            let (a, b) = (nets[i].terminals[0], nets[i].terminals[1]);
            for path in all_paths(problem.width, problem.height, a, b) {
                if path
                    .iter()
                    .all(|e| usage.get(e).copied().unwrap_or(0) < problem.ortho_capacity)
                {
                    for e in &path {
                        *usage.entry(*e).or_default() += 1;
                    }
                    if place(problem, nets, i + 1, usage) {
                        return true;
                    }
                    for e in &path {
                        *usage.get_mut(e).unwrap() -= 1;
                    }
                }
            }
            false
        }
        place(problem, nets, 0, &mut std::collections::BTreeMap::new())
    }

    let n = problem.nets.len();
    for k in 1..=n {
        // Every assignment of n nets to k layers.
        let mut assignment = vec![0usize; n];
        loop {
            let ok = (0..k).all(|layer| {
                let members: Vec<&Net> = problem
                    .nets
                    .iter()
                    .enumerate()
                    .filter(|(i, _)| assignment[*i] == layer)
                    .map(|(_, net)| net)
                    .collect();
                members.is_empty() || layer_feasible(problem, &members)
            });
            if ok {
                let used = assignment.iter().collect::<BTreeSet<_>>().len();
                if used == k || k == 1 {
                    return k.min(used.max(1));
                }
            }
            // Next assignment in base k.
            let mut i = 0;
            loop {
                if i == n {
                    break;
                }
                assignment[i] += 1;
                if assignment[i] < k {
                    break;
                }
                assignment[i] = 0;
                i += 1;
            }
            if i == n {
                break;
            }
        }
    }
    n
}
