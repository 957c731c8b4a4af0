//! Full pipeline orchestration (architecture -> schedule -> binding ->
//! routing -> actuation -> power/cost/wire-routing) and side-by-side
//! comparison reports.

use crate::actuate::{
    compile_actuations, power_report, verify_plan_reproduction, ActuationError, ActuationSequence,
    PowerReport,
};
use crate::arch::{validate, ArchitectureSpec};
use crate::assay::{AssayError, BioassayGraph, DurationTable};
use crate::bind::{check_binding, left_edge_bind, BindError, Binding};
use crate::cost::{total_cost, CostError, CostParams, CostReport};
use crate::route::{
    check_fluidic, check_phase_spacing, route_seconds, route_with_faults, RouteError, RoutePlan,
};
use crate::schedule::{list_schedule, schedule_makespan_seconds, Schedule, ScheduleError};
use crate::wire::{escape_route, problem_from_arch, WireError};
use crate::Cell;
use serde::Serialize;
use std::collections::BTreeSet;

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error("architecture stage: {0} invariant violations")]
    ArchInvalid(usize),
    #[error("assay stage: {0}")]
    Assay(#[from] AssayError),
    #[error("scheduling stage: {0}")]
    Schedule(#[from] ScheduleError),
    #[error("scheduling stage: invariant breach: {0}")]
    ScheduleCheck(String),
    #[error("binding stage: {0}")]
    Bind(#[from] BindError),
    #[error("binding stage: invariant breach: {0}")]
    BindCheck(String),
    #[error("routing stage: {0}")]
    Route(#[from] RouteError),
    #[error("routing stage: {0} fluidic violations")]
    Fluidic(usize),
    #[error("routing stage: phase spacing breach: {0}")]
    Phase(String),
    #[error("actuation stage: {0}")]
    Actuation(#[from] ActuationError),
    #[error("actuation stage: simulation oracle disagreed: {0}")]
    Oracle(String),
    #[error("wire-routing stage: {0}")]
    Wire(#[from] WireError),
    #[error("cost stage: {0}")]
    Cost(#[from] CostError),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ViolationCounts {
    pub architecture: usize,
    pub schedule: usize,
    pub binding: usize,
    pub fluidic: usize,
    pub phase_spacing: usize,
    pub interference: usize,
}

impl ViolationCounts {
    pub fn total(&self) -> usize {
        self.architecture
            + self.schedule
            + self.binding
            + self.fluidic
            + self.phase_spacing
            + self.interference
    }

    fn zero() -> Self {
        ViolationCounts {
            architecture: 0,
            schedule: 0,
            binding: 0,
            fluidic: 0,
            phase_spacing: 0,
            interference: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunReport {
    pub design_name: String,
    pub assay_name: String,
    pub scheduling_seconds: f64,
    pub routing_seconds: f64,
    pub total_seconds: f64,
    pub schedule_span_ts: u32,
    pub transport_ts: u32,
    pub droplets: usize,
    pub power: PowerReport,
    pub cost: CostReport,
    pub wireroute_layers: usize,
    pub violations: ViolationCounts,
}

impl RunReport {
    /// Report carrying externally supplied timing figures, for feeding
    /// published tables through `compare`.
    pub fn fixture(design: &str, assay: &str, scheduling_s: f64, routing_s: f64) -> RunReport {
        RunReport {
            design_name: design.to_string(),
            assay_name: assay.to_string(),
            scheduling_seconds: scheduling_s,
            routing_seconds: routing_s,
            total_seconds: scheduling_s + routing_s,
            schedule_span_ts: 0,
            transport_ts: 0,
            droplets: 0,
            power: PowerReport::default(),
            cost: CostReport {
                design_name: design.to_string(),
                num_pins: 0,
                num_sr: 0,
                pcb_width_in: 0.0,
                pcb_height_in: 0.0,
                layers: 0,
                board_cost_cents: 0,
                sr_cost_cents: 0,
                total_cost_cents: 0,
            },
            wireroute_layers: 0,
            violations: ViolationCounts::zero(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// Everything a run produces, for export and inspection.
pub struct RunArtifacts {
    pub schedule: Schedule,
    pub binding: Binding,
    pub plan: RoutePlan,
    pub actuation: ActuationSequence,
    pub report: RunReport,
}

/// Executes every stage, failing loudly on any invariant violation, and
/// assembles the run report. Deterministic for identical inputs and seed.
pub fn run(
    spec: &ArchitectureSpec,
    dag: &BioassayGraph,
    assay_name: &str,
    durations: &DurationTable,
    seed: u64,
) -> Result<RunArtifacts, PipelineError> {
    run_with_faults(spec, dag, assay_name, durations, seed, &BTreeSet::new())
}

pub fn run_with_faults(
    spec: &ArchitectureSpec,
    dag: &BioassayGraph,
    assay_name: &str,
    durations: &DurationTable,
    seed: u64,
    faults: &BTreeSet<Cell>,
) -> Result<RunArtifacts, PipelineError> {
    let arch_violations = validate(spec);
    if !arch_violations.is_empty() {
        return Err(PipelineError::ArchInvalid(arch_violations.len()));
    }
    dag.check()?;

    let schedule = list_schedule(dag, spec, durations)?;
    if let Some(breach) = schedule.check(dag, spec, durations).into_iter().next() {
        return Err(PipelineError::ScheduleCheck(breach));
    }

    let binding = left_edge_bind(&schedule, dag, spec)?;
    if let Some(breach) = check_binding(&binding, &schedule, dag, spec)
        .into_iter()
        .next()
    {
        return Err(PipelineError::BindCheck(breach));
    }

    let plan = route_with_faults(&schedule, &binding, dag, spec, faults)?;
    let fluidic = check_fluidic(&plan);
    if !fluidic.is_empty() {
        return Err(PipelineError::Fluidic(fluidic.len()));
    }
    if let Some(breach) = check_phase_spacing(&plan, spec).into_iter().next() {
        return Err(PipelineError::Phase(breach));
    }

    let actuation = compile_actuations(&plan, spec)?;
    verify_plan_reproduction(&actuation, &plan, spec).map_err(PipelineError::Oracle)?;
    let power = power_report(&actuation, spec);

    let problem = problem_from_arch(spec, 2);
    let solution = escape_route(&problem, seed)?;
    let layers = solution.layer_count();

    let cost = total_cost(
        &spec.design_name,
        spec.pin_count as u32,
        spec.array_width_mm(),
        spec.array_height_mm(),
        (layers as u32).clamp(1, 5),
        spec.pitch_mm,
        &CostParams::default(),
    )?;

    let scheduling_seconds = schedule_makespan_seconds(&schedule, durations);
    let routing_seconds = route_seconds(&plan, durations);
    let report = RunReport {
        design_name: spec.design_name.clone(),
        assay_name: assay_name.to_string(),
        scheduling_seconds,
        routing_seconds,
        total_seconds: scheduling_seconds + routing_seconds,
        schedule_span_ts: schedule.span,
        transport_ts: plan.transport_frames,
        droplets: plan.trajectories.len(),
        power,
        cost,
        wireroute_layers: layers,
        violations: ViolationCounts::zero(),
    };

    Ok(RunArtifacts {
        schedule,
        binding,
        plan,
        actuation,
        report,
    })
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum CompareError {
    #[error("comparison needs at least two reports, got {0}")]
    TooFew(usize),
    #[error("reports cover no common assay")]
    NoCommonAssay,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CompareRow {
    pub assay: String,
    /// (design, scheduling s, routing s, total s) per design column.
    pub entries: Vec<(String, f64, f64, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Comparison {
    pub designs: Vec<String>,
    pub rows: Vec<CompareRow>,
    /// Aggregate improvement of each design over the first (reference)
    /// design, in percent of the reference sums: (design, scheduling,
    /// routing, total).
    pub averages: Vec<(String, f64, f64, f64)>,
}

/// Groups reports by assay and lays designs side by side; the average rows
/// aggregate each design's percentage improvement over the first design.
pub fn compare(reports: &[RunReport]) -> Result<Comparison, CompareError> {
    if reports.len() < 2 {
        return Err(CompareError::TooFew(reports.len()));
    }
    let mut designs: Vec<String> = Vec::new();
    for r in reports {
        if !designs.contains(&r.design_name) {
            designs.push(r.design_name.clone());
        }
    }
    let mut assays: Vec<String> = Vec::new();
    for r in reports {
        if !assays.contains(&r.assay_name) {
            assays.push(r.assay_name.clone());
        }
    }

    let mut rows = Vec::new();
    for assay in &assays {
        let mut entries = Vec::new();
        for design in &designs {
            if let Some(r) = reports
                .iter()
                .find(|r| &r.assay_name == assay && &r.design_name == design)
            {
                entries.push((
                    design.clone(),
                    r.scheduling_seconds,
                    r.routing_seconds,
                    r.total_seconds,
                ));
            }
        }
        if entries.len() == designs.len() {
            rows.push(CompareRow {
                assay: assay.clone(),
                entries,
            });
        }
    }
    if rows.is_empty() {
        return Err(CompareError::NoCommonAssay);
    }

    let sum_for = |design: &str, pick: fn(&(String, f64, f64, f64)) -> f64| -> f64 {
        rows.iter()
            .flat_map(|r| r.entries.iter().filter(|e| e.0 == design))
            .map(pick)
            .sum()
    };
    let reference = designs[0].clone();
    let ref_sums = (
        sum_for(&reference, |e| e.1),
        sum_for(&reference, |e| e.2),
        sum_for(&reference, |e| e.3),
    );
    let pct = |reference: f64, other: f64| {
        if reference == 0.0 {
            0.0
        } else {
            (reference - other) / reference * 100.0
        }
    };
    let mut averages = Vec::new();
    for design in designs.iter().skip(1) {
        let sums = (
            sum_for(design, |e| e.1),
            sum_for(design, |e| e.2),
            sum_for(design, |e| e.3),
        );
        averages.push((
            design.clone(),
            pct(ref_sums.0, sums.0),
            pct(ref_sums.1, sums.1),
            pct(ref_sums.2, sums.2),
        ));
    }

    Ok(Comparison {
        designs,
        rows,
        averages,
    })
}

impl Comparison {
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        s.push_str(&format!("{:<18}", "Assay"));
        for d in &self.designs {
            s.push_str(&format!(
                "{:>16}{:>11}{:>11}",
                format!("{d} sch(s)"),
                "rout(s)",
                "total(s)"
            ));
        }
        s.push('\n');
        for row in &self.rows {
            s.push_str(&format!("{:<18}", row.assay));
            for e in &row.entries {
                s.push_str(&format!("{:>16.2}{:>11.2}{:>11.2}", e.1, e.2, e.3));
            }
            s.push('\n');
        }
        for (design, sch, rout, tot) in &self.averages {
            s.push_str(&format!(
                "Average improvement of {design} over {}: scheduling {sch:+.0}%, routing {rout:+.0}%, total {tot:+.0}%\n",
                self.designs[0]
            ));
        }
        s
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("assay,design,scheduling_s,routing_s,total_s\n");
        for row in &self.rows {
            for e in &row.entries {
                s.push_str(&format!("{},{},{},{},{}\n", row.assay, e.0, e.1, e.2, e.3));
            }
        }
        for (design, sch, rout, tot) in &self.averages {
            s.push_str(&format!(
                "average_improvement_pct,{design},{sch},{rout},{tot}\n"
            ));
        }
        s
    }
}
