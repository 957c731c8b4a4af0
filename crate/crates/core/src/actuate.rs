//! Compiles motion plans into per-timestep active-pin frames, verifies
//! pin-constrained safety under shared-pin expansion, and replays frames
//! through an independent forward simulator that knows only the droplet
//! movement rules.

use crate::arch::{ArchitectureSpec, ModuleKind, PinId};
use crate::geom::{opposite_about, Cell};
use crate::route::{DropletId, RoutePlan};
use serde::Serialize;
use std::collections::{BTreeMap, BTreeSet};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ActFrame {
    pub t: u32,
    pub pins: BTreeSet<PinId>,
    /// Cells where a reservoir pushes a new droplet onto the array.
    pub births: Vec<Cell>,
    /// Cells whose droplet an output reservoir pulls off the array.
    pub exits: Vec<Cell>,
    /// Cells holding a droplet that is deliberately split this frame.
    pub split_cells: Vec<Cell>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct ActuationSequence {
    pub frames: Vec<ActFrame>,
}

impl ActuationSequence {
    /// Frame-differential `timestep,pin_id,on` rows.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("timestep,pin_id,on\n");
        let mut prev: BTreeSet<PinId> = BTreeSet::new();
        for f in &self.frames {
            for pin in f.pins.difference(&prev) {
                s.push_str(&format!("{},{},1\n", f.t, pin.0));
            }
            for pin in prev.difference(&f.pins) {
                s.push_str(&format!("{},{},0\n", f.t, pin.0));
            }
            prev = f.pins.clone();
        }
        s
    }
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum ActuationError {
    #[error("interference at t={t}: droplet {droplet} at {cell} sees {actives} active electrodes nearby")]
    InterferenceDetected {
        t: u32,
        droplet: DropletId,
        cell: Cell,
        actives: usize,
    },
    #[error("cell {0} carries no pin")]
    UnpinnedCell(Cell),
}

/// Expands a pin set to the electrodes it drives.
pub fn expand_pins(spec: &ArchitectureSpec, pins: &BTreeSet<PinId>) -> BTreeSet<Cell> {
    spec.pin_of
        .iter()
        .filter(|(_, p)| pins.contains(p))
        .map(|(c, _)| *c)
        .collect()
}

/// Compiles the motion plan into pin frames. Every hold, move, merge,
/// split and rotation micro-step becomes pin activations; the compiler
/// then re-expands each frame's pins to electrodes and verifies that no
/// droplet sees more than its intended activations (shared-pin safety).
pub fn compile_actuations(
    plan: &RoutePlan,
    spec: &ArchitectureSpec,
) -> Result<ActuationSequence, ActuationError> {
    let pin_at = |c: &Cell| {
        spec.pin_of
            .get(c)
            .copied()
            .ok_or(ActuationError::UnpinnedCell(*c))
    };
    let mut out = ActuationSequence::default();

    for frame in &plan.frames {
        let mut pins = BTreeSet::new();
        let mut births = Vec::new();
        let mut exits = Vec::new();
        let mut split_cells = Vec::new();

        let mut engaged: BTreeSet<DropletId> = BTreeSet::new();
        // (droplet, cell it occupies entering the frame, allowed actives)
        let mut expectations: Vec<(DropletId, Cell, Vec<Cell>)> = Vec::new();

        let before = plan.positions_entering(frame.t);

        for (d, dest) in &frame.moves {
            pins.insert(pin_at(dest)?);
            engaged.insert(*d);
            expectations.push((*d, before[d], vec![*dest]));
        }
        for m in &frame.merges {
            pins.insert(pin_at(&m.at)?);
            for p in m.parents {
                engaged.insert(p);
                expectations.push((p, before[&p], vec![m.at]));
            }
        }
        for sp in &frame.splits {
            pins.insert(pin_at(&sp.stay.1)?);
            pins.insert(pin_at(&sp.eject.1)?);
            engaged.insert(sp.parent);
            split_cells.push(before[&sp.parent]);
            expectations.push((sp.parent, before[&sp.parent], vec![sp.stay.1, sp.eject.1]));
        }
        for (d, cell) in &frame.exits {
            engaged.insert(*d);
            exits.push(*cell);
            expectations.push((*d, *cell, vec![]));
        }
        for cell in &frame.aux_fires {
            pins.insert(pin_at(cell)?);
        }
        // Continuous hold: every droplet the frame leaves alone keeps its
        // electrode active.
        for (d, cell) in &before {
            if !engaged.contains(d) {
                pins.insert(pin_at(cell)?);
                expectations.push((*d, *cell, vec![*cell]));
            }
        }
        for (d, cell) in &frame.births {
            pins.insert(pin_at(cell)?);
            births.push(*cell);
            expectations.push((*d, *cell, vec![*cell]));
        }

        let active = expand_pins(spec, &pins);
        for (d, cell, allowed) in &expectations {
            let nearby: Vec<Cell> = std::iter::once(*cell)
                .chain(cell.neighbors4())
                .filter(|c| active.contains(c))
                .collect();
            let ok = nearby.len() == allowed.len() && nearby.iter().all(|c| allowed.contains(c));
            if !ok {
                return Err(ActuationError::InterferenceDetected {
                    t: frame.t,
                    droplet: *d,
                    cell: *cell,
                    actives: nearby.len(),
                });
            }
        }

        out.frames.push(ActFrame {
            t: frame.t,
            pins,
            births,
            exits,
            split_cells,
        });
    }
    Ok(out)
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum SimError {
    #[error("ambiguous move at t={t}: droplet at {cell} sees {actives} active electrodes")]
    AmbiguousMove { t: u32, cell: Cell, actives: usize },
    #[error("more than two droplets landed on {cell} (t={t})")]
    OvercrowdedCell { t: u32, cell: Cell },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimResult {
    /// Droplet cells after each frame, sorted.
    pub per_frame: Vec<Vec<Cell>>,
    pub merges: u32,
    pub splits: u32,
}

impl SimResult {
    pub fn final_positions(&self) -> &[Cell] {
        self.per_frame.last().map(Vec::as_slice).unwrap_or(&[])
    }
}

/// Independent forward simulator: applies the droplet movement rules frame
/// by frame. A droplet with its own electrode active and no active
/// neighbor holds; with one active neighbor (own off) it moves there; with
/// two opposite active neighbors it splits; droplets landing on one cell
/// merge. A far-away electrode sharing a droplet's pin has no effect.
pub fn simulate(
    seq: &ActuationSequence,
    initial: &[Cell],
    spec: &ArchitectureSpec,
) -> Result<SimResult, SimError> {
    let mut droplets: Vec<Cell> = initial.to_vec();
    let mut result = SimResult {
        per_frame: Vec::new(),
        merges: 0,
        splits: 0,
    };

    for frame in &seq.frames {
        let active = expand_pins(spec, &frame.pins);
        droplets.extend(frame.births.iter().copied());
        let mut next: Vec<Cell> = Vec::with_capacity(droplets.len() + 1);

        for u in &droplets {
            let own = active.contains(u);
            let neighbors: Vec<Cell> = u
                .neighbors4()
                .into_iter()
                .filter(|n| active.contains(n))
                .collect();
            match (own, neighbors.len()) {
                (_, 0) => next.push(*u),
                (true, n) => {
                    return Err(SimError::AmbiguousMove {
                        t: frame.t,
                        cell: *u,
                        actives: n + 1,
                    })
                }
                (false, 1) => next.push(neighbors[0]),
                (false, 2) if opposite_about(u, &neighbors[0], &neighbors[1]) => {
                    next.push(neighbors[0]);
                    next.push(neighbors[1]);
                    result.splits += 1;
                }
                (false, n) => {
                    return Err(SimError::AmbiguousMove {
                        t: frame.t,
                        cell: *u,
                        actives: n,
                    })
                }
            }
        }

        let mut counts: BTreeMap<Cell, u32> = BTreeMap::new();
        for c in &next {
            *counts.entry(*c).or_default() += 1;
        }
        let mut merged: Vec<Cell> = Vec::with_capacity(next.len());
        for (c, n) in counts {
            match n {
                1 => merged.push(c),
                2 => {
                    merged.push(c);
                    result.merges += 1;
                }
                _ => {
                    return Err(SimError::OvercrowdedCell {
                        t: frame.t,
                        cell: c,
                    })
                }
            }
        }

        for cell in &frame.exits {
            if let Some(i) = merged.iter().position(|c| c == cell) {
                merged.remove(i);
            }
        }

        merged.sort();
        droplets = merged;
        result.per_frame.push(droplets.clone());
    }
    Ok(result)
}

/// Replays the compiled pins through `simulate` and checks the simulator
/// lands every droplet exactly where the motion plan says, frame by frame.
pub fn verify_plan_reproduction(
    seq: &ActuationSequence,
    plan: &RoutePlan,
    spec: &ArchitectureSpec,
) -> Result<(), String> {
    let initial: Vec<Cell> = plan.initial_droplets().values().copied().collect();
    let sim = simulate(seq, &initial, spec).map_err(|e| e.to_string())?;
    if sim.per_frame.len() != plan.frames.len() {
        return Err(format!(
            "frame count mismatch: sim {} vs plan {}",
            sim.per_frame.len(),
            plan.frames.len()
        ));
    }
    for (i, sim_cells) in sim.per_frame.iter().enumerate() {
        let mut plan_cells: Vec<Cell> = plan.positions_at(i as u32).values().copied().collect();
        plan_cells.sort();
        if sim_cells != &plan_cells {
            return Err(format!(
                "position mismatch after frame {i}: sim {sim_cells:?} vs plan {plan_cells:?}"
            ));
        }
    }
    let plan_merges = plan
        .frames
        .iter()
        .map(|f| f.merges.len() as u32)
        .sum::<u32>();
    let plan_splits = plan
        .frames
        .iter()
        .map(|f| f.splits.len() as u32)
        .sum::<u32>();
    if sim.merges != plan_merges || sim.splits != plan_splits {
        return Err(format!(
            "event mismatch: sim {} merges / {} splits vs plan {} / {}",
            sim.merges, sim.splits, plan_merges, plan_splits
        ));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct PowerReport {
    pub total_actuations: u64,
    pub routing: u64,
    pub mixing: u64,
    pub holding: u64,
    pub per_module: BTreeMap<u32, u64>,
    pub per_path: BTreeMap<u32, u64>,
}

/// Counts electrode actuations (pin activations expanded to the electrodes
/// each pin drives) per category: routing-path electrodes, mixer
/// electrodes, and SSD/buffer holding electrodes.
pub fn power_report(seq: &ActuationSequence, spec: &ArchitectureSpec) -> PowerReport {
    let mut owner: BTreeMap<Cell, (u8, u32)> = BTreeMap::new();
    for p in &spec.paths {
        for c in &p.cells {
            owner.insert(*c, (0, p.id.0));
        }
    }
    for m in &spec.modules {
        let cat = if m.kind == ModuleKind::Mixer { 1 } else { 2 };
        for c in m.cells() {
            owner.insert(c, (cat, m.id.0));
        }
    }

    let mut report = PowerReport::default();
    for frame in &seq.frames {
        for cell in expand_pins(spec, &frame.pins) {
            report.total_actuations += 1;
            match owner.get(&cell) {
                Some((0, id)) => {
                    report.routing += 1;
                    *report.per_path.entry(*id).or_default() += 1;
                }
                Some((1, id)) => {
                    report.mixing += 1;
                    *report.per_module.entry(*id).or_default() += 1;
                }
                Some((_, id)) => {
                    report.holding += 1;
                    *report.per_module.entry(*id).or_default() += 1;
                }
                None => report.holding += 1,
            }
        }
    }
    report
}

/// In-module electrode firings for one full mixing rotation loop: each
/// cycle step fires the destination's pin, which may drive extra ring
/// electrodes when pins are shared within the module.
pub fn rotation_loop_cost(module: &crate::arch::ModuleSpec) -> Option<u32> {
    let cycle = module.rotation_cycle()?;
    let mut cost = 0u32;
    for cell in &cycle {
        let in_module = if *cell == module.io_cell || *cell == module.hold_cell {
            1
        } else {
            let pin = *module.shared_pins.get(cell)?;
            module.shared_pins.values().filter(|p| **p == pin).count() as u32
        };
        cost += in_module;
    }
    Some(cost)
}
