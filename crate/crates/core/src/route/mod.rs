//! Droplet routing along the fixed 3-phase paths: transport legs between
//! reservoirs and modules, merge/split choreography at module doors, and
//! the fluidic safety checks over the resulting motion plan.

mod engine;

pub use engine::{route_assay, route_with_faults, RouteError};

use crate::arch::{ArchitectureSpec, ModuleId, ReservoirId};
use crate::assay::DurationTable;
use crate::geom::Cell;
use serde::Serialize;
use std::collections::BTreeMap;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct DropletId(pub u32);

impl std::fmt::Display for DropletId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "d{}", self.0)
    }
}

/// A droplet's life on the grid. Positions persist between waypoints; the
/// droplet exists on frames `birth..death`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Trajectory {
    pub birth: u32,
    pub death: Option<u32>,
    /// (frame, cell) at every position change, starting with the birth cell.
    pub waypoints: Vec<(u32, Cell)>,
}

impl Trajectory {
    pub fn position_at(&self, t: u32) -> Option<Cell> {
        if t < self.birth || self.death.is_some_and(|d| t >= d) {
            return None;
        }
        let mut cell = None;
        for (wt, c) in &self.waypoints {
            if *wt <= t {
                cell = Some(*c);
            } else {
                break;
            }
        }
        cell
    }

    pub fn last_cell(&self) -> Cell {
        self.waypoints
            .last()
            .expect("trajectory has a birth cell")
            .1
    }

    /// Total cells traveled (number of actual moves).
    pub fn moves(&self) -> usize {
        self.waypoints
            .windows(2)
            .filter(|w| w[0].1 != w[1].1)
            .count()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum FrameKind {
    /// One scheduling timestep of module work (mix rotation, holds).
    Op { sigma: u32 },
    /// One transport-window step (droplet motion, spins, maneuvers).
    Transport,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MergeRec {
    pub parents: [DropletId; 2],
    pub child: DropletId,
    pub at: Cell,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SplitRec {
    pub parent: DropletId,
    pub io: Cell,
    pub stay: (DropletId, Cell),
    pub eject: (DropletId, Cell),
}

/// One global timestep of the executed plan. Droplets not mentioned hold
/// their position (and their electrode stays active).
#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct Frame {
    pub t: u32,
    pub kind: Option<FrameKind>,
    pub moves: Vec<(DropletId, Cell)>,
    pub births: Vec<(DropletId, Cell)>,
    /// Droplets leaving to an output reservoir this frame.
    pub exits: Vec<(DropletId, Cell)>,
    pub merges: Vec<MergeRec>,
    pub splits: Vec<SplitRec>,
    /// Electrodes intentionally fired with no droplet effect (3-phase spins);
    /// one representative cell per fired pin.
    pub aux_fires: Vec<Cell>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum RouteEventKind {
    Dispense,
    ToModule,
    Merge,
    SplitEject,
    ToOutput,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RouteEvent {
    pub kind: RouteEventKind,
    pub t: u32,
    pub droplets: Vec<DropletId>,
    pub cell: Cell,
    pub module: Option<ModuleId>,
    pub reservoir: Option<ReservoirId>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct RoutePlan {
    pub trajectories: BTreeMap<DropletId, Trajectory>,
    pub events: Vec<RouteEvent>,
    pub frames: Vec<Frame>,
    /// Scheduling timesteps realized as op frames.
    pub op_frames: u32,
    /// Transport-window frames, including rotation park/resume maneuvers.
    pub transport_frames: u32,
}

impl RoutePlan {
    pub fn total_frames(&self) -> u32 {
        self.frames.len() as u32
    }

    /// Alive droplet positions after frame `t` has applied.
    pub fn positions_at(&self, t: u32) -> BTreeMap<DropletId, Cell> {
        self.trajectories
            .iter()
            .filter_map(|(d, tr)| tr.position_at(t).map(|c| (*d, c)))
            .collect()
    }

    /// Droplets already on the grid before any frame runs: birth at 0
    /// without a frame-0 creation record (hand-built plans may start with
    /// droplets in place; engine plans create everything explicitly).
    pub fn initial_droplets(&self) -> BTreeMap<DropletId, Cell> {
        let created: std::collections::BTreeSet<DropletId> = self
            .frames
            .first()
            .map(|f| {
                f.births
                    .iter()
                    .map(|(d, _)| *d)
                    .chain(f.merges.iter().map(|m| m.child))
                    .chain(f.splits.iter().flat_map(|s| [s.stay.0, s.eject.0]))
                    .collect()
            })
            .unwrap_or_default();
        self.trajectories
            .iter()
            .filter(|(d, tr)| tr.birth == 0 && !created.contains(d))
            .map(|(d, tr)| (*d, tr.waypoints[0].1))
            .collect()
    }

    /// Alive droplet positions entering frame `t` (before its effects).
    pub fn positions_entering(&self, t: u32) -> BTreeMap<DropletId, Cell> {
        if t == 0 {
            self.initial_droplets()
        } else {
            self.positions_at(t - 1)
        }
    }

    /// `droplet_id,timestep,x,y` rows at every position change.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("droplet_id,timestep,x,y\n");
        for (d, tr) in &self.trajectories {
            for (t, c) in &tr.waypoints {
                s.push_str(&format!("{},{},{},{}\n", d.0, t, c.x, c.y));
            }
        }
        s
    }

    pub fn events_csv(&self) -> String {
        let mut s = String::from("kind,timestep,droplets,x,y,module,reservoir\n");
        for e in &self.events {
            let ds: Vec<String> = e.droplets.iter().map(|d| d.0.to_string()).collect();
            s.push_str(&format!(
                "{:?},{},{},{},{},{},{}\n",
                e.kind,
                e.t,
                ds.join("|"),
                e.cell.x,
                e.cell.y,
                e.module.map_or(String::new(), |m| m.0.to_string()),
                e.reservoir.map_or(String::new(), |r| r.0.to_string()),
            ));
        }
        s
    }
}

/// Transport time: window frames only, converted to seconds.
pub fn route_seconds(plan: &RoutePlan, durations: &DurationTable) -> f64 {
    plan.transport_frames as f64 * durations.timestep_seconds
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum FluidicViolation {
    /// Two droplets within Chebyshev distance 1 at the same timestep.
    Static {
        t: u32,
        droplets: [DropletId; 2],
        cells: [Cell; 2],
    },
    /// A droplet within distance 1 of another droplet's previous position.
    Dynamic {
        t: u32,
        droplets: [DropletId; 2],
        cells: [Cell; 2],
    },
    /// Consecutive trajectory cells are neither equal nor 4-adjacent.
    Teleport {
        t: u32,
        droplet: DropletId,
        cells: [Cell; 2],
    },
}

/// Checks the static and dynamic droplet-separation constraints over a plan.
/// Declared merge and split events exempt their participants around the
/// event frame.
pub fn check_fluidic(plan: &RoutePlan) -> Vec<FluidicViolation> {
    let mut out = Vec::new();

    // Exempt droplet pairs per frame from declared events.
    let mut exempt: BTreeMap<u32, Vec<(DropletId, DropletId)>> = BTreeMap::new();
    let add_exempt =
        |t: u32, ds: &[DropletId], exempt: &mut BTreeMap<u32, Vec<(DropletId, DropletId)>>| {
            for (i, a) in ds.iter().enumerate() {
                for b in ds.iter().skip(i + 1) {
                    for tt in [t.saturating_sub(1), t, t + 1] {
                        exempt.entry(tt).or_default().push((*a, *b));
                        exempt.entry(tt).or_default().push((*b, *a));
                    }
                }
            }
        };
    for f in &plan.frames {
        for m in &f.merges {
            add_exempt(f.t, &[m.parents[0], m.parents[1], m.child], &mut exempt);
        }
        for sp in &f.splits {
            add_exempt(f.t, &[sp.parent, sp.stay.0, sp.eject.0], &mut exempt);
        }
    }
    let is_exempt =
        |t: u32, a: DropletId, b: DropletId| exempt.get(&t).is_some_and(|v| v.contains(&(a, b)));

    let horizon = plan.total_frames();
    let mut prev: BTreeMap<DropletId, Cell> = BTreeMap::new();
    for t in 0..=horizon {
        let now = plan.positions_at(t);
        let ds: Vec<(&DropletId, &Cell)> = now.iter().collect();
        for (i, (da, ca)) in ds.iter().enumerate() {
            for (db, cb) in ds.iter().skip(i + 1) {
                if ca.chebyshev(cb) <= 1 && !is_exempt(t, **da, **db) {
                    out.push(FluidicViolation::Static {
                        t,
                        droplets: [**da, **db],
                        cells: [**ca, **cb],
                    });
                }
            }
        }
        for (da, ca) in &now {
            for (db, cb) in &prev {
                if da != db && ca.chebyshev(cb) <= 1 && !is_exempt(t, *da, *db) {
                    out.push(FluidicViolation::Dynamic {
                        t,
                        droplets: [*da, *db],
                        cells: [*ca, *cb],
                    });
                }
            }
        }
        prev = now;
    }

    for (d, tr) in &plan.trajectories {
        for w in tr.waypoints.windows(2) {
            let ((_, a), (t, b)) = (w[0], w[1]);
            if a != b && !a.is_adjacent4(&b) {
                out.push(FluidicViolation::Teleport {
                    t,
                    droplet: *d,
                    cells: [a, b],
                });
            }
        }
    }
    out
}

/// 3-phase co-residency: droplets sharing a path at one timestep must sit at
/// ordinals congruent to the same phase and at least three apart.
pub fn check_phase_spacing(plan: &RoutePlan, spec: &ArchitectureSpec) -> Vec<String> {
    let mut bad = Vec::new();
    for t in 0..=plan.total_frames() {
        let now = plan.positions_at(t);
        let mut per_path: BTreeMap<u32, Vec<(DropletId, usize)>> = BTreeMap::new();
        for (d, c) in &now {
            if let Some((p, o)) = spec.path_at(c) {
                per_path.entry(p.id.0).or_default().push((*d, o));
            }
        }
        for (path, ds) in per_path {
            for (i, (da, oa)) in ds.iter().enumerate() {
                for (db, ob) in ds.iter().skip(i + 1) {
                    let gap = oa.abs_diff(*ob);
                    if gap < 3 || oa % 3 != ob % 3 {
                        bad.push(format!(
                            "t {t} path {path}: {da} at ordinal {oa} vs {db} at {ob}"
                        ));
                    }
                }
            }
        }
    }
    bad
}
