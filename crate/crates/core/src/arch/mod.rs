//! Pin-constrained DMFB architecture model: electrode grid, modules,
//! 3-phase routing paths, reservoirs and the pin→electrode map.

mod generate;

pub use generate::{
    build_efppc, build_egfpc, with_dedicated_mixer_pins, with_grouped_routing_pins, GenError,
};

use crate::geom::Cell;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct PinId(pub u32);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ModuleId(pub u32);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct PathId(pub u32);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ReservoirId(pub u32);

impl fmt::Display for PinId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "p{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ModuleKind {
    Mixer,
    Ssd,
    /// Dedicated deadlock-escape module used by single-bus baseline designs.
    RoutingBuffer,
}

/// One fixed-position module. Mixers carry a closed electrode ring plus a
/// shared-pin assignment for the ring cells that are not I/O or Hold.
/// SSD and routing-buffer modules are an I/O + Hold electrode pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModuleSpec {
    pub id: ModuleId,
    pub kind: ModuleKind,
    /// Ring cells in ring order (mixers only, empty otherwise).
    #[serde(default)]
    pub loop_cells: Vec<Cell>,
    /// Shared pin per non-I/O, non-Hold ring cell (mixers only).
    #[serde(default, with = "cell_pin_pairs")]
    pub shared_pins: BTreeMap<Cell, PinId>,
    pub io_cell: Cell,
    pub hold_cell: Cell,
    pub io_pin: PinId,
    pub hold_pin: PinId,
    #[serde(default)]
    pub detector: bool,
}

/// JSON maps need string keys; shared pins travel as `[cell, pin]` pairs.
mod cell_pin_pairs {
    use super::*;
    use serde::{Deserializer, Serializer};

    pub fn serialize<S: Serializer>(map: &BTreeMap<Cell, PinId>, s: S) -> Result<S::Ok, S::Error> {
        let pairs: Vec<(Cell, PinId)> = map.iter().map(|(c, p)| (*c, *p)).collect();
        serde::Serialize::serialize(&pairs, s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<BTreeMap<Cell, PinId>, D::Error> {
        let pairs: Vec<(Cell, PinId)> = serde::Deserialize::deserialize(d)?;
        Ok(pairs.into_iter().collect())
    }
}

impl ModuleSpec {
    pub fn cells(&self) -> Vec<Cell> {
        if self.kind == ModuleKind::Mixer {
            self.loop_cells.clone()
        } else {
            vec![self.io_cell, self.hold_cell]
        }
    }

    /// True when every shared ring pin drives a single electrode inside this
    /// module (the dedicated-pin addressing of the older designs).
    pub fn has_dedicated_ring_pins(&self) -> bool {
        let mut counts: BTreeMap<PinId, u32> = BTreeMap::new();
        for pin in self.shared_pins.values() {
            *counts.entry(*pin).or_default() += 1;
        }
        counts.values().all(|&n| n == 1)
    }

    /// The cell cycle a droplet follows while mixing.
    ///
    /// With dedicated ring pins the droplet loops the full ring through I/O
    /// and Hold. With multi-electrode shared pins it loops only the shared
    /// cells (the ring arc closed by the grid chord between its endpoints),
    /// parking on the dedicated Hold electrode between loops; the first
    /// cycle cell is always the one adjacent to Hold.
    pub fn rotation_cycle(&self) -> Option<Vec<Cell>> {
        if self.kind != ModuleKind::Mixer || self.loop_cells.len() < 4 {
            return None;
        }
        let ring = &self.loop_cells;
        if self.has_dedicated_ring_pins() {
            let start = ring.iter().position(|c| *c == self.hold_cell)?;
            let mut cycle: Vec<Cell> = ring[start..].to_vec();
            cycle.extend_from_slice(&ring[..start]);
            return Some(cycle);
        }
        // Shared-only cycle: drop io and hold (an adjacent ring pair), keep
        // the remaining arc in ring order starting beside the hold cell.
        let n = ring.len();
        let io_at = ring.iter().position(|c| *c == self.io_cell)?;
        let hold_at = ring.iter().position(|c| *c == self.hold_cell)?;
        let gap = (io_at + n - hold_at) % n;
        if gap != 1 && gap != n - 1 {
            return None; // io and hold are not ring neighbors
        }
        // Walk the ring away from the io/hold pair starting at hold's other
        // neighbor, collecting the shared cells.
        let step = if gap == 1 { n - 1 } else { 1 };
        let mut cycle = Vec::with_capacity(n - 2);
        let mut at = (hold_at + step) % n;
        while ring[at] != self.io_cell {
            cycle.push(ring[at]);
            at = (at + step) % n;
        }
        // The arc endpoints must be grid-adjacent for the cycle to close.
        if cycle.len() >= 4 && cycle.first()?.is_adjacent4(cycle.last()?) {
            Some(cycle)
        } else {
            None
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Orientation {
    Horizontal,
    Vertical,
}

/// A 3-phase droplet routing path. The cell at ordinal `i` carries pin
/// `phase_pins[i % 3]`, so three pins address a path of any length.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoutingPath {
    pub id: PathId,
    pub cells: Vec<Cell>,
    pub phase_pins: [PinId; 3],
    pub orientation: Orientation,
}

impl RoutingPath {
    pub fn ordinal_of(&self, cell: &Cell) -> Option<usize> {
        self.cells.iter().position(|c| c == cell)
    }

    pub fn pin_at_ordinal(&self, ordinal: usize) -> PinId {
        self.phase_pins[ordinal % 3]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ReservoirKind {
    Input { fluid: Option<String> },
    Output,
}

/// A perimeter I/O reservoir. `attach_cell` is the perimeter routing-path
/// cell where dispensed droplets enter the array (and output droplets
/// leave it); the reservoir hardware itself sits off-grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Reservoir {
    pub id: ReservoirId,
    pub kind: ReservoirKind,
    pub attach_cell: Cell,
}

impl Reservoir {
    pub fn is_input(&self) -> bool {
        matches!(self.kind, ReservoirKind::Input { .. })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArchitectureSpec {
    pub design_name: String,
    pub grid_width: i32,
    pub grid_height: i32,
    pub pitch_mm: f64,
    pub modules: Vec<ModuleSpec>,
    pub paths: Vec<RoutingPath>,
    pub reservoirs: Vec<Reservoir>,
    /// Total pin map over every addressable electrode.
    pub pin_of: BTreeMap<Cell, PinId>,
    pub pin_count: usize,
}

impl ArchitectureSpec {
    pub fn module(&self, id: ModuleId) -> &ModuleSpec {
        &self.modules[id.0 as usize]
    }

    pub fn path(&self, id: PathId) -> &RoutingPath {
        &self.paths[id.0 as usize]
    }

    pub fn reservoir(&self, id: ReservoirId) -> &Reservoir {
        &self.reservoirs[id.0 as usize]
    }

    pub fn mixers(&self) -> impl Iterator<Item = &ModuleSpec> {
        self.modules.iter().filter(|m| m.kind == ModuleKind::Mixer)
    }

    pub fn ssds(&self) -> impl Iterator<Item = &ModuleSpec> {
        self.modules.iter().filter(|m| m.kind == ModuleKind::Ssd)
    }

    pub fn mixer_count(&self) -> usize {
        self.mixers().count()
    }

    pub fn ssd_count(&self) -> usize {
        self.ssds().count()
    }

    pub fn detector_count(&self) -> usize {
        self.ssds().filter(|m| m.detector).count()
    }

    pub fn routing_buffer_count(&self) -> usize {
        self.modules
            .iter()
            .filter(|m| m.kind == ModuleKind::RoutingBuffer)
            .count()
    }

    pub fn input_reservoirs(&self) -> impl Iterator<Item = &Reservoir> {
        self.reservoirs.iter().filter(|r| r.is_input())
    }

    pub fn output_reservoirs(&self) -> impl Iterator<Item = &Reservoir> {
        self.reservoirs.iter().filter(|r| !r.is_input())
    }

    /// Electrodes wired to `pin` (shared pins expand to several cells).
    pub fn electrodes_of(&self, pin: PinId) -> Vec<Cell> {
        self.pin_of
            .iter()
            .filter(|(_, p)| **p == pin)
            .map(|(c, _)| *c)
            .collect()
    }

    /// Number of addressable electrodes (module plus path cells).
    pub fn electrode_count(&self) -> usize {
        self.pin_of.len()
    }

    pub fn path_at(&self, cell: &Cell) -> Option<(&RoutingPath, usize)> {
        for p in &self.paths {
            if let Some(o) = p.ordinal_of(cell) {
                return Some((p, o));
            }
        }
        None
    }

    pub fn is_perimeter(&self, cell: &Cell) -> bool {
        cell.x == 0
            || cell.y == 0
            || cell.x == self.grid_width - 1
            || cell.y == self.grid_height - 1
    }

    pub fn array_width_mm(&self) -> f64 {
        self.grid_width as f64 * self.pitch_mm
    }

    pub fn array_height_mm(&self) -> f64 {
        self.grid_height as f64 * self.pitch_mm
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&FileFormat::from(self)).expect("architecture serializes")
    }

    pub fn from_json(text: &str) -> Result<ArchitectureSpec, ArchFileError> {
        let ff: FileFormat = serde_json::from_str(text)?;
        ff.into_spec()
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ArchFileError {
    #[error("architecture file is not valid JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("bad pin map key `{0}`: expected \"x,y\"")]
    BadPinKey(String),
}

/// On-disk representation. Identical to the in-memory spec except that the
/// pin map is keyed by `"x,y"` strings so it serializes as a JSON object.
#[derive(Serialize, Deserialize)]
struct FileFormat {
    design_name: String,
    grid: GridDims,
    pitch_mm: f64,
    modules: Vec<ModuleSpec>,
    paths: Vec<RoutingPath>,
    reservoirs: Vec<Reservoir>,
    pins: BTreeMap<String, u32>,
}

#[derive(Serialize, Deserialize)]
struct GridDims {
    width: i32,
    height: i32,
}

impl From<&ArchitectureSpec> for FileFormat {
    fn from(spec: &ArchitectureSpec) -> Self {
        FileFormat {
            design_name: spec.design_name.clone(),
            grid: GridDims {
                width: spec.grid_width,
                height: spec.grid_height,
            },
            pitch_mm: spec.pitch_mm,
            modules: spec.modules.clone(),
            paths: spec.paths.clone(),
            reservoirs: spec.reservoirs.clone(),
            pins: spec
                .pin_of
                .iter()
                .map(|(c, p)| (format!("{},{}", c.x, c.y), p.0))
                .collect(),
        }
    }
}

impl FileFormat {
    fn into_spec(self) -> Result<ArchitectureSpec, ArchFileError> {
        let mut pin_of = BTreeMap::new();
        for (key, pin) in &self.pins {
            let mut it = key.split(',');
            let (x, y) = match (it.next(), it.next(), it.next()) {
                (Some(x), Some(y), None) => (x.trim().parse(), y.trim().parse()),
                _ => return Err(ArchFileError::BadPinKey(key.clone())),
            };
            match (x, y) {
                (Ok(x), Ok(y)) => {
                    pin_of.insert(Cell::new(x, y), PinId(*pin));
                }
                _ => return Err(ArchFileError::BadPinKey(key.clone())),
            }
        }
        let pin_count = pin_of.values().collect::<BTreeSet<_>>().len();
        Ok(ArchitectureSpec {
            design_name: self.design_name,
            grid_width: self.grid.width,
            grid_height: self.grid.height,
            pitch_mm: self.pitch_mm,
            modules: self.modules,
            paths: self.paths,
            reservoirs: self.reservoirs,
            pin_of,
            pin_count,
        })
    }
}

/// A single architecture invariant violation. Violations are data, not
/// errors: `validate` returns the full list so a report can show them all.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum Violation {
    /// Two owners (modules or paths) claim the same electrode.
    Overlap { cell: Cell, owners: [String; 2] },
    /// Two distinct routing paths share a phase pin.
    PhasePinCollision { pin: PinId, paths: [PathId; 2] },
    /// A path cell's pin does not follow the 3-phase `i % 3` pattern.
    PhasePatternBroken {
        path: PathId,
        ordinal: usize,
        cell: Cell,
    },
    /// Consecutive path cells are not 4-adjacent.
    PathDisconnected { path: PathId, ordinal: usize },
    /// A module I/O cell has no routing-path cell in its 4-neighborhood.
    IoNotOnPath { module: ModuleId, cell: Cell },
    /// Hold cell is not 4-adjacent to the I/O cell.
    HoldNotAdjacentIo { module: ModuleId },
    /// Mixer ring is not a closed 4-adjacent ring or misses I/O/Hold.
    RingBroken { module: ModuleId },
    /// An addressable electrode is missing from the pin map.
    Unpinned { cell: Cell },
    /// Declared pin_count disagrees with the distinct pins in the map.
    PinCountMismatch { declared: usize, actual: usize },
    /// Reservoir attach cell is off the perimeter or not on a path.
    ReservoirDetached { reservoir: ReservoirId, cell: Cell },
    /// A cell lies outside the grid.
    OutOfBounds { cell: Cell, owner: String },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::Overlap { cell, owners } => {
                write!(
                    f,
                    "cell {cell} owned by both {} and {}",
                    owners[0], owners[1]
                )
            }
            Violation::PhasePinCollision { pin, paths } => {
                write!(
                    f,
                    "paths {} and {} share phase pin {pin}",
                    paths[0].0, paths[1].0
                )
            }
            Violation::PhasePatternBroken {
                path,
                ordinal,
                cell,
            } => {
                write!(
                    f,
                    "path {} ordinal {ordinal} at {cell} breaks the 3-phase pattern",
                    path.0
                )
            }
            Violation::PathDisconnected { path, ordinal } => {
                write!(f, "path {} breaks 4-adjacency at ordinal {ordinal}", path.0)
            }
            Violation::IoNotOnPath { module, cell } => {
                write!(
                    f,
                    "module {} I/O cell {cell} is not beside a routing path",
                    module.0
                )
            }
            Violation::HoldNotAdjacentIo { module } => {
                write!(
                    f,
                    "module {} hold cell is not adjacent to its I/O cell",
                    module.0
                )
            }
            Violation::RingBroken { module } => {
                write!(f, "mixer {} loop cells do not form a closed ring", module.0)
            }
            Violation::Unpinned { cell } => write!(f, "electrode {cell} has no pin"),
            Violation::PinCountMismatch { declared, actual } => {
                write!(
                    f,
                    "pin_count says {declared} but the map holds {actual} pins"
                )
            }
            Violation::ReservoirDetached { reservoir, cell } => {
                write!(
                    f,
                    "reservoir {} attach cell {cell} is not a perimeter path cell",
                    reservoir.0
                )
            }
            Violation::OutOfBounds { cell, owner } => {
                write!(f, "{owner} cell {cell} is outside the grid")
            }
        }
    }
}

/// Checks every architecture invariant; empty result means the spec is sound.
pub fn validate(spec: &ArchitectureSpec) -> Vec<Violation> {
    let mut out = Vec::new();
    let (w, h) = (spec.grid_width, spec.grid_height);

    // Ownership map doubles as the overlap detector.
    let mut owner: BTreeMap<Cell, String> = BTreeMap::new();
    let mut claim = |cell: Cell, name: String, out: &mut Vec<Violation>| {
        if !cell.in_bounds(w, h) {
            out.push(Violation::OutOfBounds {
                cell,
                owner: name.clone(),
            });
        }
        if let Some(prev) = owner.insert(cell, name.clone()) {
            out.push(Violation::Overlap {
                cell,
                owners: [prev, name],
            });
        }
    };

    for p in &spec.paths {
        for (i, c) in p.cells.iter().enumerate() {
            claim(*c, format!("path{}", p.id.0), &mut out);
            if i + 1 < p.cells.len() && !c.is_adjacent4(&p.cells[i + 1]) {
                out.push(Violation::PathDisconnected {
                    path: p.id,
                    ordinal: i,
                });
            }
            match spec.pin_of.get(c) {
                None => out.push(Violation::Unpinned { cell: *c }),
                Some(pin) if *pin != p.pin_at_ordinal(i) => {
                    out.push(Violation::PhasePatternBroken {
                        path: p.id,
                        ordinal: i,
                        cell: *c,
                    })
                }
                _ => {}
            }
        }
    }

    for (i, a) in spec.paths.iter().enumerate() {
        for b in spec.paths.iter().skip(i + 1) {
            for pin in a.phase_pins {
                if b.phase_pins.contains(&pin) {
                    out.push(Violation::PhasePinCollision {
                        pin,
                        paths: [a.id, b.id],
                    });
                }
            }
        }
    }

    for m in &spec.modules {
        for c in m.cells() {
            claim(c, format!("module{}", m.id.0), &mut out);
            if !spec.pin_of.contains_key(&c) {
                out.push(Violation::Unpinned { cell: c });
            }
        }
        let on_path = m
            .io_cell
            .neighbors4()
            .iter()
            .any(|n| spec.path_at(n).is_some());
        if !on_path {
            out.push(Violation::IoNotOnPath {
                module: m.id,
                cell: m.io_cell,
            });
        }
        if !m.hold_cell.is_adjacent4(&m.io_cell) {
            out.push(Violation::HoldNotAdjacentIo { module: m.id });
        }
        if m.kind == ModuleKind::Mixer {
            let ring = &m.loop_cells;
            let closed = ring.len() >= 4
                && ring
                    .iter()
                    .zip(ring.iter().cycle().skip(1))
                    .take(ring.len())
                    .all(|(a, b)| a.is_adjacent4(b));
            if !closed || !ring.contains(&m.io_cell) || !ring.contains(&m.hold_cell) {
                out.push(Violation::RingBroken { module: m.id });
            }
        }
    }

    let actual = spec.pin_of.values().collect::<BTreeSet<_>>().len();
    if actual != spec.pin_count {
        out.push(Violation::PinCountMismatch {
            declared: spec.pin_count,
            actual,
        });
    }

    for r in &spec.reservoirs {
        let ok = spec.is_perimeter(&r.attach_cell) && spec.path_at(&r.attach_cell).is_some();
        if !ok {
            out.push(Violation::ReservoirDetached {
                reservoir: r.id,
                cell: r.attach_cell,
            });
        }
    }

    out
}

/// Renders the pin-assignment table: routing paths first, then module pin
/// groups, one row per function with its inclusive pin range.
pub fn pin_table(spec: &ArchitectureSpec) -> String {
    let mut rows: Vec<(String, Vec<u32>)> = Vec::new();

    for p in &spec.paths {
        let label = match (p.orientation, p.id.0) {
            (Orientation::Vertical, 0) => "Left Vertical Routing Path".to_string(),
            (Orientation::Vertical, _) => "Right Vertical Routing Path".to_string(),
            (Orientation::Horizontal, _) => {
                // Tier by vertical position: the lower row index is the top tier.
                let mid = spec.grid_height / 2;
                if p.cells.first().map_or(0, |c| c.y) < mid {
                    "Top Horizontal Routing Path".to_string()
                } else {
                    "Bottom Horizontal Routing Path".to_string()
                }
            }
        };
        rows.push((label, p.phase_pins.iter().map(|p| p.0).collect()));
    }

    let mut shared: Vec<u32> = spec
        .mixers()
        .flat_map(|m| m.shared_pins.values().map(|p| p.0))
        .collect();
    shared.sort_unstable();
    shared.dedup();
    let mixer_io: Vec<u32> = spec.mixers().map(|m| m.io_pin.0).collect();
    let mixer_hold: Vec<u32> = spec.mixers().map(|m| m.hold_pin.0).collect();
    let ssd_io: Vec<u32> = spec.ssds().map(|m| m.io_pin.0).collect();
    let ssd_hold: Vec<u32> = spec.ssds().map(|m| m.hold_pin.0).collect();
    let rb_pins: Vec<u32> = spec
        .modules
        .iter()
        .filter(|m| m.kind == ModuleKind::RoutingBuffer)
        .flat_map(|m| [m.io_pin.0, m.hold_pin.0])
        .collect();

    let mut module_rows = vec![
        ("Mixing module (Shared)", shared),
        ("Mixing module I/O", mixer_io),
        ("Mixing module Hold", mixer_hold),
        ("SSD module I/O", ssd_io),
        ("SSD module Hold", ssd_hold),
    ];
    if !rb_pins.is_empty() {
        module_rows.push(("Routing buffer", rb_pins));
    }

    let range = |pins: &[u32]| -> String {
        match (pins.iter().min(), pins.iter().max()) {
            (Some(a), Some(b)) if a == b => format!("{a}"),
            (Some(a), Some(b)) => format!("{a} - {b}"),
            _ => "-".to_string(),
        }
    };

    let mut s = String::new();
    s.push_str(&format!("{:<34}{}\n", "Description", "Pins"));
    s.push_str("Routing Paths\n");
    for (label, pins) in &rows {
        s.push_str(&format!("{:<34}{}\n", label, range(pins)));
    }
    s.push_str("Modules\n");
    for (label, pins) in &module_rows {
        if !pins.is_empty() {
            s.push_str(&format!("{:<34}{}\n", label, range(pins)));
        }
    }
    s.push_str(&format!("{:<34}{}\n", "Total pins", spec.pin_count));
    s
}
