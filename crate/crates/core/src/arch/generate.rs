//! Generators for the two architectures the toolchain ships with: the
//! two-tier EGFPC design and the single-bus EFPPC baseline.

use super::*;
use crate::geom::Cell;
use std::collections::BTreeSet;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum GenError {
    #[error(
        "module counts must be at least one mixer and one SSD (got {mixers} mixers, {ssds} SSDs)"
    )]
    TooFewModules { mixers: u32, ssds: u32 },
    #[error("tier symmetry requires even mixer and SSD counts (got {mixers} mixers, {ssds} SSDs)")]
    OddCounts { mixers: u32, ssds: u32 },
    #[error("electrode pitch must be positive (got {0} mm)")]
    BadPitch(f64),
    #[error("detector id {0} does not name an SSD (only {1} SSDs)")]
    DetectorOutOfRange(u32, u32),
}

/// Builds the two-tier pin-constrained design: vertical routing paths on the
/// leftmost and rightmost columns, one horizontal routing path per tier, and
/// mixers/SSDs split evenly between the top and bottom tiers.
///
/// Pins are assigned in the published order: the four routing paths take
/// 1-12, four shared mixing pins take 13-16, then per-module mixer I/O,
/// mixer Hold, SSD I/O and SSD Hold pins follow, for 16 + 2M + 2S total.
/// `detectors` lists the SSD ordinals (0-based) that carry a detector.
pub fn build_egfpc(
    mixers: u32,
    ssds: u32,
    pitch_mm: f64,
    detectors: &BTreeSet<u32>,
) -> Result<ArchitectureSpec, GenError> {
    if mixers < 1 || ssds < 1 {
        return Err(GenError::TooFewModules { mixers, ssds });
    }
    if !mixers.is_multiple_of(2) || !ssds.is_multiple_of(2) {
        return Err(GenError::OddCounts { mixers, ssds });
    }
    if pitch_mm <= 0.0 {
        return Err(GenError::BadPitch(pitch_mm));
    }
    if let Some(&d) = detectors.iter().find(|&&d| d >= ssds) {
        return Err(GenError::DetectorOutOfRange(d, ssds));
    }

    let m = (mixers / 2) as i32; // mixers per tier
    let s = (ssds / 2) as i32; // SSDs per tier
                               // Mixers are 2x4 rings laid side by side with a one-column gap; SSDs are
                               // vertical I/O+Hold pairs on every other column. Both bands must fit
                               // between the two vertical routing columns, and SSD holds must never
                               // abut the right vertical path (a parked droplet would sit beside its
                               // firing electrodes).
    let width = (5 * m + 1).max(2 * s + 3);
    let height = 11;

    let mut pin_of = BTreeMap::new();
    let mut next_pin = 1u32;
    let mut take_pin = || {
        let p = PinId(next_pin);
        next_pin += 1;
        p
    };

    // Routing paths: left vertical, right vertical, top horizontal, bottom
    // horizontal, three phase pins each.
    let mut paths = Vec::new();
    let mut add_path =
        |cells: Vec<Cell>, orientation: Orientation, pin_of: &mut BTreeMap<Cell, PinId>| {
            let phase_pins = [take_pin(), take_pin(), take_pin()];
            for (i, c) in cells.iter().enumerate() {
                pin_of.insert(*c, phase_pins[i % 3]);
            }
            paths.push(RoutingPath {
                id: PathId(paths.len() as u32),
                cells,
                phase_pins,
                orientation,
            });
        };
    add_path(
        (0..height).map(|y| Cell::new(0, y)).collect(),
        Orientation::Vertical,
        &mut pin_of,
    );
    add_path(
        (0..height).map(|y| Cell::new(width - 1, y)).collect(),
        Orientation::Vertical,
        &mut pin_of,
    );
    add_path(
        (1..width - 1).map(|x| Cell::new(x, 2)).collect(),
        Orientation::Horizontal,
        &mut pin_of,
    );
    add_path(
        (1..width - 1).map(|x| Cell::new(x, 8)).collect(),
        Orientation::Horizontal,
        &mut pin_of,
    );

    // Four mixing pins shared by every mixer. Within one module two of them
    // drive two electrodes each and two drive one; the doubled cells sit so
    // no rotation step fires an electrode beside the moving droplet.
    let shared = [take_pin(), take_pin(), take_pin(), take_pin()];

    let mut modules = Vec::new();
    struct MixerGeom {
        x0: i32,
        hold_row: i32,
        io_row: i32,
    }
    let mut mixer_geoms = Vec::new();
    for k in 0..m {
        mixer_geoms.push(MixerGeom {
            x0: 1 + 5 * k,
            hold_row: 0,
            io_row: 1,
        }); // top tier
    }
    for k in 0..m {
        mixer_geoms.push(MixerGeom {
            x0: 1 + 5 * k,
            hold_row: 10,
            io_row: 9,
        }); // bottom tier
    }

    let mixer_io_pins: Vec<PinId> = (0..mixers).map(|_| take_pin()).collect();
    let mixer_hold_pins: Vec<PinId> = (0..mixers).map(|_| take_pin()).collect();

    for (idx, g) in mixer_geoms.iter().enumerate() {
        let (x0, hr, ir) = (g.x0, g.hold_row, g.io_row);
        // I/O and Hold take the ring column away from the right vertical
        // path: a droplet parked on Hold must never neighbor a routing
        // electrode that fires while it waits.
        let hx = if x0 + 3 == width - 2 { x0 } else { x0 + 3 };
        let toward_shared = if hx == x0 { 1 } else { -1 };
        let io_cell = Cell::new(hx, ir);
        let hold_cell = Cell::new(hx, hr);
        // Ring order: hold row left-to-right, then io row right-to-left.
        let mut loop_cells: Vec<Cell> = (0..4).map(|dx| Cell::new(x0 + dx, hr)).collect();
        loop_cells.extend((0..4).rev().map(|dx| Cell::new(x0 + dx, ir)));
        // Shared cells named outward from the hold column; the paired pins
        // sit so no rotation step fires beside the moving droplet, and the
        // pin firing order is identical in every mixer (lockstep rotation).
        let a = Cell::new(hx + 3 * toward_shared, hr);
        let b = Cell::new(hx + 2 * toward_shared, hr);
        let c = Cell::new(hx + toward_shared, hr);
        let d = Cell::new(hx + toward_shared, ir);
        let e = Cell::new(hx + 2 * toward_shared, ir);
        let f = Cell::new(hx + 3 * toward_shared, ir);
        let shared_pins: BTreeMap<Cell, PinId> = [
            (a, shared[0]),
            (d, shared[0]),
            (b, shared[1]),
            (c, shared[2]),
            (f, shared[2]),
            (e, shared[3]),
        ]
        .into_iter()
        .collect();
        for (cell, pin) in &shared_pins {
            pin_of.insert(*cell, *pin);
        }
        let io_pin = mixer_io_pins[idx];
        let hold_pin = mixer_hold_pins[idx];
        pin_of.insert(io_cell, io_pin);
        pin_of.insert(hold_cell, hold_pin);
        modules.push(ModuleSpec {
            id: ModuleId(modules.len() as u32),
            kind: ModuleKind::Mixer,
            loop_cells,
            shared_pins,
            io_cell,
            hold_cell,
            io_pin,
            hold_pin,
            detector: false,
        });
    }

    // SSDs: I/O beside the tier's horizontal path, Hold one cell further out.
    struct SsdGeom {
        x: i32,
        io_row: i32,
        hold_row: i32,
    }
    let mut ssd_geoms = Vec::new();
    for j in 0..s {
        ssd_geoms.push(SsdGeom {
            x: 2 + 2 * j,
            io_row: 3,
            hold_row: 4,
        }); // top tier
    }
    for j in 0..s {
        ssd_geoms.push(SsdGeom {
            x: 2 + 2 * j,
            io_row: 7,
            hold_row: 6,
        }); // bottom tier
    }
    let ssd_io_pins: Vec<PinId> = (0..ssds).map(|_| take_pin()).collect();
    let ssd_hold_pins: Vec<PinId> = (0..ssds).map(|_| take_pin()).collect();
    for (j, g) in ssd_geoms.iter().enumerate() {
        let io_cell = Cell::new(g.x, g.io_row);
        let hold_cell = Cell::new(g.x, g.hold_row);
        let io_pin = ssd_io_pins[j];
        let hold_pin = ssd_hold_pins[j];
        pin_of.insert(io_cell, io_pin);
        pin_of.insert(hold_cell, hold_pin);
        modules.push(ModuleSpec {
            id: ModuleId(modules.len() as u32),
            kind: ModuleKind::Ssd,
            loop_cells: Vec::new(),
            shared_pins: BTreeMap::new(),
            io_cell,
            hold_cell,
            io_pin,
            hold_pin,
            detector: detectors.contains(&(j as u32)),
        });
    }

    // Default reservoirs: two inputs and one output per vertical path side.
    let mut reservoirs = Vec::new();
    for x in [0, width - 1] {
        for (y, kind) in [
            (3, ReservoirKind::Input { fluid: None }),
            (5, ReservoirKind::Input { fluid: None }),
            (7, ReservoirKind::Output),
        ] {
            reservoirs.push(Reservoir {
                id: ReservoirId(reservoirs.len() as u32),
                kind,
                attach_cell: Cell::new(x, y),
            });
        }
    }

    let pin_count = (next_pin - 1) as usize;
    Ok(ArchitectureSpec {
        design_name: format!("EGFPC_{mixers}x{ssds}"),
        grid_width: width,
        grid_height: height,
        pitch_mm,
        modules,
        paths,
        reservoirs,
        pin_of,
        pin_count,
    })
}

/// Builds the single-bus baseline: one vertical 3-phase routing bus, mixers
/// on its right flank, SSDs on its left, and a single routing-buffer module
/// below the mixer stack. Every module pin is dedicated, which is what
/// drives this design's pin count up (65 for the 8-mixer, 14-SSD variant).
pub fn build_efppc(mixers: u32, ssds: u32, pitch_mm: f64) -> Result<ArchitectureSpec, GenError> {
    if mixers < 1 || ssds < 1 {
        return Err(GenError::TooFewModules { mixers, ssds });
    }
    if pitch_mm <= 0.0 {
        return Err(GenError::BadPitch(pitch_mm));
    }
    let m = mixers as i32;
    let s = ssds as i32;
    let width = 10;
    let height = (2 * s + 2).max(3 * m + 4);

    let mut pin_of = BTreeMap::new();
    let mut next_pin = 1u32;
    let mut take_pin = || {
        let p = PinId(next_pin);
        next_pin += 1;
        p
    };

    let bus_x = 2;
    let phase_pins = [take_pin(), take_pin(), take_pin()];
    let bus_cells: Vec<Cell> = (0..height).map(|y| Cell::new(bus_x, y)).collect();
    for (i, c) in bus_cells.iter().enumerate() {
        pin_of.insert(*c, phase_pins[i % 3]);
    }
    let paths = vec![RoutingPath {
        id: PathId(0),
        cells: bus_cells,
        phase_pins,
        orientation: Orientation::Vertical,
    }];

    let mut modules = Vec::new();

    // Mixers: 2x2 rings east of the bus, I/O on the bus-facing corner.
    let mixer_io_pins: Vec<PinId> = (0..m).map(|_| take_pin()).collect();
    let mixer_hold_pins: Vec<PinId> = (0..m).map(|_| take_pin()).collect();
    let mixer_c3_pins: Vec<PinId> = (0..m).map(|_| take_pin()).collect();
    let mixer_c4_pins: Vec<PinId> = (0..m).map(|_| take_pin()).collect();
    for k in 0..m {
        let y = 1 + 3 * k;
        let io_cell = Cell::new(3, y);
        let hold_cell = Cell::new(4, y);
        let c3 = Cell::new(4, y + 1);
        let c4 = Cell::new(3, y + 1);
        let loop_cells = vec![io_cell, hold_cell, c3, c4];
        let shared_pins: BTreeMap<Cell, PinId> = [
            (c3, mixer_c3_pins[k as usize]),
            (c4, mixer_c4_pins[k as usize]),
        ]
        .into_iter()
        .collect();
        pin_of.insert(io_cell, mixer_io_pins[k as usize]);
        pin_of.insert(hold_cell, mixer_hold_pins[k as usize]);
        pin_of.insert(c3, mixer_c3_pins[k as usize]);
        pin_of.insert(c4, mixer_c4_pins[k as usize]);
        modules.push(ModuleSpec {
            id: ModuleId(modules.len() as u32),
            kind: ModuleKind::Mixer,
            loop_cells,
            shared_pins,
            io_cell,
            hold_cell,
            io_pin: mixer_io_pins[k as usize],
            hold_pin: mixer_hold_pins[k as usize],
            detector: false,
        });
    }

    // SSDs: horizontal I/O+Hold pairs west of the bus, every other row.
    let ssd_io_pins: Vec<PinId> = (0..s).map(|_| take_pin()).collect();
    let ssd_hold_pins: Vec<PinId> = (0..s).map(|_| take_pin()).collect();
    for j in 0..s {
        let y = 1 + 2 * j;
        let io_cell = Cell::new(1, y);
        let hold_cell = Cell::new(0, y);
        pin_of.insert(io_cell, ssd_io_pins[j as usize]);
        pin_of.insert(hold_cell, ssd_hold_pins[j as usize]);
        modules.push(ModuleSpec {
            id: ModuleId(modules.len() as u32),
            kind: ModuleKind::Ssd,
            loop_cells: Vec::new(),
            shared_pins: BTreeMap::new(),
            io_cell,
            hold_cell,
            io_pin: ssd_io_pins[j as usize],
            hold_pin: ssd_hold_pins[j as usize],
            detector: true,
        });
    }

    // Single routing-buffer module below the mixer stack.
    let rb_y = 3 * m + 1;
    let rb_io = Cell::new(3, rb_y);
    let rb_hold = Cell::new(4, rb_y);
    let rb_io_pin = take_pin();
    let rb_hold_pin = take_pin();
    pin_of.insert(rb_io, rb_io_pin);
    pin_of.insert(rb_hold, rb_hold_pin);
    modules.push(ModuleSpec {
        id: ModuleId(modules.len() as u32),
        kind: ModuleKind::RoutingBuffer,
        loop_cells: Vec::new(),
        shared_pins: BTreeMap::new(),
        io_cell: rb_io,
        hold_cell: rb_hold,
        io_pin: rb_io_pin,
        hold_pin: rb_hold_pin,
        detector: false,
    });

    // I/O reservoirs at the two bus ends; the bottom end doubles as input
    // and output port.
    let reservoirs = vec![
        Reservoir {
            id: ReservoirId(0),
            kind: ReservoirKind::Input { fluid: None },
            attach_cell: Cell::new(bus_x, 0),
        },
        Reservoir {
            id: ReservoirId(1),
            kind: ReservoirKind::Input { fluid: None },
            attach_cell: Cell::new(bus_x, height - 1),
        },
        Reservoir {
            id: ReservoirId(2),
            kind: ReservoirKind::Output,
            attach_cell: Cell::new(bus_x, height - 1),
        },
    ];

    let pin_count = (next_pin - 1) as usize;
    Ok(ArchitectureSpec {
        design_name: format!("EFPPC_{mixers}"),
        grid_width: width,
        grid_height: height,
        pitch_mm,
        modules,
        paths,
        reservoirs,
        pin_of,
        pin_count,
    })
}

/// Rewires every mixer so each ring electrode position gets its own pin
/// (six mixing pins instead of four, still shared across modules at the
/// same relative position) — the older addressing whose rotation loop
/// fires eight electrodes per module. Exists for power comparisons.
pub fn with_dedicated_mixer_pins(spec: &ArchitectureSpec) -> ArchitectureSpec {
    let mut out = spec.clone();
    out.design_name = format!("{}-dedicated-mixing", spec.design_name);
    let mut next_pin = spec.pin_of.values().map(|p| p.0).max().unwrap_or(0) + 1;
    let mut pin_for_rel: BTreeMap<(i32, i32), PinId> = BTreeMap::new();
    for module in &mut out.modules {
        if module.kind != ModuleKind::Mixer {
            continue;
        }
        let min_x = module.loop_cells.iter().map(|c| c.x).min().unwrap_or(0);
        let min_y = module.loop_cells.iter().map(|c| c.y).min().unwrap_or(0);
        let cells: Vec<Cell> = module.shared_pins.keys().copied().collect();
        for cell in cells {
            let rel = (cell.x - min_x, cell.y - min_y);
            let pin = *pin_for_rel.entry(rel).or_insert_with(|| {
                let p = PinId(next_pin);
                next_pin += 1;
                p
            });
            module.shared_pins.insert(cell, pin);
            out.pin_of.insert(cell, pin);
        }
    }
    out.pin_count = out.pin_of.values().collect::<BTreeSet<_>>().len();
    out
}

/// Rewires the routing paths of `spec` so all vertical paths share one
/// 3-phase pin group and all horizontal paths share another — the addressing
/// scheme this design family moved away from. The result intentionally
/// fails `validate` (paths share pins); it exists for power comparisons.
pub fn with_grouped_routing_pins(spec: &ArchitectureSpec) -> ArchitectureSpec {
    let mut out = spec.clone();
    out.design_name = format!("{}-grouped-routing", spec.design_name);
    let vert: Option<[PinId; 3]> = spec
        .paths
        .iter()
        .find(|p| p.orientation == Orientation::Vertical)
        .map(|p| p.phase_pins);
    let horiz: Option<[PinId; 3]> = spec
        .paths
        .iter()
        .find(|p| p.orientation == Orientation::Horizontal)
        .map(|p| p.phase_pins);
    for path in &mut out.paths {
        let group = match path.orientation {
            Orientation::Vertical => vert,
            Orientation::Horizontal => horiz,
        };
        if let Some(pins) = group {
            path.phase_pins = pins;
            for (i, c) in path.cells.iter().enumerate() {
                out.pin_of.insert(*c, pins[i % 3]);
            }
        }
    }
    out.pin_count = out.pin_of.values().collect::<BTreeSet<_>>().len();
    out
}
