//! The window/timeline engine: executes the schedule as alternating
//! operation frames and transport windows, moving one droplet at a time
//! along the 3-phase paths while everything else holds or parks.

use super::*;
use crate::arch::{ArchitectureSpec, ModuleId, PathId};
use crate::assay::{BioassayGraph, NodeId, OpKind};
use crate::bind::Binding;
use crate::schedule::{children_in_order, Schedule, VisitId};
use std::collections::{BTreeMap, BTreeSet};

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum RouteError {
    #[error("routing failed for {droplet}: {reason}")]
    Failed { droplet: DropletId, reason: String },
    #[error("transport window deadlock at timestep {at}: no bounce SSD available")]
    WindowDeadlock { at: u32 },
    #[error("module {0} has no usable mixer rotation cycle")]
    BadMixer(u32),
    #[error("missing binding for {0}")]
    MissingBinding(String),
    #[error("module {0} I/O cell has no routing-path neighbor")]
    NoDoor(u32),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum LegFrom {
    Reservoir(NodeId),
    MixerHold(NodeId),
    VisitHold(VisitId),
    SplitEject(NodeId),
    Bounced(ModuleId),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum LegTo {
    VisitArrive(VisitId),
    MixPark(NodeId),
    MixMerge(NodeId),
    Output(NodeId),
}

#[derive(Debug, Clone, PartialEq)]
struct Leg {
    at: u32,
    edge: (NodeId, NodeId),
    from: LegFrom,
    to: LegTo,
}

/// Routes every droplet transport implied by the DAG edges with an empty
/// fault set.
pub fn route_assay(
    schedule: &Schedule,
    binding: &Binding,
    dag: &BioassayGraph,
    spec: &ArchitectureSpec,
) -> Result<RoutePlan, RouteError> {
    route_with_faults(schedule, binding, dag, spec, &BTreeSet::new())
}

/// Routes as `route_assay`, treating `faulty_cells` as unusable routing
/// electrodes; transports re-route through the remaining paths and fail
/// only when the faults disconnect source from destination.
pub fn route_with_faults(
    schedule: &Schedule,
    binding: &Binding,
    dag: &BioassayGraph,
    spec: &ArchitectureSpec,
    faulty_cells: &BTreeSet<Cell>,
) -> Result<RoutePlan, RouteError> {
    let mut router = Router::new(schedule, binding, dag, spec, faulty_cells)?;
    router.run()?;
    Ok(router.finish())
}

fn is_ssd_op(kind: &OpKind) -> bool {
    matches!(kind, OpKind::Split | OpKind::Detect | OpKind::Heat)
}

struct Router<'a> {
    schedule: &'a Schedule,
    binding: &'a Binding,
    dag: &'a BioassayGraph,
    spec: &'a ArchitectureSpec,
    faults: &'a BTreeSet<Cell>,
    adj: BTreeMap<Cell, Vec<Cell>>,
    cell_path: BTreeMap<Cell, (PathId, usize)>,
    op_visit: BTreeMap<NodeId, VisitId>,
    cycles: BTreeMap<ModuleId, Vec<Cell>>,
    shared_style: bool,

    t: u32,
    frames: Vec<Frame>,
    positions: BTreeMap<DropletId, Cell>,
    traj: BTreeMap<DropletId, Trajectory>,
    events: Vec<RouteEvent>,
    next_droplet: u32,
    droplet_of_edge: BTreeMap<(NodeId, NodeId), DropletId>,
    last_phase: BTreeMap<PathId, Option<u8>>,
    rot: BTreeMap<ModuleId, (NodeId, DropletId)>,
    rot_index: usize,
    op_frames: u32,
    transport_frames: u32,
}

impl<'a> Router<'a> {
    fn new(
        schedule: &'a Schedule,
        binding: &'a Binding,
        dag: &'a BioassayGraph,
        spec: &'a ArchitectureSpec,
        faults: &'a BTreeSet<Cell>,
    ) -> Result<Self, RouteError> {
        // Path graph over non-faulty routing cells, including junctions
        // between touching paths.
        let mut cell_path = BTreeMap::new();
        for p in &spec.paths {
            for (i, c) in p.cells.iter().enumerate() {
                cell_path.insert(*c, (p.id, i));
            }
        }
        let mut adj: BTreeMap<Cell, Vec<Cell>> = BTreeMap::new();
        for c in cell_path.keys() {
            if faults.contains(c) {
                continue;
            }
            let mut ns: Vec<Cell> = c
                .neighbors4()
                .into_iter()
                .filter(|n| cell_path.contains_key(n) && !faults.contains(n))
                .collect();
            ns.sort();
            adj.insert(*c, ns);
        }

        let mut op_visit = BTreeMap::new();
        for v in &schedule.visits {
            for op in &v.ops {
                op_visit.insert(*op, v.id);
            }
        }

        let mut cycles = BTreeMap::new();
        let mut shared_style = false;
        for m in spec.mixers() {
            let cycle = m.rotation_cycle().ok_or(RouteError::BadMixer(m.id.0))?;
            shared_style = !m.has_dedicated_ring_pins();
            cycles.insert(m.id, cycle);
        }

        Ok(Router {
            schedule,
            binding,
            dag,
            spec,
            faults,
            adj,
            cell_path,
            op_visit,
            cycles,
            shared_style,
            t: 0,
            frames: Vec::new(),
            positions: BTreeMap::new(),
            traj: BTreeMap::new(),
            events: Vec::new(),
            next_droplet: 0,
            droplet_of_edge: BTreeMap::new(),
            last_phase: spec.paths.iter().map(|p| (p.id, None)).collect(),
            rot: BTreeMap::new(),
            rot_index: 0,
            op_frames: 0,
            transport_frames: 0,
        })
    }

    // ---- frame plumbing -------------------------------------------------

    fn push_frame(&mut self, mut frame: Frame, kind: FrameKind) {
        frame.t = self.t;
        frame.kind = Some(kind);
        for (d, c) in &frame.births {
            self.positions.insert(*d, *c);
            self.traj.insert(
                *d,
                Trajectory {
                    birth: self.t,
                    death: None,
                    waypoints: vec![(self.t, *c)],
                },
            );
        }
        for m in &frame.merges {
            for p in m.parents {
                self.positions.remove(&p);
                self.traj.get_mut(&p).expect("parent exists").death = Some(self.t);
            }
            self.positions.insert(m.child, m.at);
            self.traj.insert(
                m.child,
                Trajectory {
                    birth: self.t,
                    death: None,
                    waypoints: vec![(self.t, m.at)],
                },
            );
        }
        for s in &frame.splits {
            self.positions.remove(&s.parent);
            self.traj.get_mut(&s.parent).expect("parent exists").death = Some(self.t);
            for (d, c) in [s.stay, s.eject] {
                self.positions.insert(d, c);
                self.traj.insert(
                    d,
                    Trajectory {
                        birth: self.t,
                        death: None,
                        waypoints: vec![(self.t, c)],
                    },
                );
            }
        }
        for (d, c) in &frame.moves {
            self.positions.insert(*d, *c);
            self.traj
                .get_mut(d)
                .expect("moving droplet exists")
                .waypoints
                .push((self.t, *c));
        }
        for (d, _) in &frame.exits {
            self.positions.remove(d);
            self.traj.get_mut(d).expect("exiting droplet exists").death = Some(self.t);
        }
        match kind {
            FrameKind::Op { .. } => self.op_frames += 1,
            FrameKind::Transport => self.transport_frames += 1,
        }
        self.frames.push(frame);
        self.t += 1;
    }

    fn transport(&mut self, frame: Frame) {
        self.push_frame(frame, FrameKind::Transport);
    }

    fn new_droplet(&mut self) -> DropletId {
        let d = DropletId(self.next_droplet);
        self.next_droplet += 1;
        d
    }

    fn event(
        &mut self,
        kind: RouteEventKind,
        droplets: Vec<DropletId>,
        cell: Cell,
        module: Option<ModuleId>,
        reservoir: Option<crate::arch::ReservoirId>,
    ) {
        self.events.push(RouteEvent {
            kind,
            t: self.t.saturating_sub(1),
            droplets,
            cell,
            module,
            reservoir,
        });
    }

    // ---- path motion ----------------------------------------------------

    fn door_cell(&self, module: ModuleId) -> Result<Cell, RouteError> {
        let io = self.spec.module(module).io_cell;
        io.neighbors4()
            .into_iter()
            .filter(|n| self.cell_path.contains_key(n))
            .min()
            .ok_or(RouteError::NoDoor(module.0))
    }

    fn bfs(&self, from: Cell, to: Cell, droplet: DropletId) -> Result<Vec<Cell>, RouteError> {
        if self.faults.contains(&from) || self.faults.contains(&to) {
            return Err(RouteError::Failed {
                droplet,
                reason: format!("endpoint {from} or {to} is faulty"),
            });
        }
        if from == to {
            return Ok(vec![from]);
        }
        let mut prev: BTreeMap<Cell, Cell> = BTreeMap::new();
        let mut queue = std::collections::VecDeque::from([from]);
        let mut seen = BTreeSet::from([from]);
        while let Some(c) = queue.pop_front() {
            if c == to {
                let mut path = vec![to];
                let mut cur = to;
                while let Some(p) = prev.get(&cur) {
                    path.push(*p);
                    cur = *p;
                }
                path.reverse();
                return Ok(path);
            }
            for n in self.adj.get(&c).cloned().unwrap_or_default() {
                if seen.insert(n) {
                    prev.insert(n, c);
                    queue.push_back(n);
                }
            }
        }
        Err(RouteError::Failed {
            droplet,
            reason: format!("no conflict-free path from {from} to {to}"),
        })
    }

    /// Prepares the 3-phase discipline so firing `cell`'s phase is legal,
    /// emitting at most one spin frame; records the fire.
    fn fire_path_phase(&mut self, cell: Cell) {
        let (pid, ordinal) = self.cell_path[&cell];
        let want = (ordinal % 3) as u8;
        let last = self.last_phase[&pid];
        if last == Some(want) {
            // Fire the next phase in cyclic order to free the wanted one.
            let spin = (want + 1) % 3;
            let rep = self.spec.path(pid).cells.get(spin as usize).copied();
            let mut f = Frame::default();
            if let Some(rep) = rep {
                f.aux_fires.push(rep);
            }
            self.transport(f);
            self.last_phase.insert(pid, Some(spin));
        }
        self.last_phase.insert(pid, Some(want));
    }

    /// One droplet step onto a routing-path cell, honoring phase order.
    fn step_onto_path(&mut self, d: DropletId, cell: Cell) {
        self.fire_path_phase(cell);
        self.transport(Frame {
            moves: vec![(d, cell)],
            ..Frame::default()
        });
    }

    fn walk(&mut self, d: DropletId, route: &[Cell]) {
        for cell in route.iter().skip(1) {
            self.step_onto_path(d, *cell);
        }
    }

    // ---- module doors ---------------------------------------------------

    fn exit_to_door(&mut self, d: DropletId, module: ModuleId) -> Result<Cell, RouteError> {
        let m = self.spec.module(module);
        debug_assert_eq!(self.positions.get(&d), Some(&m.hold_cell));
        self.transport(Frame {
            moves: vec![(d, m.io_cell)],
            ..Frame::default()
        });
        let door = self.door_cell(module)?;
        self.step_onto_path(d, door);
        Ok(door)
    }

    fn park_into(&mut self, d: DropletId, module: ModuleId) {
        let m = self.spec.module(module);
        self.transport(Frame {
            moves: vec![(d, m.io_cell)],
            ..Frame::default()
        });
        self.transport(Frame {
            moves: vec![(d, m.hold_cell)],
            ..Frame::default()
        });
        self.event(
            RouteEventKind::ToModule,
            vec![d],
            m.io_cell,
            Some(module),
            None,
        );
    }

    /// `d2` waits on the door cell; the occupant slides off Hold while `d2`
    /// steps in, merging on the I/O electrode.
    fn merge_into(&mut self, d2: DropletId, module: ModuleId) -> Result<DropletId, RouteError> {
        let m = self.spec.module(module);
        let d1 = *self
            .positions
            .iter()
            .find(|(_, c)| **c == m.hold_cell)
            .map(|(d, _)| d)
            .ok_or(RouteError::Failed {
                droplet: d2,
                reason: format!("merge target module {} holds no droplet", module.0),
            })?;
        let child = self.new_droplet();
        self.transport(Frame {
            merges: vec![MergeRec {
                parents: [d1, d2],
                child,
                at: m.io_cell,
            }],
            ..Frame::default()
        });
        self.event(
            RouteEventKind::Merge,
            vec![d1, d2, child],
            m.io_cell,
            Some(module),
            None,
        );
        self.transport(Frame {
            moves: vec![(child, m.hold_cell)],
            ..Frame::default()
        });
        Ok(child)
    }

    /// Split choreography: Hold -> I/O, then I/O deactivates while Hold and
    /// the adjacent path electrode activate, yielding two droplets.
    fn split_at(
        &mut self,
        d: DropletId,
        module: ModuleId,
    ) -> Result<(DropletId, DropletId, Cell), RouteError> {
        let m = self.spec.module(module);
        debug_assert_eq!(self.positions.get(&d), Some(&m.hold_cell));
        self.transport(Frame {
            moves: vec![(d, m.io_cell)],
            ..Frame::default()
        });
        let door = self.door_cell(module)?;
        if self.faults.contains(&door) {
            return Err(RouteError::Failed {
                droplet: d,
                reason: format!("split eject cell {door} is faulty"),
            });
        }
        self.fire_path_phase(door);
        let stay = self.new_droplet();
        let eject = self.new_droplet();
        self.transport(Frame {
            splits: vec![SplitRec {
                parent: d,
                io: m.io_cell,
                stay: (stay, m.hold_cell),
                eject: (eject, door),
            }],
            ..Frame::default()
        });
        self.event(
            RouteEventKind::SplitEject,
            vec![d, stay, eject],
            m.io_cell,
            Some(module),
            None,
        );
        Ok((stay, eject, door))
    }

    // ---- mixing rotation ------------------------------------------------

    fn rotation_moves(&self, to_index: usize) -> Vec<(DropletId, Cell)> {
        self.rot
            .iter()
            .map(|(m, (_, d))| (*d, self.cycles[m][to_index]))
            .collect()
    }

    fn pause_rotation(&mut self) {
        if self.rot.is_empty() {
            return;
        }
        let len = self.cycles.values().next().map_or(0, |c| c.len());
        while self.rot_index != 0 {
            let next = (self.rot_index + 1) % len;
            let moves = self.rotation_moves(next);
            self.transport(Frame {
                moves,
                ..Frame::default()
            });
            self.rot_index = next;
        }
        if self.shared_style {
            // Park on the dedicated Hold electrodes so no shared pin needs
            // to stay active during transports.
            let moves: Vec<(DropletId, Cell)> = self
                .rot
                .iter()
                .map(|(m, (_, d))| (*d, self.spec.module(*m).hold_cell))
                .collect();
            self.transport(Frame {
                moves,
                ..Frame::default()
            });
        }
    }

    fn resume_rotation(&mut self) {
        if self.rot.is_empty() {
            return;
        }
        if self.shared_style {
            let moves = self.rotation_moves(0);
            self.transport(Frame {
                moves,
                ..Frame::default()
            });
        }
        self.rot_index = 0;
    }

    fn rotation_op_frame(&mut self, sigma: u32) {
        let mut frame = Frame::default();
        if !self.rot.is_empty() {
            let len = self.cycles.values().next().map_or(0, |c| c.len());
            let next = (self.rot_index + 1) % len;
            frame.moves = self.rotation_moves(next);
            self.rot_index = next;
        }
        self.push_frame(frame, FrameKind::Op { sigma });
    }

    // ---- droplets per edge ----------------------------------------------

    fn resolve_droplet(&mut self, edge: (NodeId, NodeId)) -> Result<DropletId, RouteError> {
        if let Some(d) = self.droplet_of_edge.get(&edge) {
            return Ok(*d);
        }
        // Pass-through ops carry their input droplet to their output edge.
        let (p, _) = edge;
        if matches!(self.dag.node(p).kind, OpKind::Detect | OpKind::Heat) {
            let grand = *self
                .dag
                .parents(p)
                .first()
                .ok_or(RouteError::MissingBinding(format!("{p} has no parent")))?;
            let d = self.resolve_droplet((grand, p))?;
            self.droplet_of_edge.insert(edge, d);
            return Ok(d);
        }
        Err(RouteError::MissingBinding(format!(
            "no droplet recorded for edge {}->{}",
            edge.0, edge.1
        )))
    }

    // ---- leg planning ---------------------------------------------------

    fn plan_legs(&self) -> Result<Vec<Leg>, RouteError> {
        let mut legs: Vec<Leg> = Vec::new();
        let mut edges = self.dag.edges.clone();
        edges.sort();
        let slot = |n: NodeId| self.schedule.slot(n);

        for (p, c) in edges {
            let pk = &self.dag.node(p).kind;
            let ck = &self.dag.node(c).kind;
            let visit = self.schedule.visit_of_edge.get(&(p, c)).copied();
            let dest = |to_legs: &mut Vec<Leg>, at: u32, from: LegFrom| {
                let to = match ck {
                    OpKind::Mix => LegTo::MixPark(c), // role fixed in post-pass
                    OpKind::Output => LegTo::Output(c),
                    _ => unreachable!("SSD-op destinations use VisitArrive"),
                };
                to_legs.push(Leg {
                    at,
                    edge: (p, c),
                    from,
                    to,
                });
            };

            match pk {
                OpKind::Dispense { .. } => {
                    let from = LegFrom::Reservoir(p);
                    if is_ssd_op(ck) {
                        let v = self.op_visit[&c];
                        legs.push(Leg {
                            at: self.schedule.visit(v).arrive_ts,
                            edge: (p, c),
                            from,
                            to: LegTo::VisitArrive(v),
                        });
                    } else {
                        dest(&mut legs, slot(c).start_ts, from);
                    }
                }
                OpKind::Mix => {
                    let from = LegFrom::MixerHold(p);
                    match visit {
                        Some(v) => {
                            let arrive = self.schedule.visit(v).arrive_ts;
                            legs.push(Leg {
                                at: arrive,
                                edge: (p, c),
                                from,
                                to: LegTo::VisitArrive(v),
                            });
                            if !is_ssd_op(ck) {
                                dest(&mut legs, slot(c).start_ts, LegFrom::VisitHold(v));
                            }
                        }
                        None => {
                            // Direct hand-off; an in-place hand-off (same
                            // mixer) needs no transport at all.
                            if matches!(ck, OpKind::Mix)
                                && self.binding.module(p).is_some()
                                && self.binding.module(p) == self.binding.module(c)
                            {
                                continue;
                            }
                            dest(&mut legs, slot(c).start_ts, from);
                        }
                    }
                }
                OpKind::Split => {
                    let kids = children_in_order(self.dag, p);
                    let split_visit = self.op_visit[&p];
                    if kids.first() == Some(&c) {
                        // Staying child: only leaves when consumed outside.
                        if !is_ssd_op(ck) {
                            dest(&mut legs, slot(c).start_ts, LegFrom::VisitHold(split_visit));
                        }
                    } else {
                        let from = LegFrom::SplitEject(p);
                        match visit {
                            Some(v) => {
                                legs.push(Leg {
                                    at: self.schedule.visit(v).arrive_ts,
                                    edge: (p, c),
                                    from,
                                    to: LegTo::VisitArrive(v),
                                });
                                if !is_ssd_op(ck) {
                                    dest(&mut legs, slot(c).start_ts, LegFrom::VisitHold(v));
                                }
                            }
                            None => dest(&mut legs, slot(c).start_ts, from),
                        }
                    }
                }
                OpKind::Detect | OpKind::Heat => {
                    if !is_ssd_op(ck) {
                        let v = self.op_visit[&p];
                        dest(&mut legs, slot(c).start_ts, LegFrom::VisitHold(v));
                    }
                    // SSD-op children continue in the same visit: no leg.
                }
                OpKind::Output => unreachable!("outputs have no children"),
            }
        }

        // Resolve merge roles: per mix, the smaller-parent leg parks first;
        // a lone leg merges with the in-place droplet.
        let mut per_mix: BTreeMap<NodeId, Vec<usize>> = BTreeMap::new();
        for (i, leg) in legs.iter().enumerate() {
            if let LegTo::MixPark(c) = leg.to {
                per_mix.entry(c).or_default().push(i);
            }
        }
        for (_, ids) in per_mix {
            match ids.len() {
                2 => {
                    let a = legs[ids[0]].edge.0;
                    let b = legs[ids[1]].edge.0;
                    let (park, merge) = if a <= b {
                        (ids[0], ids[1])
                    } else {
                        (ids[1], ids[0])
                    };
                    if let LegTo::MixPark(c) = legs[merge].to {
                        legs[merge].to = LegTo::MixMerge(c);
                    }
                    let _ = park;
                }
                1 => {
                    if let LegTo::MixPark(c) = legs[ids[0]].to {
                        legs[ids[0]].to = LegTo::MixMerge(c);
                    }
                }
                _ => {}
            }
        }
        Ok(legs)
    }

    // ---- window execution -----------------------------------------------

    fn source_module(&self, leg: &Leg) -> Option<ModuleId> {
        match leg.from {
            LegFrom::Reservoir(_) => None,
            LegFrom::MixerHold(p) => self.binding.module(p),
            LegFrom::VisitHold(v) => self.binding.visit_ssd.get(&v).copied(),
            LegFrom::SplitEject(p) => self
                .op_visit
                .get(&p)
                .and_then(|v| self.binding.visit_ssd.get(v))
                .copied(),
            LegFrom::Bounced(m) => Some(m),
        }
    }

    fn dest_module(&self, leg: &Leg) -> Option<ModuleId> {
        match leg.to {
            LegTo::VisitArrive(v) => self.binding.visit_ssd.get(&v).copied(),
            LegTo::MixPark(c) | LegTo::MixMerge(c) => self.binding.module(c),
            LegTo::Output(_) => None,
        }
    }

    fn order_window_legs(
        &mut self,
        mut legs: Vec<Leg>,
        sigma: u32,
    ) -> Result<Vec<Leg>, RouteError> {
        let mut ordered = Vec::with_capacity(legs.len());
        let mut bounces = 0usize;
        while !legs.is_empty() {
            let mut progressed = false;
            'scan: for i in 0..legs.len() {
                let leg = &legs[i];
                // A leg is ready when no other pending leg must precede it.
                for (j, other) in legs.iter().enumerate() {
                    if i == j {
                        continue;
                    }
                    if self.must_precede(other, leg) {
                        continue 'scan;
                    }
                }
                let leg = legs.remove(i);
                ordered.push(leg);
                progressed = true;
                break;
            }
            if !progressed {
                // Circular occupancy: bounce one pending leg's droplet
                // through a free SSD so its source module empties.
                if bounces >= legs.len() {
                    return Err(RouteError::WindowDeadlock { at: sigma });
                }
                bounces += 1;
                let idx = bounces - 1;
                let leg = legs[idx].clone();
                let bounce = self.bounce_module(&legs, sigma)?;
                let d = self.leg_source_to_door(&leg)?;
                let target_door = self.door_cell(bounce)?;
                let here = self.positions[&d];
                let route = self.bfs(here, target_door, d)?;
                self.walk(d, &route);
                self.park_into(d, bounce);
                legs[idx].from = LegFrom::Bounced(bounce);
            }
        }
        Ok(ordered)
    }

    /// The visit a leg arrives into / departs from, when any.
    fn arrives_into_visit(leg: &Leg) -> Option<VisitId> {
        match leg.to {
            LegTo::VisitArrive(v) => Some(v),
            _ => None,
        }
    }

    fn departs_from_visit(&self, leg: &Leg) -> Option<VisitId> {
        match leg.from {
            LegFrom::VisitHold(v) => Some(v),
            LegFrom::SplitEject(p) => self.op_visit.get(&p).copied(),
            _ => None,
        }
    }

    fn must_precede(&self, a: &Leg, b: &Leg) -> bool {
        // In-visit lifecycle: arrival happens before the split runs and
        // before anything departs the same visit.
        if let (Some(va), Some(vb)) = (Self::arrives_into_visit(a), self.departs_from_visit(b)) {
            if va == vb {
                return true;
            }
        }
        if let (Some(va), Some(vb)) = (self.departs_from_visit(a), Self::arrives_into_visit(b)) {
            if va == vb {
                return false; // same visit: the reverse order holds
            }
        }
        // Split execution waits for its input droplet even when the input
        // comes from a mixer directly (no arrival leg in this window).
        if let LegFrom::SplitEject(p) = b.from {
            if let Some(parent) = self.dag.parents(p).first() {
                if a.edge == (*parent, p) {
                    return true;
                }
            }
        }
        if let LegFrom::SplitEject(p) = a.from {
            if let Some(parent) = self.dag.parents(p).first() {
                if b.edge == (*parent, p) {
                    return false;
                }
            }
            // Departures from the split's visit wait for the split itself.
            if let LegFrom::VisitHold(v) = b.from {
                if self.op_visit.get(&p) == Some(&v) {
                    return true;
                }
            }
        }
        // Park before merge on the same mixer.
        if let (LegTo::MixPark(ca), LegTo::MixMerge(cb)) = (&a.to, &b.to) {
            if ca == cb {
                return true;
            }
        }
        // Vacate a module before delivering into it.
        if let (Some(fa), Some(tb)) = (self.source_module(a), self.dest_module(b)) {
            if fa == tb {
                return true;
            }
        }
        false
    }

    fn bounce_module(&self, pending: &[Leg], sigma: u32) -> Result<ModuleId, RouteError> {
        let mut used: BTreeSet<ModuleId> = BTreeSet::new();
        for leg in pending {
            used.extend(self.source_module(leg));
            used.extend(self.dest_module(leg));
        }
        self.binding
            .free_ssds_at(self.schedule, self.spec, sigma)
            .into_iter()
            .find(|m| !used.contains(m))
            .ok_or(RouteError::WindowDeadlock { at: sigma })
    }

    /// Brings the leg's droplet out to a path cell and returns it; for
    /// ejected split children this runs the split choreography.
    fn leg_source_to_door(&mut self, leg: &Leg) -> Result<DropletId, RouteError> {
        match leg.from {
            LegFrom::Reservoir(p) => {
                let r = self
                    .binding
                    .reservoir(p)
                    .ok_or_else(|| RouteError::MissingBinding(format!("dispense {p}")))?;
                let attach = self.spec.reservoir(r).attach_cell;
                if self.faults.contains(&attach) {
                    return Err(RouteError::Failed {
                        droplet: DropletId(self.next_droplet),
                        reason: format!("reservoir attach cell {attach} is faulty"),
                    });
                }
                let d = self.new_droplet();
                self.fire_path_phase(attach);
                self.transport(Frame {
                    births: vec![(d, attach)],
                    ..Frame::default()
                });
                self.event(RouteEventKind::Dispense, vec![d], attach, None, Some(r));
                self.droplet_of_edge.insert(leg.edge, d);
                Ok(d)
            }
            LegFrom::MixerHold(p) => {
                let m = self
                    .binding
                    .module(p)
                    .ok_or_else(|| RouteError::MissingBinding(format!("mix {p}")))?;
                let d = self.resolve_droplet(leg.edge)?;
                self.exit_to_door(d, m)?;
                Ok(d)
            }
            LegFrom::VisitHold(v) => {
                let m = *self
                    .binding
                    .visit_ssd
                    .get(&v)
                    .ok_or_else(|| RouteError::MissingBinding(format!("visit{}", v.0)))?;
                let d = self.resolve_droplet(leg.edge)?;
                self.exit_to_door(d, m)?;
                Ok(d)
            }
            LegFrom::SplitEject(p) => {
                let v = self.op_visit[&p];
                let m = *self
                    .binding
                    .visit_ssd
                    .get(&v)
                    .ok_or_else(|| RouteError::MissingBinding(format!("visit{}", v.0)))?;
                let parent = *self.dag.parents(p).first().expect("split has a parent");
                let d_in = self.resolve_droplet((parent, p))?;
                let (stay, eject, _door) = self.split_at(d_in, m)?;
                let kids = children_in_order(self.dag, p);
                self.droplet_of_edge.insert((p, kids[0]), stay);
                self.droplet_of_edge.insert((p, kids[1]), eject);
                Ok(eject)
            }
            LegFrom::Bounced(m) => {
                let d = self.resolve_droplet(leg.edge)?;
                self.exit_to_door(d, m)?;
                Ok(d)
            }
        }
    }

    fn exec_leg(&mut self, leg: &Leg) -> Result<(), RouteError> {
        let d = self.leg_source_to_door(leg)?;
        let here = self.positions[&d];
        match leg.to {
            LegTo::VisitArrive(v) => {
                let m = *self
                    .binding
                    .visit_ssd
                    .get(&v)
                    .ok_or_else(|| RouteError::MissingBinding(format!("visit{}", v.0)))?;
                let door = self.door_cell(m)?;
                let route = self.bfs(here, door, d)?;
                self.walk(d, &route);
                self.park_into(d, m);
                self.droplet_of_edge.insert(leg.edge, d);
            }
            LegTo::MixPark(c) => {
                let m = self
                    .binding
                    .module(c)
                    .ok_or_else(|| RouteError::MissingBinding(format!("mix {c}")))?;
                let door = self.door_cell(m)?;
                let route = self.bfs(here, door, d)?;
                self.walk(d, &route);
                self.park_into(d, m);
                self.droplet_of_edge.insert(leg.edge, d);
            }
            LegTo::MixMerge(c) => {
                let m = self
                    .binding
                    .module(c)
                    .ok_or_else(|| RouteError::MissingBinding(format!("mix {c}")))?;
                let door = self.door_cell(m)?;
                let route = self.bfs(here, door, d)?;
                self.walk(d, &route);
                let child = self.merge_into(d, m)?;
                let kids = children_in_order(self.dag, c);
                if let Some(&kid) = kids.first() {
                    self.droplet_of_edge.insert((c, kid), child);
                }
                self.rot.insert(m, (c, child));
            }
            LegTo::Output(o) => {
                let r = self
                    .binding
                    .reservoir(o)
                    .ok_or_else(|| RouteError::MissingBinding(format!("output {o}")))?;
                let attach = self.spec.reservoir(r).attach_cell;
                let route = self.bfs(here, attach, d)?;
                self.walk(d, &route);
                let at = self.positions[&d];
                self.transport(Frame {
                    exits: vec![(d, at)],
                    ..Frame::default()
                });
                self.event(RouteEventKind::ToOutput, vec![d], at, None, Some(r));
            }
        }
        Ok(())
    }

    // ---- main loop --------------------------------------------------------

    fn run(&mut self) -> Result<(), RouteError> {
        let legs = self.plan_legs()?;
        let mut by_sigma: BTreeMap<u32, Vec<Leg>> = BTreeMap::new();
        for leg in legs {
            by_sigma.entry(leg.at).or_default().push(leg);
        }
        let span = self.schedule.span;
        for sigma in 0..=span {
            if let Some(legs) = by_sigma.remove(&sigma) {
                self.pause_rotation();
                // Finished mixes leave the rotation set; their droplets sit
                // parked on Hold awaiting their outbound leg.
                let schedule = self.schedule;
                self.rot
                    .retain(|_, (mix, _)| schedule.slot(*mix).end_ts > sigma);
                let ordered = self.order_window_legs(legs, sigma)?;
                for leg in &ordered {
                    self.exec_leg(leg)?;
                }
                self.rot
                    .retain(|_, (mix, _)| schedule.slot(*mix).end_ts > sigma);
                self.resume_rotation();
            }
            if sigma < span {
                self.rotation_op_frame(sigma);
            }
        }
        Ok(())
    }

    fn finish(self) -> RoutePlan {
        RoutePlan {
            trajectories: self.traj,
            events: self.events,
            frames: self.frames,
            op_frames: self.op_frames,
            transport_frames: self.transport_frames,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::arch::build_egfpc;
    use crate::assay::{gen_invitro, gen_pcr, DurationTable};
    use crate::bind::left_edge_bind;
    use crate::route::{check_fluidic, check_phase_spacing};
    use crate::schedule::list_schedule;

    fn run_pipeline(
        dag: &BioassayGraph,
        faults: &BTreeSet<Cell>,
    ) -> Result<(ArchitectureSpec, RoutePlan), RouteError> {
        let spec = build_egfpc(4, 8, 1.0, &(0..8).collect::<BTreeSet<_>>()).unwrap();
        let d = DurationTable::default();
        let s = list_schedule(dag, &spec, &d).unwrap();
        let b = left_edge_bind(&s, dag, &spec).unwrap();
        let plan = route_with_faults(&s, &b, dag, &spec, faults)?;
        Ok((spec, plan))
    }

    #[test]
    fn single_chain_routes_cleanly() {
        let dag = gen_invitro(1, 1);
        let (spec, plan) = run_pipeline(&dag, &BTreeSet::new()).unwrap();
        assert!(check_fluidic(&plan).is_empty());
        assert!(check_phase_spacing(&plan, &spec).is_empty());
        assert_eq!(plan.op_frames, 810);
        assert!(plan.transport_frames > 0);
        // One merge (the mix), one dispense per reagent, one output exit.
        let merges = plan
            .events
            .iter()
            .filter(|e| e.kind == RouteEventKind::Merge)
            .count();
        assert_eq!(merges, 1);
        let dispenses = plan
            .events
            .iter()
            .filter(|e| e.kind == RouteEventKind::Dispense)
            .count();
        assert_eq!(dispenses, 2);
        let outs = plan
            .events
            .iter()
            .filter(|e| e.kind == RouteEventKind::ToOutput)
            .count();
        assert_eq!(outs, 1);
    }

    #[test]
    fn pcr_routes_cleanly() {
        let dag = gen_pcr();
        let (spec, plan) = run_pipeline(&dag, &BTreeSet::new()).unwrap();
        assert!(check_fluidic(&plan).is_empty());
        assert!(check_phase_spacing(&plan, &spec).is_empty());
        let merges = plan
            .events
            .iter()
            .filter(|e| e.kind == RouteEventKind::Merge)
            .count();
        assert_eq!(merges, 7);
    }

    #[test]
    fn faults_reroute_through_other_paths() {
        let dag = gen_invitro(1, 1);
        let (_, clean) = run_pipeline(&dag, &BTreeSet::new()).unwrap();
        // Cut the left vertical path below the top junction; transports from
        // left-side reservoirs must detour, never getting shorter.
        let faults: BTreeSet<Cell> = [Cell::new(0, 3)].into_iter().collect();
        match run_pipeline(&dag, &faults) {
            Ok((_, faulty)) => {
                assert!(check_fluidic(&faulty).is_empty());
                let clean_moves: usize = clean.trajectories.values().map(|t| t.moves()).sum();
                let faulty_moves: usize = faulty.trajectories.values().map(|t| t.moves()).sum();
                assert!(faulty_moves >= clean_moves);
            }
            Err(RouteError::Failed { .. }) => {} // acceptable when a reservoir is cut off
            Err(e) => panic!("unexpected error: {e}"),
        }
    }

    #[test]
    fn disconnecting_faults_fail() {
        let dag = gen_invitro(1, 1);
        // Sever both vertical paths fully: reservoirs become unreachable.
        let mut faults = BTreeSet::new();
        for y in 0..11 {
            faults.insert(Cell::new(0, y));
            faults.insert(Cell::new(10, y));
        }
        assert!(matches!(
            run_pipeline(&dag, &faults),
            Err(RouteError::Failed { .. })
        ));
    }

    #[test]
    fn empty_fault_set_matches_plain_routing() {
        let dag = gen_invitro(1, 2);
        let (_, a) = run_pipeline(&dag, &BTreeSet::new()).unwrap();
        let spec = build_egfpc(4, 8, 1.0, &(0..8).collect::<BTreeSet<_>>()).unwrap();
        let d = DurationTable::default();
        let s = list_schedule(&dag, &spec, &d).unwrap();
        let bind = left_edge_bind(&s, &dag, &spec).unwrap();
        let b = route_assay(&s, &bind, &dag, &spec).unwrap();
        assert_eq!(a, b);
    }
}
