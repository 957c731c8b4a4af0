//! Escape wire-routing of pin nets on a layered grid under an orthogonal
//! capacity constraint, using negotiated-congestion rip-up-and-reroute;
//! nets that cannot fit a layer are promoted to a fresh one.

use crate::arch::ArchitectureSpec;
use crate::geom::Cell;
use serde::Serialize;
use std::collections::{BTreeMap, BTreeSet, BinaryHeap};

/// Canonical undirected boundary between two adjacent cells.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub struct Boundary(pub Cell, pub Cell);

impl Boundary {
    fn new(a: Cell, b: Cell) -> Self {
        if a <= b {
            Boundary(a, b)
        } else {
            Boundary(b, a)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Net {
    pub id: u32,
    /// Electrode cells sharing this pin plus the escape terminal.
    pub terminals: Vec<Cell>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WireProblem {
    pub width: i32,
    pub height: i32,
    pub nets: Vec<Net>,
    pub ortho_capacity: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RoutedNet {
    pub net: u32,
    pub edges: Vec<Boundary>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct WireSolution {
    pub layers: Vec<Vec<RoutedNet>>,
}

impl WireSolution {
    pub fn layer_count(&self) -> usize {
        self.layers.len()
    }

    /// Per-layer `layer,net,x1,y1,x2,y2` segment rows.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("layer,net,x1,y1,x2,y2\n");
        for (i, layer) in self.layers.iter().enumerate() {
            for rn in layer {
                for b in &rn.edges {
                    s.push_str(&format!(
                        "{},{},{},{},{},{}\n",
                        i + 1,
                        rn.net,
                        b.0.x,
                        b.0.y,
                        b.1.x,
                        b.1.y
                    ));
                }
            }
        }
        s
    }
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum WireError {
    #[error("net {net} is structurally unroutable: terminal {cell} needs more crossings than 4 x capacity")]
    Unroutable { net: u32, cell: Cell },
    #[error("net {net} terminal {cell} lies outside the grid")]
    BadTerminal { net: u32, cell: Cell },
}

/// Builds the wire problem for an architecture: one net per pin over the
/// electrodes that share it, with an escape terminal on the perimeter point
/// nearest the net's first electrode.
pub fn problem_from_arch(spec: &ArchitectureSpec, ortho_capacity: u32) -> WireProblem {
    let mut by_pin: BTreeMap<u32, Vec<Cell>> = BTreeMap::new();
    for (cell, pin) in &spec.pin_of {
        by_pin.entry(pin.0).or_default().push(*cell);
    }
    let (w, h) = (spec.grid_width, spec.grid_height);
    let mut perimeter: Vec<Cell> = Vec::new();
    for x in 0..w {
        perimeter.push(Cell::new(x, 0));
        perimeter.push(Cell::new(x, h - 1));
    }
    for y in 0..h {
        perimeter.push(Cell::new(0, y));
        perimeter.push(Cell::new(w - 1, y));
    }
    perimeter.sort();
    perimeter.dedup();

    let nets = by_pin
        .into_iter()
        .map(|(id, mut cells)| {
            cells.sort();
            let first = cells[0];
            let escape = perimeter
                .iter()
                .min_by_key(|p| (p.manhattan(&first), p.y, p.x))
                .copied()
                .expect("grid has a perimeter");
            if !cells.contains(&escape) {
                cells.push(escape);
            }
            Net {
                id,
                terminals: cells,
            }
        })
        .collect();

    WireProblem {
        width: w,
        height: h,
        nets,
        ortho_capacity,
    }
}

struct Grid {
    width: i32,
    height: i32,
}

impl Grid {
    fn neighbors(&self, c: Cell) -> Vec<Cell> {
        c.neighbors4()
            .into_iter()
            .filter(|n| n.in_bounds(self.width, self.height))
            .collect()
    }
}

/// Iterative nearest-terminal Steiner join under the current edge costs.
/// Returns the tree's boundary set.
fn route_net(grid: &Grid, net: &Net, cost: impl Fn(Boundary) -> u64) -> BTreeSet<Boundary> {
    let mut tree_cells: BTreeSet<Cell> = BTreeSet::new();
    let mut tree_edges: BTreeSet<Boundary> = BTreeSet::new();
    let mut todo: BTreeSet<Cell> = net.terminals.iter().copied().collect();
    let first = *todo.iter().next().expect("net has terminals");
    tree_cells.insert(first);
    todo.remove(&first);

    while !todo.is_empty() {
        // Multi-source Dijkstra from the whole tree to the nearest pending
        // terminal.
        let mut dist: BTreeMap<Cell, u64> = BTreeMap::new();
        let mut prev: BTreeMap<Cell, Cell> = BTreeMap::new();
        let mut heap: BinaryHeap<std::cmp::Reverse<(u64, Cell)>> = BinaryHeap::new();
        for c in &tree_cells {
            dist.insert(*c, 0);
            heap.push(std::cmp::Reverse((0, *c)));
        }
        let mut reached: Option<Cell> = None;
        while let Some(std::cmp::Reverse((d, c))) = heap.pop() {
            if dist.get(&c).copied().unwrap_or(u64::MAX) < d {
                continue;
            }
            if todo.contains(&c) {
                reached = Some(c);
                break;
            }
            for n in grid.neighbors(c) {
                let nd = d + cost(Boundary::new(c, n));
                if nd < dist.get(&n).copied().unwrap_or(u64::MAX) {
                    dist.insert(n, nd);
                    prev.insert(n, c);
                    heap.push(std::cmp::Reverse((nd, n)));
                }
            }
        }
        let goal = reached.expect("connected grid reaches every terminal");
        todo.remove(&goal);
        let mut cur = goal;
        while !tree_cells.contains(&cur) {
            let p = prev[&cur];
            tree_edges.insert(Boundary::new(p, cur));
            tree_cells.insert(cur);
            cur = p;
        }
    }
    tree_edges
}

fn usage_of(routes: &BTreeMap<u32, BTreeSet<Boundary>>) -> BTreeMap<Boundary, u32> {
    let mut usage: BTreeMap<Boundary, u32> = BTreeMap::new();
    for edges in routes.values() {
        for e in edges {
            *usage.entry(*e).or_default() += 1;
        }
    }
    usage
}

/// Negotiated-congestion routing of one layer: rip-up-and-reroute with
/// history costs, at most `max_iters` rounds. Returns the legally fitting
/// routes and the nets that must move to another layer.
fn route_layer(grid: &Grid, nets: &[Net], cap: u32, max_iters: u32) -> (Vec<RoutedNet>, Vec<Net>) {
    let mut history: BTreeMap<Boundary, u64> = BTreeMap::new();
    let mut routes: BTreeMap<u32, BTreeSet<Boundary>> = BTreeMap::new();
    // present-overuse factor starts at 0.5 and doubles each iteration;
    // scaled by 2 to stay in integers.
    let mut p_x2: u64 = 1;

    for _ in 0..max_iters {
        for net in nets {
            routes.remove(&net.id);
            let usage = usage_of(&routes);
            let cost = |e: Boundary| -> u64 {
                let used = usage.get(&e).copied().unwrap_or(0);
                let over = (used + 1).saturating_sub(cap) as u64;
                let hist = history.get(&e).copied().unwrap_or(0);
                // base(=2) * (1 + history + p * overuse), everything x2.
                2 + 2 * hist + p_x2 * over
            };
            let edges = route_net(grid, net, cost);
            routes.insert(net.id, edges);
        }
        let usage = usage_of(&routes);
        let overused: Vec<(Boundary, u32)> = usage
            .iter()
            .filter(|(_, n)| **n > cap)
            .map(|(e, n)| (*e, *n - cap))
            .collect();
        if overused.is_empty() {
            let fitted = nets
                .iter()
                .map(|n| RoutedNet {
                    net: n.id,
                    edges: routes[&n.id].iter().copied().collect(),
                })
                .collect();
            return (fitted, Vec::new());
        }
        for (e, over) in overused {
            *history.entry(e).or_default() += over as u64;
        }
        p_x2 = p_x2.saturating_mul(2);
    }

    // Convergence cap hit: keep the nets that fit legally in order, defer
    // the rest.
    let mut kept: Vec<RoutedNet> = Vec::new();
    let mut kept_usage: BTreeMap<Boundary, u32> = BTreeMap::new();
    let mut deferred: Vec<Net> = Vec::new();
    for net in nets {
        let edges = &routes[&net.id];
        let fits = edges
            .iter()
            .all(|e| kept_usage.get(e).copied().unwrap_or(0) < cap);
        if fits {
            for e in edges {
                *kept_usage.entry(*e).or_default() += 1;
            }
            kept.push(RoutedNet {
                net: net.id,
                edges: edges.iter().copied().collect(),
            });
        } else {
            deferred.push(net.clone());
        }
    }
    if kept.is_empty() {
        // Guarantee progress: the first net alone always fits an empty layer.
        let net = deferred.remove(0);
        let edges = route_net(grid, &net, |_| 1);
        kept.push(RoutedNet {
            net: net.id,
            edges: edges.into_iter().collect(),
        });
    }
    (kept, deferred)
}

pub const LAYER_ITER_CAP: u32 = 50;

/// Routes every net, opening fresh layers for unroutable residue, and
/// reports the per-layer wire segments. Deterministic for a given seed
/// (the seed rotates the net processing order).
pub fn escape_route(problem: &WireProblem, seed: u64) -> Result<WireSolution, WireError> {
    let grid = Grid {
        width: problem.width,
        height: problem.height,
    };
    for net in &problem.nets {
        let distinct: BTreeSet<Cell> = net.terminals.iter().copied().collect();
        for t in &net.terminals {
            if !t.in_bounds(problem.width, problem.height) {
                return Err(WireError::BadTerminal {
                    net: net.id,
                    cell: *t,
                });
            }
            // A terminal must be able to fan its connections out through
            // its cell boundaries; degree 0 (or a demanded degree beyond
            // 4 x capacity) can never route no matter how many layers.
            let degree = grid.neighbors(*t).len() as u32;
            if distinct.len() > 1 && degree == 0 {
                return Err(WireError::Unroutable {
                    net: net.id,
                    cell: *t,
                });
            }
            let multiplicity = net.terminals.iter().filter(|x| *x == t).count() as u32;
            if multiplicity > 4 * problem.ortho_capacity {
                return Err(WireError::Unroutable {
                    net: net.id,
                    cell: *t,
                });
            }
        }
    }

    let mut pending: Vec<Net> = problem.nets.clone();
    pending.sort_by_key(|n| n.id);
    if !pending.is_empty() {
        let rot = (seed as usize) % pending.len();
        pending.rotate_left(rot);
    }

    let mut solution = WireSolution::default();
    while !pending.is_empty() {
        let (kept, deferred) = route_layer(&grid, &pending, problem.ortho_capacity, LAYER_ITER_CAP);
        solution.layers.push(kept);
        pending = deferred;
    }
    Ok(solution)
}

/// Checks capacity on every boundary of every layer and connectivity of
/// every routed net; returns breach descriptions.
pub fn check_solution(problem: &WireProblem, solution: &WireSolution) -> Vec<String> {
    let mut bad = Vec::new();
    let mut seen: BTreeSet<u32> = BTreeSet::new();
    for (li, layer) in solution.layers.iter().enumerate() {
        let mut usage: BTreeMap<Boundary, u32> = BTreeMap::new();
        for rn in layer {
            if !seen.insert(rn.net) {
                bad.push(format!("net {} routed on more than one layer", rn.net));
            }
            for e in &rn.edges {
                *usage.entry(*e).or_default() += 1;
            }
            // Connectivity: union-find over the net's terminals and edges.
            let net = match problem.nets.iter().find(|n| n.id == rn.net) {
                Some(n) => n,
                None => {
                    bad.push(format!("layer {li} routes unknown net {}", rn.net));
                    continue;
                }
            };
            let mut reach: BTreeSet<Cell> = BTreeSet::new();
            let mut frontier = vec![net.terminals[0]];
            reach.insert(net.terminals[0]);
            while let Some(c) = frontier.pop() {
                for e in &rn.edges {
                    let other = if e.0 == c {
                        Some(e.1)
                    } else if e.1 == c {
                        Some(e.0)
                    } else {
                        None
                    };
                    if let Some(o) = other {
                        if reach.insert(o) {
                            frontier.push(o);
                        }
                    }
                }
            }
            for t in &net.terminals {
                if !reach.contains(t) {
                    bad.push(format!(
                        "net {} terminal {t} disconnected on layer {li}",
                        rn.net
                    ));
                }
            }
        }
        for (e, n) in usage {
            if n > problem.ortho_capacity {
                bad.push(format!(
                    "layer {li} boundary {}-{} carries {n} wires, cap {}",
                    e.0, e.1, problem.ortho_capacity
                ));
            }
        }
    }
    for net in &problem.nets {
        if !seen.contains(&net.id) {
            bad.push(format!("net {} never routed", net.id));
        }
    }
    bad
}

/// One `escape_route` per orthogonal capacity; returns (capacity, layers).
pub fn layer_sweep(
    spec: &ArchitectureSpec,
    capacities: impl IntoIterator<Item = u32>,
    seed: u64,
) -> Result<Vec<(u32, usize)>, WireError> {
    let mut out = Vec::new();
    for cap in capacities {
        let problem = problem_from_arch(spec, cap);
        let solution = escape_route(&problem, seed)?;
        out.push((cap, solution.layer_count()));
    }
    Ok(out)
}
