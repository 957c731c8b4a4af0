//! Shared test oracles, kept independent of the implementation paths they
//! check.
#![allow(dead_code, clippy::type_complexity)] // each test binary uses its own subset

use dmfb_core::arch::ArchitectureSpec;
use dmfb_core::assay::{BioassayGraph, DurationTable, NodeId, OpKind, OpNode};
use dmfb_core::geom::Cell;
use std::collections::{BTreeMap, BTreeSet};

/// Deterministic 64-bit generator for seed-fixed test cases.
pub struct SplitMix64(pub u64);

impl SplitMix64 {
    pub fn next(&mut self) -> u64 {
        self.0 = self.0.wrapping_add(0x9e3779b97f4a7c15);
        let mut z = self.0;
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
        z ^ (z >> 31)
    }

    pub fn below(&mut self, n: u64) -> u64 {
        self.next() % n.max(1)
    }
}

/// Random valid assay DAG with at most `max_nodes` nodes: dispenses feed
/// mixes/detects/splits and every loose droplet ends in an output.
pub fn random_dag(rng: &mut SplitMix64, max_nodes: usize) -> BioassayGraph {
    let mut g = BioassayGraph::default();
    let mut next = 0u32;
    let mut add = |g: &mut BioassayGraph, kind: OpKind| -> NodeId {
        let id = NodeId(next);
        next += 1;
        g.nodes.insert(
            id,
            OpNode {
                id,
                kind,
                duration_ts: None,
            },
        );
        id
    };

    let dispenses = 1 + rng.below(3) as usize;
    let mut alive: Vec<NodeId> = (0..dispenses)
        .map(|i| {
            add(
                &mut g,
                OpKind::Dispense {
                    fluid: format!("f{i}"),
                },
            )
        })
        .collect();

    while g.nodes.len() + alive.len() < max_nodes && !alive.is_empty() {
        match rng.below(4) {
            // Two distinct producers merge; a split's two branches may not
            // feed the same mix (that would duplicate the edge).
            0 if alive.len() >= 2 && alive.iter().collect::<BTreeSet<_>>().len() >= 2 => {
                let a = alive.remove(rng.below(alive.len() as u64) as usize);
                let bi = alive
                    .iter()
                    .position(|x| *x != a)
                    .expect("two distinct producers");
                let b = alive.remove(bi);
                let m = add(&mut g, OpKind::Mix);
                g.edges.push((a, m));
                g.edges.push((b, m));
                alive.push(m);
            }
            1 => {
                let a = alive.remove(rng.below(alive.len() as u64) as usize);
                let d = add(&mut g, OpKind::Detect);
                g.edges.push((a, d));
                alive.push(d);
            }
            2 if g.nodes.len() + alive.len() + 3 < max_nodes => {
                let a = alive.remove(rng.below(alive.len() as u64) as usize);
                let s = add(&mut g, OpKind::Split);
                g.edges.push((a, s));
                alive.push(s);
                alive.push(s);
            }
            _ => {
                let a = alive.remove(rng.below(alive.len() as u64) as usize);
                let o = add(&mut g, OpKind::Output);
                g.edges.push((a, o));
            }
        }
    }
    for a in alive {
        let o = NodeId(next);
        next += 1;
        g.nodes.insert(
            o,
            OpNode {
                id: o,
                kind: OpKind::Output,
                duration_ts: None,
            },
        );
        g.edges.push((a, o));
    }
    g
}

/// Exhaustive minimal-makespan scheduler for tiny DAGs under plain module
/// caps (no storage modeling): a valid lower bound on any richer model.
pub fn brute_force_optimal_span(
    dag: &BioassayGraph,
    durations: &DurationTable,
    mixers: u32,
    ssds: u32,
    inputs: u32,
) -> u32 {
    let ids: Vec<NodeId> = dag.nodes.keys().copied().collect();
    let index: BTreeMap<NodeId, usize> = ids.iter().enumerate().map(|(i, n)| (*n, i)).collect();
    let n = ids.len();
    assert!(n <= 16, "oracle is exponential");
    let duration: Vec<u32> = ids
        .iter()
        .map(|id| durations.duration_of(dag.node(*id)))
        .collect();
    let parents: Vec<Vec<usize>> = ids
        .iter()
        .map(|id| dag.parents(*id).iter().map(|p| index[p]).collect())
        .collect();
    let lane: Vec<u8> = ids
        .iter()
        .map(|id| match dag.node(*id).kind {
            OpKind::Mix => 0,
            OpKind::Detect | OpKind::Heat | OpKind::Split => 1,
            OpKind::Dispense { .. } => 2,
            OpKind::Output => 3,
        })
        .collect();
    let caps = [mixers, ssds, inputs, u32::MAX];

    // State: running ops with remaining end times and the done mask; search
    // branches over every subset of ready ops at each decision point.
    let mut best = u32::MAX;
    let mut memo: BTreeMap<(u32, Vec<(usize, u32)>), u32> = BTreeMap::new();

    fn ready_ops(
        n: usize,
        done: u32,
        running: &[(usize, u32)],
        parents: &[Vec<usize>],
    ) -> Vec<usize> {
        (0..n)
            .filter(|i| {
                done & (1 << i) == 0
                    && running.iter().all(|(r, _)| r != i)
                    && parents[*i].iter().all(|p| done & (1 << p) != 0)
            })
            .collect()
    }

    #[allow(clippy::too_many_arguments)]
    fn go(
        t: u32,
        done: u32,
        running: Vec<(usize, u32)>,
        n: usize,
        duration: &[u32],
        parents: &[Vec<usize>],
        lane: &[u8],
        caps: &[u32; 4],
        best: &mut u32,
        memo: &mut BTreeMap<(u32, Vec<(usize, u32)>), u32>,
    ) {
        if t >= *best {
            return;
        }
        if done == (1u32 << n) - 1 {
            *best = (*best).min(t);
            return;
        }
        let rel: Vec<(usize, u32)> = running.iter().map(|(i, e)| (*i, e - t)).collect();
        if let Some(prev) = memo.get(&(done, rel.clone())) {
            if *prev <= t {
                return;
            }
        }
        memo.insert((done, rel), t);

        let ready = ready_ops(n, done, &running, parents);
        let mut used = [0u32; 4];
        for (i, _) in &running {
            used[lane[*i] as usize] += 1;
        }
        // All subsets of ready that respect caps.
        let k = ready.len().min(12);
        'subset: for mask in 0..(1u32 << k) {
            let mut u = used;
            let mut next_running = running.clone();
            for (bit, op) in ready.iter().enumerate().take(k) {
                if mask & (1 << bit) != 0 {
                    let l = lane[*op] as usize;
                    u[l] += 1;
                    if u[l] > caps[l] {
                        continue 'subset;
                    }
                    next_running.push((*op, t + duration[*op]));
                }
            }
            // Finish instantaneous ops immediately.
            let mut next_done = done;
            next_running.retain(|(i, e)| {
                if *e <= t {
                    next_done |= 1 << i;
                    false
                } else {
                    true
                }
            });
            if next_done != done {
                go(
                    t,
                    next_done,
                    next_running,
                    n,
                    duration,
                    parents,
                    lane,
                    caps,
                    best,
                    memo,
                );
                continue;
            }
            if next_running.is_empty() {
                continue; // no progress without starting something
            }
            let t_next = next_running.iter().map(|(_, e)| *e).min().unwrap();
            let mut after_done = next_done;
            let after: Vec<(usize, u32)> = next_running
                .into_iter()
                .filter(|(i, e)| {
                    if *e <= t_next {
                        after_done |= 1 << i;
                        false
                    } else {
                        true
                    }
                })
                .collect();
            go(
                t_next, after_done, after, n, duration, parents, lane, caps, best, memo,
            );
        }
    }

    go(
        0,
        0,
        Vec::new(),
        n,
        &duration,
        &parents,
        &lane,
        &caps,
        &mut best,
        &mut memo,
    );
    best
}

/// Minimum colors for mix intervals = maximum overlap (interval graphs are
/// perfect); computed by an independent sweep.
pub fn interval_coloring_optimum(intervals: &[(u32, u32)]) -> usize {
    let mut events: Vec<(u32, i32)> = Vec::new();
    for (s, e) in intervals {
        if e > s {
            events.push((*s, 1));
            events.push((*e, -1));
        }
    }
    events.sort_by_key(|(t, d)| (*t, *d));
    let mut cur = 0i32;
    let mut peak = 0i32;
    for (_, d) in events {
        cur += d;
        peak = peak.max(cur);
    }
    peak as usize
}

/// Independent shortest-path oracle over the routable cells of a spec
/// (path cells, module I/O and Hold cells), for trajectory lower bounds.
pub fn bfs_distance(spec: &ArchitectureSpec, from: Cell, to: Cell) -> Option<u32> {
    let mut cells: BTreeSet<Cell> = BTreeSet::new();
    for p in &spec.paths {
        cells.extend(p.cells.iter().copied());
    }
    for m in &spec.modules {
        cells.insert(m.io_cell);
        cells.insert(m.hold_cell);
    }
    if !cells.contains(&from) || !cells.contains(&to) {
        return None;
    }
    let mut dist: BTreeMap<Cell, u32> = BTreeMap::new();
    dist.insert(from, 0);
    let mut queue = std::collections::VecDeque::from([from]);
    while let Some(c) = queue.pop_front() {
        let d = dist[&c];
        if c == to {
            return Some(d);
        }
        for nb in c.neighbors4() {
            if cells.contains(&nb) && !dist.contains_key(&nb) {
                dist.insert(nb, d + 1);
                queue.push_back(nb);
            }
        }
    }
    None
}
