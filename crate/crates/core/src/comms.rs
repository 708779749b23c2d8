//! Per-tick proximity graph and one-hop location messages.
//!
//! Every agent listens to its `k` nearest other agents within `comm_range`
//! (euclidean, 3-D). The relation is directed: `a` hearing `b` does not imply
//! `b` hears `a`.

use std::collections::HashMap;
use std::fmt::Write as _;

/// Number of inbox slots per agent.
pub const INBOX_SLOTS: usize = 3;

/// A message is a raw 3-D location in meters.
pub type Message = [f64; 3];

/// Received messages, slot `i` from the receiver's `i`-th nearest neighbor.
pub type Inbox = [Option<Message>; INBOX_SLOTS];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Neighbor {
    pub agent: usize,
    pub distance: f64,
}

/// Directed k-nearest-within-range adjacency; `neighbors[i]` is sorted by
/// ascending distance with ties broken by agent index.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ProximityGraph {
    pub neighbors: Vec<Vec<Neighbor>>,
}

impl ProximityGraph {
    pub fn degree(&self, agent: usize) -> usize {
        self.neighbors[agent].len()
    }

    /// Edge list in `tick,src,dst,distance` form; `src` is the sender
    /// (neighbor) and `dst` the receiving agent.
    pub fn edges_csv(&self, tick: u64, out: &mut String) {
        for (dst, list) in self.neighbors.iter().enumerate() {
            for n in list {
                let _ = writeln!(out, "{tick},{},{dst},{:.3}", n.agent, n.distance);
            }
        }
    }
}

fn distance(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
}

fn by_distance_then_index(a: &Neighbor, b: &Neighbor) -> std::cmp::Ordering {
    a.distance
        .total_cmp(&b.distance)
        .then(a.agent.cmp(&b.agent))
}

/// Builds the graph with a horizontal hash of `comm_range`-sized cells, so
/// only the 3x3 block around an agent needs to be scanned.
pub fn build_graph(positions: &[[f64; 3]], comm_range: f64, k: usize) -> ProximityGraph {
    let n = positions.len();
    let mut neighbors = vec![Vec::new(); n];
    if k == 0 || n < 2 || !(comm_range > 0.0) {
        return ProximityGraph { neighbors };
    }

    let cell_of = |p: &[f64; 3]| -> (i64, i64) {
        (
            (p[0] / comm_range).floor() as i64,
            (p[2] / comm_range).floor() as i64,
        )
    };
    let mut cells: HashMap<(i64, i64), Vec<usize>> = HashMap::new();
    for (i, p) in positions.iter().enumerate() {
        cells.entry(cell_of(p)).or_default().push(i);
    }

    let mut candidates = Vec::new();
    for (i, p) in positions.iter().enumerate() {
        candidates.clear();
        let (cx, cz) = cell_of(p);
        for dz in -1..=1 {
            for dx in -1..=1 {
                let Some(bucket) = cells.get(&(cx + dx, cz + dz)) else {
                    continue;
                };
                for &j in bucket {
                    if j == i {
                        continue;
                    }
                    let d = distance(p, &positions[j]);
                    if d <= comm_range {
                        candidates.push(Neighbor {
                            agent: j,
                            distance: d,
                        });
                    }
                }
            }
        }
        candidates.sort_by(by_distance_then_index);
        neighbors[i].extend(candidates.iter().take(k).copied());
    }
    ProximityGraph { neighbors }
}

/// Fills each receiver's inbox from its neighbors' memories, slot by slot.
/// A neighbor with an empty memory leaves its slot empty.
pub fn exchange(graph: &ProximityGraph, memories: &[Option<Message>]) -> Vec<Inbox> {
    graph
        .neighbors
        .iter()
        .map(|list| {
            let mut inbox: Inbox = [None; INBOX_SLOTS];
            for (slot, n) in inbox.iter_mut().zip(list) {
                *slot = memories[n.agent];
            }
            inbox
        })
        .collect()
}

/// Overwrites the memory slot with the current position.
pub fn save_to_memory(memory: &mut Option<Message>, position: [f64; 3]) {
    *memory = Some(position);
}

/// Exhaustive O(n^2) construction used as a test oracle.
pub fn build_graph_brute(positions: &[[f64; 3]], comm_range: f64, k: usize) -> ProximityGraph {
    let neighbors = positions
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let mut all: Vec<Neighbor> = positions
                .iter()
                .enumerate()
                .filter(|&(j, _)| j != i)
                .map(|(j, q)| Neighbor {
                    agent: j,
                    distance: distance(p, q),
                })
                .filter(|nb| nb.distance <= comm_range)
                .collect();
            all.sort_by(by_distance_then_index);
            all.truncate(k);
            all
        })
        .collect();
    ProximityGraph { neighbors }
}
