// SPDX-License-Identifier: Apache-2.0

//! Multi-level Louvain modularity optimization.
//!
//! Each level sweeps the nodes in a seeded random order, moving every node to
//! the neighbouring community with the largest modularity gain, until a full
//! sweep moves nothing. Communities are then collapsed into weighted nodes
//! (internal weight kept as a self loop) and the next level starts. The run
//! ends when a level makes no move.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::line_graph::LineGraph;

/// Gains at or below this are treated as zero.
const MIN_GAIN: f64 = 1e-12;

/// Weighted undirected graph; self loops kept apart so that the degree of
/// node `i` is `Σ adj weights + self_loop[i]`.
struct Level {
    offsets: Vec<usize>,
    targets: Vec<u32>,
    weights: Vec<f64>,
    self_loop: Vec<f64>,
}

impl Level {
    fn from_line_graph(lg: &LineGraph) -> Self {
        let n = lg.n_nodes();
        let mut offsets = Vec::with_capacity(n + 1);
        let mut targets = Vec::new();
        offsets.push(0);
        for v in 0..n as u32 {
            targets.extend_from_slice(lg.neighbors(v));
            offsets.push(targets.len());
        }
        let weights = vec![1.0; targets.len()];
        Self {
            offsets,
            targets,
            weights,
            self_loop: vec![0.0; n],
        }
    }

    fn n(&self) -> usize {
        self.self_loop.len()
    }

    fn adj(&self, v: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.offsets[v]..self.offsets[v + 1];
        self.targets[r.clone()]
            .iter()
            .zip(&self.weights[r])
            .map(|(&t, &w)| (t as usize, w))
    }

    fn degrees(&self) -> Vec<f64> {
        (0..self.n())
            .map(|v| self.adj(v).map(|(_, w)| w).sum::<f64>() + self.self_loop[v])
            .collect()
    }

    /// Collapses communities (dense ids `0..k`) into nodes.
    fn aggregate(&self, comm: &[usize], k: usize) -> Self {
        let mut self_loop = vec![0.0; k];
        let mut rows: Vec<Vec<(u32, f64)>> = vec![Vec::new(); k];
        for v in 0..self.n() {
            let cv = comm[v];
            self_loop[cv] += self.self_loop[v];
            for (u, w) in self.adj(v) {
                let cu = comm[u];
                if cu == cv {
                    self_loop[cv] += w;
                } else {
                    rows[cv].push((cu as u32, w));
                }
            }
        }
        let mut offsets = Vec::with_capacity(k + 1);
        let mut targets = Vec::new();
        let mut weights = Vec::new();
        offsets.push(0);
        for mut row in rows {
            row.sort_unstable_by_key(|&(t, _)| t);
            let mut i = 0;
            while i < row.len() {
                let t = row[i].0;
                let mut w = 0.0;
                while i < row.len() && row[i].0 == t {
                    w += row[i].1;
                    i += 1;
                }
                targets.push(t);
                weights.push(w);
            }
            offsets.push(targets.len());
        }
        Self {
            offsets,
            targets,
            weights,
            self_loop,
        }
    }
}

/// One level of local moves; returns dense community ids and whether any
/// node moved.
fn local_moves(level: &Level, two_m: f64, rng: &mut ChaCha8Rng) -> (Vec<usize>, bool) {
    let n = level.n();
    let k = level.degrees();
    let mut comm: Vec<usize> = (0..n).collect();
    let mut tot = k.clone();
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);

    let mut link = vec![0.0f64; n];
    let mut seen = vec![false; n];
    let mut touched: Vec<usize> = Vec::new();
    let mut moved_any = false;
    loop {
        let mut moved = false;
        for &v in &order {
            let old = comm[v];
            for (u, w) in level.adj(v) {
                let c = comm[u];
                if !seen[c] {
                    seen[c] = true;
                    touched.push(c);
                }
                link[c] += w;
            }
            tot[old] -= k[v];
            let gain = |c: usize, link_c: f64| link_c - tot[c] * k[v] / two_m;
            let mut best = old;
            let mut best_gain = gain(old, link[old]);
            for &c in &touched {
                let g = gain(c, link[c]);
                if g > best_gain + MIN_GAIN {
                    best = c;
                    best_gain = g;
                }
            }
            tot[best] += k[v];
            if best != old {
                comm[v] = best;
                moved = true;
            }
            for &c in &touched {
                link[c] = 0.0;
                seen[c] = false;
            }
            link[old] = 0.0;
            touched.clear();
        }
        if !moved {
            break;
        }
        moved_any = true;
    }
    (relabel(&comm), moved_any)
}

/// Dense ids in order of first appearance.
pub(crate) fn relabel(comm: &[usize]) -> Vec<usize> {
    let mut map = vec![usize::MAX; comm.iter().max().map_or(0, |&m| m + 1)];
    let mut next = 0;
    comm.iter()
        .map(|&c| {
            if map[c] == usize::MAX {
                map[c] = next;
                next += 1;
            }
            map[c]
        })
        .collect()
}

/// Community id per line node, dense from 0 in order of first appearance.
pub fn louvain_labels(lg: &LineGraph, seed: u64) -> Vec<usize> {
    let n = lg.n_nodes();
    if lg.n_edges() == 0 {
        return (0..n).collect();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut level = Level::from_line_graph(lg);
    let two_m = 2.0 * lg.n_edges() as f64;
    let mut membership: Vec<usize> = (0..n).collect();
    loop {
        let (comm, moved) = local_moves(&level, two_m, &mut rng);
        if !moved {
            break;
        }
        for m in membership.iter_mut() {
            *m = comm[*m];
        }
        let k = comm.iter().max().map_or(0, |&m| m + 1);
        if k == level.n() {
            break;
        }
        level = level.aggregate(&comm, k);
    }
    relabel(&membership)
}
