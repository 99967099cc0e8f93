//! Barabási–Albert and Watts–Strogatz random graphs.

use std::collections::HashSet;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{Graph, NodeId};
use crate::rng::RngStream;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BaParams {
    pub n: usize,
    pub m: usize,
}

impl BaParams {
    pub fn validate(&self) -> Result<()> {
        if self.m == 0 || self.m >= self.n {
            return Err(Error::InvalidParams(format!(
                "BA requires 1 <= m < n, got n={} m={}",
                self.n, self.m
            )));
        }
        Ok(())
    }

    /// `m(m-1)/2` seed-clique edges plus `m` per grown node.
    pub fn expected_edges(&self) -> usize {
        self.m * (self.m - 1) / 2 + self.m * (self.n - self.m)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WsParams {
    pub n: usize,
    pub k: usize,
    pub p: f64,
}

impl WsParams {
    pub fn validate(&self) -> Result<()> {
        if self.k % 2 != 0 || self.k >= self.n || !(0.0..=1.0).contains(&self.p) {
            return Err(Error::InvalidParams(format!(
                "WS requires even k < n and p in [0,1], got n={} k={} p={}",
                self.n, self.k, self.p
            )));
        }
        Ok(())
    }

    pub fn expected_edges(&self) -> usize {
        self.n * self.k / 2
    }
}

/// Degree-proportional sampler: every edge endpoint is stored once, so a
/// uniform draw from the pool picks node `v` with probability
/// `deg(v) / sum(deg)`.
#[derive(Debug, Clone, Default)]
pub struct AttachmentPool {
    endpoints: Vec<NodeId>,
}

impl AttachmentPool {
    pub fn from_degrees(degrees: &[usize]) -> Self {
        let endpoints = degrees
            .iter()
            .enumerate()
            .flat_map(|(v, &d)| std::iter::repeat_n(v, d))
            .collect();
        AttachmentPool { endpoints }
    }

    pub fn add_edge(&mut self, a: NodeId, b: NodeId) {
        self.endpoints.push(a);
        self.endpoints.push(b);
    }

    pub fn is_empty(&self) -> bool {
        self.endpoints.is_empty()
    }

    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> NodeId {
        self.endpoints[rng.random_range(0..self.endpoints.len())]
    }
}

/// Preferential attachment grown from a complete graph on `m` nodes.
///
/// Each of the `n - m` new nodes draws `m` distinct targets, redrawing on
/// duplicates. With `m = 1` the seed node has degree zero, so the first
/// attachment picks it uniformly.
pub fn generate_ba(params: BaParams, rng: &mut RngStream) -> Result<Graph> {
    params.validate()?;
    let BaParams { n, m } = params;
    let mut edges: Vec<(NodeId, NodeId)> = Vec::with_capacity(params.expected_edges());
    let mut pool = AttachmentPool::default();
    for a in 0..m {
        for b in a + 1..m {
            edges.push((a, b));
            pool.add_edge(a, b);
        }
    }
    let mut targets: Vec<NodeId> = Vec::with_capacity(m);
    for v in m..n {
        targets.clear();
        while targets.len() < m {
            let t = if pool.is_empty() { rng.random_range(0..v) } else { pool.draw(rng) };
            if !targets.contains(&t) {
                targets.push(t);
            }
        }
        // Degrees are updated after the step so all m draws see the same
        // distribution.
        for &t in &targets {
            edges.push((t, v));
            pool.add_edge(t, v);
        }
    }
    Ok(Graph::from_simple_edges(n, &edges))
}

const WS_MAX_REWIRE_ATTEMPTS: usize = 100;

/// Ring lattice with each node joined to its `k/2` successors, then every
/// lattice edge `(i, i+j)` visited in `(i, j)` order and, with probability
/// `p`, moved to `(i, w)` for a uniform `w` that is neither `i` nor a current
/// neighbor of `i`. An edge whose 100 candidate draws all collide stays put.
pub fn generate_ws(params: WsParams, rng: &mut RngStream) -> Result<Graph> {
    params.validate()?;
    let WsParams { n, k, p } = params;
    let half = k / 2;
    let mut edges: Vec<(NodeId, NodeId)> = Vec::with_capacity(n * half);
    let mut adj: Vec<HashSet<NodeId>> = vec![HashSet::with_capacity(k + 2); n];
    for i in 0..n {
        for j in 1..=half {
            let t = (i + j) % n;
            edges.push((i, t));
            adj[i].insert(t);
            adj[t].insert(i);
        }
    }
    if p > 0.0 {
        for e in 0..edges.len() {
            if rng.random::<f64>() >= p {
                continue;
            }
            let (u, old) = edges[e];
            for _ in 0..WS_MAX_REWIRE_ATTEMPTS {
                let w = rng.random_range(0..n);
                if w != u && !adj[u].contains(&w) {
                    adj[u].remove(&old);
                    adj[old].remove(&u);
                    adj[u].insert(w);
                    adj[w].insert(u);
                    edges[e] = (u, w);
                    break;
                }
            }
        }
    }
    Ok(Graph::from_simple_edges(n, &edges))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ws(n: usize, k: usize, p: f64, seed: u64) -> Graph {
        generate_ws(WsParams { n, k, p }, &mut RngStream::new(seed, 0)).unwrap()
    }

    fn ba(n: usize, m: usize, seed: u64) -> Graph {
        generate_ba(BaParams { n, m }, &mut RngStream::new(seed, 0)).unwrap()
    }

    #[test]
    fn rejects_bad_params() {
        let mut r = RngStream::new(0, 0);
        assert!(generate_ba(BaParams { n: 4, m: 4 }, &mut r).is_err());
        assert!(generate_ba(BaParams { n: 4, m: 0 }, &mut r).is_err());
        assert!(generate_ws(WsParams { n: 10, k: 3, p: 0.1 }, &mut r).is_err());
        assert!(generate_ws(WsParams { n: 8, k: 8, p: 0.1 }, &mut r).is_err());
        assert!(generate_ws(WsParams { n: 10, k: 4, p: 1.5 }, &mut r).is_err());
    }

    #[test]
    fn ba_forced_complete_graph() {
        let g = ba(5, 4, 1);
        assert_eq!(g.edge_count(), 10);
        for v in 0..5 {
            assert_eq!(g.degree(v), 4);
        }
    }

    #[test]
    fn ba_m1_is_a_tree() {
        let g = ba(50, 1, 3);
        assert_eq!(g.edge_count(), 49);
    }

    #[test]
    fn ba_paper_size_edge_count() {
        let g = ba(1000, 4, 11);
        assert_eq!(g.edge_count(), 3990);
        // 2 * 3990 / 1000
        assert!((g.degree_stats().mean_degree - 7.98).abs() < 1e-12);
    }

    #[test]
    fn ws_p0_is_exact_lattice() {
        let g = ws(10, 4, 0.0, 5);
        for i in 0..10 {
            let mut nb: Vec<_> = g.neighbors(i).iter().map(|&(v, _)| v).collect();
            nb.sort_unstable();
            let mut want: Vec<_> = [1, 2, 8, 9].iter().map(|d| (i + d) % 10).collect();
            want.sort_unstable();
            assert_eq!(nb, want, "node {i}");
        }
    }

    #[test]
    fn ws_mean_degree_exact() {
        for p in [0.0, 0.1, 0.5, 1.0] {
            let g = ws(1000, 8, p, 2);
            // brute-force edge count through adjacency
            let endpoints: usize = (0..1000).map(|v| g.degree(v)).sum();
            assert_eq!(endpoints, 8000);
            assert_eq!(g.degree_stats().mean_degree, 8.0);
        }
    }

    #[test]
    fn ws_rewired_fraction_concentrates() {
        let lattice = ws(1000, 8, 0.0, 0);
        for seed in 0..100 {
            let g = ws(1000, 8, 0.1, seed);
            assert_eq!(g.edge_count(), 4000);
            let moved = g.edges().iter().filter(|e| !lattice.has_edge(e.src, e.dst)).count();
            let frac = moved as f64 / 4000.0;
            assert!((0.08..=0.12).contains(&frac), "seed {seed}: {frac}");
        }
    }

    #[test]
    fn ba_hubs_dominate_ws() {
        for seed in 0..100 {
            let b = ba(1000, 4, seed).degree_stats().max_degree;
            let w = ws(1000, 8, 0.1, seed).degree_stats().max_degree;
            assert!(b > 3 * w, "seed {seed}: BA max {b}, WS max {w}");
        }
    }

    #[test]
    fn deterministic_given_seed() {
        assert_eq!(ba(200, 4, 9), ba(200, 4, 9));
        assert_eq!(ws(200, 8, 0.3, 9), ws(200, 8, 0.3, 9));
        assert_ne!(ws(200, 8, 0.3, 9), ws(200, 8, 0.3, 10));
    }

    #[test]
    fn attachment_frequencies_match_degrees() {
        let degrees = [1usize, 2, 3, 4, 10, 0, 5];
        let pool = AttachmentPool::from_degrees(&degrees);
        let total: usize = degrees.iter().sum();
        let draws = 10_000;
        for seed in 1..=20 {
            let mut counts = [0usize; 7];
            let mut rng = RngStream::new(seed, 0);
            for _ in 0..draws {
                counts[pool.draw(&mut rng)] += 1;
            }
            for (v, &d) in degrees.iter().enumerate() {
                let p = d as f64 / total as f64;
                let se = (p * (1.0 - p) / draws as f64).sqrt();
                let freq = counts[v] as f64 / draws as f64;
                assert!((freq - p).abs() <= 3.0 * se + 1e-12, "seed {seed} node {v}: {freq} vs {p}");
            }
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(200))]

        #[test]
        fn ws_edge_count_invariant(n in 5usize..120, half in 1usize..4, p in 0.0f64..=1.0, seed: u64) {
            let k = 2 * half;
            prop_assume!(k < n);
            let g = ws(n, k, p, seed);
            prop_assert_eq!(g.edge_count(), n * k / 2);
            prop_assert_eq!(g.node_count(), n);
        }

        #[test]
        fn ba_edge_count_and_min_degree(n in 3usize..150, m in 1usize..8, seed: u64) {
            prop_assume!(m < n);
            let g = ba(n, m, seed);
            prop_assert_eq!(g.edge_count(), m * (m - 1) / 2 + m * (n - m));
            for v in 0..n {
                let floor = if v < m { m - 1 } else { m };
                prop_assert!(g.degree(v) >= floor);
            }
        }
    }
}
