//! First-order random walks.
//!
//! Transitions are uniform over neighbors when every out-edge has the same
//! weight and proportional to out-edge weight otherwise. A walk that reaches
//! a node with no out-edges stops there.

use std::fmt::Write as _;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{Graph, NodeId};
use crate::rng::RngStream;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WeightTransform {
    #[default]
    Raw,
    /// `w -> ln(1 + w)` before building transition tables.
    Log1p,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WalkConfig {
    /// Total walks for the network; start nodes are drawn uniformly.
    pub num_walks: usize,
    pub walk_length: usize,
    pub weight_transform: WeightTransform,
}

impl Default for WalkConfig {
    fn default() -> Self {
        WalkConfig { num_walks: 10_000, walk_length: 10, weight_transform: WeightTransform::Raw }
    }
}

impl WalkConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_walks == 0 || self.walk_length < 2 {
            return Err(Error::InvalidParams(format!(
                "walks need num_walks >= 1 and walk_length >= 2, got {} and {}",
                self.num_walks, self.walk_length
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WalkCorpus {
    pub walks: Vec<Vec<NodeId>>,
    pub source_node_count: usize,
}

impl WalkCorpus {
    pub fn token_count(&self) -> usize {
        self.walks.iter().map(Vec::len).sum()
    }

    /// One walk per line, ids separated by spaces.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for walk in &self.walks {
            for (i, v) in walk.iter().enumerate() {
                if i > 0 {
                    out.push(' ');
                }
                write!(out, "{v}").unwrap();
            }
            out.push('\n');
        }
        out
    }
}

/// Probability of stepping from `node` to each out-neighbor, in adjacency
/// order. Empty for sinks.
pub fn transition_distribution(g: &Graph, node: NodeId) -> Result<Vec<(NodeId, f64)>> {
    if node >= g.node_count() {
        return Err(Error::NodeOutOfRange { node, node_count: g.node_count() });
    }
    let nbrs = g.neighbors(node);
    let total: f64 = nbrs.iter().map(|&(_, w)| w).sum();
    Ok(nbrs.iter().map(|&(v, w)| (v, w / total)).collect())
}

/// Per-node sampling tables. Nodes whose out-edges all share one weight are
/// sampled with a single uniform integer draw; the rest use a cumulative
/// weight array and binary search.
#[derive(Debug, Clone)]
pub struct Walker<'g> {
    graph: &'g Graph,
    cumulative: Vec<Option<Vec<f64>>>,
}

impl<'g> Walker<'g> {
    pub fn new(graph: &'g Graph) -> Self {
        let cumulative = (0..graph.node_count())
            .map(|v| {
                let nbrs = graph.neighbors(v);
                let first = nbrs.first().map(|&(_, w)| w);
                if nbrs.iter().all(|&(_, w)| Some(w) == first) {
                    return None;
                }
                let mut acc = 0.0;
                Some(
                    nbrs.iter()
                        .map(|&(_, w)| {
                            acc += w;
                            acc
                        })
                        .collect(),
                )
            })
            .collect();
        Walker { graph, cumulative }
    }

    pub fn step<R: Rng + ?Sized>(&self, from: NodeId, rng: &mut R) -> Option<NodeId> {
        let nbrs = self.graph.neighbors(from);
        if nbrs.is_empty() {
            return None;
        }
        let idx = match &self.cumulative[from] {
            None => rng.random_range(0..nbrs.len()),
            Some(cum) => {
                let total = *cum.last().unwrap();
                let x = rng.random::<f64>() * total;
                cum.partition_point(|&c| c <= x).min(nbrs.len() - 1)
            }
        };
        Some(nbrs[idx].0)
    }

    /// Walk of at most `length` nodes starting at `start`.
    pub fn walk_from<R: Rng + ?Sized>(&self, start: NodeId, length: usize, rng: &mut R) -> Vec<NodeId> {
        let mut walk = Vec::with_capacity(length);
        walk.push(start);
        let mut cur = start;
        while walk.len() < length {
            match self.step(cur, rng) {
                Some(next) => {
                    walk.push(next);
                    cur = next;
                }
                None => break,
            }
        }
        walk
    }
}

/// `cfg.num_walks` walks; walk `i` draws its start node and every step from
/// `rng.derive(i)`, so the corpus does not depend on thread scheduling.
pub fn generate_corpus(g: &Graph, cfg: &WalkConfig, rng: &RngStream) -> Result<WalkCorpus> {
    cfg.validate()?;
    if g.node_count() < 2 {
        return Err(Error::InvalidParams("walks need a graph with at least 2 nodes".into()));
    }
    if g.edge_count() == 0 {
        return Err(Error::Empty("graph has no edges to walk"));
    }
    let transformed;
    let graph = match cfg.weight_transform {
        WeightTransform::Raw => g,
        WeightTransform::Log1p => {
            transformed = g.map_weights(f64::ln_1p);
            &transformed
        }
    };
    let walker = Walker::new(graph);
    let n = graph.node_count();
    let walks = (0..cfg.num_walks)
        .into_par_iter()
        .map(|i| {
            let mut r = rng.derive(i as u64);
            let start = r.random_range(0..n);
            walker.walk_from(start, cfg.walk_length, &mut r)
        })
        .collect();
    Ok(WalkCorpus { walks, source_node_count: n })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generators::{generate_ws, WsParams};
    use proptest::prelude::*;

    fn directed(recs: &[(usize, usize, f64)]) -> Graph {
        Graph::from_edge_list(recs, true).unwrap().0
    }

    #[test]
    fn uniform_transitions() {
        let (g, _) = Graph::from_edge_list(&[(0, 1, 1.0), (0, 2, 1.0), (0, 3, 1.0)], false).unwrap();
        let d = transition_distribution(&g, 0).unwrap();
        assert_eq!(d.len(), 3);
        for (_, p) in d {
            assert!((p - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn weighted_transitions_normalize() {
        let g = directed(&[(0, 1, 2.0), (0, 2, 3.0), (0, 3, 5.0)]);
        let d = transition_distribution(&g, 0).unwrap();
        assert_eq!(d, vec![(1, 0.2), (2, 0.3), (3, 0.5)]);
        assert!(transition_distribution(&g, 3).unwrap().is_empty());
        assert!(matches!(transition_distribution(&g, 4), Err(Error::NodeOutOfRange { .. })));
    }

    #[test]
    fn two_cycle_alternates() {
        let g = directed(&[(0, 1, 1.0), (1, 0, 1.0)]);
        let cfg = WalkConfig { num_walks: 1, walk_length: 4, ..Default::default() };
        let c = generate_corpus(&g, &cfg, &RngStream::new(0, 0)).unwrap();
        let w = &c.walks[0];
        assert_eq!(w.len(), 4);
        for pair in w.windows(2) {
            assert_ne!(pair[0], pair[1]);
        }
    }

    #[test]
    fn sink_truncates() {
        let g = directed(&[(0, 1, 1.0), (1, 2, 1.0)]);
        let walker = Walker::new(&g);
        let w = walker.walk_from(0, 10, &mut RngStream::new(1, 0));
        assert_eq!(w, vec![0, 1, 2]);
    }

    #[test]
    fn rejects_edgeless_graph() {
        let (g, _) = Graph::from_records(3, &[(0, 0, 1.0)], false).unwrap();
        assert!(matches!(
            generate_corpus(&g, &WalkConfig::default(), &RngStream::new(0, 0)),
            Err(Error::Empty(_))
        ));
    }

    #[test]
    fn weighted_step_frequencies() {
        let g = directed(&[(0, 1, 2.0), (0, 2, 3.0), (0, 3, 5.0)]);
        let walker = Walker::new(&g);
        let mut rng = RngStream::new(5, 0);
        let mut counts = [0usize; 4];
        let draws = 20_000;
        for _ in 0..draws {
            counts[walker.step(0, &mut rng).unwrap()] += 1;
        }
        for (v, p) in [(1, 0.2), (2, 0.3), (3, 0.5)] {
            let se = (p * (1.0 - p) / draws as f64).sqrt();
            let f = counts[v] as f64 / draws as f64;
            assert!((f - p).abs() < 3.0 * se, "{v}: {f}");
        }
    }

    fn spearman(a: &[f64], b: &[f64]) -> f64 {
        fn ranks(x: &[f64]) -> Vec<f64> {
            let mut idx: Vec<usize> = (0..x.len()).collect();
            idx.sort_by(|&i, &j| x[i].total_cmp(&x[j]));
            let mut r = vec![0.0; x.len()];
            let mut i = 0;
            while i < idx.len() {
                let mut j = i;
                while j + 1 < idx.len() && x[idx[j + 1]] == x[idx[i]] {
                    j += 1;
                }
                let avg = (i + j) as f64 / 2.0;
                for &k in &idx[i..=j] {
                    r[k] = avg;
                }
                i = j + 1;
            }
            r
        }
        let (ra, rb) = (ranks(a), ranks(b));
        let n = a.len() as f64;
        let ma = ra.iter().sum::<f64>() / n;
        let mb = rb.iter().sum::<f64>() / n;
        let cov: f64 = ra.iter().zip(&rb).map(|(x, y)| (x - ma) * (y - mb)).sum();
        let va: f64 = ra.iter().map(|x| (x - ma).powi(2)).sum();
        let vb: f64 = rb.iter().map(|y| (y - mb).powi(2)).sum();
        cov / (va * vb).sqrt()
    }

    #[test]
    fn visits_track_degree_on_ws() {
        let g = generate_ws(WsParams { n: 1000, k: 8, p: 0.1 }, &mut RngStream::new(3, 0)).unwrap();
        let c = generate_corpus(&g, &WalkConfig::default(), &RngStream::new(3, 1)).unwrap();
        assert_eq!(c.walks.len(), 10_000);
        assert!(c.walks.iter().all(|w| w.len() == 10));
        let mut visits = vec![0.0; 1000];
        for w in &c.walks {
            for &v in w {
                visits[v] += 1.0;
            }
        }
        let deg: Vec<f64> = (0..1000).map(|v| g.degree(v) as f64).collect();
        let rho = spearman(&visits, &deg);
        assert!(rho > 0.5, "rank correlation {rho}");
    }

    #[test]
    fn log1p_transform_changes_weights() {
        let g = directed(&[(0, 1, 1.0), (0, 2, 1000.0), (1, 0, 1.0), (2, 0, 1.0)]);
        let cfg = WalkConfig { num_walks: 2000, walk_length: 2, weight_transform: WeightTransform::Log1p };
        let c = generate_corpus(&g, &cfg, &RngStream::new(0, 0)).unwrap();
        let from0: Vec<_> = c.walks.iter().filter(|w| w[0] == 0).map(|w| w[1]).collect();
        let to1 = from0.iter().filter(|&&v| v == 1).count() as f64 / from0.len() as f64;
        // ln 2 / (ln 2 + ln 1001) ~ 0.091, versus ~0.001 on raw weights
        assert!(to1 > 0.05, "{to1}");
    }

    #[test]
    fn corpus_text_dump() {
        let c = WalkCorpus { walks: vec![vec![0, 1, 2], vec![3]], source_node_count: 4 };
        assert_eq!(c.to_text(), "0 1 2\n3\n");
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(300))]

        #[test]
        fn walks_follow_edges(
            n in 2usize..25,
            directed_graph: bool,
            recs in prop::collection::vec((0usize..25, 0usize..25, 0.5f64..4.0), 1..60),
            seed: u64,
        ) {
            let recs: Vec<_> = recs.into_iter().map(|(a, b, w)| (a % n, b % n, w)).collect();
            let (g, _) = Graph::from_records(n, &recs, directed_graph).unwrap();
            prop_assume!(g.edge_count() > 0);
            let cfg = WalkConfig { num_walks: 30, walk_length: 6, ..Default::default() };
            let c = generate_corpus(&g, &cfg, &RngStream::new(seed, 0)).unwrap();
            prop_assert_eq!(c.walks.len(), 30);
            for w in &c.walks {
                prop_assert!(!w.is_empty() && w.len() <= 6);
                for pair in w.windows(2) {
                    prop_assert!(g.has_edge(pair[0], pair[1]));
                }
                if w.len() < 6 {
                    prop_assert!(g.neighbors(*w.last().unwrap()).is_empty());
                }
            }
            let again = generate_corpus(&g, &cfg, &RngStream::new(seed, 0)).unwrap();
            prop_assert_eq!(&again, &c);
            for v in 0..n {
                let d = transition_distribution(&g, v).unwrap();
                if !d.is_empty() {
                    let s: f64 = d.iter().map(|&(_, p)| p).sum();
                    prop_assert!((s - 1.0).abs() < 1e-12);
                }
            }
        }
    }
}
