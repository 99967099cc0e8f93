//! Graph representation and the edge-list text format.
//!
//! Nodes are dense integers `0..node_count`. Undirected graphs store each
//! edge once (as `src < dst`) and expose it from both endpoints through the
//! adjacency lists. Directed adjacency lists hold out-neighbors only.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use crate::error::{Error, Result};

pub type NodeId = usize;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Edge {
    pub src: NodeId,
    pub dst: NodeId,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Graph {
    node_count: usize,
    directed: bool,
    edges: Vec<Edge>,
    adjacency: Vec<Vec<(NodeId, f64)>>,
    labels: Option<Vec<String>>,
}

/// What [`Graph::from_edge_list`] changed while building the graph.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct IngestReport {
    pub self_loops_dropped: usize,
    pub duplicates_merged: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DegreeStats {
    pub mean_degree: f64,
    pub max_degree: usize,
    pub histogram: BTreeMap<usize, usize>,
}

impl Graph {
    /// Builds a graph from raw records.
    ///
    /// `node_count` is one past the largest id. Duplicate `(src, dst)`
    /// records (either orientation, when undirected) are merged by summing
    /// weights; self-loops are dropped and counted.
    pub fn from_edge_list(
        records: &[(NodeId, NodeId, f64)],
        directed: bool,
    ) -> Result<(Graph, IngestReport)> {
        if records.is_empty() {
            return Err(Error::Empty("edge list has no records"));
        }
        let max_id = records.iter().map(|&(s, d, _)| s.max(d)).max().unwrap_or(0);
        Self::from_records(max_id + 1, records, directed)
    }

    /// Like [`from_edge_list`](Self::from_edge_list) with an explicit node
    /// count, so that trailing isolated nodes are kept.
    pub fn from_records(
        node_count: usize,
        records: &[(NodeId, NodeId, f64)],
        directed: bool,
    ) -> Result<(Graph, IngestReport)> {
        if node_count == 0 {
            return Err(Error::InvalidParams("node_count must be >= 1".into()));
        }
        let mut report = IngestReport::default();
        let mut index: HashMap<(NodeId, NodeId), usize> = HashMap::with_capacity(records.len());
        let mut edges: Vec<Edge> = Vec::with_capacity(records.len());
        for (i, &(src, dst, weight)) in records.iter().enumerate() {
            if !(weight.is_finite() && weight > 0.0) {
                return Err(Error::BadRecord {
                    index: i,
                    reason: format!("weight {weight} is not a positive finite number"),
                });
            }
            if src >= node_count || dst >= node_count {
                return Err(Error::BadRecord {
                    index: i,
                    reason: format!("endpoint out of range for {node_count} nodes"),
                });
            }
            if src == dst {
                report.self_loops_dropped += 1;
                continue;
            }
            let key = if directed { (src, dst) } else { (src.min(dst), src.max(dst)) };
            match index.get(&key) {
                Some(&at) => {
                    edges[at].weight += weight;
                    report.duplicates_merged += 1;
                }
                None => {
                    index.insert(key, edges.len());
                    edges.push(Edge { src: key.0, dst: key.1, weight });
                }
            }
        }
        Ok((Self::assemble(node_count, directed, edges), report))
    }

    /// Unweighted undirected graph from edges already known to be simple
    /// (no loops, no duplicates). Used by the generators.
    pub(crate) fn from_simple_edges(node_count: usize, pairs: &[(NodeId, NodeId)]) -> Graph {
        let edges = pairs
            .iter()
            .map(|&(a, b)| {
                debug_assert!(a != b && a < node_count && b < node_count);
                Edge { src: a.min(b), dst: a.max(b), weight: 1.0 }
            })
            .collect();
        Self::assemble(node_count, false, edges)
    }

    fn assemble(node_count: usize, directed: bool, edges: Vec<Edge>) -> Graph {
        let mut adjacency = vec![Vec::new(); node_count];
        for e in &edges {
            adjacency[e.src].push((e.dst, e.weight));
            if !directed {
                adjacency[e.dst].push((e.src, e.weight));
            }
        }
        Graph { node_count, directed, edges, adjacency, labels: None }
    }

    pub fn to_edge_list(&self) -> Vec<(NodeId, NodeId, f64)> {
        self.edges.iter().map(|e| (e.src, e.dst, e.weight)).collect()
    }

    pub fn node_count(&self) -> usize {
        self.node_count
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn is_directed(&self) -> bool {
        self.directed
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    /// Out-neighbors (all neighbors when undirected) with edge weights.
    pub fn neighbors(&self, node: NodeId) -> &[(NodeId, f64)] {
        &self.adjacency[node]
    }

    pub fn degree(&self, node: NodeId) -> usize {
        self.adjacency[node].len()
    }

    pub fn has_edge(&self, src: NodeId, dst: NodeId) -> bool {
        src < self.node_count && self.adjacency[src].iter().any(|&(v, _)| v == dst)
    }

    pub fn is_weighted(&self) -> bool {
        self.edges.iter().any(|e| e.weight != 1.0)
    }

    /// External names of the nodes, when the graph was read from a file with
    /// non-numeric ids.
    pub fn labels(&self) -> Option<&[String]> {
        self.labels.as_deref()
    }

    /// Returns a copy with every weight replaced by `f(weight)`.
    pub fn map_weights(&self, f: impl Fn(f64) -> f64) -> Graph {
        let edges = self
            .edges
            .iter()
            .map(|e| Edge { weight: f(e.weight), ..*e })
            .collect();
        let mut g = Self::assemble(self.node_count, self.directed, edges);
        g.labels = self.labels.clone();
        g
    }

    /// Mean and maximum (out-)degree plus the degree histogram.
    pub fn degree_stats(&self) -> DegreeStats {
        let mut histogram = BTreeMap::new();
        let mut max_degree = 0;
        for adj in &self.adjacency {
            *histogram.entry(adj.len()).or_insert(0) += 1;
            max_degree = max_degree.max(adj.len());
        }
        let endpoints = if self.directed { self.edges.len() } else { 2 * self.edges.len() };
        DegreeStats {
            mean_degree: endpoints as f64 / self.node_count as f64,
            max_degree,
            histogram,
        }
    }
}

/// Parses the `src,dst[,weight]` text format.
///
/// Blank lines and `#` comments (whole-line or trailing) are ignored. If every
/// id token is a non-negative integer the ids are used as-is; otherwise ids
/// are treated as names and numbered in order of first appearance, and the
/// names are kept as node labels.
pub fn parse_edge_list(text: &str, directed: bool, origin: &Path) -> Result<(Graph, IngestReport)> {
    let mut raw: Vec<(&str, &str, f64, usize)> = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let parse_err = |reason: String| Error::Parse {
            path: origin.to_path_buf(),
            line: lineno + 1,
            reason,
        };
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        let (src, dst, weight) = match fields.as_slice() {
            [s, d] => (*s, *d, 1.0),
            [s, d, w] => {
                let w: f64 = w
                    .parse()
                    .map_err(|_| parse_err(format!("weight {w:?} is not a number")))?;
                (*s, *d, w)
            }
            _ => {
                return Err(parse_err(format!(
                    "expected 2 or 3 comma-separated fields, got {}",
                    fields.len()
                )))
            }
        };
        if src.is_empty() || dst.is_empty() {
            return Err(parse_err("empty node id".into()));
        }
        raw.push((src, dst, weight, lineno + 1));
    }
    if raw.is_empty() {
        return Err(Error::Empty("edge list has no records"));
    }

    let numeric = raw
        .iter()
        .all(|(s, d, _, _)| s.parse::<usize>().is_ok() && d.parse::<usize>().is_ok());
    let mut labels: Vec<String> = Vec::new();
    let mut ids: HashMap<&str, NodeId> = HashMap::new();
    let mut records: Vec<(NodeId, NodeId, f64)> = Vec::with_capacity(raw.len());
    for &(s, d, w, _) in &raw {
        if numeric {
            records.push((s.parse().unwrap(), d.parse().unwrap(), w));
            continue;
        }
        let mut pair = [0; 2];
        for (slot, name) in pair.iter_mut().zip([s, d]) {
            let next = labels.len();
            *slot = *ids.entry(name).or_insert(next);
            if *slot == next {
                labels.push(name.to_string());
            }
        }
        records.push((pair[0], pair[1], w));
    }
    let result = if numeric {
        Graph::from_edge_list(&records, directed)
    } else {
        Graph::from_records(labels.len(), &records, directed)
    };
    let (mut graph, report) = result.map_err(|e| match e {
        Error::BadRecord { index, reason } => Error::Parse {
            path: origin.to_path_buf(),
            line: raw[index].3,
            reason,
        },
        other => other,
    })?;
    if !numeric {
        graph.labels = Some(labels);
    }
    Ok((graph, report))
}

pub fn read_edge_list(path: &Path, directed: bool) -> Result<(Graph, IngestReport)> {
    let file = std::fs::File::open(path)
        .map_err(|e| Error::io(format!("opening {}", path.display()), e))?;
    let mut text = String::new();
    for line in BufReader::new(file).lines() {
        let line = line.map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
        text.push_str(&line);
        text.push('\n');
    }
    parse_edge_list(&text, directed, path)
}

/// Serializes in the `src,dst,weight` format, one edge per line.
pub fn format_edge_list(graph: &Graph) -> String {
    let mut out = String::new();
    for e in graph.edges() {
        let (s, d) = match graph.labels() {
            Some(l) => (l[e.src].clone(), l[e.dst].clone()),
            None => (e.src.to_string(), e.dst.to_string()),
        };
        writeln!(out, "{s},{d},{}", e.weight).unwrap();
    }
    out
}

pub fn write_edge_list(graph: &Graph, path: &Path) -> Result<()> {
    let mut file = std::fs::File::create(path)
        .map_err(|e| Error::io(format!("creating {}", path.display()), e))?;
    file.write_all(format_edge_list(graph).as_bytes())
        .map_err(|e| Error::io(format!("writing {}", path.display()), e))
}
