//! Node embeddings: SGNS on walk corpora, then PCA to the plane.

mod pca;
mod sgns;

use std::fmt::Write as _;
use std::path::Path;

pub use pca::{pca_project, pca_project_rows, Points2D, Projection};
pub use sgns::{
    pair_coefficient, pair_objective, sgns_pair_gradient, sigmoid, train_sgns, EmbeddingMatrix, PairLabel,
    SgnsConfig, SgnsReport,
};

use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::rng::{stage, RngStream};
use crate::walker::{generate_corpus, WalkConfig};

/// Output of the walk → SGNS → PCA chain for one graph.
#[derive(Debug, Clone)]
pub struct Embedded {
    pub embedding: EmbeddingMatrix,
    pub points: Points2D,
    pub report: SgnsReport,
}

/// Runs walks, SGNS and a 2-component PCA, each stage on its own child
/// stream of `rng`.
pub fn embed_graph(g: &Graph, walk: &WalkConfig, sgns: &SgnsConfig, rng: &RngStream) -> Result<Embedded> {
    let corpus = generate_corpus(g, walk, &rng.derive(stage::WALK))?;
    let (embedding, report) = train_sgns(&corpus, sgns, &mut rng.derive(stage::SGNS))?;
    let points = pca_project(&embedding, 2)?.to_points2d()?;
    Ok(Embedded { embedding, points, report })
}

/// `rows cols` header line, then one whitespace-separated row per line.
pub fn format_matrix(rows: usize, cols: usize, data: impl IntoIterator<Item = f64>) -> String {
    let mut out = format!("{rows} {cols}\n");
    for (i, x) in data.into_iter().enumerate() {
        if i % cols != 0 {
            out.push(' ');
        }
        write!(out, "{x}").unwrap();
        if i % cols == cols - 1 {
            out.push('\n');
        }
    }
    out
}

pub fn parse_matrix(text: &str, origin: &Path) -> Result<(usize, usize, Vec<f64>)> {
    let err = |line: usize, reason: String| Error::Parse { path: origin.to_path_buf(), line, reason };
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (_, header) = lines.next().ok_or(Error::Empty("matrix file is empty"))?;
    let dims: Vec<usize> = header
        .split_whitespace()
        .map(|t| t.parse().map_err(|_| err(1, format!("bad header token {t:?}"))))
        .collect::<Result<_>>()?;
    let [rows, cols] = dims[..] else {
        return Err(err(1, "header must be `rows cols`".into()));
    };
    let mut data = Vec::with_capacity(rows * cols);
    for (i, line) in lines {
        let before = data.len();
        for t in line.split_whitespace() {
            data.push(t.parse::<f64>().map_err(|_| err(i + 1, format!("bad number {t:?}")))?);
        }
        if data.len() - before != cols {
            return Err(err(i + 1, format!("expected {cols} values")));
        }
    }
    if data.len() != rows * cols {
        return Err(err(0, format!("expected {rows} rows, found {}", data.len() / cols.max(1))));
    }
    Ok((rows, cols, data))
}

pub fn write_points(points: &Points2D, path: &Path) -> Result<()> {
    let text = format_matrix(points.len(), 2, points.points.iter().flat_map(|p| p.iter().copied()));
    std::fs::write(path, text).map_err(|e| Error::io(format!("writing {}", path.display()), e))
}

pub fn read_points(path: &Path) -> Result<Points2D> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
    let (_, cols, data) = parse_matrix(&text, path)?;
    if cols != 2 {
        return Err(Error::Shape { expected: "2 columns".into(), actual: cols.to_string() });
    }
    Ok(Points2D { points: data.chunks_exact(2).map(|c| [c[0], c[1]]).collect() })
}

pub fn write_embedding(emb: &EmbeddingMatrix, path: &Path) -> Result<()> {
    let text = format_matrix(emb.n, emb.dim, emb.vectors.iter().map(|&x| x as f64));
    std::fs::write(path, text).map_err(|e| Error::io(format!("writing {}", path.display()), e))
}

pub fn read_embedding(path: &Path) -> Result<EmbeddingMatrix> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
    let (n, dim, data) = parse_matrix(&text, path)?;
    EmbeddingMatrix::from_vectors(n, dim, data.into_iter().map(|x| x as f32).collect())
}
