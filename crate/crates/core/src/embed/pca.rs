//! PCA projection of center vectors.

use nalgebra::{DMatrix, SymmetricEigen};

use super::EmbeddingMatrix;
use crate::error::{Error, Result};

/// Points in the plane, one per node.
#[derive(Debug, Clone, PartialEq)]
pub struct Points2D {
    pub points: Vec<[f64; 2]>,
}

impl Points2D {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Projection {
    pub n: usize,
    pub out_dim: usize,
    /// Row-major `n x out_dim`.
    pub coords: Vec<f64>,
    /// All covariance eigenvalues, descending.
    pub eigenvalues: Vec<f64>,
    /// The `out_dim` leading unit eigenvectors (zero when deficient).
    pub components: Vec<Vec<f64>>,
    /// Number of requested directions that had no positive variance.
    pub deficient: usize,
}

impl Projection {
    pub fn coord(&self, row: usize, col: usize) -> f64 {
        self.coords[row * self.out_dim + col]
    }

    pub fn to_points2d(&self) -> Result<Points2D> {
        if self.out_dim != 2 {
            return Err(Error::Shape { expected: "2 columns".into(), actual: format!("{}", self.out_dim) });
        }
        Ok(Points2D { points: self.coords.chunks_exact(2).map(|c| [c[0], c[1]]).collect() })
    }
}

/// Relative eigenvalue floor below which a direction counts as empty.
const RANK_TOL: f64 = 1e-12;

/// Projects onto the `out_dim` leading eigenvectors of the sample covariance
/// (divisor `n - 1`) of the centered center vectors.
///
/// Each eigenvector is oriented so that its largest-magnitude entry is
/// positive (first such entry on ties). Directions whose eigenvalue is not
/// positive are zero-filled and counted in [`Projection::deficient`].
pub fn pca_project(emb: &EmbeddingMatrix, out_dim: usize) -> Result<Projection> {
    let data: Vec<f64> = emb.vectors.iter().map(|&x| x as f64).collect();
    pca_project_rows(&data, emb.n, emb.dim, out_dim)
}

/// [`pca_project`] over a raw row-major `n x dim` matrix.
pub fn pca_project_rows(data: &[f64], n: usize, dim: usize, out_dim: usize) -> Result<Projection> {
    if data.len() != n * dim {
        return Err(Error::Shape { expected: format!("{n}x{dim}"), actual: format!("{} values", data.len()) });
    }
    if out_dim == 0 || out_dim > dim || n < out_dim || n == 0 {
        return Err(Error::InvalidParams(format!(
            "cannot project {n} points of dimension {dim} onto {out_dim} components"
        )));
    }
    if data.iter().any(|x| !x.is_finite()) {
        return Err(Error::InvalidParams("non-finite embedding entry".into()));
    }

    let mut x = DMatrix::from_row_slice(n, dim, data);
    for mut col in x.column_iter_mut() {
        let mean = col.sum() / n as f64;
        col.add_scalar_mut(-mean);
    }
    let denom = (n.max(2) - 1) as f64;
    let cov = (x.transpose() * &x) / denom;
    let trace = cov.trace();

    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..dim).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let eigenvalues: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i]).collect();

    let floor = RANK_TOL * trace.abs().max(f64::MIN_POSITIVE);
    let mut components = Vec::with_capacity(out_dim);
    let mut deficient = 0;
    for (rank, &i) in order.iter().take(out_dim).enumerate() {
        if eigenvalues[rank] <= floor {
            deficient += 1;
            components.push(vec![0.0; dim]);
            continue;
        }
        let mut v: Vec<f64> = eig.eigenvectors.column(i).iter().copied().collect();
        let pivot = v
            .iter()
            .enumerate()
            .fold(0, |best, (j, x)| if x.abs() > v[best].abs() { j } else { best });
        if v[pivot] < 0.0 {
            v.iter_mut().for_each(|x| *x = -*x);
        }
        components.push(v);
    }
    if deficient > 0 {
        log::warn!("covariance has fewer than {out_dim} positive eigenvalues; {deficient} direction(s) zero-filled");
    }

    let mut coords = vec![0.0; n * out_dim];
    for r in 0..n {
        let row = x.row(r);
        for (c, comp) in components.iter().enumerate() {
            coords[r * out_dim + c] = row.iter().zip(comp).map(|(a, b)| a * b).sum();
        }
    }
    Ok(Projection { n, out_dim, coords, eigenvalues, components, deficient })
}
