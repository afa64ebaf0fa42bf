//! Deterministic Hermitian eigendecomposition.

use ndarray::{Array1, Array2, ArrayView1};
use num_complex::Complex64 as C64;

use crate::error::{Error, Result};
use crate::linalg::hermitian_eigen;
use crate::spin::{BasisLayout, OperatorMatrix};

/// Relative Hermiticity residual above which [`eigendecompose`] refuses input.
pub const EIGEN_HERMITIAN_TOL: f64 = 1e-10;

/// Eigenvalues below this fraction of the spectral scale apart count as one
/// degenerate cluster.
const DEGENERACY_TOL: f64 = 1e-10;

/// Eigenpairs of a Hermitian operator.
///
/// Eigenvalues ascend. Each eigenvector has its largest-magnitude component
/// real and positive. Degenerate clusters are rotated to the basis-aligned
/// vectors of the cluster and ordered by the index of their largest component,
/// so the result depends only on the input matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct EigenSystem {
    eigenvalues: Vec<f64>,
    eigenvectors: Array2<C64>,
    layout: BasisLayout,
}

impl EigenSystem {
    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    /// Eigenvectors as columns.
    pub fn eigenvectors(&self) -> &Array2<C64> {
        &self.eigenvectors
    }

    pub fn vector(&self, k: usize) -> ArrayView1<'_, C64> {
        self.eigenvectors.column(k)
    }

    pub fn layout(&self) -> BasisLayout {
        self.layout
    }

    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }

    /// `V diag(lambda) V^dagger`.
    pub fn reconstruct(&self) -> Array2<C64> {
        let v = &self.eigenvectors;
        let mut scaled = v.clone();
        for (mut col, l) in scaled.columns_mut().into_iter().zip(&self.eigenvalues) {
            col.mapv_inplace(|z| z * *l);
        }
        scaled.dot(&crate::spin::adjoint(v))
    }
}

fn argmax_abs(v: ArrayView1<'_, C64>) -> usize {
    let max = v.iter().map(|z| z.norm()).fold(0.0, f64::max);
    v.iter()
        .position(|z| z.norm() >= max * (1.0 - 1e-12))
        .unwrap_or(0)
}

fn fix_phase(mut v: Array1<C64>) -> Array1<C64> {
    let k = argmax_abs(v.view());
    let z = v[k];
    if z.norm() > 0.0 {
        let phase = z.conj() / z.norm();
        v.mapv_inplace(|w| w * phase);
        v[k] = C64::new(v[k].norm(), 0.0);
    }
    v
}

/// Rotates a degenerate block of eigenvectors onto the eigenvectors of the
/// basis-index operator compressed to that block.
fn canonicalize_cluster(vecs: &Array2<C64>) -> Result<Array2<C64>> {
    let d = vecs.nrows();
    let weights = Array2::from_diag(&Array1::from_iter((0..d).map(|i| C64::new((i + 1) as f64, 0.0))));
    let compressed = crate::spin::adjoint(vecs).dot(&weights).dot(vecs);
    let (_, rot) = hermitian_eigen(&compressed)?;
    Ok(vecs.dot(&rot))
}

/// Groups basis indices into blocks that no non-zero entry of `m` couples,
/// each sorted, in order of their smallest index.
fn decoupled_blocks(m: &Array2<C64>) -> Vec<Vec<usize>> {
    let d = m.nrows();
    let mut block = vec![usize::MAX; d];
    let mut blocks = Vec::new();
    for seed in 0..d {
        if block[seed] != usize::MAX {
            continue;
        }
        let id = blocks.len();
        block[seed] = id;
        let mut members = vec![seed];
        let mut next = 0;
        while next < members.len() {
            let i = members[next];
            next += 1;
            for j in 0..d {
                if block[j] == usize::MAX && (m[[i, j]] != C64::new(0.0, 0.0) || m[[j, i]] != C64::new(0.0, 0.0)) {
                    block[j] = id;
                    members.push(j);
                }
            }
        }
        members.sort_unstable();
        blocks.push(members);
    }
    blocks
}

/// Eigenpairs of each decoupled block, embedded in the full space.
fn blockwise_eigen(m: &Array2<C64>) -> Result<(Vec<f64>, Array2<C64>)> {
    let d = m.nrows();
    let mut values = Vec::with_capacity(d);
    let mut vectors = Array2::zeros((d, d));
    for idx in decoupled_blocks(m) {
        let sub = Array2::from_shape_fn((idx.len(), idx.len()), |(a, b)| m[[idx[a], idx[b]]]);
        let (vals, vecs) = hermitian_eigen(&sub)?;
        for (k, v) in vals.into_iter().enumerate() {
            let col = values.len();
            for (a, &i) in idx.iter().enumerate() {
                vectors[[i, col]] = vecs[[a, k]];
            }
            values.push(v);
        }
    }
    Ok((values, vectors))
}

/// Diagonalizes a Hermitian operator.
///
/// Blocks that the matrix leaves uncoupled are diagonalized separately, so
/// every eigenvector is supported on a single block.
pub fn eigendecompose(h: &OperatorMatrix) -> Result<EigenSystem> {
    let residual = h.hermiticity_residual();
    if residual > EIGEN_HERMITIAN_TOL {
        return Err(Error::NotHermitian { residual });
    }
    let (values, vectors) = blockwise_eigen(h.matrix())?;
    let d = values.len();

    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));

    let scale = values.iter().map(|v| v.abs()).fold(1.0, f64::max);
    let tol = DEGENERACY_TOL * scale;

    let mut eigenvalues = Vec::with_capacity(d);
    let mut columns: Vec<Array1<C64>> = Vec::with_capacity(d);
    let mut start = 0;
    while start < d {
        let mut end = start + 1;
        while end < d && values[order[end]] - values[order[end - 1]] <= tol {
            end += 1;
        }
        let idx = &order[start..end];
        if idx.len() == 1 {
            eigenvalues.push(values[idx[0]]);
            columns.push(fix_phase(vectors.column(idx[0]).to_owned()));
        } else {
            let block = Array2::from_shape_fn((d, idx.len()), |(i, j)| vectors[[i, idx[j]]]);
            let block = canonicalize_cluster(&block)?;
            let mean = idx.iter().map(|&k| values[k]).sum::<f64>() / idx.len() as f64;
            let mut members: Vec<Array1<C64>> =
                block.columns().into_iter().map(|c| fix_phase(c.to_owned())).collect();
            members.sort_by_key(|c| argmax_abs(c.view()));
            for c in members {
                eigenvalues.push(mean);
                columns.push(c);
            }
        }
        start = end;
    }

    let eigenvectors = Array2::from_shape_fn((d, d), |(i, j)| columns[j][i]);
    Ok(EigenSystem {
        eigenvalues,
        eigenvectors,
        layout: h.layout(),
    })
}
