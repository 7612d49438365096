//! Small dense linear-algebra helpers shared by the solvers.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

pub type Mat = DMatrix<f64>;
pub type Vector = DVector<f64>;

pub fn symmetrize(m: &Mat) -> Mat {
    (m + m.transpose()) * 0.5
}

/// Relative asymmetry `||M - M'||_F / ||M||_F` (absolute when `M` is zero).
pub fn asymmetry(m: &Mat) -> f64 {
    if !m.is_square() {
        return f64::INFINITY;
    }
    let diff = (m - m.transpose()).norm();
    let scale = m.norm();
    if scale > 0.0 {
        diff / scale
    } else {
        diff
    }
}

/// Symmetric eigendecomposition with eigenvalues sorted ascending.
pub fn sym_eigen(m: &Mat) -> (Vector, Mat) {
    let n = m.nrows();
    let eig = SymmetricEigen::new(symmetrize(m));
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = Vector::from_iterator(n, order.iter().map(|&i| eig.eigenvalues[i]));
    let mut vectors = Mat::zeros(n, n);
    for (j, &i) in order.iter().enumerate() {
        vectors.set_column(j, &eig.eigenvectors.column(i));
    }
    (values, vectors)
}

pub fn min_eigenvalue(m: &Mat) -> f64 {
    if m.nrows() == 0 {
        return 0.0;
    }
    sym_eigen(m).0[0]
}

pub fn max_eigenvalue(m: &Mat) -> f64 {
    if m.nrows() == 0 {
        return 0.0;
    }
    let (values, _) = sym_eigen(m);
    values[values.len() - 1]
}

/// Principal square root of a PSD matrix; negative eigenvalues are clamped to zero.
pub fn psd_sqrt(m: &Mat) -> Mat {
    let (values, vectors) = sym_eigen(m);
    let root = values.map(|v| v.max(0.0).sqrt());
    &vectors * Mat::from_diagonal(&root) * vectors.transpose()
}

/// Solve `A X = B` by partial-pivot LU, returning `None` when a pivot is
/// negligible relative to the largest one.
pub fn solve_square(a: &Mat, b: &Mat) -> Option<Mat> {
    let lu = a.clone().lu();
    let u = lu.u();
    let diag = u.diagonal();
    let largest = diag.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()));
    let smallest = diag.iter().fold(f64::INFINITY, |acc, v| acc.min(v.abs()));
    if !(largest > 0.0) || smallest <= largest * 1e-15 {
        return None;
    }
    lu.solve(b)
}

pub fn hcat(blocks: &[&Mat]) -> Mat {
    let rows = blocks.first().map_or(0, |b| b.nrows());
    let cols: usize = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = Mat::zeros(rows, cols);
    let mut offset = 0;
    for block in blocks {
        out.view_mut((0, offset), (rows, block.ncols())).copy_from(block);
        offset += block.ncols();
    }
    out
}

pub fn vcat(blocks: &[Vector]) -> Vector {
    let len: usize = blocks.iter().map(|b| b.len()).sum();
    let mut out = Vector::zeros(len);
    let mut offset = 0;
    for block in blocks {
        out.rows_mut(offset, block.len()).copy_from(block);
        offset += block.len();
    }
    out
}

pub fn to_rows(m: &Mat) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

/// Build a matrix from row-major nested rows. `cols` fixes the width when
/// there are no rows to infer it from. Ragged input yields `None`.
pub fn from_rows(rows: &[Vec<f64>], cols: Option<usize>) -> Option<Mat> {
    let width = rows.first().map(|r| r.len()).or(cols).unwrap_or(0);
    if rows.iter().any(|r| r.len() != width) {
        return None;
    }
    Some(Mat::from_fn(rows.len(), width, |i, j| rows[i][j]))
}

pub fn relative_diff(a: &Mat, b: &Mat) -> f64 {
    let scale = b.norm().max(a.norm());
    if scale > 0.0 {
        (a - b).norm() / scale
    } else {
        0.0
    }
}
