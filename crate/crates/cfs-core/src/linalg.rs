//! Dense linear algebra helpers on top of nalgebra.

use nalgebra::{Complex, DMatrix, DVector};

use crate::error::{CfsError, Result};

pub type C64 = Complex<f64>;
pub type CMat = DMatrix<C64>;
pub type CVec = DVector<C64>;
pub type RMat = DMatrix<f64>;
pub type RVec = DVector<f64>;

pub const I: C64 = C64 { re: 0.0, im: 1.0 };

#[inline]
pub fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

#[inline]
pub fn cr(re: f64) -> C64 {
    C64::new(re, 0.0)
}

/// Signature matrix diag(+1 (n times), -1 (n times)).
pub fn signature(n: usize) -> CMat {
    CMat::from_fn(2 * n, 2 * n, |i, j| {
        if i != j {
            cr(0.0)
        } else if i < n {
            cr(1.0)
        } else {
            cr(-1.0)
        }
    })
}

/// Multiplies from the left by the signature: flips the sign of the last n rows.
pub fn sig_left(m: &CMat, n: usize) -> CMat {
    let mut out = m.clone();
    for i in n..2 * n {
        for j in 0..m.ncols() {
            out[(i, j)] = -out[(i, j)];
        }
    }
    out
}

/// Multiplies from the right by the signature: flips the sign of the last n columns.
pub fn sig_right(m: &CMat, n: usize) -> CMat {
    let mut out = m.clone();
    for j in n..2 * n {
        for i in 0..m.nrows() {
            out[(i, j)] = -out[(i, j)];
        }
    }
    out
}

/// Eigenvalues of a general complex square matrix via the complex Schur form.
pub fn eigenvalues(m: &CMat) -> Result<Vec<C64>> {
    let k = m.nrows();
    if k != m.ncols() {
        return Err(CfsError::Dimension(format!("{}x{} is not square", k, m.ncols())));
    }
    if k == 0 {
        return Ok(Vec::new());
    }
    if k == 1 {
        return Ok(vec![m[(0, 0)]]);
    }
    if k == 2 {
        // closed form keeps the tiny chains cheap and exact to rounding
        let (a, b, cc, d) = (m[(0, 0)], m[(0, 1)], m[(1, 0)], m[(1, 1)]);
        let half_tr = (a + d) * 0.5;
        let disc = ((a - d) * 0.5) * ((a - d) * 0.5) + b * cc;
        let s = disc.sqrt();
        let (l1, l2) = (half_tr + s, half_tr - s);
        // recover the smaller root from the determinant to avoid cancellation
        let det = a * d - b * cc;
        let (big, small) = if l1.norm() >= l2.norm() { (l1, l2) } else { (l2, l1) };
        let small = if big.norm() > 0.0 && small.norm() < 1e-3 * big.norm() {
            det / big
        } else {
            small
        };
        return Ok(vec![big, small]);
    }
    let schur = m
        .clone()
        .try_schur(1e-15, 10_000)
        .ok_or(CfsError::EigenSolver(k))?;
    let (_, t) = schur.unpack();
    Ok((0..k).map(|i| t[(i, i)]).collect())
}

/// Eigen-decomposition of a Hermitian matrix, eigenvalues ascending.
pub fn herm_eig(m: &CMat) -> (Vec<f64>, CMat) {
    let k = m.nrows();
    if k == 0 {
        return (Vec::new(), CMat::zeros(0, 0));
    }
    let h = (m + m.adjoint()) * cr(0.5);
    let se = h.symmetric_eigen();
    let mut idx: Vec<usize> = (0..k).collect();
    idx.sort_by(|&a, &b| se.eigenvalues[a].total_cmp(&se.eigenvalues[b]));
    let vals = idx.iter().map(|&i| se.eigenvalues[i]).collect();
    let vecs = CMat::from_fn(k, k, |r, col| se.eigenvectors[(r, idx[col])]);
    (vals, vecs)
}

/// Eigen-decomposition of a real symmetric matrix, eigenvalues ascending.
pub fn sym_eig(m: &RMat) -> (Vec<f64>, RMat) {
    let k = m.nrows();
    if k == 0 {
        return (Vec::new(), RMat::zeros(0, 0));
    }
    let h = (m + m.transpose()) * 0.5;
    let se = h.symmetric_eigen();
    let mut idx: Vec<usize> = (0..k).collect();
    idx.sort_by(|&a, &b| se.eigenvalues[a].total_cmp(&se.eigenvalues[b]));
    let vals = idx.iter().map(|&i| se.eigenvalues[i]).collect();
    let vecs = RMat::from_fn(k, k, |r, col| se.eigenvectors[(r, idx[col])]);
    (vals, vecs)
}

/// Orthogonal projector onto the span of the eigenvectors of a Hermitian
/// matrix whose eigenvalues exceed `tol` in modulus.
pub fn range_projector(m: &CMat, tol: f64) -> (CMat, usize) {
    let (vals, vecs) = herm_eig(m);
    let k = m.nrows();
    let mut p = CMat::zeros(k, k);
    let mut rank = 0;
    for (i, v) in vals.iter().enumerate() {
        if v.abs() > tol {
            let col = vecs.column(i);
            p += &col * col.adjoint();
            rank += 1;
        }
    }
    (p, rank)
}

/// Largest absolute entry.
pub fn max_abs(m: &CMat) -> f64 {
    m.iter().fold(0.0, |acc, z| acc.max(z.norm()))
}

pub fn max_abs_r(m: &RMat) -> f64 {
    m.iter().fold(0.0, |acc, z| acc.max(z.abs()))
}

/// Frobenius norm of U^H U - 1.
pub fn unitarity_defect(u: &CMat) -> f64 {
    let k = u.ncols();
    (u.adjoint() * u - CMat::identity(k, k)).norm()
}

/// Real orthonormal basis of the numerical null space: right singular
/// vectors whose singular value is below `tol * sigma_max`.
pub fn null_space(m: &RMat, tol: f64) -> RMat {
    let cols = m.ncols();
    if cols == 0 {
        return RMat::zeros(0, 0);
    }
    // pad with zero rows so the SVD returns a full set of right vectors
    let rows = m.nrows().max(cols);
    let mut sq = RMat::zeros(rows, cols);
    sq.view_mut((0, 0), (m.nrows(), cols)).copy_from(m);
    let svd = sq.svd(false, true);
    let vt = svd.v_t.expect("requested right singular vectors");
    let smax = svd.singular_values.iter().cloned().fold(0.0_f64, f64::max);
    let keep: Vec<usize> = (0..cols)
        .filter(|&i| svd.singular_values[i] <= tol * smax || smax == 0.0)
        .collect();
    RMat::from_fn(cols, keep.len(), |r, c| vt[(keep[c], r)])
}

/// Gram-Schmidt orthonormalisation of the columns of a complex matrix under
/// the plain Euclidean inner product (columns assumed independent).
pub fn orthonormalize_columns(m: &CMat) -> CMat {
    let mut out = m.clone();
    for j in 0..m.ncols() {
        for _ in 0..2 {
            for k in 0..j {
                let proj = out.column(k).dotc(&out.column(j));
                let ck = out.column(k).clone_owned();
                let mut cj = out.column_mut(j);
                cj -= ck * proj;
            }
        }
        let nrm = out.column(j).norm();
        if nrm > 0.0 {
            let mut cj = out.column_mut(j);
            cj /= cr(nrm);
        }
    }
    out
}

/// Determinant of a small complex matrix by LU with partial pivoting.
pub fn det(m: &CMat) -> C64 {
    let k = m.nrows();
    match k {
        0 => cr(1.0),
        1 => m[(0, 0)],
        2 => m[(0, 0)] * m[(1, 1)] - m[(0, 1)] * m[(1, 0)],
        _ => m.clone().lu().determinant(),
    }
}

pub fn to_complex(m: &RMat) -> CMat {
    m.map(cr)
}
