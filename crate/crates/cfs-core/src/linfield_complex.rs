//! Linearized field operator, the space of linearized solutions with its
//! surface layer Gram forms, the complex structure and checks for supplied
//! Green's operators.

use serde::Serialize;

use crate::action_optim::{elementary_directions, Jet};
use crate::error::{CfsError, Result};
use crate::linalg::{c, null_space, sym_eig, CMat, CVec, RMat};
use crate::operator_core::LagrangianParams;
use crate::surface_layer::{pair_first, pair_second, sl_inner, symplectic, CutSpec};
use crate::system_measure::DiscreteMeasure;
use crate::wavefunc::{extended_product_with, krein_product, stack_wave, unstack_wave, QTable, WaveFunction};

/// Vector-only elementary jets over all columns of every point, point-major.
pub fn variation_basis(rho: &DiscreteMeasure) -> Vec<Jet> {
    let s = rho.spec;
    let dirs = elementary_directions(s.n, s.f, s.f);
    let mut out = Vec::with_capacity(rho.len() * dirs.len());
    for i in 0..rho.len() {
        for d in &dirs {
            out.push(Jet::at_point(rho, i, d.clone()));
        }
    }
    out
}

fn nonzero(m: &CMat) -> bool {
    m.iter().any(|z| z.re != 0.0 || z.im != 0.0)
}

/// `<u, Delta v>` summed over the points with weights `rho_i`.
fn delta_entry(rho: &DiscreteMeasure, params: &LagrangianParams, lmat: &[Vec<f64>], u: &Jet, v: &Jet) -> f64 {
    let w = &rho.weights;
    let mut acc = 0.0;
    for i in 0..rho.len() {
        let a = u.scalar[i];
        let ui = &u.dpsi[i];
        let has_u = nonzero(ui);
        if a == 0.0 && !has_u {
            continue;
        }
        let mut term = 0.0;
        for j in 0..rho.len() {
            let bsum = v.scalar[i] + v.scalar[j];
            let vi = &v.dpsi[i];
            let vj = &v.dpsi[j];
            if a != 0.0 {
                let mut fij = bsum * lmat[i][j];
                if nonzero(vi) {
                    fij += pair_first(rho, params, i, j, 1, vi);
                }
                if nonzero(vj) {
                    fij += pair_first(rho, params, i, j, 2, vj);
                }
                term += a * w[j] * fij;
            }
            if has_u {
                let mut dij = 0.0;
                if bsum != 0.0 {
                    dij += bsum * pair_first(rho, params, i, j, 1, ui);
                }
                if nonzero(vi) {
                    dij += pair_second(rho, params, i, j, 1, ui, 1, vi);
                }
                if nonzero(vj) {
                    dij += pair_second(rho, params, i, j, 1, ui, 2, vj);
                }
                term += w[j] * dij;
            }
        }
        if a != 0.0 {
            term -= a * v.scalar[i] * params.s_vol;
        }
        acc += w[i] * term;
    }
    acc
}

/// Matrix of `(u, v) -> <u, Delta v>` with rows indexed by the test jets and
/// columns by the variation jets.
pub fn delta_matrix(rho: &DiscreteMeasure, params: &LagrangianParams, test: &[Jet], var: &[Jet]) -> Result<RMat> {
    for j in test.iter().chain(var) {
        j.validate(rho)?;
    }
    let lmat = crate::action_optim::lagrangian_matrix(rho, params)?;
    let mut m = RMat::zeros(test.len(), var.len());
    for (r, u) in test.iter().enumerate() {
        for (k, v) in var.iter().enumerate() {
            m[(r, k)] = delta_entry(rho, params, &lmat, u, v);
        }
    }
    if m.iter().any(|x| !x.is_finite()) {
        return Err(CfsError::StepUnderflow("non-finite entry in the linearized field operator".into()));
    }
    Ok(m)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LinFlags {
    /// The null space was trivial.
    pub empty: bool,
    /// Directions dropped because `(.,.)` was not positive on them.
    pub dropped_nonpositive: usize,
    /// Directions dropped because `sigma` degenerates on them.
    pub dropped_degenerate: usize,
}

#[derive(Clone, Debug)]
pub struct LinSolutionSpace {
    pub basis: Vec<Jet>,
    /// Coordinates of the basis in the variation basis (one column per jet).
    pub coords: RMat,
    pub gram_inner: RMat,
    pub gram_sympl: RMat,
    pub flags: LinFlags,
}

impl LinSolutionSpace {
    pub fn dim(&self) -> usize {
        self.basis.len()
    }

    /// Space spanned by `coords` (columns in the variation basis `var`), with
    /// the Gram forms evaluated at the cut.
    pub fn from_basis(
        rho: &DiscreteMeasure,
        var: &[Jet],
        coords: RMat,
        cut: &CutSpec,
        params: &LagrangianParams,
    ) -> Result<Self> {
        if coords.nrows() != var.len() {
            return Err(CfsError::Dimension(format!("{} coordinates for {} variation jets", coords.nrows(), var.len())));
        }
        let basis: Vec<Jet> = (0..coords.ncols())
            .map(|k| {
                let col: Vec<f64> = coords.column(k).iter().copied().collect();
                Jet::combination(var, &col)
            })
            .collect();
        let d = basis.len();
        let mut gi = RMat::zeros(d, d);
        let mut gs = RMat::zeros(d, d);
        for a in 0..d {
            for b in a..d {
                let x = sl_inner(rho, &basis[a], &basis[b], cut, params)?;
                gi[(a, b)] = x;
                gi[(b, a)] = x;
                if b > a {
                    let y = symplectic(rho, &basis[a], &basis[b], cut, params)?;
                    gs[(a, b)] = y;
                    gs[(b, a)] = -y;
                }
            }
        }
        let flags = LinFlags { empty: d == 0, dropped_nonpositive: 0, dropped_degenerate: 0 };
        Ok(Self { basis, coords, gram_inner: gi, gram_sympl: gs, flags })
    }

    /// Abstract space given by its Gram matrices only (no jets attached).
    pub fn from_grams(gram_inner: RMat, gram_sympl: RMat) -> Result<Self> {
        let d = gram_inner.nrows();
        if gram_inner.ncols() != d || gram_sympl.shape() != (d, d) {
            return Err(CfsError::Dimension("Gram matrices must be square of equal size".into()));
        }
        Ok(Self {
            basis: Vec::new(),
            coords: RMat::identity(d, d),
            gram_inner,
            gram_sympl,
            flags: LinFlags { empty: d == 0, dropped_nonpositive: 0, dropped_degenerate: 0 },
        })
    }

    fn transformed(&self, t: &RMat) -> Self {
        let basis = if self.basis.is_empty() {
            Vec::new()
        } else {
            (0..t.ncols())
                .map(|k| {
                    let col: Vec<f64> = t.column(k).iter().copied().collect();
                    Jet::combination(&self.basis, &col)
                })
                .collect()
        };
        Self {
            basis,
            coords: &self.coords * t,
            gram_inner: t.transpose() * &self.gram_inner * t,
            gram_sympl: t.transpose() * &self.gram_sympl * t,
            flags: self.flags.clone(),
        }
    }

    /// Restricts to the span of the eigenvectors of `gram_inner` with
    /// eigenvalue above `tol * max`, in a basis orthonormal for `(.,.)`.
    pub fn positive_part(&self, tol: f64) -> Self {
        let (vals, vecs) = sym_eig(&self.gram_inner);
        let vmax = vals.iter().cloned().fold(0.0_f64, f64::max);
        let keep: Vec<usize> = (0..vals.len()).filter(|&k| vmax > 0.0 && vals[k] > tol * vmax).collect();
        let t = RMat::from_fn(vals.len(), keep.len(), |r, k| vecs[(r, keep[k])] / vals[keep[k]].sqrt());
        let mut out = self.transformed(&t);
        out.gram_inner = RMat::identity(keep.len(), keep.len());
        out.flags.dropped_nonpositive += vals.len() - keep.len();
        out.flags.empty = keep.is_empty();
        out
    }

    /// Restricts an orthonormal space (`gram_inner = 1`) to the invariant
    /// subspace on which `sigma` is non-degenerate: eigenvalues of
    /// `sigma^T sigma` above `tol * max`.
    pub fn nondegenerate_part(&self, tol: f64) -> Self {
        let s = &self.gram_sympl;
        let (vals, vecs) = sym_eig(&(s.transpose() * s));
        let vmax = vals.iter().cloned().fold(0.0_f64, f64::max);
        let keep: Vec<usize> = (0..vals.len()).filter(|&k| vmax > 0.0 && vals[k] > tol * vmax).collect();
        let t = RMat::from_fn(vals.len(), keep.len(), |r, k| vecs[(r, keep[k])]);
        let mut out = self.transformed(&t);
        out.flags.dropped_degenerate += vals.len() - keep.len();
        out.flags.empty = keep.is_empty();
        out
    }
}

/// Null space of `delta` (singular values below `tol * sigma_max`) as
/// combinations of the variation jets, with the Gram forms at the cut.
pub fn lin_solutions(
    rho: &DiscreteMeasure,
    params: &LagrangianParams,
    var: &[Jet],
    delta: &RMat,
    cut: &CutSpec,
    tol: f64,
) -> Result<LinSolutionSpace> {
    if delta.ncols() != var.len() {
        return Err(CfsError::Dimension(format!("delta has {} columns for {} variation jets", delta.ncols(), var.len())));
    }
    let ns = null_space(delta, tol);
    LinSolutionSpace::from_basis(rho, var, ns, cut, params)
}

#[derive(Clone, Debug)]
pub struct ComplexStructure {
    pub t: RMat,
    pub j: RMat,
    /// Columns: coefficients of the holomorphic modes in the space basis,
    /// normalized so that `scalar` is the identity, ordered by decreasing
    /// frequency.
    pub hol_basis: CMat,
    /// `(u|v) = sigma(u, J v)` on the holomorphic modes.
    pub scalar: CMat,
    pub freqs: Vec<f64>,
}

/// Eigenvalue floor for `-T^2` relative to its largest eigenvalue.
pub const T_FLOOR: f64 = 1e-12;

fn sym_sqrt_inv(g: &RMat) -> Result<(RMat, RMat)> {
    let (vals, vecs) = sym_eig(g);
    let vmax = vals.iter().cloned().fold(0.0_f64, f64::max);
    if vals.iter().any(|&v| v <= T_FLOOR * vmax) || vmax <= 0.0 {
        return Err(CfsError::Degenerate(format!(
            "surface layer inner product is not positive definite (min eigenvalue {:.3e})",
            vals.first().copied().unwrap_or(0.0)
        )));
    }
    let k = vals.len();
    let sq = RMat::from_fn(k, k, |r, col| (0..k).map(|m| vecs[(r, m)] * vals[m].sqrt() * vecs[(col, m)]).sum());
    let isq = RMat::from_fn(k, k, |r, col| (0..k).map(|m| vecs[(r, m)] / vals[m].sqrt() * vecs[(col, m)]).sum());
    Ok((sq, isq))
}

pub fn complex_structure(space: &LinSolutionSpace) -> Result<ComplexStructure> {
    let d = space.gram_inner.nrows();
    if d == 0 {
        return Err(CfsError::Degenerate("empty solution space".into()));
    }
    let g = &space.gram_inner;
    let s = &space.gram_sympl;
    let (gsq, gisq) = sym_sqrt_inv(g)?;
    let ginv = &gisq * &gisq;
    let t = &ginv * s;
    // M = G^{-1/2} S G^{-1/2} is antisymmetric and similar to T.
    let m = &gisq * s * &gisq;
    let m = (&m - m.transpose()) * 0.5;
    let (mu2, vecs) = sym_eig(&(m.transpose() * &m));
    let mmax = mu2.iter().cloned().fold(0.0_f64, f64::max);
    let mmin = mu2.first().copied().unwrap_or(0.0);
    if mmax <= 0.0 || mmin <= T_FLOOR * mmax {
        return Err(CfsError::Singular(format!(
            "operator T is singular: smallest eigenvalue of -T^2 is {mmin:.3e} against {mmax:.3e}"
        )));
    }
    let abs_inv = RMat::from_fn(d, d, |r, col| (0..d).map(|k| vecs[(r, k)] / mu2[k].sqrt() * vecs[(col, k)]).sum());
    let jm = -(&abs_inv * &m);
    let j = &gisq * &jm * &gsq;
    // holomorphic modes: eigenvectors of the Hermitian matrix iM with positive eigenvalue
    let im = m.map(|x| c(0.0, x));
    let (lam, w) = crate::linalg::herm_eig(&im);
    let mut modes: Vec<usize> = (0..d).filter(|&k| lam[k] > 0.0).collect();
    modes.sort_by(|&a, &b| lam[b].total_cmp(&lam[a]));
    let gisq_c = crate::linalg::to_complex(&gisq);
    let cols: Vec<CVec> = modes.iter().map(|&k| &gisq_c * w.column(k) / c(lam[k].sqrt(), 0.0)).collect();
    let hol_basis = if cols.is_empty() { CMat::zeros(d, 0) } else { CMat::from_columns(&cols) };
    let scalar = hol_scalar(&space.gram_sympl, &j, &hol_basis);
    Ok(ComplexStructure { t, j, hol_basis, scalar, freqs: modes.iter().map(|&k| lam[k]).collect() })
}

/// Complexified symplectic form, anti-linear in the first argument.
pub fn sigma_c(s: &RMat, u: &CVec, v: &CVec) -> crate::linalg::C64 {
    let sc = crate::linalg::to_complex(s);
    u.dotc(&(sc * v))
}

/// `(u|v) = sigma(u, J v)` for the columns of `h`.
pub fn hol_scalar(s: &RMat, j: &RMat, h: &CMat) -> CMat {
    let sc = crate::linalg::to_complex(s);
    let jc = crate::linalg::to_complex(j);
    h.adjoint() * sc * jc * h
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ComplexReport {
    pub j_square_defect: f64,
    pub j_orthogonality_defect: f64,
    pub j_t_commutator: f64,
    pub scalar_min_eigenvalue: f64,
    pub scalar_hermiticity_defect: f64,
}

pub fn complex_report(space: &LinSolutionSpace, cs: &ComplexStructure) -> ComplexReport {
    let d = cs.j.nrows();
    let id = RMat::identity(d, d);
    let jsq = crate::linalg::max_abs_r(&(&cs.j * &cs.j + &id));
    let g = &space.gram_inner;
    let orth = crate::linalg::max_abs_r(&(cs.j.transpose() * g * &cs.j - g)) / crate::linalg::max_abs_r(g).max(1e-300);
    let comm = crate::linalg::max_abs_r(&(&cs.j * &cs.t - &cs.t * &cs.j));
    let (ev, _) = crate::linalg::herm_eig(&cs.scalar);
    let herm = crate::linalg::max_abs(&(&cs.scalar - cs.scalar.adjoint()));
    ComplexReport {
        j_square_defect: jsq,
        j_orthogonality_defect: orth,
        j_t_commutator: comm,
        scalar_min_eigenvalue: ev.first().copied().unwrap_or(0.0),
        scalar_hermiticity_defect: herm,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GreenReport {
    /// Largest `|Delta G u|` over the supplied duals.
    pub delta_residual: f64,
    /// Largest distance of `G u` from the span of the solution basis.
    pub outside_residual: f64,
    /// Largest `|sigma(G u, G v) - <u, G v>|`.
    pub identity_residual: f64,
    pub pass: bool,
}

/// Checks a candidate causal fundamental solution `g` acting on dual vectors
/// in variation coordinates. `delta` is the linearized field operator with
/// columns in the same coordinates.
pub fn verify_green(space: &LinSolutionSpace, delta: &RMat, g: &RMat, duals: &[(Vec<f64>, Vec<f64>)]) -> Result<GreenReport> {
    let nv = space.coords.nrows();
    if g.shape() != (nv, nv) || delta.ncols() != nv {
        return Err(CfsError::Dimension(format!(
            "candidate of shape {:?} and delta of shape {:?} for {nv} variation coordinates",
            g.shape(),
            delta.shape()
        )));
    }
    let b = &space.coords;
    let bt = b.transpose();
    let btb = &bt * b;
    let chol = btb.clone().cholesky();
    let mut delta_residual = 0.0_f64;
    let mut outside_residual = 0.0_f64;
    let mut identity_residual = 0.0_f64;
    let coords_of = |w: &crate::linalg::RVec| -> Result<crate::linalg::RVec> {
        if b.ncols() == 0 {
            return Ok(crate::linalg::RVec::zeros(0));
        }
        chol.as_ref()
            .map(|ch| ch.solve(&(&bt * w)))
            .ok_or_else(|| CfsError::Singular("solution basis is linearly dependent".into()))
    };
    for (u, v) in duals {
        if u.len() != nv || v.len() != nv {
            return Err(CfsError::Dimension(format!("dual of length {} for {nv} coordinates", u.len())));
        }
        let u = crate::linalg::RVec::from_column_slice(u);
        let v = crate::linalg::RVec::from_column_slice(v);
        let gu = g * &u;
        let gv = g * &v;
        for w in [&gu, &gv] {
            delta_residual = delta_residual.max((delta * w).amax());
        }
        let cu = coords_of(&gu)?;
        let cv = coords_of(&gv)?;
        outside_residual = outside_residual.max((&gu - b * &cu).amax()).max((&gv - b * &cv).amax());
        let lhs = cu.dot(&(&space.gram_sympl * &cv));
        let rhs = u.dot(&gv);
        identity_residual = identity_residual.max((lhs - rhs).abs());
    }
    let pass = delta_residual < 1e-6 && outside_residual < 1e-6 && identity_residual < 1e-6;
    Ok(GreenReport { delta_residual, outside_residual, identity_residual, pass })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct KReport {
    /// Largest `|<k eta | k eta'>^t - <eta | k eta'>|` over the test pairs.
    pub residual: f64,
    /// Largest modulus of the two sides, for scale.
    pub scale: f64,
    pub pairs: usize,
    pub pass: bool,
}

/// Checks a candidate fermionic fundamental solution `k`, a matrix on
/// stacked wave functions, against the Krein product over all pairs of
/// the test set.
pub fn verify_k(
    rho: &DiscreteMeasure,
    k: &CMat,
    tests: &[WaveFunction],
    cut: &CutSpec,
    params: &LagrangianParams,
) -> Result<KReport> {
    let dim = rho.spec.f * rho.len();
    if k.nrows() != dim || k.ncols() != dim {
        return Err(CfsError::Dimension(format!("k must be {dim}x{dim}")));
    }
    let qt = QTable::new(rho, params)?;
    let images: Result<Vec<WaveFunction>> = tests.iter().map(|w| unstack_wave(&(k * stack_wave(w)), rho)).collect();
    let images = images?;
    let mut rep = KReport { residual: 0.0, scale: 0.0, pairs: 0, pass: true };
    for (a, ka) in tests.iter().zip(&images) {
        for kb in &images {
            let lhs = extended_product_with(ka, kb, rho, cut, &qt)?;
            let rhs = krein_product(a, kb, rho)?;
            rep.residual = rep.residual.max((lhs - rhs).norm());
            rep.scale = rep.scale.max(lhs.norm()).max(rhs.norm());
            rep.pairs += 1;
        }
    }
    rep.pass = rep.residual < 1e-6;
    Ok(rep)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::{fix_a, fix_b};
    use crate::linalg::RVec;

    #[test]
    fn canonical_symplectic_pair() {
        let s = RMat::from_row_slice(2, 2, &[0.0, 1.0, -1.0, 0.0]);
        let sp = LinSolutionSpace::from_grams(RMat::identity(2, 2), s.clone()).unwrap();
        let cs = complex_structure(&sp).unwrap();
        assert!((&cs.t - &s).amax() < 1e-14);
        // J = -(-T^2)^{-1/2} T = -T here
        assert!((&cs.j + &s).amax() < 1e-14);
        assert_eq!(cs.hol_basis.ncols(), 1);
        assert!((cs.scalar[(0, 0)] - c(1.0, 0.0)).norm() < 1e-14);
    }

    #[test]
    fn singular_t_aborts() {
        let mut s = RMat::zeros(4, 4);
        s[(0, 1)] = 1.0;
        s[(1, 0)] = -1.0;
        let sp = LinSolutionSpace::from_grams(RMat::identity(4, 4), s).unwrap();
        assert!(matches!(complex_structure(&sp), Err(CfsError::Singular(_))));
    }

    #[test]
    fn imaginary_part_of_scalar_is_sigma() {
        let g = RMat::from_row_slice(4, 4, &[2.0, 0.3, 0.1, 0.0, 0.3, 1.5, 0.2, 0.1, 0.1, 0.2, 1.0, 0.05, 0.0, 0.1, 0.05, 0.8]);
        let a = RMat::from_row_slice(4, 4, &[0.0, 1.0, 0.4, -0.2, -1.0, 0.0, 0.3, 0.7, -0.4, -0.3, 0.0, 0.5, 0.2, -0.7, -0.5, 0.0]);
        let sp = LinSolutionSpace::from_grams(g, a.clone()).unwrap();
        let cs = complex_structure(&sp).unwrap();
        let rep = complex_report(&sp, &cs);
        assert!(rep.j_square_defect < 1e-10 && rep.j_orthogonality_defect < 1e-10 && rep.j_t_commutator < 1e-10);
        assert!((&cs.scalar - CMat::identity(2, 2)).norm() < 1e-10);
        let u = &cs.hol_basis * CVec::from_vec(vec![c(0.3, -0.2), c(1.1, 0.4)]);
        let v = &cs.hol_basis * CVec::from_vec(vec![c(-0.7, 0.5), c(0.2, 0.9)]);
        let jv = crate::linalg::to_complex(&cs.j) * &v;
        let scal = sigma_c(&a, &u, &jv);
        assert!((scal.im - sigma_c(&a, &u, &v).re).abs() < 1e-12);
    }

    #[test]
    fn delta_trivial_and_symmetric() {
        let s = fix_a();
        let var = variation_basis(&s.rho);
        let d = delta_matrix(&s.rho, &s.params, &var, &var).unwrap();
        assert!((&d - d.transpose()).amax() < 1e-6 * (1.0 + d.amax()));
        let id = RMat::identity(3, 3);
        assert_eq!(null_space(&id, 1e-10).ncols(), 0);
        assert_eq!(null_space(&RMat::zeros(3, 3), 1e-10).ncols(), 3);
    }

    #[test]
    fn delta_is_half_the_action_hessian() {
        let s = fix_b();
        let rho = &s.rho;
        let var = variation_basis(rho);
        let pick = [0usize, 5, 17, 33, 50];
        let test: Vec<Jet> = pick.iter().map(|&k| var[k].clone()).collect();
        let cols: Vec<Jet> = [3usize, 5, 20, 40].iter().map(|&k| var[k].clone()).collect();
        let d = delta_matrix(rho, &s.params, &test, &cols).unwrap();
        let action = |u: &Jet, a: f64, v: &Jet, b: f64| {
            let pts = (0..rho.len())
                .map(|i| rho.points[i].with_psi(rho.points[i].psi() + &u.dpsi[i] * c(a, 0.0) + &v.dpsi[i] * c(b, 0.0)))
                .collect();
            crate::action_optim::causal_action(&rho.with_points(pts), &s.params).unwrap()
        };
        let hess = |u: &Jet, v: &Jet, h: f64| {
            (action(u, h, v, h) - action(u, h, v, -h) - action(u, -h, v, h) + action(u, -h, v, -h)) / (4.0 * h * h)
        };
        for (r, u) in test.iter().enumerate() {
            for (k, v) in cols.iter().enumerate() {
                let e1 = (hess(u, v, 1e-2) / 2.0 - d[(r, k)]).abs();
                let e2 = (hess(u, v, 5e-3) / 2.0 - d[(r, k)]).abs();
                assert!(e2 < 1e-3 * (1.0 + d[(r, k)].abs()), "{r} {k}: {e1} {e2}");
                assert!(e2 <= e1 * 0.5 || e2 < 1e-8, "{r} {k}: {e1} {e2}");
            }
        }
    }

    #[test]
    fn green_candidates() {
        let s = RMat::from_row_slice(2, 2, &[0.0, 2.0, -2.0, 0.0]);
        let mut sp = LinSolutionSpace::from_grams(RMat::identity(2, 2), s.clone()).unwrap();
        // solution space embedded as the first two of three variation coordinates
        sp.coords = RMat::from_row_slice(3, 2, &[1.0, 0.0, 0.0, 1.0, 0.0, 0.0]);
        let delta = RMat::from_row_slice(1, 3, &[0.0, 0.0, 1.0]);
        let duals = vec![(vec![1.0, 0.5, -0.3], vec![0.2, -1.0, 0.7]), (vec![0.0, 1.0, 0.0], vec![1.0, 0.0, 2.0])];
        let zero = verify_green(&sp, &delta, &RMat::zeros(3, 3), &duals).unwrap();
        assert!(zero.pass && zero.identity_residual == 0.0);
        let sinv = s.clone().try_inverse().unwrap();
        let g = -(&sp.coords * sinv * sp.coords.transpose());
        let ok = verify_green(&sp, &delta, &g, &duals).unwrap();
        assert!(ok.identity_residual < 1e-10, "{ok:?}");
        assert!(ok.pass);
        let mut bad = g.clone();
        bad[(2, 0)] = 1.0;
        let rep = verify_green(&sp, &delta, &bad, &duals).unwrap();
        assert!(!rep.pass && rep.delta_residual > 0.1);
        let _ = RVec::zeros(1);
    }

    fn random_waves(rho: &DiscreteMeasure, count: usize, seed: u64) -> Vec<WaveFunction> {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        (0..count)
            .map(|_| WaveFunction {
                values: (0..rho.len())
                    .map(|_| CVec::from_fn(rho.spec.f, |_, _| c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))))
                    .collect(),
            })
            .collect()
    }

    #[test]
    fn verify_k_zero_and_constructed() {
        use crate::linalg::herm_eig;
        use crate::wavefunc::{extended_matrix, krein_matrix};
        let s = fix_b();
        let cut = CutSpec::at(1.5);
        let tests = random_waves(&s.rho, 5, 9);
        let dim = s.rho.spec.f * s.rho.len();
        let zero = verify_k(&s.rho, &CMat::zeros(dim, dim), &tests, &cut, &s.params).unwrap();
        assert!(zero.pass && zero.residual == 0.0);

        // k = W (W^H E W)^{-1} W^H K on the range of E
        let qt = QTable::new(&s.rho, &s.params).unwrap();
        let e = extended_matrix(&s.rho, &cut, &qt);
        let kr = krein_matrix(&s.rho);
        let a = &tests[0];
        let b = &tests[1];
        let brute_e = extended_product_with(a, b, &s.rho, &cut, &qt).unwrap();
        let brute_k = krein_product(a, b, &s.rho).unwrap();
        assert!((stack_wave(a).dotc(&(&e * stack_wave(b))) - brute_e).norm() < 1e-10 * (1.0 + brute_e.norm()));
        assert!((stack_wave(a).dotc(&(&kr * stack_wave(b))) - brute_k).norm() < 1e-10 * (1.0 + brute_k.norm()));
        let (vals, vecs) = herm_eig(&e);
        let top = vals.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        let keep: Vec<usize> = (0..vals.len()).filter(|&i| vals[i].abs() > 1e-8 * top).collect();
        assert!(!keep.is_empty());
        let w = CMat::from_fn(dim, keep.len(), |r, col| vecs[(r, keep[col])]);
        let ginv = CMat::from_fn(keep.len(), keep.len(), |r, col| if r == col { c(1.0 / vals[keep[r]], 0.0) } else { c(0.0, 0.0) });
        let k = &w * ginv * w.adjoint() * &kr;
        let rep = verify_k(&s.rho, &k, &tests, &cut, &s.params).unwrap();
        assert!(rep.pass && rep.scale > 1e-3, "{rep:?}");
        let bad = verify_k(&s.rho, &(k * c(2.0, 0.0)), &tests, &cut, &s.params).unwrap();
        assert!(!bad.pass, "{bad:?}");
        assert!(verify_k(&s.rho, &CMat::zeros(3, 3), &tests, &cut, &s.params).is_err());
    }
}
