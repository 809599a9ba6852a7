//! Spin spaces, physical wave functions, the kernels `P` and `Q`, the Krein
//! and extended scalar products, the EL residual of the wave functions and
//! the extended one-particle space.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{CfsError, Result};
use crate::fd;
use crate::linalg::{c, cr, herm_eig, range_projector, sig_left, CMat, CVec, C64};
use crate::operator_core::{chain_spectrum, lagrangian_from_spectrum, LagrangianParams, SpacetimePoint};
use crate::surface_layer::CutSpec;
use crate::system_measure::DiscreteMeasure;

/// Wave function: one vector of `H` per point, inside the spin space.
#[derive(Clone, Debug, PartialEq)]
pub struct WaveFunction {
    pub values: Vec<CVec>,
}

impl WaveFunction {
    pub fn zero(rho: &DiscreteMeasure) -> Self {
        Self { values: vec![CVec::zeros(rho.spec.f); rho.len()] }
    }

    pub fn scaled(&self, a: C64) -> Self {
        Self { values: self.values.iter().map(|v| v * a).collect() }
    }

    pub fn plus(&self, other: &Self) -> Self {
        Self { values: self.values.iter().zip(&other.values).map(|(a, b)| a + b).collect() }
    }

    pub fn combination(waves: &[WaveFunction], coeffs: &[C64]) -> Self {
        let mut out = waves[0].scaled(coeffs[0]);
        for (w, &k) in waves.iter().zip(coeffs).skip(1) {
            out = out.plus(&w.scaled(k));
        }
        out
    }

    /// Local frame coordinates `Psi(x_i) psi(x_i)` at every point.
    pub fn frame_coords(&self, rho: &DiscreteMeasure) -> Vec<CVec> {
        rho.points.iter().zip(&self.values).map(|(p, v)| p.psi() * v).collect()
    }

    /// Largest relative distance of a value from its spin space.
    pub fn spin_space_defect(&self, rho: &DiscreteMeasure) -> f64 {
        let mut worst = 0.0_f64;
        for (p, v) in rho.points.iter().zip(&self.values) {
            let nv = v.norm();
            if nv > 0.0 {
                let pr = spin_projector(p);
                worst = worst.max((v - &pr * v).norm() / nv);
            }
        }
        worst
    }
}

/// Orthogonal projector onto the spin space `x(H)`.
pub fn spin_projector(x: &SpacetimePoint) -> CMat {
    let op = x.op();
    let scale = crate::linalg::max_abs(&op);
    range_projector(&op, 1e-12 * scale.max(1e-300)).0
}

pub fn physical_wave(u: &CVec, rho: &DiscreteMeasure) -> Result<WaveFunction> {
    if u.len() != rho.spec.f {
        return Err(CfsError::Dimension(format!("vector of length {} in dimension {}", u.len(), rho.spec.f)));
    }
    Ok(WaveFunction { values: rho.points.iter().map(|p| spin_projector(p) * u).collect() })
}

/// Spin inner product `-<psi | x phi>`.
pub fn spin_product(psi: &CVec, phi: &CVec, x: &SpacetimePoint) -> Result<C64> {
    let pr = spin_projector(x);
    for v in [psi, phi] {
        let nv = v.norm();
        if nv > 0.0 && (v - &pr * v).norm() > 1e-8 * nv {
            return Err(CfsError::Invalid("value lies outside the spin space".into()));
        }
    }
    Ok(-psi.dotc(&(x.op() * phi)))
}

/// Spin product of two vectors given in the local frame.
fn frame_spin(n: usize, a: &CVec, b: &CVec) -> C64 {
    let mut acc = cr(0.0);
    for k in 0..2 * n {
        let s = if k < n { 1.0 } else { -1.0 };
        acc += a[k].conj() * b[k] * s;
    }
    acc
}

/// Relative distance between the modulus-sorted nonzero spectra of
/// `x y` (on `H`) and of the closed chain `P(x, y) P(y, x)` (on the spin space).
pub fn isospectral_defect(x: &SpacetimePoint, y: &SpacetimePoint, params: &LagrangianParams) -> Result<f64> {
    let full = crate::linalg::eigenvalues(&(x.op() * y.op()))?;
    let chain = chain_spectrum(&(kernel_p(x, y) * kernel_p(y, x)), 2 * x.n(), params.eps_rank)?;
    let mut a: Vec<C64> = full;
    a.sort_by(|p, q| q.norm().total_cmp(&p.norm()));
    a.truncate(2 * x.n());
    let mut b = chain.lambdas.clone();
    b.sort_by(|p, q| q.norm().total_cmp(&p.norm()));
    let scale = a.iter().chain(&b).fold(0.0_f64, |m, z| m.max(z.norm())).max(f64::MIN_POSITIVE);
    // match each eigenvalue of the chain to the nearest unused one of the product
    let mut used = vec![false; a.len()];
    let mut worst: f64 = 0.0;
    for z in &b {
        let mut best = (f64::INFINITY, 0);
        for (k, w) in a.iter().enumerate() {
            if !used[k] && (z - w).norm() < best.0 {
                best = ((z - w).norm(), k);
            }
        }
        if best.0.is_finite() {
            used[best.1] = true;
            worst = worst.max(best.0);
        }
    }
    Ok(worst / scale)
}

/// `P(x, y) = Psi(x) Psi(y)^*` with `Psi(y)^* = Psi(y)^H sig`.
pub fn kernel_p(x: &SpacetimePoint, y: &SpacetimePoint) -> CMat {
    sig_right_of(&(x.psi() * y.psi().adjoint()), x.n())
}

fn sig_right_of(m: &CMat, n: usize) -> CMat {
    crate::linalg::sig_right(m, n)
}

/// Spin adjoint `sig A^H sig`.
pub fn spin_adjoint(a: &CMat, n: usize) -> CMat {
    sig_left(&sig_right_of(&a.adjoint(), n), n)
}

/// Lagrangian as a function of the kernel `P(x, y)`.
pub fn lagrangian_of_p(p: &CMat, n: usize, params: &LagrangianParams) -> Result<f64> {
    let chain = p * spin_adjoint(p, n);
    let e = chain_spectrum(&chain, 2 * n, params.eps_rank)?;
    Ok(lagrangian_from_spectrum(&e, params.kappa))
}

#[derive(Clone, Debug, PartialEq)]
pub struct QKernel {
    pub q: CMat,
    /// Eigenvalues of the closed chain nearly coincide or vanish, so the
    /// Lagrangian is not differentiable there.
    pub crossing: bool,
    /// Smallest eigenvalue gap of the closed chain relative to its spectral radius.
    pub gap: f64,
}

/// Relative spacing below which the chain counts as being at a crossing.
pub const CROSSING_GAP: f64 = 1e-6;

fn chain_gap(p: &CMat, n: usize) -> Result<f64> {
    let chain = p * spin_adjoint(p, n);
    let ev = crate::linalg::eigenvalues(&chain)?;
    let max = ev.iter().fold(0.0_f64, |a, z| a.max(z.norm()));
    if max == 0.0 {
        return Ok(0.0);
    }
    let mut gap = f64::INFINITY;
    for i in 0..ev.len() {
        gap = gap.min(ev[i].norm() / max);
        for j in 0..i {
            gap = gap.min((ev[i] - ev[j]).norm() / max);
        }
    }
    Ok(gap)
}

/// Kernel `Q(x, y)` with `dL = 2 Re Tr(Q dP^*)`, by central differences in
/// the real and imaginary parts of the entries of `P(x, y)`.
pub fn kernel_q(x: &SpacetimePoint, y: &SpacetimePoint, params: &LagrangianParams) -> Result<QKernel> {
    let n = x.n();
    let p = kernel_p(x, y);
    let k = 2 * n;
    let h = fd::step1(p.norm());
    let mut grad = CMat::zeros(k, k);
    for r in 0..k {
        for col in 0..k {
            let mut part = [0.0; 2];
            for (slot, unit) in [cr(1.0), c(0.0, 1.0)].into_iter().enumerate() {
                let mut pp = p.clone();
                pp[(r, col)] += unit * h;
                let up = lagrangian_of_p(&pp, n, params)?;
                pp[(r, col)] -= unit * (2.0 * h);
                let down = lagrangian_of_p(&pp, n, params)?;
                part[slot] = (up - down) / (2.0 * h);
            }
            grad[(r, col)] = c(part[0], part[1]);
        }
    }
    let q = sig_left(&sig_right_of(&grad, n), n) * cr(0.5);
    let gap = chain_gap(&p, n)?;
    Ok(QKernel { q, crossing: gap < CROSSING_GAP, gap })
}

/// `Q(x_i, x_j)` for every ordered pair.
#[derive(Clone, Debug)]
pub struct QTable {
    pub kernels: Vec<Vec<QKernel>>,
}

impl QTable {
    pub fn new(rho: &DiscreteMeasure, params: &LagrangianParams) -> Result<Self> {
        let n = rho.len();
        let rows: Result<Vec<Vec<QKernel>>> = (0..n)
            .into_par_iter()
            .map(|i| (0..n).map(|j| kernel_q(&rho.points[i], &rho.points[j], params)).collect())
            .collect();
        Ok(Self { kernels: rows? })
    }

    pub fn q(&self, i: usize, j: usize) -> &CMat {
        &self.kernels[i][j].q
    }

    /// Largest mismatch `|Q(x,y)^* - Q(y,x)|` over all pairs.
    pub fn symmetry_defect(&self, n: usize) -> f64 {
        let len = self.kernels.len();
        let mut worst = 0.0_f64;
        for i in 0..len {
            for j in 0..len {
                let d = spin_adjoint(self.q(i, j), n) - self.q(j, i);
                worst = worst.max(crate::linalg::max_abs(&d));
            }
        }
        worst
    }

    pub fn any_crossing(&self, pairs: impl Iterator<Item = (usize, usize)>) -> bool {
        pairs.into_iter().any(|(i, j)| self.kernels[i][j].crossing)
    }
}

pub fn krein_product(eta: &WaveFunction, etap: &WaveFunction, rho: &DiscreteMeasure) -> Result<C64> {
    check_wave(eta, rho)?;
    check_wave(etap, rho)?;
    let a = eta.frame_coords(rho);
    let b = etap.frame_coords(rho);
    let n = rho.spec.n;
    Ok((0..rho.len()).map(|i| frame_spin(n, &a[i], &b[i]) * rho.weights[i]).sum())
}

fn check_wave(w: &WaveFunction, rho: &DiscreteMeasure) -> Result<()> {
    if w.values.len() != rho.len() || w.values.iter().any(|v| v.len() != rho.spec.f) {
        return Err(CfsError::Dimension("wave function does not match the measure".into()));
    }
    Ok(())
}

/// Hermitian matrix `E` of the extended product on frame coordinates,
/// `<psi|phi>^t = sum_{i,j} a_i^H E_ij b_j`, stored as blocks.
fn extended_block(rho: &DiscreteMeasure, qt: &QTable, i: usize, j: usize, past: &[bool]) -> Option<CMat> {
    let sign = match (past[i], past[j]) {
        (true, false) => 1.0,
        (false, true) => -1.0,
        _ => return None,
    };
    let n = rho.spec.n;
    let w = rho.weights[i] * rho.weights[j] * sign;
    Some(sig_left(qt.q(i, j), n) * c(0.0, -2.0 * w))
}

/// Extended scalar product at the cut, with a precomputed kernel table.
pub fn extended_product_with(psi: &WaveFunction, phi: &WaveFunction, rho: &DiscreteMeasure, cut: &CutSpec, qt: &QTable) -> Result<C64> {
    check_wave(psi, rho)?;
    check_wave(phi, rho)?;
    let past = cut.past(rho);
    let a = psi.frame_coords(rho);
    let b = phi.frame_coords(rho);
    let mut acc = cr(0.0);
    for i in 0..rho.len() {
        for j in 0..rho.len() {
            if let Some(e) = extended_block(rho, qt, i, j, &past) {
                acc += a[i].dotc(&(e * &b[j]));
            }
        }
    }
    Ok(acc)
}

/// Stacked values `(v_0, v_1, ...)` of a wave function.
pub fn stack_wave(w: &WaveFunction) -> CVec {
    let f = w.values.first().map(|v| v.len()).unwrap_or(0);
    CVec::from_fn(w.values.len() * f, |k, _| w.values[k / f][k % f])
}

pub fn unstack_wave(v: &CVec, rho: &DiscreteMeasure) -> Result<WaveFunction> {
    let f = rho.spec.f;
    if v.len() != f * rho.len() {
        return Err(CfsError::Dimension("stacked vector does not match the measure".into()));
    }
    Ok(WaveFunction { values: (0..rho.len()).map(|i| v.rows(i * f, f).into_owned()).collect() })
}

/// Gram matrix of the Krein product on stacked values.
pub fn krein_matrix(rho: &DiscreteMeasure) -> CMat {
    let f = rho.spec.f;
    let n = rho.spec.n;
    let mut k = CMat::zeros(f * rho.len(), f * rho.len());
    for (i, p) in rho.points.iter().enumerate() {
        let psi = p.psi();
        let block = psi.adjoint() * sig_left(&psi, n) * cr(rho.weights[i]);
        k.view_mut((i * f, i * f), (f, f)).copy_from(&block);
    }
    k
}

/// Gram matrix of the extended product on stacked values.
pub fn extended_matrix(rho: &DiscreteMeasure, cut: &CutSpec, qt: &QTable) -> CMat {
    let f = rho.spec.f;
    let past = cut.past(rho);
    let mut e = CMat::zeros(f * rho.len(), f * rho.len());
    for i in 0..rho.len() {
        for j in 0..rho.len() {
            if let Some(b) = extended_block(rho, qt, i, j, &past) {
                let block = rho.points[i].psi().adjoint() * b * rho.points[j].psi();
                e.view_mut((i * f, j * f), (f, f)).copy_from(&block);
            }
        }
    }
    e
}

pub fn extended_product(psi: &WaveFunction, phi: &WaveFunction, rho: &DiscreteMeasure, cut: &CutSpec, params: &LagrangianParams) -> Result<C64> {
    let qt = QTable::new(rho, params)?;
    let past = cut.past(rho);
    let cross = (0..rho.len()).flat_map(|i| (0..rho.len()).map(move |j| (i, j))).filter(|&(i, j)| past[i] != past[j]);
    if qt.any_crossing(cross) {
        return Err(CfsError::Degenerate("kernel Q evaluated at an eigenvalue crossing".into()));
    }
    extended_product_with(psi, phi, rho, cut, &qt)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ElqReport {
    pub residual: f64,
    pub r_trace: f64,
    pub fitted: bool,
}

/// `max_{phi, i} |sum_j rho_j Q(x_i,x_j) psi^phi(x_j) - r psi^phi(x_i)|` over
/// the basis of `H^f`, in local frames.
pub fn elq_residual(rho: &DiscreteMeasure, params: &LagrangianParams) -> Result<ElqReport> {
    let qt = QTable::new(rho, params)?;
    let f = rho.spec.f;
    let mut lhs = Vec::new();
    let mut own = Vec::new();
    for l in 0..rho.spec.f_fermi {
        let mut e = CVec::zeros(f);
        e[l] = cr(1.0);
        let coords = physical_wave(&e, rho)?.frame_coords(rho);
        for i in 0..rho.len() {
            let mut s = CVec::zeros(2 * rho.spec.n);
            for j in 0..rho.len() {
                s += qt.q(i, j) * &coords[j] * cr(rho.weights[j]);
            }
            lhs.push(s);
            own.push(coords[i].clone());
        }
    }
    let (r, fitted) = match params.r_trace {
        Some(r) => (r, false),
        None => {
            let num: f64 = lhs.iter().zip(&own).map(|(a, b)| b.dotc(a).re).sum();
            let den: f64 = own.iter().map(|b| b.norm_squared()).sum();
            (if den > 0.0 { num / den } else { 0.0 }, true)
        }
    };
    let residual = lhs.iter().zip(&own).map(|(a, b)| (a - b * cr(r)).norm()).fold(0.0, f64::max);
    Ok(ElqReport { residual, r_trace: r, fitted })
}

#[derive(Clone, Debug)]
pub struct ExtendedBasis {
    /// Coefficients of the basis in the candidates (one column per vector).
    pub coeffs: CMat,
    pub waves: Vec<WaveFunction>,
    /// Gram matrix of the candidates.
    pub gram: CMat,
    pub min_eigenvalue: f64,
    /// The candidate Gram had negative eigenvalues beyond tolerance.
    pub indefinite: bool,
}

impl ExtendedBasis {
    pub fn dim(&self) -> usize {
        self.waves.len()
    }
}

fn gram_of(waves: &[WaveFunction], rho: &DiscreteMeasure, cut: &CutSpec, qt: &QTable) -> Result<CMat> {
    let k = waves.len();
    let mut g = CMat::zeros(k, k);
    for a in 0..k {
        for b in a..k {
            let v = extended_product_with(&waves[a], &waves[b], rho, cut, qt)?;
            g[(a, b)] = v;
            g[(b, a)] = v.conj();
        }
    }
    Ok(g)
}

fn positive_basis(gram: &CMat, tol: f64) -> (CMat, f64, bool) {
    let (vals, vecs) = herm_eig(gram);
    let vmax = vals.iter().cloned().fold(0.0_f64, f64::max);
    let vmin = vals.first().copied().unwrap_or(0.0);
    let keep: Vec<usize> = (0..vals.len()).filter(|&k| vmax > 0.0 && vals[k] > tol * vmax).collect();
    let coeffs = CMat::from_fn(vals.len(), keep.len(), |r, k| vecs[(r, keep[k])] / cr(vals[keep[k]].sqrt()));
    let indefinite = vmin < -tol * vmax.abs().max(vmin.abs());
    (coeffs, vmin, indefinite)
}

/// Orthonormal basis of the positive part of the candidate span under the
/// extended product.
pub fn extended_space_basis_with(
    rho: &DiscreteMeasure,
    cut: &CutSpec,
    qt: &QTable,
    candidates: &[WaveFunction],
    tol: f64,
) -> Result<ExtendedBasis> {
    let gram = gram_of(candidates, rho, cut, qt)?;
    let (coeffs, min_eigenvalue, indefinite) = positive_basis(&gram, tol);
    if coeffs.ncols() == 0 && candidates.iter().any(|w| w.values.iter().any(|v| v.norm() > 0.0)) && min_eigenvalue < 0.0 {
        return Err(CfsError::Degenerate("extended Gram has no positive directions".into()));
    }
    let waves = (0..coeffs.ncols())
        .map(|k| {
            let col: Vec<C64> = coeffs.column(k).iter().copied().collect();
            WaveFunction::combination(candidates, &col)
        })
        .collect();
    Ok(ExtendedBasis { coeffs, waves, gram, min_eigenvalue, indefinite })
}

pub fn extended_space_basis(
    rho: &DiscreteMeasure,
    cut: &CutSpec,
    params: &LagrangianParams,
    candidates: &[WaveFunction],
    tol: f64,
) -> Result<ExtendedBasis> {
    if candidates.is_empty() {
        return Ok(ExtendedBasis {
            coeffs: CMat::zeros(0, 0),
            waves: Vec::new(),
            gram: CMat::zeros(0, 0),
            min_eigenvalue: 0.0,
            indefinite: false,
        });
    }
    let qt = QTable::new(rho, params)?;
    extended_space_basis_with(rho, cut, &qt, candidates, tol)
}

/// One-particle basis split into sea modes (spanned by the physical waves of
/// `H^f`) and particle modes (the remaining coordinate waves, orthogonalized
/// against the sea), each orthonormal for the extended product.
#[derive(Clone, Debug)]
pub struct SplitBasis {
    pub sea: Vec<WaveFunction>,
    pub particle: Vec<WaveFunction>,
    pub indefinite: bool,
}

impl SplitBasis {
    /// Modes in the order sea, then particle.
    pub fn modes(&self) -> Vec<WaveFunction> {
        self.sea.iter().chain(&self.particle).cloned().collect()
    }

    pub fn dim(&self) -> usize {
        self.sea.len() + self.particle.len()
    }
}

pub fn split_basis(rho: &DiscreteMeasure, cut: &CutSpec, qt: &QTable, tol: f64, max_modes: usize) -> Result<SplitBasis> {
    let f = rho.spec.f;
    let unit = |l: usize| {
        let mut e = CVec::zeros(f);
        e[l] = cr(1.0);
        physical_wave(&e, rho)
    };
    let sea_c: Vec<WaveFunction> = (0..rho.spec.f_fermi).map(unit).collect::<Result<_>>()?;
    let sea = extended_space_basis_with(rho, cut, qt, &sea_c, tol)?;
    let mut rest = Vec::new();
    for l in rho.spec.f_fermi..f {
        let mut w = unit(l)?;
        for s in &sea.waves {
            let proj = extended_product_with(s, &w, rho, cut, qt)?;
            w = w.plus(&s.scaled(-proj));
        }
        rest.push(w);
    }
    let particle = if rest.is_empty() {
        None
    } else {
        Some(extended_space_basis_with(rho, cut, qt, &rest, tol)?)
    };
    let mut sea_w = sea.waves;
    let mut part_w = particle.as_ref().map(|p| p.waves.clone()).unwrap_or_default();
    sea_w.truncate(max_modes);
    part_w.truncate(max_modes - sea_w.len());
    Ok(SplitBasis {
        sea: sea_w,
        particle: part_w,
        indefinite: sea.indefinite || particle.map(|p| p.indefinite).unwrap_or(false),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::{fix_a, fix_b};
    use crate::operator_core::{diag_op, HilbertSpec};
    use rand::{Rng, SeedableRng};

    fn single(op: &[f64]) -> DiscreteMeasure {
        let p = SpacetimePoint::from_operator(&diag_op(op), 1, 1e-10).unwrap();
        DiscreteMeasure::new(vec![p], vec![1.0], vec![0.0], HilbertSpec::new(op.len(), 1, 1).unwrap()).unwrap()
    }

    fn e(f: usize, k: usize) -> CVec {
        let mut v = CVec::zeros(f);
        v[k] = cr(1.0);
        v
    }

    #[test]
    fn spin_products_on_diagonal_point() {
        let rho = single(&[2.0, -1.0]);
        let x = &rho.points[0];
        assert!((spin_product(&e(2, 0), &e(2, 0), x).unwrap() - cr(-2.0)).norm() < 1e-12);
        assert!((spin_product(&e(2, 1), &e(2, 1), x).unwrap() - cr(1.0)).norm() < 1e-12);
        let a = c(0.3, 0.8);
        let lhs = spin_product(&(e(2, 0) * a), &e(2, 1), x).unwrap();
        assert!((lhs - a.conj() * spin_product(&e(2, 0), &e(2, 1), x).unwrap()).norm() < 1e-14);
        let w = physical_wave(&e(2, 0), &rho).unwrap();
        assert!((&w.values[0] - e(2, 0)).norm() < 1e-12);
        let w2 = physical_wave(&e(2, 1), &rho).unwrap();
        assert!((krein_product(&w2, &w2, &rho).unwrap() - cr(1.0)).norm() < 1e-12);
    }

    #[test]
    fn kernel_p_adjoint_and_chain() {
        let s = fix_a();
        let (x, y) = (&s.rho.points[0], &s.rho.points[1]);
        let pxy = kernel_p(x, y);
        let pyx = kernel_p(y, x);
        assert!(crate::linalg::max_abs(&(spin_adjoint(&pxy, 1) - &pyx)) < 1e-12);
        let e = chain_spectrum(&(&pxy * &pyx), 2, 1e-10).unwrap();
        for z in &e.lambdas {
            assert!((z.norm() - 2f64.sqrt()).abs() < 1e-10 && z.re.abs() < 1e-10);
        }
    }

    #[test]
    fn q_vanishes_on_spacelike_pair_and_replays_variations() {
        let s = fix_a();
        let (x, y) = (&s.rho.points[0], &s.rho.points[1]);
        let q = kernel_q(x, y, &s.params).unwrap();
        assert!(crate::linalg::max_abs(&q.q) < 1e-6);
        let params = crate::fixtures::fix_b_params();
        let b = fix_b();
        let (x, y) = (&b.rho.points[0], &b.rho.points[2]);
        let qk = kernel_q(x, y, &params).unwrap();
        assert!(!qk.crossing);
        let p = kernel_p(x, y);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for _ in 0..10 {
            let dp = CMat::from_fn(2, 2, |_, _| c(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5));
            let h = 1e-5;
            let fdv = (lagrangian_of_p(&(&p + &dp * cr(h)), 1, &params).unwrap()
                - lagrangian_of_p(&(&p - &dp * cr(h)), 1, &params).unwrap())
                / (2.0 * h);
            let lin = 2.0 * (&qk.q * spin_adjoint(&dp, 1)).trace().re;
            assert!((fdv - lin).abs() < 1e-6 * (1.0 + fdv.abs()), "{fdv} {lin}");
        }
    }

    #[test]
    fn q_symmetry_on_fix_b() {
        let b = fix_b();
        let qt = QTable::new(&b.rho, &b.params).unwrap();
        assert!(qt.symmetry_defect(1) < 1e-6);
    }

    #[test]
    fn extended_product_is_hermitian_and_flips() {
        let b = fix_b();
        let rho = &b.rho;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let mut rand_wave = || {
            let u = CVec::from_fn(4, |_, _| c(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5));
            physical_wave(&u, rho).unwrap()
        };
        let (a, bb) = (rand_wave(), rand_wave());
        let cut = CutSpec::at(1.5);
        let ab = extended_product(&a, &bb, rho, &cut, &b.params).unwrap();
        let ba = extended_product(&bb, &a, rho, &cut, &b.params).unwrap();
        assert!((ab - ba.conj()).norm() < 1e-9 * (1.0 + ab.norm()));
        for t in [-1.0, 10.0] {
            assert_eq!(extended_product(&a, &bb, rho, &CutSpec::at(t), &b.params).unwrap(), cr(0.0));
        }
        // exchanging past and future flips the sign: reverse the time labels
        let mut rev = rho.clone();
        rev.times = rho.times.iter().map(|t| -t).collect();
        let flipped = extended_product(&a, &bb, &rev, &CutSpec::at(-1.5), &b.params).unwrap();
        assert!((flipped + ab).norm() < 1e-12 * (1.0 + ab.norm()));
    }

    #[test]
    fn elq_trivial_and_homogeneous() {
        let rho = single(&[1.0, -1.0]);
        let mut p = LagrangianParams::default();
        p.r_trace = Some(0.0);
        let r = elq_residual(&rho, &p).unwrap();
        assert!(r.residual < 1e-8);
        let b = fix_b();
        let r1 = elq_residual(&b.rho, &b.params).unwrap();
        let mut doubled = b.rho.clone();
        doubled.weights.iter_mut().for_each(|w| *w *= 2.0);
        let r2 = elq_residual(&doubled, &b.params).unwrap();
        assert!((r2.residual - 2.0 * r1.residual).abs() < 1e-8 * (1.0 + r1.residual));
        assert!((r2.r_trace - 2.0 * r1.r_trace).abs() < 1e-8 * (1.0 + r1.r_trace.abs()));
    }

    #[test]
    fn extended_basis_rank_and_reconstruction() {
        let b = fix_b();
        let rho = &b.rho;
        let cut = CutSpec::at(1.5);
        let empty = extended_space_basis(rho, &cut, &b.params, &[WaveFunction::zero(rho)], 1e-10).unwrap();
        assert_eq!(empty.dim(), 0);
        let cands: Vec<WaveFunction> = (0..4).map(|k| physical_wave(&e(4, k), rho).unwrap()).collect();
        let eb = extended_space_basis(rho, &cut, &b.params, &cands, 1e-10).unwrap();
        assert!(eb.dim() <= 4);
        let mut dup = cands.clone();
        dup.extend(cands.iter().cloned());
        let eb2 = extended_space_basis(rho, &cut, &b.params, &dup, 1e-10).unwrap();
        assert_eq!(eb.dim(), eb2.dim());
        let qt = QTable::new(rho, &b.params).unwrap();
        for x in 0..eb.dim() {
            for y in 0..eb.dim() {
                let v = extended_product_with(&eb.waves[x], &eb.waves[y], rho, &cut, &qt).unwrap();
                let want = if x == y { 1.0 } else { 0.0 };
                assert!((v - cr(want)).norm() < 1e-9);
            }
        }
        let sb = split_basis(rho, &cut, &qt, 1e-10, 6).unwrap();
        assert!(sb.dim() >= 1);
    }
}
