//! Points of a finite causal fermion system, spectra of operator products,
//! the causal Lagrangian and the causal classification of point pairs.
//!
//! A point is stored through its local wave evaluation `psi`, a `2n x f`
//! matrix, with the operator `x = -psi^H sig psi`. Products of two points
//! are diagonalised on the `2n x 2n` closed chain.

use serde::{Deserialize, Serialize};

use crate::error::{CfsError, Result};
use crate::linalg::{self, cr, sig_left, CMat, C64};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct HilbertSpec {
    pub f: usize,
    pub n: usize,
    pub f_fermi: usize,
}

impl HilbertSpec {
    pub fn new(f: usize, n: usize, f_fermi: usize) -> Result<Self> {
        let s = Self { f, n, f_fermi };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if self.f == 0 || self.n == 0 {
            return Err(CfsError::Invalid("f and n must be positive".into()));
        }
        if self.f < 2 * self.n {
            return Err(CfsError::Invalid(format!("f = {} < 2n = {}", self.f, 2 * self.n)));
        }
        if self.f_fermi == 0 || self.f_fermi > self.f {
            return Err(CfsError::Invalid(format!(
                "f_fermi = {} must lie in 1..={}",
                self.f_fermi, self.f
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LagrangianParams {
    pub kappa: f64,
    pub c: f64,
    pub s_vol: f64,
    /// `None` means "fit from the data" where a fit is defined.
    pub r_trace: Option<f64>,
    pub eps_rank: f64,
    pub eps_causal: f64,
}

impl Default for LagrangianParams {
    fn default() -> Self {
        Self {
            kappa: 0.0,
            c: 1.0,
            s_vol: 0.0,
            r_trace: None,
            eps_rank: 1e-10,
            eps_causal: 1e-8,
        }
    }
}

impl LagrangianParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.kappa >= 0.0) {
            return Err(CfsError::Invalid("kappa must be >= 0".into()));
        }
        if self.c == 0.0 || !self.c.is_finite() {
            return Err(CfsError::Invalid("trace constant c must be finite and nonzero".into()));
        }
        for (name, v) in [("eps_rank", self.eps_rank), ("eps_causal", self.eps_causal)] {
            if !(v > 0.0 && v <= 1e-2) {
                return Err(CfsError::Invalid(format!("{name} = {v} outside (0, 1e-2]")));
            }
        }
        Ok(())
    }
}

/// General rank-`2n` operator `-bra^H sig ket`. Selfadjoint points have
/// `bra == ket`; the refined constructions move the two factors apart.
#[derive(Clone, Debug, PartialEq)]
pub struct Frame {
    pub bra: CMat,
    pub ket: CMat,
}

impl Frame {
    pub fn n(&self) -> usize {
        self.bra.nrows() / 2
    }

    pub fn op(&self) -> CMat {
        -(self.bra.adjoint() * sig_left(&self.ket, self.n()))
    }

    /// Operator `U_gt x U_lt^{-1}` for the point `x` described by this frame.
    pub fn conjugated(&self, u_lt: &CMat, u_gt: &CMat) -> Frame {
        Frame {
            bra: &self.bra * u_gt.adjoint(),
            ket: &self.ket * u_lt.adjoint(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SpacetimePoint {
    psi: CMat,
}

impl SpacetimePoint {
    pub fn new(psi: CMat) -> Result<Self> {
        if psi.nrows() == 0 || psi.nrows() % 2 != 0 {
            return Err(CfsError::Dimension(format!("psi has {} rows, expected 2n", psi.nrows())));
        }
        if psi.ncols() < psi.nrows() {
            return Err(CfsError::Dimension(format!(
                "psi is {}x{}, need f >= 2n",
                psi.nrows(),
                psi.ncols()
            )));
        }
        if psi.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(CfsError::Invalid("non-finite entry in psi".into()));
        }
        Ok(Self { psi })
    }

    /// Builds a wave evaluation for a Hermitian operator with at most `n`
    /// positive and `n` negative eigenvalues. Positive directions go to the
    /// rows of signature -1, negative directions to the rows of signature +1.
    pub fn from_operator(op: &CMat, n: usize, eps_rank: f64) -> Result<Self> {
        let f = op.nrows();
        if op.ncols() != f {
            return Err(CfsError::Dimension("operator is not square".into()));
        }
        let herm_defect = linalg::max_abs(&(op - op.adjoint()));
        let scale = linalg::max_abs(op).max(1e-300);
        if herm_defect > 1e-12 * scale {
            return Err(CfsError::Invalid(format!("operator not Hermitian (defect {herm_defect:.3e})")));
        }
        let (vals, vecs) = linalg::herm_eig(op);
        let vmax = vals.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
        let mut psi = CMat::zeros(2 * n, f);
        let (mut npos, mut nneg) = (0, 0);
        for (k, &lam) in vals.iter().enumerate() {
            if lam.abs() <= eps_rank * vmax {
                continue;
            }
            let row = if lam > 0.0 {
                npos += 1;
                n + npos - 1
            } else {
                nneg += 1;
                nneg - 1
            };
            if npos > n || nneg > n {
                return Err(CfsError::Invalid(format!(
                    "operator has more than n = {n} eigenvalues of one sign"
                )));
            }
            let s = lam.abs().sqrt();
            for j in 0..f {
                psi[(row, j)] = vecs[(j, k)].conj() * s;
            }
        }
        Self::new(psi)
    }

    pub fn psi(&self) -> &CMat {
        &self.psi
    }

    pub fn n(&self) -> usize {
        self.psi.nrows() / 2
    }

    pub fn f(&self) -> usize {
        self.psi.ncols()
    }

    pub fn op(&self) -> CMat {
        -(self.psi.adjoint() * sig_left(&self.psi, self.n()))
    }

    pub fn frame(&self) -> Frame {
        Frame { bra: self.psi.clone(), ket: self.psi.clone() }
    }

    pub fn trace(&self) -> f64 {
        // tr(-psi^H sig psi) = sum over rows of -sig_r |row_r|^2
        let n = self.n();
        let mut t = 0.0;
        for r in 0..2 * n {
            let nrm: f64 = self.psi.row(r).iter().map(|z| z.norm_sqr()).sum();
            t += if r < n { -nrm } else { nrm };
        }
        t
    }

    /// Point for the operator `U x U^{-1}`.
    pub fn transformed(&self, u: &CMat) -> SpacetimePoint {
        SpacetimePoint { psi: &self.psi * u.adjoint() }
    }

    /// Counts (positive, negative) eigenvalues above the relative threshold.
    pub fn inertia(&self, eps_rank: f64) -> (usize, usize) {
        let (vals, _) = linalg::herm_eig(&self.op());
        let vmax = vals.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
        let pos = vals.iter().filter(|&&v| v > eps_rank * vmax).count();
        let neg = vals.iter().filter(|&&v| v < -eps_rank * vmax).count();
        (pos, neg)
    }

    pub fn is_regular(&self, eps_rank: f64) -> bool {
        let n = self.n();
        self.inertia(eps_rank) == (n, n)
    }

    pub fn with_psi(&self, psi: CMat) -> SpacetimePoint {
        SpacetimePoint { psi }
    }
}

/// The `2n` nontrivial eigenvalues of a product, sorted by non-increasing
/// modulus and zero-padded beyond the numerical rank.
#[derive(Clone, Debug, PartialEq)]
pub struct EigenData {
    pub lambdas: Vec<C64>,
}

impl EigenData {
    pub fn moduli(&self) -> Vec<f64> {
        self.lambdas.iter().map(|z| z.norm()).collect()
    }
}

fn threshold_and_sort(mut lambdas: Vec<C64>, len: usize, eps_rank: f64) -> EigenData {
    let max = lambdas.iter().fold(0.0_f64, |a, z| a.max(z.norm()));
    for z in lambdas.iter_mut() {
        if z.norm() <= eps_rank * max || max == 0.0 {
            *z = cr(0.0);
        }
    }
    lambdas.sort_by(|a, b| {
        b.norm()
            .total_cmp(&a.norm())
            .then(b.re.total_cmp(&a.re))
            .then(b.im.total_cmp(&a.im))
    });
    lambdas.truncate(len);
    while lambdas.len() < len {
        lambdas.push(cr(0.0));
    }
    EigenData { lambdas }
}

/// Closed chain `sig ket_a bra_b^H sig ket_b bra_a^H`, isospectral to the
/// nonzero spectrum of the product of the two operators.
pub fn frame_chain(a: &Frame, b: &Frame) -> CMat {
    let n = a.n();
    let left = sig_left(&a.ket, n) * b.bra.adjoint();
    let right = sig_left(&b.ket, n) * a.bra.adjoint();
    left * right
}

/// Thresholded, padded and sorted spectrum of an arbitrary closed chain.
pub fn chain_spectrum(chain: &CMat, two_n: usize, eps_rank: f64) -> Result<EigenData> {
    let ev = linalg::eigenvalues(chain)?;
    Ok(threshold_and_sort(ev, two_n, eps_rank))
}

/// Spectrum of the product of two general rank-`2n` operators.
pub fn frame_spectrum(a: &Frame, b: &Frame, eps_rank: f64) -> Result<EigenData> {
    if a.bra.shape() != b.bra.shape() || a.ket.shape() != b.ket.shape() || a.bra.shape() != a.ket.shape() {
        return Err(CfsError::Dimension("frames of different shape".into()));
    }
    let chain = frame_chain(a, b);
    let ev = linalg::eigenvalues(&chain)?;
    Ok(threshold_and_sort(ev, 2 * a.n(), eps_rank))
}

/// Spectrum computed on the full `f x f` product; used as cross-check.
pub fn frame_spectrum_full(a: &Frame, b: &Frame, eps_rank: f64) -> Result<EigenData> {
    let prod = a.op() * b.op();
    let ev = linalg::eigenvalues(&prod)?;
    Ok(threshold_and_sort(ev, 2 * a.n(), eps_rank))
}

fn check_shared(x: &SpacetimePoint, y: &SpacetimePoint) -> Result<()> {
    if x.psi.shape() != y.psi.shape() {
        return Err(CfsError::Dimension(format!(
            "points of shape {:?} and {:?}",
            x.psi.shape(),
            y.psi.shape()
        )));
    }
    Ok(())
}

pub fn product_spectrum(x: &SpacetimePoint, y: &SpacetimePoint, params: &LagrangianParams) -> Result<EigenData> {
    check_shared(x, y)?;
    frame_spectrum(&x.frame(), &y.frame(), params.eps_rank)
}

/// Same spectrum taken from the `f x f` product `op(x) op(y)`.
pub fn product_spectrum_full(x: &SpacetimePoint, y: &SpacetimePoint, params: &LagrangianParams) -> Result<EigenData> {
    check_shared(x, y)?;
    frame_spectrum_full(&x.frame(), &y.frame(), params.eps_rank)
}

pub fn spectral_weight(e: &EigenData) -> f64 {
    e.lambdas.iter().map(|z| z.norm()).sum()
}

/// `(1/4n) sum_{i,j} (|l_i| - |l_j|)^2 + kappa (sum |l|)^2`.
pub fn lagrangian_from_spectrum(e: &EigenData, kappa: f64) -> f64 {
    let m = e.moduli();
    let two_n = m.len();
    let mut s = 0.0;
    for i in 0..two_n {
        for j in 0..two_n {
            let d = m[i] - m[j];
            s += d * d;
        }
    }
    let w: f64 = m.iter().sum();
    s / (2.0 * two_n as f64) + kappa * w * w
}

pub fn lagrangian(x: &SpacetimePoint, y: &SpacetimePoint, params: &LagrangianParams) -> Result<f64> {
    let e = product_spectrum(x, y, params)?;
    Ok(lagrangian_from_spectrum(&e, params.kappa))
}

/// Lagrangian of two general frames (the modulus formula applies verbatim
/// to non-selfadjoint products).
pub fn lagrangian_frames(a: &Frame, b: &Frame, params: &LagrangianParams) -> Result<f64> {
    let e = frame_spectrum(a, b, params.eps_rank)?;
    Ok(lagrangian_from_spectrum(&e, params.kappa))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Causal {
    Spacelike,
    Timelike,
    Lightlike,
}

/// Classification together with a flag raised when one of the tests was
/// decided within ten times its tolerance.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CausalReport {
    pub class: Causal,
    pub near_threshold: bool,
}

pub fn classify_spectrum(e: &EigenData, eps_rank: f64, eps_causal: f64) -> CausalReport {
    let m = e.moduli();
    let max = m.iter().cloned().fold(0.0_f64, f64::max);
    if max <= eps_rank {
        return CausalReport { class: Causal::Spacelike, near_threshold: false };
    }
    let min = m.iter().cloned().fold(f64::INFINITY, f64::min);
    let spread = (max - min) / max;
    let imag = e.lambdas.iter().fold(0.0_f64, |a, z| a.max(z.im.abs())) / max;
    let near = |v: f64| v > eps_causal / 10.0 && v < 10.0 * eps_causal;
    if spread <= eps_causal {
        return CausalReport { class: Causal::Spacelike, near_threshold: near(spread) };
    }
    if imag <= eps_causal {
        CausalReport { class: Causal::Timelike, near_threshold: near(spread) || near(imag) }
    } else {
        CausalReport { class: Causal::Lightlike, near_threshold: near(spread) || near(imag) }
    }
}

pub fn classify_causal(x: &SpacetimePoint, y: &SpacetimePoint, params: &LagrangianParams) -> Result<Causal> {
    Ok(classify_causal_report(x, y, params)?.class)
}

pub fn classify_causal_report(
    x: &SpacetimePoint,
    y: &SpacetimePoint,
    params: &LagrangianParams,
) -> Result<CausalReport> {
    let e = product_spectrum(x, y, params)?;
    Ok(classify_spectrum(&e, params.eps_rank, params.eps_causal))
}

/// Diagonal operator with the given real entries.
pub fn diag_op(entries: &[f64]) -> CMat {
    CMat::from_fn(entries.len(), entries.len(), |i, j| if i == j { cr(entries[i]) } else { cr(0.0) })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::c;

    fn pt(op: CMat) -> SpacetimePoint {
        SpacetimePoint::from_operator(&op, 1, 1e-12).unwrap()
    }

    fn x1() -> SpacetimePoint {
        pt(diag_op(&[2.0, -1.0]))
    }

    fn x2() -> SpacetimePoint {
        pt(CMat::from_row_slice(2, 2, &[cr(0.0), cr(1.0), cr(1.0), cr(0.0)]))
    }

    #[test]
    fn wave_evaluation_of_diagonal_point() {
        let p = x1();
        let s2 = 2f64.sqrt();
        let expect = CMat::from_row_slice(2, 2, &[cr(0.0), cr(1.0), cr(s2), cr(0.0)]);
        assert!((p.psi() - expect).norm() < 1e-14);
        assert!((p.op() - diag_op(&[2.0, -1.0])).norm() < 1e-14);
        assert!((p.trace() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn diagonal_product_spectrum() {
        let e = product_spectrum(&x1(), &x1(), &LagrangianParams::default()).unwrap();
        assert!((e.lambdas[0] - cr(4.0)).norm() < 1e-12);
        assert!((e.lambdas[1] - cr(1.0)).norm() < 1e-12);
        assert!((spectral_weight(&e) - 5.0).abs() < 1e-12);
    }

    #[test]
    fn mixed_product_is_imaginary_pair() {
        // oracle: eigenvalues of [[0,2],[-1,0]] are +-i sqrt 2
        let e = product_spectrum(&x1(), &x2(), &LagrangianParams::default()).unwrap();
        let s2 = 2f64.sqrt();
        let mut ims: Vec<f64> = e.lambdas.iter().map(|z| z.im).collect();
        ims.sort_by(f64::total_cmp);
        assert!((ims[0] + s2).abs() < 1e-12 && (ims[1] - s2).abs() < 1e-12);
        assert!(e.lambdas.iter().all(|z| z.re.abs() < 1e-12));
        assert!((spectral_weight(&e) - 2.0 * s2).abs() < 1e-12);
    }

    #[test]
    fn rank_deficient_partner_pads_with_exact_zero() {
        let y = SpacetimePoint::new(CMat::from_row_slice(2, 2, &[cr(0.0), cr(0.0), cr(1.0), cr(1e-14)])).unwrap();
        let e = product_spectrum(&x1(), &y, &LagrangianParams::default()).unwrap();
        assert_eq!(e.lambdas[1], cr(0.0));
        assert!(e.lambdas[0].norm() > 0.0);
        let z = EigenData { lambdas: vec![cr(0.0), cr(0.0)] };
        assert_eq!(spectral_weight(&z), 0.0);
    }

    #[test]
    fn lagrangian_reference_values() {
        let p = LagrangianParams::default();
        assert!((lagrangian(&x1(), &x1(), &p).unwrap() - 4.5).abs() < 1e-12);
        let u = pt(diag_op(&[1.0, -1.0]));
        assert_eq!(lagrangian(&u, &u, &p).unwrap(), 0.0);
        let pk = LagrangianParams { kappa: 0.1, ..p };
        assert!((lagrangian(&x1(), &x1(), &pk).unwrap() - 7.0).abs() < 1e-12);
        assert!(lagrangian(&x1(), &x2(), &p).unwrap().abs() < 1e-12);
    }

    #[test]
    fn causal_classes() {
        let p = LagrangianParams::default();
        let u = pt(diag_op(&[1.0, -1.0]));
        assert_eq!(classify_causal(&u, &u, &p).unwrap(), Causal::Spacelike);
        assert_eq!(classify_causal(&x1(), &x1(), &p).unwrap(), Causal::Timelike);
        assert_eq!(classify_causal(&x1(), &x2(), &p).unwrap(), Causal::Spacelike);
    }

    #[test]
    fn too_many_positive_eigenvalues_rejected() {
        assert!(SpacetimePoint::from_operator(&diag_op(&[1.0, 2.0]), 1, 1e-12).is_err());
    }

    #[test]
    fn conjugated_frame_matches_operator_conjugation() {
        let u = CMat::from_row_slice(2, 2, &[c(0.6, 0.0), c(0.0, 0.8), c(0.0, 0.8), c(0.6, 0.0)]);
        let v = CMat::from_row_slice(2, 2, &[c(0.0, 1.0), cr(0.0), cr(0.0), cr(1.0)]);
        let fr = x2().frame().conjugated(&u, &v);
        let expect = &v * x2().op() * u.adjoint();
        assert!((fr.op() - expect).norm() < 1e-14);
    }
}
