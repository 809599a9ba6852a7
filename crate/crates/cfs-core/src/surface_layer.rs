//! Surface layer integrals: the jet forms across a cut, the nonlinear
//! surface layer integral with its unitary, localized and refined variants,
//! the functional of squared spectral weights and the conservation check.

use serde::Serialize;

use crate::action_optim::Jet;
use crate::error::{CfsError, Result};
use crate::fd;
use crate::linalg::{cr, CMat};
use crate::operator_core::{frame_spectrum, lagrangian_frames, spectral_weight, Frame, LagrangianParams, SpacetimePoint};
use crate::system_measure::{check_unitary, correlation_measure, DiscreteMeasure, InteractionMap, RegionMask};

#[derive(Clone, Debug, PartialEq)]
pub struct CutSpec {
    pub t: f64,
    pub region: Option<RegionMask>,
}

impl CutSpec {
    pub fn at(t: f64) -> Self {
        Self { t, region: None }
    }

    pub fn past(&self, rho: &DiscreteMeasure) -> Vec<bool> {
        rho.past(self.t)
    }

    fn region_or_all(&self, len: usize) -> Result<Vec<bool>> {
        match &self.region {
            Some(r) if r.member.len() != len => {
                Err(CfsError::Dimension(format!("region mask of length {} for {len} points", r.member.len())))
            }
            Some(r) => Ok(r.member.clone()),
            None => Ok(vec![true; len]),
        }
    }
}

fn lag(x: &CMat, y: &CMat, params: &LagrangianParams) -> f64 {
    let a = Frame { bra: x.clone(), ket: x.clone() };
    let b = Frame { bra: y.clone(), ket: y.clone() };
    lagrangian_frames(&a, &b, params).unwrap_or(f64::NAN)
}

fn check_fd(v: f64, what: &str) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(CfsError::StepUnderflow(format!("non-finite finite difference in {what}")))
    }
}

/// First and second derivatives of `L(x_i, x_j)` along jets, by central
/// differences with the module-wide step policy.
struct PairDiff<'a> {
    rho: &'a DiscreteMeasure,
    params: &'a LagrangianParams,
}

impl PairDiff<'_> {
    fn psi(&self, i: usize) -> &CMat {
        self.rho.points[i].psi()
    }

    fn value(&self, i: usize, j: usize) -> f64 {
        lag(self.psi(i), self.psi(j), self.params)
    }

    /// `D_{slot, v} L(x_i, x_j)`, slot 1 moves `x_i`, slot 2 moves `x_j`.
    fn d1(&self, i: usize, j: usize, slot: u8, v: &CMat) -> f64 {
        if is_zero(v) {
            return 0.0;
        }
        let k = if slot == 1 { i } else { j };
        let tau = fd::tau_for(v, fd::step1(self.psi(k).norm()));
        let (x, y) = (self.psi(i), self.psi(j));
        fd::central(
            |t| {
                if slot == 1 {
                    lag(&(x + v * cr(t)), y, self.params)
                } else {
                    lag(x, &(y + v * cr(t)), self.params)
                }
            },
            tau,
        )
    }

    /// Mixed second derivative with `u` in slot `su` and `v` in slot `sv`.
    fn d2(&self, i: usize, j: usize, su: u8, u: &CMat, sv: u8, v: &CMat) -> f64 {
        if is_zero(u) || is_zero(v) {
            return 0.0;
        }
        let ku = if su == 1 { i } else { j };
        let kv = if sv == 1 { i } else { j };
        let a = fd::tau_for(u, fd::step2(self.psi(ku).norm()));
        let b = fd::tau_for(v, fd::step2(self.psi(kv).norm()));
        let (x, y) = (self.psi(i), self.psi(j));
        fd::mixed(
            |s, t| {
                let mut xx = x.clone();
                let mut yy = y.clone();
                if su == 1 {
                    xx += u * cr(s)
                } else {
                    yy += u * cr(s)
                }
                if sv == 1 {
                    xx += v * cr(t)
                } else {
                    yy += v * cr(t)
                }
                lag(&xx, &yy, self.params)
            },
            a,
            b,
        )
    }

    fn slot_index(i: usize, j: usize, slot: u8) -> usize {
        if slot == 1 {
            i
        } else {
            j
        }
    }

    /// `nabla_{slot,u} L(x_i,x_j)`.
    fn nabla1(&self, i: usize, j: usize, slot: u8, u: &Jet) -> f64 {
        let k = Self::slot_index(i, j, slot);
        u.scalar[k] * self.value(i, j) + self.d1(i, j, slot, &u.dpsi[k])
    }

    /// `nabla_{su,u} nabla_{sv,v} L(x_i,x_j)`.
    fn nabla2(&self, i: usize, j: usize, su: u8, u: &Jet, sv: u8, v: &Jet) -> f64 {
        let ku = Self::slot_index(i, j, su);
        let kv = Self::slot_index(i, j, sv);
        let (au, av) = (u.scalar[ku], v.scalar[kv]);
        let mut acc = self.d2(i, j, su, &u.dpsi[ku], sv, &v.dpsi[kv]);
        if au != 0.0 || av != 0.0 {
            let l = self.value(i, j);
            acc += au * av * l;
            if au != 0.0 {
                acc += au * self.d1(i, j, sv, &v.dpsi[kv]);
            }
            if av != 0.0 {
                acc += av * self.d1(i, j, su, &u.dpsi[ku]);
            }
        }
        acc
    }
}

fn is_zero(m: &CMat) -> bool {
    m.iter().all(|z| z.re == 0.0 && z.im == 0.0)
}

fn cross_pairs(omega: &[bool]) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    for i in 0..omega.len() {
        for j in 0..omega.len() {
            if omega[i] && !omega[j] {
                out.push((i, j));
            }
        }
    }
    out
}

/// One-form across an arbitrary index set `omega`.
pub fn one_form_on(rho: &DiscreteMeasure, jet: &Jet, omega: &[bool], params: &LagrangianParams) -> Result<f64> {
    jet.validate(rho)?;
    let pd = PairDiff { rho, params };
    let mut acc = 0.0;
    for (i, j) in cross_pairs(omega) {
        acc += rho.weights[i] * rho.weights[j] * (pd.nabla1(i, j, 1, jet) - pd.nabla1(i, j, 2, jet));
    }
    check_fd(acc, "one_form")
}

pub fn one_form(rho: &DiscreteMeasure, jet: &Jet, cut: &CutSpec, params: &LagrangianParams) -> Result<f64> {
    one_form_on(rho, jet, &cut.past(rho), params)
}

pub fn symplectic_on(
    rho: &DiscreteMeasure,
    u: &Jet,
    v: &Jet,
    omega: &[bool],
    params: &LagrangianParams,
) -> Result<f64> {
    u.validate(rho)?;
    v.validate(rho)?;
    let pd = PairDiff { rho, params };
    let mut acc = 0.0;
    for (i, j) in cross_pairs(omega) {
        let t = pd.nabla2(i, j, 1, u, 2, v) - pd.nabla2(i, j, 2, u, 1, v);
        acc += rho.weights[i] * rho.weights[j] * t;
    }
    check_fd(acc, "symplectic")
}

pub fn symplectic(rho: &DiscreteMeasure, u: &Jet, v: &Jet, cut: &CutSpec, params: &LagrangianParams) -> Result<f64> {
    symplectic_on(rho, u, v, &cut.past(rho), params)
}

pub fn sl_inner_on(
    rho: &DiscreteMeasure,
    u: &Jet,
    v: &Jet,
    omega: &[bool],
    params: &LagrangianParams,
) -> Result<f64> {
    u.validate(rho)?;
    v.validate(rho)?;
    let pd = PairDiff { rho, params };
    let mut acc = 0.0;
    for (i, j) in cross_pairs(omega) {
        let t = pd.nabla2(i, j, 1, u, 1, v) - pd.nabla2(i, j, 2, u, 2, v);
        acc += rho.weights[i] * rho.weights[j] * t;
    }
    check_fd(acc, "sl_inner")
}

pub fn sl_inner(rho: &DiscreteMeasure, u: &Jet, v: &Jet, cut: &CutSpec, params: &LagrangianParams) -> Result<f64> {
    sl_inner_on(rho, u, v, &cut.past(rho), params)
}

/// Derivative of `L(x_i, x_j)` along `u` in slot `su` and `v` in slot `sv`;
/// exposed for the Gram assembly of the linearized field operator.
pub(crate) fn pair_second(
    rho: &DiscreteMeasure,
    params: &LagrangianParams,
    i: usize,
    j: usize,
    su: u8,
    u: &CMat,
    sv: u8,
    v: &CMat,
) -> f64 {
    PairDiff { rho, params }.d2(i, j, su, u, sv, v)
}

pub(crate) fn pair_first(rho: &DiscreteMeasure, params: &LagrangianParams, i: usize, j: usize, slot: u8, v: &CMat) -> f64 {
    PairDiff { rho, params }.d1(i, j, slot, v)
}

/// Interacting data in frame form: targets `F(x_i)` with weights `f_i`.
#[derive(Clone, Debug)]
pub struct Interacting {
    pub target: Vec<Frame>,
    pub fweight: Vec<f64>,
}

impl Interacting {
    pub fn new(rho: &DiscreteMeasure, map: &InteractionMap) -> Result<Self> {
        map.validate(rho)?;
        Ok(Self { target: map.target.iter().map(SpacetimePoint::frame).collect(), fweight: map.fweight.clone() })
    }
}

/// The nonlinear surface layer sum for vacuum frames already transformed:
/// `sum_{i in omega, j not in omega, both in region} rho_i rho_j
///  [f_i L(F x_i, y_j) - L(y_i, F x_j) f_j]`.
pub fn gamma_frames(
    inter: &Interacting,
    vac: &[Frame],
    weights: &[f64],
    omega: &[bool],
    region: &[bool],
    params: &LagrangianParams,
) -> Result<f64> {
    let mut acc = 0.0;
    for i in 0..vac.len() {
        if !omega[i] || !region[i] {
            continue;
        }
        for j in 0..vac.len() {
            if omega[j] || !region[j] {
                continue;
            }
            acc += gamma_term(inter, vac, weights, i, j, params)?;
        }
    }
    Ok(acc)
}

pub(crate) fn gamma_term(
    inter: &Interacting,
    vac: &[Frame],
    weights: &[f64],
    i: usize,
    j: usize,
    params: &LagrangianParams,
) -> Result<f64> {
    let a = inter.fweight[i] * lagrangian_frames(&inter.target[i], &vac[j], params)?;
    let b = lagrangian_frames(&vac[i], &inter.target[j], params)? * inter.fweight[j];
    Ok(weights[i] * weights[j] * (a - b))
}

pub(crate) fn vac_frames(rho: &DiscreteMeasure, ult: &CMat, ugt: &CMat) -> Vec<Frame> {
    rho.points.iter().map(|p| p.frame().conjugated(ult, ugt)).collect()
}

fn identity(f: usize) -> CMat {
    CMat::identity(f, f)
}

/// `gamma^t(rho~, U rho)`; `u = None` is the identity.
pub fn gamma_nonlinear(
    rho: &DiscreteMeasure,
    map: &InteractionMap,
    cut: &CutSpec,
    params: &LagrangianParams,
    u: Option<&CMat>,
) -> Result<f64> {
    let id = identity(rho.spec.f);
    let u = u.unwrap_or(&id);
    check_unitary(u, rho.spec.f)?;
    let inter = Interacting::new(rho, map)?;
    let vac = vac_frames(rho, u, u);
    gamma_frames(&inter, &vac, &rho.weights, &cut.past(rho), &vec![true; rho.len()], params)
}

/// Nonlinear surface layer sum over an arbitrary index set.
pub fn gamma_on(rho: &DiscreteMeasure, map: &InteractionMap, omega: &[bool], params: &LagrangianParams) -> Result<f64> {
    let inter = Interacting::new(rho, map)?;
    let vac: Vec<Frame> = rho.points.iter().map(SpacetimePoint::frame).collect();
    gamma_frames(&inter, &vac, &rho.weights, omega, &vec![true; rho.len()], params)
}

/// Per-term listing `(i, j, term)` of the nonlinear surface layer sum.
pub fn gamma_terms(
    rho: &DiscreteMeasure,
    map: &InteractionMap,
    cut: &CutSpec,
    params: &LagrangianParams,
) -> Result<Vec<(usize, usize, f64)>> {
    let inter = Interacting::new(rho, map)?;
    let vac: Vec<Frame> = rho.points.iter().map(SpacetimePoint::frame).collect();
    let mut out = Vec::new();
    for (i, j) in cross_pairs(&cut.past(rho)) {
        out.push((i, j, gamma_term(&inter, &vac, &rho.weights, i, j, params)?));
    }
    Ok(out)
}

pub fn gamma_localized(
    rho: &DiscreteMeasure,
    map: &InteractionMap,
    cut: &CutSpec,
    params: &LagrangianParams,
    u: Option<&CMat>,
) -> Result<f64> {
    let id = identity(rho.spec.f);
    let u = u.unwrap_or(&id);
    check_unitary(u, rho.spec.f)?;
    let inter = Interacting::new(rho, map)?;
    let vac = vac_frames(rho, u, u);
    gamma_frames(&inter, &vac, &rho.weights, &cut.past(rho), &cut.region_or_all(rho.len())?, params)
}

/// `sum over pairs on the same side of the cut inside the region of
/// rho_i rho_j f_i |F(x_i) y_j|^2`.
pub fn t_functional_frames(
    inter: &Interacting,
    vac: &[Frame],
    weights: &[f64],
    omega: &[bool],
    region: &[bool],
    params: &LagrangianParams,
) -> Result<f64> {
    let mut acc = 0.0;
    for i in 0..vac.len() {
        if !region[i] {
            continue;
        }
        for j in 0..vac.len() {
            if !region[j] || omega[i] != omega[j] {
                continue;
            }
            let w = spectral_weight(&frame_spectrum(&inter.target[i], &vac[j], params.eps_rank)?);
            acc += weights[i] * weights[j] * inter.fweight[i] * w * w;
        }
    }
    Ok(acc)
}

pub fn t_functional(
    rho: &DiscreteMeasure,
    map: &InteractionMap,
    cut: &CutSpec,
    params: &LagrangianParams,
    u: Option<&CMat>,
) -> Result<f64> {
    let id = identity(rho.spec.f);
    let u = u.unwrap_or(&id);
    check_unitary(u, rho.spec.f)?;
    let inter = Interacting::new(rho, map)?;
    let vac = vac_frames(rho, u, u);
    t_functional_frames(&inter, &vac, &rho.weights, &cut.past(rho), &cut.region_or_all(rho.len())?, params)
}

/// Refined sum with the vacuum points replaced by `U_gt x U_lt^{-1}`.
pub fn gamma_refined(
    rho: &DiscreteMeasure,
    map: &InteractionMap,
    cut: &CutSpec,
    params: &LagrangianParams,
    ult: &CMat,
    ugt: &CMat,
) -> Result<f64> {
    check_unitary(ult, rho.spec.f)?;
    check_unitary(ugt, rho.spec.f)?;
    let inter = Interacting::new(rho, map)?;
    let vac = vac_frames(rho, ult, ugt);
    gamma_frames(&inter, &vac, &rho.weights, &cut.past(rho), &vec![true; rho.len()], params)
}

/// Index of the real elementary direction `(point, row, col, part)` in the
/// variation ordering (point-major, then row, column, real/imaginary).
pub fn elem_index(rows: usize, f: usize, j: usize, r: usize, col: usize, part: usize) -> usize {
    ((j * rows + r) * f + col) * 2 + part
}

/// Nonlinear surface layer sum with the vacuum frames `U_gt x U_lt^{-1}`
/// together with its gradients in the ket and bra entries of the vacuum wave
/// evaluations (taken before the transformation).
#[derive(Clone, Debug)]
pub struct GammaGradient {
    pub gamma: f64,
    pub ket: Vec<f64>,
    pub bra: Vec<f64>,
}

impl GammaGradient {
    /// Real directional derivative along a matrix direction per point.
    pub fn along(grad: &[f64], dirs: &[CMat]) -> f64 {
        let (rows, f) = dirs[0].shape();
        let mut acc = 0.0;
        for (j, d) in dirs.iter().enumerate() {
            for r in 0..rows {
                for col in 0..f {
                    let z = d[(r, col)];
                    if z.re != 0.0 {
                        acc += z.re * grad[elem_index(rows, f, j, r, col, 0)];
                    }
                    if z.im != 0.0 {
                        acc += z.im * grad[elem_index(rows, f, j, r, col, 1)];
                    }
                }
            }
        }
        acc
    }
}

fn partial_terms(
    inter: &Interacting,
    vac: &[Frame],
    weights: &[f64],
    j: usize,
    omega: &[bool],
    region: &[bool],
    params: &LagrangianParams,
) -> Result<f64> {
    if !region[j] {
        return Ok(0.0);
    }
    let mut acc = 0.0;
    for k in 0..vac.len() {
        if !region[k] || omega[k] == omega[j] {
            continue;
        }
        if omega[j] {
            acc -= weights[j] * weights[k] * lagrangian_frames(&vac[j], &inter.target[k], params)? * inter.fweight[k];
        } else {
            acc += weights[k] * weights[j] * inter.fweight[k] * lagrangian_frames(&inter.target[k], &vac[j], params)?;
        }
    }
    Ok(acc)
}

/// One-sided (ket or bra) variations use the five-point stencil; they break
/// the symmetry of the chain and lose accuracy near degenerate eigenvalues.
pub fn gamma_gradient(
    inter: &Interacting,
    rho: &DiscreteMeasure,
    ult: &CMat,
    ugt: &CMat,
    omega: &[bool],
    region: &[bool],
    params: &LagrangianParams,
) -> Result<GammaGradient> {
    let vac0 = vac_frames(rho, ult, ugt);
    let gamma = gamma_frames(inter, &vac0, &rho.weights, omega, region, params)?;
    let (rows, f) = rho.points[0].psi().shape();
    let dim = rho.len() * rows * f * 2;
    let mut ket = vec![0.0; dim];
    let mut bra = vec![0.0; dim];
    let mut vac = vac0.clone();
    for j in 0..rho.len() {
        let touches = region[j] && (0..rho.len()).any(|k| region[k] && omega[k] != omega[j]);
        if !touches {
            continue;
        }
        let psi = rho.points[j].psi();
        let h = fd::step1(psi.norm());
        for r in 0..rows {
            for col in 0..f {
                for (part, unit) in [cr(1.0), crate::linalg::c(0.0, 1.0)].into_iter().enumerate() {
                    let idx = elem_index(rows, f, j, r, col, part);
                    for (is_ket, out) in [(true, &mut ket), (false, &mut bra)] {
                        let mut err = None;
                        let d = fd::central4(
                            |t| {
                                let mut p = psi.clone();
                                p[(r, col)] += unit * t;
                                let moved = Frame { bra: p.clone(), ket: p }.conjugated(ult, ugt);
                                vac[j] = if is_ket {
                                    Frame { bra: vac0[j].bra.clone(), ket: moved.ket }
                                } else {
                                    Frame { bra: moved.bra, ket: vac0[j].ket.clone() }
                                };
                                partial_terms(inter, &vac, &rho.weights, j, omega, region, params).unwrap_or_else(|e| {
                                    err = Some(e);
                                    f64::NAN
                                })
                            },
                            h,
                        );
                        if let Some(e) = err {
                            return Err(e);
                        }
                        vac[j] = vac0[j].clone();
                        out[idx] = check_fd(d, "gamma_gradient")?;
                    }
                }
            }
        }
    }
    Ok(GammaGradient { gamma, ket, bra })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConservationReport {
    pub nu: Vec<f64>,
    pub nu_til: Vec<f64>,
    pub max_pointwise: f64,
    pub subsets_checked: usize,
    /// Largest `|gamma^Omega - (nu~ - nu)(Omega)|` over the subset family.
    pub max_identity_defect: f64,
    /// Largest `|gamma^Omega|` over the family.
    pub max_gamma: f64,
}

/// Checks the decomposition of the nonlinear surface layer sum into the
/// difference of correlation measures on every subset (all `2^N` subsets for
/// `N <= 16`, otherwise the past sets of the time labels).
pub fn conservation_check(rho: &DiscreteMeasure, map: &InteractionMap, params: &LagrangianParams) -> Result<ConservationReport> {
    let rhotil = crate::system_measure::push_forward(rho, map)?;
    let (nu, nu_til) = correlation_measure(rho, &rhotil, params)?;
    let max_pointwise = nu.iter().zip(&nu_til).fold(0.0_f64, |a, (x, y)| a.max((x - y).abs()));
    let n = rho.len();
    let family: Vec<Vec<bool>> = if n <= 16 {
        (0..(1u32 << n)).map(|bits| (0..n).map(|k| bits >> k & 1 == 1).collect()).collect()
    } else {
        let mut ts = rho.times.clone();
        ts.sort_by(f64::total_cmp);
        ts.iter().map(|&t| rho.past(t)).collect()
    };
    let mut max_identity_defect = 0.0_f64;
    let mut max_gamma = 0.0_f64;
    for omega in &family {
        let g = gamma_on(rho, map, omega, params)?;
        let rhs: f64 = (0..n).filter(|&k| omega[k]).map(|k| nu_til[k] - nu[k]).sum();
        max_identity_defect = max_identity_defect.max((g - rhs).abs());
        max_gamma = max_gamma.max(g.abs());
    }
    Ok(ConservationReport { nu, nu_til, max_pointwise, subsets_checked: family.len(), max_identity_defect, max_gamma })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::{fix_a, fix_b};
    use crate::linalg::c;
    use crate::action_optim::causal_action;

    fn jet_on(rho: &DiscreteMeasure, i: usize, scale: f64) -> Jet {
        let d = CMat::from_fn(rho.points[0].psi().nrows(), rho.points[0].psi().ncols(), |r, k| {
            c(0.3 * (r as f64 + 1.0) - 0.1 * k as f64, 0.2 * k as f64 - 0.15)
        });
        Jet::at_point(rho, i, d * cr(scale))
    }

    #[test]
    fn trivial_cases_vanish() {
        let s = fix_a();
        let p = s.params;
        let j = jet_on(&s.rho, 0, 1.0);
        assert_eq!(one_form(&s.rho, &j, &CutSpec::at(-1.0), &p).unwrap(), 0.0);
        assert_eq!(one_form(&s.rho, &Jet::zero(&s.rho), &CutSpec::at(0.5), &p).unwrap(), 0.0);
        assert_eq!(sl_inner(&s.rho, &Jet::zero(&s.rho), &j, &CutSpec::at(0.5), &p).unwrap(), 0.0);
        let id = InteractionMap::identity(&s.rho);
        for t in [-1.0, 0.5, 2.0] {
            assert_eq!(gamma_nonlinear(&s.rho, &id, &CutSpec::at(t), &p, None).unwrap(), 0.0);
        }
    }

    #[test]
    fn one_form_matches_brute_force_double_sum() {
        let s = fix_a();
        let p = s.params;
        let mut jet = jet_on(&s.rho, 0, 1.0);
        jet.dpsi[1] = jet_on(&s.rho, 1, -0.7).dpsi[1].clone();
        jet.scalar = vec![0.4, -0.2];
        let omega = vec![true, false];
        let v = one_form_on(&s.rho, &jet, &omega, &p).unwrap();
        // G(t, s) = sum rho_i (1 + t a_i) rho_j (1 + s a_j) L(x_i + t v_i, x_j + s v_j)
        let g = |t: f64, u: f64| {
            let x = s.rho.points[0].psi() + &jet.dpsi[0] * cr(t);
            let y = s.rho.points[1].psi() + &jet.dpsi[1] * cr(u);
            (1.0 + t * jet.scalar[0]) * (1.0 + u * jet.scalar[1]) * lag(&x, &y, &p)
        };
        let h = 1e-4;
        let brute = (g(h, 0.0) - g(-h, 0.0)) / (2.0 * h) - (g(0.0, h) - g(0.0, -h)) / (2.0 * h);
        assert!((v - brute).abs() < 1e-6, "{v} vs {brute}");
    }

    #[test]
    fn symplectic_is_antisymmetric_and_inner_symmetric() {
        let s = fix_b();
        let p = s.params;
        let cut = CutSpec::at(1.5);
        let u = jet_on(&s.rho, 0, 1.0).plus(&jet_on(&s.rho, 3, 0.5));
        let v = jet_on(&s.rho, 1, -0.8).plus(&jet_on(&s.rho, 2, 0.3));
        let suv = symplectic(&s.rho, &u, &v, &cut, &p).unwrap();
        let svu = symplectic(&s.rho, &v, &u, &cut, &p).unwrap();
        assert!((suv + svu).abs() < 1e-7 * (1.0 + suv.abs()));
        assert!(symplectic(&s.rho, &u, &u, &cut, &p).unwrap().abs() < 1e-7);
        let iuv = sl_inner(&s.rho, &u, &v, &cut, &p).unwrap();
        let ivu = sl_inner(&s.rho, &v, &u, &cut, &p).unwrap();
        assert!((iuv - ivu).abs() < 1e-7 * (1.0 + iuv.abs()));
    }

    #[test]
    fn identity_refined_and_localized_reductions() {
        let s = fix_b();
        let p = s.params;
        let map = s.map.clone().unwrap();
        let cut = CutSpec::at(1.5);
        let u = CMat::from_fn(4, 4, |r, k| if r == k { c((0.3 * r as f64).cos(), (0.3 * r as f64).sin()) } else { cr(0.0) });
        let g = gamma_nonlinear(&s.rho, &map, &cut, &p, Some(&u)).unwrap();
        let gr = gamma_refined(&s.rho, &map, &cut, &p, &u, &u).unwrap();
        assert!((g - gr).abs() < 1e-12 * (1.0 + g.abs()));
        let gl = gamma_localized(&s.rho, &map, &cut, &p, Some(&u)).unwrap();
        assert_eq!(g, gl);
        let empty = CutSpec { t: 1.5, region: Some(RegionMask { member: vec![false; 4] }) };
        assert_eq!(gamma_localized(&s.rho, &map, &empty, &p, None).unwrap(), 0.0);
        assert_eq!(t_functional(&s.rho, &map, &empty, &p, None).unwrap(), 0.0);
    }

    #[test]
    fn t_functional_single_point() {
        let s = fix_a();
        let id = InteractionMap::identity(&s.rho);
        let cut = CutSpec { t: 0.5, region: Some(RegionMask { member: vec![true, false] }) };
        let v = t_functional(&s.rho, &id, &cut, &s.params, None).unwrap();
        // |x^2|^2 with |x x| = 5
        assert!((v - 25.0).abs() < 1e-10);
    }

    #[test]
    fn conservation_for_identity_and_perturbed_maps() {
        let s = fix_b();
        let id = InteractionMap::identity(&s.rho);
        let r = conservation_check(&s.rho, &id, &s.params).unwrap();
        assert_eq!(r.subsets_checked, 16);
        assert!(r.max_gamma < 1e-12, "{}", r.max_gamma);
        assert!(r.max_pointwise < 1e-12);
        let r2 = conservation_check(&s.rho, s.map.as_ref().unwrap(), &s.params).unwrap();
        assert!(r2.max_identity_defect < 1e-10);
        assert!(r2.max_gamma > 1e-3);
        let _ = causal_action(&s.rho, &s.params).unwrap();
    }
}
