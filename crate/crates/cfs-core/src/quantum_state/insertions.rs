use rayon::prelude::*;
use serde::Serialize;

use super::setup::FieldSetup;
use super::snapshot::{estimate, logweights_for, SampleContext, SampleMode, StateSnapshot};
use crate::error::{CfsError, Result};
use crate::linalg::{c, cr, herm_eig, range_projector, CMat, CVec, C64};
use crate::surface_layer::{elem_index, gamma_gradient, GammaGradient};

/// Insertion data of one sample.
#[derive(Clone, Debug, PartialEq)]
pub struct SampleInsertions {
    /// Values for `a^dagger(z_k)`.
    pub boson_c: Vec<C64>,
    /// Values for `a(conj z_k)`.
    pub boson_a: Vec<C64>,
    /// Matrix of the form `b` on the fermionic modes.
    pub bmat: CMat,
    /// `pi[m][n] = <phi_m | pi phi_n>`.
    pub pi: CMat,
}

/// Evaluation context of the state: per-sample insertions with
/// normalized weights.
#[derive(Clone, Debug)]
pub struct StateTable {
    pub weights: Vec<f64>,
    pub samples: Vec<SampleInsertions>,
    pub boson_modes: usize,
    pub fermi_modes: usize,
    pub refined: bool,
}

/// Tolerance of the range of `B` relative to its norm.
pub const PI_TOL: f64 = 1e-10;

fn dot(z: &CVec, g: &[f64]) -> C64 {
    z.iter().zip(g).map(|(a, b)| a * *b).sum()
}

fn dot_conj(z: &CVec, g: &[f64]) -> C64 {
    z.iter().zip(g).map(|(a, b)| a.conj() * *b).sum()
}

fn unit(f: usize, l: usize) -> CVec {
    let mut e = CVec::zeros(f);
    e[l] = cr(1.0);
    e
}

fn times_i(d: &[CMat]) -> Vec<CMat> {
    d.iter().map(|m| m * c(0.0, 1.0)).collect()
}

/// Holomorphic fermionic derivative `(D_d - i D_{i d})` of a real gradient.
fn wirtinger(g: &[f64], d: &[CMat]) -> C64 {
    c(GammaGradient::along(g, d), -GammaGradient::along(g, &times_i(d)))
}

/// Bosonic insertion `D_z gamma` (or `D_{conj z}` when `conjugated`) for the
/// complex direction `z` over the elementary variations.
pub fn insertion_bosonic(grad: &GammaGradient, z: &CVec, conjugated: bool) -> C64 {
    let sum: Vec<f64> = grad.ket.iter().zip(&grad.bra).map(|(a, b)| a + b).collect();
    if conjugated {
        dot_conj(z, &sum)
    } else {
        dot(z, &sum)
    }
}

/// Ket-only `D^<_z` and bra-only `D^>_{conj z}`, normalized to agree with the
/// full derivative when both unitaries coincide.
pub fn insertion_bosonic_refined(grad: &GammaGradient, z: &CVec) -> (C64, C64) {
    (dot(z, &grad.ket) * 2.0, dot_conj(z, &grad.bra) * 2.0)
}

/// `D_{phi <e_l|} gamma = (D_d - i D_{i d}) / 2` with `d = xi e_l^T`.
pub fn insertion_fermionic(setup: &FieldSetup, grad: &GammaGradient, m: usize, l: usize) -> C64 {
    let d = setup.fermi_direction(m, &unit(setup.rho.spec.f, l));
    let sum: Vec<f64> = grad.ket.iter().zip(&grad.bra).map(|(a, b)| a + b).collect();
    wirtinger(&sum, &d) * 0.5
}

/// Orthogonal projector onto the range of the Hermitian matrix `b`.
pub fn range_projection(b: &CMat) -> CMat {
    let (vals, _) = herm_eig(b);
    let norm = vals.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
    if norm == 0.0 {
        return CMat::zeros(b.nrows(), b.ncols());
    }
    range_projector(b, PI_TOL * norm).0
}

/// Idempotent onto the range of `b` along its kernel,
/// `R (W^H R)^{-1} W^H` with `R`, `W` the left and right singular vectors
/// of the nonzero singular values.
pub fn spectral_idempotent(b: &CMat) -> Result<CMat> {
    let k = b.nrows();
    let svd = b.clone().svd(true, true);
    let (u, vt) = (svd.u.expect("left vectors"), svd.v_t.expect("right vectors"));
    let smax = svd.singular_values.iter().cloned().fold(0.0_f64, f64::max);
    let keep: Vec<usize> = (0..k).filter(|&i| smax > 0.0 && svd.singular_values[i] > PI_TOL * smax).collect();
    if keep.is_empty() {
        return Ok(CMat::zeros(k, k));
    }
    let r = CMat::from_fn(k, keep.len(), |row, col| u[(row, keep[col])]);
    let w = CMat::from_fn(k, keep.len(), |row, col| vt[(keep[col], row)].conj());
    let core = (w.adjoint() * &r)
        .try_inverse()
        .ok_or_else(|| CfsError::Singular("range and kernel of B are not complementary".into()))?;
    Ok(r * core * w.adjoint())
}

fn sample_insertions(setup: &FieldSetup, ctx: &SampleContext, ult: &CMat, ugt: &CMat, refined: bool) -> Result<SampleInsertions> {
    let grad = gamma_gradient(&ctx.inter, ctx.rho, ult, ugt, &ctx.omega, &ctx.region, ctx.params)?;
    let f = setup.rho.spec.f;
    let ff = setup.rho.spec.f_fermi;
    let mf = setup.fermi_modes();
    let mut boson_c = Vec::new();
    let mut boson_a = Vec::new();
    for z in &setup.boson_dirs {
        if refined {
            let (lt, gt) = insertion_bosonic_refined(&grad, z);
            boson_c.push(lt);
            boson_a.push(gt);
        } else {
            boson_c.push(insertion_bosonic(&grad, z, false));
            boson_a.push(insertion_bosonic(&grad, z, true));
        }
    }
    if refined {
        let rel = ugt.adjoint() * ult;
        // hol[(m, l)] = D^<_{phi_m <e_l|}, ah[(m, l)] = D^>_{|u_l> conj phi_m}
        let mut hol = CMat::zeros(mf, ff);
        let mut ah = CMat::zeros(mf, ff);
        for l in 0..ff {
            let ul: CVec = &rel * unit(f, l);
            for m in 0..mf {
                hol[(m, l)] = wirtinger(&grad.ket, &setup.fermi_direction(m, &unit(f, l)));
                ah[(m, l)] = wirtinger(&grad.bra, &setup.fermi_direction(m, &ul)).conj();
            }
        }
        let bmat = ah * hol.transpose();
        let pi = spectral_idempotent(&bmat)?;
        return Ok(SampleInsertions { boson_c, boson_a, bmat, pi });
    }
    let proj = projector_from_gradient(setup, &grad);
    Ok(SampleInsertions { boson_c, boson_a, bmat: proj.b, pi: proj.pi })
}

/// Matrix of the form `b` on the orthonormal fermionic modes and the
/// projector onto its range.
#[derive(Clone, Debug, PartialEq)]
pub struct FermionicProjector {
    pub b: CMat,
    pub pi: CMat,
}

fn projector_from_gradient(setup: &FieldSetup, grad: &GammaGradient) -> FermionicProjector {
    let ff = setup.rho.spec.f_fermi;
    let mf = setup.fermi_modes();
    let mut h = CMat::zeros(mf, ff);
    for l in 0..ff {
        for m in 0..mf {
            h[(m, l)] = insertion_fermionic(setup, grad, m, l);
        }
    }
    let b = CMat::from_fn(mf, mf, |a, k| (0..ff).map(|l| h[(a, l)].conj() * h[(k, l)]).sum());
    let pi = range_projection(&b);
    FermionicProjector { b, pi }
}

/// `b` and `pi` at the plain sample `u`.
pub fn fermionic_projector(setup: &FieldSetup, u: &CMat) -> Result<FermionicProjector> {
    let ctx = SampleContext::new(&setup.rho, &setup.map, &setup.cut, &setup.params)?;
    let grad = gamma_gradient(&ctx.inter, ctx.rho, u, u, &ctx.omega, &ctx.region, ctx.params)?;
    Ok(projector_from_gradient(setup, &grad))
}

/// Derivative of `log Z` along a bosonic mode, by central differences of the
/// vacuum over the frozen samples, next to `beta` times the weighted
/// insertion mean.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LogZDiagnostic {
    pub mode: usize,
    pub finite_difference: C64,
    pub insertion: C64,
    pub defect: f64,
}

pub fn log_z_diagnostic(snapshot: &StateSnapshot, setup: &FieldSetup, mode: usize, step: f64) -> Result<LogZDiagnostic> {
    if snapshot.mode != SampleMode::Plain || snapshot.alpha != 0.0 {
        return Err(CfsError::Invalid("the diagnostic needs a plain snapshot with alpha = 0".into()));
    }
    let z = setup
        .boson_dirs
        .get(mode)
        .ok_or_else(|| CfsError::Invalid(format!("no bosonic mode {mode}")))?;
    let pairs = snapshot.pairs()?;
    let cut = snapshot.cut();
    let rho = &setup.rho;
    let (rows, f) = rho.points[0].psi().shape();
    let log_z_along = |coeffs: &[f64], t: f64| -> Result<f64> {
        let points = rho
            .points
            .iter()
            .enumerate()
            .map(|(j, p)| {
                let d = CMat::from_fn(rows, f, |r, col| {
                    let k = elem_index(rows, f, j, r, col, 0);
                    c(coeffs[k], coeffs[k + 1])
                });
                p.with_psi(p.psi() + d * cr(t))
            })
            .collect();
        let moved = rho.with_points(points);
        let ctx = SampleContext::new(&moved, &setup.map, &cut, &setup.params)?;
        let gammas: Result<Vec<f64>> = pairs.iter().map(|(a, b)| ctx.gamma(a, b)).collect();
        let lw = logweights_for(&gammas?, &vec![0.0; pairs.len()], snapshot.beta, 0.0);
        Ok(estimate(&lw).log_z)
    };
    let re: Vec<f64> = z.iter().map(|x| x.re).collect();
    let im: Vec<f64> = z.iter().map(|x| x.im).collect();
    let d = |v: &[f64]| -> Result<f64> { Ok((log_z_along(v, step)? - log_z_along(v, -step)?) / (2.0 * step)) };
    let finite_difference = c(d(&re)?, d(&im)?);
    let ctx = SampleContext::new(rho, &setup.map, &cut, &setup.params)?;
    let weights = normalized(&snapshot.logweights);
    let mut insertion = cr(0.0);
    for ((a, b), w) in pairs.iter().zip(&weights) {
        let grad = gamma_gradient(&ctx.inter, ctx.rho, a, b, &ctx.omega, &ctx.region, ctx.params)?;
        insertion += insertion_bosonic(&grad, z, false) * *w;
    }
    insertion *= snapshot.beta;
    let defect = (finite_difference - insertion).norm() / (1.0 + insertion.norm());
    Ok(LogZDiagnostic { mode, finite_difference, insertion, defect })
}

fn normalized(logweights: &[f64]) -> Vec<f64> {
    let m = logweights.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = logweights.iter().map(|l| (l - m).exp()).collect();
    let s: f64 = w.iter().sum();
    w.into_iter().map(|x| x / s).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct InsertionDiagnostics {
    /// Largest operator norm of `B` over the samples.
    pub max_b_norm: f64,
    /// Largest rank of the fermionic projector over the samples.
    pub max_pi_rank: usize,
    /// Smallest eigenvalue of the Hermitian part of `B`.
    pub min_b_eigenvalue: f64,
}

impl StateTable {
    /// Computes the insertions of every sample of the snapshot.
    pub fn build(snapshot: &StateSnapshot, setup: &FieldSetup) -> Result<Self> {
        let cut = snapshot.cut();
        let ctx = SampleContext::new(&setup.rho, &setup.map, &cut, &setup.params)?;
        let refined = snapshot.mode == SampleMode::Refined;
        let pairs = snapshot.pairs()?;
        let samples: Result<Vec<SampleInsertions>> =
            pairs.par_iter().map(|(ult, ugt)| sample_insertions(setup, &ctx, ult, ugt, refined)).collect();
        Ok(Self {
            weights: normalized(&snapshot.logweights),
            samples: samples?,
            boson_modes: setup.boson_modes(),
            fermi_modes: setup.fermi_modes(),
            refined,
        })
    }

    /// Same insertions with the weights of another snapshot over the same samples.
    pub fn reweighted(&self, snapshot: &StateSnapshot) -> Result<Self> {
        if snapshot.logweights.len() != self.samples.len() {
            return Err(CfsError::Dimension("snapshot does not match the table".into()));
        }
        Ok(Self { weights: normalized(&snapshot.logweights), ..self.clone() })
    }

    /// The Fock vacuum: no bosonic insertions and `pi` the projector onto
    /// the first `sea` fermionic modes.
    pub fn vacuum(boson_modes: usize, fermi_modes: usize, sea: usize) -> Self {
        let pi = CMat::from_fn(fermi_modes, fermi_modes, |r, k| if r == k && r < sea { cr(1.0) } else { cr(0.0) });
        Self {
            weights: vec![1.0],
            samples: vec![SampleInsertions {
                boson_c: vec![cr(0.0); boson_modes],
                boson_a: vec![cr(0.0); boson_modes],
                bmat: pi.clone(),
                pi,
            }],
            boson_modes,
            fermi_modes,
            refined: false,
        }
    }

    pub fn diagnostics(&self) -> InsertionDiagnostics {
        let mut d = InsertionDiagnostics { max_b_norm: 0.0, max_pi_rank: 0, min_b_eigenvalue: f64::INFINITY };
        for s in &self.samples {
            if s.bmat.nrows() == 0 {
                d.min_b_eigenvalue = d.min_b_eigenvalue.min(0.0);
                continue;
            }
            let sv = s.bmat.clone().svd(false, false).singular_values;
            d.max_b_norm = d.max_b_norm.max(sv.iter().cloned().fold(0.0, f64::max));
            let (ev, _) = herm_eig(&s.bmat);
            d.min_b_eigenvalue = d.min_b_eigenvalue.min(ev[0]);
            let rank = s.pi.trace().re.round() as usize;
            d.max_pi_rank = d.max_pi_rank.max(rank);
        }
        d
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::fix_b;
    use crate::quantum_state::group::{haar_sample, GroupKind, GroupSpec};
    use crate::quantum_state::setup::SetupOptions;
    use crate::quantum_state::snapshot::{build_snapshot, SnapshotSpec};
    use crate::surface_layer::{CutSpec, Interacting};
    use crate::system_measure::InteractionMap;

    fn setup_b() -> FieldSetup {
        let s = fix_b();
        FieldSetup::build(&s.rho, s.map.as_ref().unwrap(), &CutSpec::at(1.5), &s.params, &SetupOptions::default()).unwrap()
    }

    fn group(setup: &FieldSetup) -> GroupSpec {
        GroupSpec::on_fermi(GroupKind::Torus(2), setup.rho.spec.f, setup.rho.spec.f_fermi).unwrap()
    }

    #[test]
    fn projector_rank_and_positivity() {
        let setup = setup_b();
        let g = group(&setup);
        for seed in 0..8 {
            let p = fermionic_projector(&setup, &haar_sample(&g, seed)).unwrap();
            let (vals, _) = herm_eig(&p.b);
            let bmax = vals.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
            assert!(vals[0] >= -1e-10 * (1.0 + bmax), "{vals:?}");
            let rank = p.pi.trace().re.round() as usize;
            assert!(rank <= setup.rho.spec.f_fermi);
            assert!((&p.pi * &p.pi - &p.pi).camax() < 1e-10);
            assert!((&p.pi - p.pi.adjoint()).camax() < 1e-12);
        }
    }

    #[test]
    fn zero_derivatives_give_zero_projector() {
        // the identity map and no cut: every surface layer term vanishes
        let s = fix_b();
        let map = InteractionMap::identity(&s.rho);
        let setup = FieldSetup::build(&s.rho, s.map.as_ref().unwrap(), &CutSpec::at(1.5), &s.params, &SetupOptions::default()).unwrap();
        let setup = FieldSetup { inter: Interacting::new(&s.rho, &map).unwrap(), map, cut: CutSpec::at(-1e9), ..setup };
        let p = fermionic_projector(&setup, &CMat::identity(4, 4)).unwrap();
        assert_eq!(p.b, CMat::zeros(p.b.nrows(), p.b.ncols()));
        assert_eq!(p.pi, CMat::zeros(p.b.nrows(), p.b.ncols()));
    }

    #[test]
    fn refined_conjugation_flip() {
        let setup = setup_b();
        let g = group(&setup);
        let (a, b) = (haar_sample(&g, 1), haar_sample(&g, 2));
        let ctx = SampleContext::new(&setup.rho, &setup.map, &setup.cut, &setup.params).unwrap();
        let ab = gamma_gradient(&ctx.inter, ctx.rho, &a, &b, &ctx.omega, &ctx.region, ctx.params).unwrap();
        let ba = gamma_gradient(&ctx.inter, ctx.rho, &b, &a, &ctx.omega, &ctx.region, ctx.params).unwrap();
        for z in &setup.boson_dirs {
            let lt = insertion_bosonic_refined(&ab, z).0;
            let gt = insertion_bosonic_refined(&ba, z).1;
            assert!((lt.conj() - gt).norm() < 1e-7 * (1.0 + lt.norm()), "{lt} {gt}");
        }
    }

    #[test]
    fn refined_diagonal_matches_plain_insertions() {
        let setup = setup_b();
        let u = haar_sample(&group(&setup), 5);
        let ctx = SampleContext::new(&setup.rho, &setup.map, &setup.cut, &setup.params).unwrap();
        let grad = gamma_gradient(&ctx.inter, ctx.rho, &u, &u, &ctx.omega, &ctx.region, ctx.params).unwrap();
        for z in &setup.boson_dirs {
            let (lt, gt) = insertion_bosonic_refined(&grad, z);
            assert!((lt - insertion_bosonic(&grad, z, false)).norm() < 1e-9 * (1.0 + lt.norm()));
            assert!((gt - insertion_bosonic(&grad, z, true)).norm() < 1e-9 * (1.0 + gt.norm()));
        }
    }

    #[test]
    fn log_z_derivative_is_the_weighted_insertion() {
        let setup = setup_b();
        let snap = build_snapshot(&setup.rho, &setup.map, &setup.cut, &setup.params, &SnapshotSpec::plain(group(&setup), 0.7, 24, 3)).unwrap();
        for mode in 0..setup.boson_modes() {
            let d = log_z_diagnostic(&snap, &setup, mode, 1e-4).unwrap();
            assert!(d.defect < 1e-6, "{d:?}");
        }
        assert!(log_z_diagnostic(&snap, &setup, 99, 1e-4).is_err());
    }

    #[test]
    fn spectral_idempotent_of_a_projector_is_itself() {
        let p = CMat::from_fn(3, 3, |r, k| if r == k && r < 2 { cr(1.0) } else { cr(0.0) });
        assert!((spectral_idempotent(&p).unwrap() - &p).camax() < 1e-14);
        assert_eq!(spectral_idempotent(&CMat::zeros(2, 2)).unwrap(), CMat::zeros(2, 2));
    }
}
