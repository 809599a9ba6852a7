//! Causal action, constraints, the function `ell`, jets and a constrained
//! minimizer over wave evaluations and weights.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use crate::error::{CfsError, Result};
use crate::fd;
use crate::linalg::{c, cr, sig_left, CMat};
use crate::operator_core::{lagrangian, product_spectrum, spectral_weight, LagrangianParams, SpacetimePoint};
use crate::system_measure::DiscreteMeasure;

/// Jet: scalar component per point and a tangent direction `dpsi` per point.
#[derive(Clone, Debug, PartialEq)]
pub struct Jet {
    pub scalar: Vec<f64>,
    pub dpsi: Vec<CMat>,
}

impl Jet {
    pub fn zero(rho: &DiscreteMeasure) -> Self {
        let (rows, cols) = rho.points[0].psi().shape();
        Self { scalar: vec![0.0; rho.len()], dpsi: vec![CMat::zeros(rows, cols); rho.len()] }
    }

    pub fn scalar_only(rho: &DiscreteMeasure, a: Vec<f64>) -> Self {
        Self { scalar: a, ..Self::zero(rho) }
    }

    /// Jet with the single direction `dir` at point `i`.
    pub fn at_point(rho: &DiscreteMeasure, i: usize, dir: CMat) -> Self {
        let mut j = Self::zero(rho);
        j.dpsi[i] = dir;
        j
    }

    pub fn validate(&self, rho: &DiscreteMeasure) -> Result<()> {
        if self.scalar.len() != rho.len() || self.dpsi.len() != rho.len() {
            return Err(CfsError::Dimension(format!(
                "jet of length {}/{} for {} points",
                self.scalar.len(),
                self.dpsi.len(),
                rho.len()
            )));
        }
        let shape = rho.points[0].psi().shape();
        if self.dpsi.iter().any(|d| d.shape() != shape) {
            return Err(CfsError::Dimension("jet direction of wrong shape".into()));
        }
        Ok(())
    }

    /// Induced operator direction `-dpsi^H sig psi - psi^H sig dpsi` at point `i`.
    pub fn direction(&self, rho: &DiscreteMeasure, i: usize) -> CMat {
        let psi = rho.points[i].psi();
        let n = rho.spec.n;
        let a = self.dpsi[i].adjoint() * sig_left(psi, n);
        -(&a + a.adjoint())
    }

    pub fn is_zero(&self) -> bool {
        self.scalar.iter().all(|a| *a == 0.0) && self.dpsi.iter().all(|d| d.iter().all(|z| *z == cr(0.0)))
    }

    pub fn scaled(&self, s: f64) -> Jet {
        Jet {
            scalar: self.scalar.iter().map(|a| a * s).collect(),
            dpsi: self.dpsi.iter().map(|d| d * cr(s)).collect(),
        }
    }

    pub fn plus(&self, other: &Jet) -> Jet {
        Jet {
            scalar: self.scalar.iter().zip(&other.scalar).map(|(a, b)| a + b).collect(),
            dpsi: self.dpsi.iter().zip(&other.dpsi).map(|(a, b)| a + b).collect(),
        }
    }

    /// Real linear combination of jets.
    pub fn combination(basis: &[Jet], coeffs: &[f64]) -> Jet {
        let mut out = basis[0].scaled(coeffs[0]);
        for (b, &k) in basis.iter().zip(coeffs).skip(1) {
            if k != 0.0 {
                out = out.plus(&b.scaled(k));
            }
        }
        out
    }
}

/// Elementary directions with a single unit entry (real, then imaginary) in
/// the columns `0..cols` of a `2n x f` matrix.
pub fn elementary_directions(n: usize, f: usize, cols: usize) -> Vec<CMat> {
    let mut out = Vec::with_capacity(4 * n * cols);
    for r in 0..2 * n {
        for col in 0..cols {
            for unit in [cr(1.0), c(0.0, 1.0)] {
                let mut m = CMat::zeros(2 * n, f);
                m[(r, col)] = unit;
                out.push(m);
            }
        }
    }
    out
}

/// Canonical jet basis: elementary directions on the columns of `H^f` at
/// every point (point-major), followed by the unit scalar jets.
pub fn canonical_jet_basis(rho: &DiscreteMeasure, with_scalars: bool) -> Vec<Jet> {
    let s = rho.spec;
    let dirs = elementary_directions(s.n, s.f, s.f_fermi);
    let mut out = Vec::new();
    for i in 0..rho.len() {
        for d in &dirs {
            out.push(Jet::at_point(rho, i, d.clone()));
        }
    }
    if with_scalars {
        for i in 0..rho.len() {
            let mut a = vec![0.0; rho.len()];
            a[i] = 1.0;
            out.push(Jet::scalar_only(rho, a));
        }
    }
    out
}

pub fn lagrangian_matrix(rho: &DiscreteMeasure, params: &LagrangianParams) -> Result<Vec<Vec<f64>>> {
    let m = rho.len();
    let mut l = vec![vec![0.0; m]; m];
    for i in 0..m {
        for j in i..m {
            let v = lagrangian(&rho.points[i], &rho.points[j], params)?;
            l[i][j] = v;
            l[j][i] = v;
        }
    }
    Ok(l)
}

pub fn causal_action(rho: &DiscreteMeasure, params: &LagrangianParams) -> Result<f64> {
    let l = lagrangian_matrix(rho, params)?;
    let mut s = 0.0;
    for i in 0..rho.len() {
        for j in 0..rho.len() {
            s += rho.weights[i] * rho.weights[j] * l[i][j];
        }
    }
    Ok(s)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Constraints {
    pub volume: f64,
    pub trace_integral: f64,
    pub boundedness: f64,
}

pub fn constraints(rho: &DiscreteMeasure, params: &LagrangianParams) -> Result<Constraints> {
    let volume = rho.volume();
    let trace_integral = rho.points.iter().zip(&rho.weights).map(|(p, w)| w * p.trace()).sum();
    let mut boundedness = 0.0;
    for i in 0..rho.len() {
        for j in 0..rho.len() {
            let e = product_spectrum(&rho.points[i], &rho.points[j], params)?;
            let w = spectral_weight(&e);
            boundedness += rho.weights[i] * rho.weights[j] * w * w;
        }
    }
    Ok(Constraints { volume, trace_integral, boundedness })
}

/// `ell(x) = sum_j L(x, x_j) rho_j - s`, evaluated at an arbitrary point.
pub fn ell_at(x: &SpacetimePoint, rho: &DiscreteMeasure, params: &LagrangianParams, s: f64) -> Result<f64> {
    let mut acc = 0.0;
    for (y, w) in rho.points.iter().zip(&rho.weights) {
        acc += lagrangian(x, y, params)? * w;
    }
    Ok(acc - s)
}

pub fn ell(rho: &DiscreteMeasure, params: &LagrangianParams) -> Result<Vec<f64>> {
    rho.points.iter().map(|x| ell_at(x, rho, params, params.s_vol)).collect()
}

/// Mean of `sum_j L(x_i, x_j) rho_j` over the support.
pub fn fit_s_vol(rho: &DiscreteMeasure, params: &LagrangianParams) -> Result<f64> {
    let raw: Vec<f64> = rho.points.iter().map(|x| ell_at(x, rho, params, 0.0)).collect::<Result<_>>()?;
    Ok(raw.iter().sum::<f64>() / raw.len() as f64)
}

fn directional_ell(
    rho: &DiscreteMeasure,
    i: usize,
    dir: &CMat,
    params: &LagrangianParams,
    h: f64,
) -> Result<f64> {
    if dir.iter().all(|z| *z == cr(0.0)) {
        return Ok(0.0);
    }
    let x = &rho.points[i];
    let tau = fd::tau_for(dir, h);
    if tau < 1e-300 {
        return Err(CfsError::StepUnderflow(format!("direction at point {i}")));
    }
    let eval = |t: f64| ell_at(&x.with_psi(x.psi() + dir * cr(t)), rho, params, 0.0);
    let (p, m) = (eval(tau)?, eval(-tau)?);
    Ok((p - m) / (2.0 * tau))
}

/// `a_i ell(x_i) + D_u ell(x_i)` with central differences; only the first
/// argument of the Lagrangian moves.
pub fn jet_derivative_ell(rho: &DiscreteMeasure, jet: &Jet, params: &LagrangianParams) -> Result<Vec<f64>> {
    Ok(jet_derivative_ell_checked(rho, jet, params)?.0)
}

/// Same as [`jet_derivative_ell`] together with the largest Richardson
/// discrepancy between steps `h` and `h/2`, which exposes kinks of `|lambda|`.
pub fn jet_derivative_ell_checked(
    rho: &DiscreteMeasure,
    jet: &Jet,
    params: &LagrangianParams,
) -> Result<(Vec<f64>, f64)> {
    jet.validate(rho)?;
    let ells = ell(rho, params)?;
    let mut out = Vec::with_capacity(rho.len());
    let mut worst = 0.0_f64;
    for i in 0..rho.len() {
        let h = fd::step1(rho.points[i].psi().norm());
        let d = directional_ell(rho, i, &jet.dpsi[i], params, h)?;
        let d2 = directional_ell(rho, i, &jet.dpsi[i], params, h / 2.0)?;
        worst = worst.max((d - d2).abs() / (1.0 + d.abs()));
        out.push(jet.scalar[i] * ells[i] + d);
    }
    Ok((out, worst))
}

/// Complex gradient of the local trace with respect to `psi`, restricted to
/// the first `cols` columns.
fn trace_gradient(psi: &CMat, n: usize, cols: usize) -> CMat {
    let mut g = sig_left(psi, n) * cr(-2.0);
    for col in cols..psi.ncols() {
        for r in 0..psi.nrows() {
            g[(r, col)] = cr(0.0);
        }
    }
    g
}

fn real_inner(a: &CMat, b: &CMat) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| x.re * y.re + x.im * y.im).sum()
}

/// Weak EL residual: the largest `|grad_u ell(x_i)|` over unit scalar jets
/// (with `s` fitted as the mean) and elementary `H^f` directions projected
/// to keep the local trace fixed.
pub fn weak_el_residual(rho: &DiscreteMeasure, params: &LagrangianParams) -> Result<f64> {
    let s = fit_s_vol(rho, params)?;
    let spec = rho.spec;
    let dirs = elementary_directions(spec.n, spec.f, spec.f_fermi);
    let mut worst = 0.0_f64;
    for (i, x) in rho.points.iter().enumerate() {
        worst = worst.max(ell_at(x, rho, params, s)?.abs());
        let g = trace_gradient(x.psi(), spec.n, spec.f_fermi);
        let gg = real_inner(&g, &g);
        let h = fd::step1(x.psi().norm());
        for d in &dirs {
            let dir = if gg > 0.0 { d - &g * cr(real_inner(&g, d) / gg) } else { d.clone() };
            worst = worst.max(directional_ell(rho, i, &dir, params, h)?.abs());
        }
    }
    Ok(worst)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ActionReport {
    pub action: f64,
    pub volume: f64,
    pub trace_integral: f64,
    pub boundedness: f64,
    pub ell: Vec<f64>,
    pub weak_el_residual: f64,
}

pub fn action_report(rho: &DiscreteMeasure, params: &LagrangianParams) -> Result<ActionReport> {
    let c = constraints(rho, params)?;
    Ok(ActionReport {
        action: causal_action(rho, params)?,
        volume: c.volume,
        trace_integral: c.trace_integral,
        boundedness: c.boundedness,
        ell: ell(rho, params)?,
        weak_el_residual: weak_el_residual(rho, params)?,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct MinimizeOptions {
    pub max_iters: usize,
    /// Length of the first trial step in parameter space.
    pub step: f64,
    /// Stop once the gradient norm falls below this value.
    pub grad_tol: f64,
    pub optimize_weights: bool,
    /// Seed for an optional perturbation of the start.
    pub seed: Option<u64>,
    pub jitter: f64,
    pub trace_hold: TraceHold,
}

/// Which local trace every point is held at during minimization.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TraceHold {
    /// The trace constant `c` of the parameters; the start is projected first.
    Constant,
    /// The trace each point has at the start (points of zero trace are left
    /// unnormalised).
    Initial,
}

impl Default for MinimizeOptions {
    fn default() -> Self {
        Self {
            max_iters: 200,
            step: 0.1,
            grad_tol: 1e-9,
            optimize_weights: true,
            seed: None,
            jitter: 0.0,
            trace_hold: TraceHold::Constant,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct TraceRow {
    pub iteration: usize,
    pub action: f64,
    pub volume: f64,
    pub trace_integral: f64,
    pub boundedness: f64,
    pub residual: f64,
}

#[derive(Clone, Debug)]
pub struct MinimizeResult {
    pub measure: DiscreteMeasure,
    pub trace: Vec<TraceRow>,
    pub converged: bool,
    pub s_vol_fit: f64,
}

/// Parametrisation keeping every local trace fixed and the total volume
/// fixed: `psi_i = raw_i sqrt(c_i / tr raw_i)`, `rho = V softmax(theta)`.
struct Param<'a> {
    base: &'a DiscreteMeasure,
    traces: Vec<Option<f64>>,
    volume: f64,
    weights: bool,
    per_point: usize,
}

impl Param<'_> {
    fn dim(&self) -> usize {
        self.base.len() * self.per_point + if self.weights { self.base.len() } else { 0 }
    }

    fn encode(&self, rho: &DiscreteMeasure) -> Vec<f64> {
        let mut z = Vec::with_capacity(self.dim());
        for p in &rho.points {
            for v in p.psi().iter() {
                z.push(v.re);
                z.push(v.im);
            }
        }
        if self.weights {
            z.extend(rho.weights.iter().map(|w| (w / self.volume).ln()));
        }
        z
    }

    fn decode(&self, z: &[f64]) -> Option<DiscreteMeasure> {
        let (rows, cols) = self.base.points[0].psi().shape();
        let mut points = Vec::with_capacity(self.base.len());
        for i in 0..self.base.len() {
            let chunk = &z[i * self.per_point..(i + 1) * self.per_point];
            let raw = CMat::from_iterator(rows, cols, chunk.chunks(2).map(|p| c(p[0], p[1])));
            let p = SpacetimePoint::new(raw).ok()?;
            match self.traces[i] {
                Some(target) => {
                    let ratio = target / p.trace();
                    if !(ratio > 0.0) || !ratio.is_finite() {
                        return None;
                    }
                    points.push(p.with_psi(p.psi() * cr(ratio.sqrt())));
                }
                None => points.push(p),
            }
        }
        let weights = if self.weights {
            let th = &z[self.base.len() * self.per_point..];
            let m = th.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let e: Vec<f64> = th.iter().map(|t| (t - m).exp()).collect();
            let tot: f64 = e.iter().sum();
            e.iter().map(|x| self.volume * x / tot).collect()
        } else {
            self.base.weights.clone()
        };
        if weights.iter().any(|w| !(*w > 0.0)) {
            return None;
        }
        Some(DiscreteMeasure { points, weights, ..self.base.clone() })
    }
}

/// Moves every local trace to `c` by rescaling the wave evaluation.
pub fn project_trace(rho: &DiscreteMeasure, c_target: f64) -> Result<DiscreteMeasure> {
    let mut points = Vec::with_capacity(rho.len());
    for (i, p) in rho.points.iter().enumerate() {
        let ratio = c_target / p.trace();
        if !(ratio > 0.0) || !ratio.is_finite() {
            return Err(CfsError::Invalid(format!(
                "point {i} has local trace {} of the wrong sign for c = {c_target}",
                p.trace()
            )));
        }
        points.push(p.with_psi(p.psi() * cr(ratio.sqrt())));
    }
    Ok(rho.with_points(points))
}

/// Minimizes the causal action with fixed local traces `c` and fixed volume
/// using BFGS with a monotone backtracking line search on finite-difference
/// gradients. The start is first moved onto the constraint set.
pub fn minimize(rho0: &DiscreteMeasure, params: &LagrangianParams, opts: &MinimizeOptions) -> Result<MinimizeResult> {
    params.validate()?;
    let mut start = rho0.clone();
    if let Some(seed) = opts.seed {
        if opts.jitter > 0.0 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let pts = start
                .points
                .iter()
                .map(|p| {
                    let noise = CMat::from_fn(p.psi().nrows(), p.psi().ncols(), |_, _| {
                        let (a, b): (f64, f64) = (StandardNormal.sample(&mut rng), StandardNormal.sample(&mut rng));
                        c(a, b) * opts.jitter
                    });
                    p.with_psi(p.psi() + noise)
                })
                .collect();
            start = start.with_points(pts);
        }
    }
    let (start, traces) = match opts.trace_hold {
        TraceHold::Constant => (project_trace(&start, params.c)?, vec![Some(params.c); start.len()]),
        TraceHold::Initial => {
            let t = start
                .points
                .iter()
                .map(|p| {
                    let tr = p.trace();
                    (tr.abs() > 1e-12 * p.psi().norm_squared()).then_some(tr)
                })
                .collect();
            (start, t)
        }
    };
    let (rows, cols) = start.points[0].psi().shape();
    let par = Param {
        base: &start,
        traces,
        volume: start.volume(),
        weights: opts.optimize_weights && start.len() > 1,
        per_point: 2 * rows * cols,
    };
    let objective = |z: &[f64]| -> f64 {
        match par.decode(z) {
            Some(m) => causal_action(&m, params).unwrap_or(f64::INFINITY),
            None => f64::INFINITY,
        }
    };
    let gradient = |z: &[f64]| -> Vec<f64> {
        let mut g = vec![0.0; z.len()];
        let mut w = z.to_vec();
        for k in 0..z.len() {
            let h = 1e-6 * (1.0 + z[k].abs());
            w[k] = z[k] + h;
            let fp = objective(&w);
            w[k] = z[k] - h;
            let fm = objective(&w);
            w[k] = z[k];
            g[k] = (fp - fm) / (2.0 * h);
        }
        g
    };
    let row = |it: usize, m: &DiscreteMeasure| -> Result<TraceRow> {
        let cst = constraints(m, params)?;
        Ok(TraceRow {
            iteration: it,
            action: causal_action(m, params)?,
            volume: cst.volume,
            trace_integral: cst.trace_integral,
            boundedness: cst.boundedness,
            residual: weak_el_residual(m, params)?,
        })
    };

    let dim = par.dim();
    let mut z = par.encode(&start);
    let mut fz = objective(&z);
    let mut g = gradient(&z);
    let mut hinv = vec![vec![0.0; dim]; dim];
    let reset = |h: &mut Vec<Vec<f64>>| {
        for (i, r) in h.iter_mut().enumerate() {
            for (j, v) in r.iter_mut().enumerate() {
                *v = if i == j { 1.0 } else { 0.0 };
            }
        }
    };
    reset(&mut hinv);
    let mut trace = vec![row(0, &start)?];
    let mut converged = false;
    let mut fresh = true;
    let mut it = 0;
    while it < opts.max_iters {
        let gnorm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
        if gnorm < opts.grad_tol {
            converged = true;
            break;
        }
        let mut d: Vec<f64> = (0..dim).map(|i| -(0..dim).map(|j| hinv[i][j] * g[j]).sum::<f64>()).collect();
        let mut slope: f64 = d.iter().zip(&g).map(|(a, b)| a * b).sum();
        if slope >= 0.0 {
            reset(&mut hinv);
            d = g.iter().map(|v| -v).collect();
            slope = -gnorm * gnorm;
        }
        let dnorm = d.iter().map(|v| v * v).sum::<f64>().sqrt();
        let mut alpha = if fresh { (opts.step / dnorm).min(1.0) } else { 1.0 };
        let mut accepted = None;
        for _ in 0..60 {
            let trial: Vec<f64> = z.iter().zip(&d).map(|(a, b)| a + alpha * b).collect();
            let ft = objective(&trial);
            if ft.is_finite() && ft <= fz + 1e-4 * alpha * slope && ft <= fz {
                accepted = Some((trial, ft));
                break;
            }
            alpha *= 0.5;
        }
        match accepted {
            Some((trial, ft)) => {
                let gt = gradient(&trial);
                let s: Vec<f64> = trial.iter().zip(&z).map(|(a, b)| a - b).collect();
                let y: Vec<f64> = gt.iter().zip(&g).map(|(a, b)| a - b).collect();
                let sy: f64 = s.iter().zip(&y).map(|(a, b)| a * b).sum();
                if sy > 1e-14 * s.iter().map(|v| v * v).sum::<f64>().sqrt() * y.iter().map(|v| v * v).sum::<f64>().sqrt() {
                    if fresh {
                        // scale the initial inverse Hessian
                        let yy: f64 = y.iter().map(|v| v * v).sum();
                        let scale = sy / yy;
                        for (i, r) in hinv.iter_mut().enumerate() {
                            for (j, v) in r.iter_mut().enumerate() {
                                *v = if i == j { scale } else { 0.0 };
                            }
                        }
                    }
                    let hy: Vec<f64> = (0..dim).map(|i| (0..dim).map(|j| hinv[i][j] * y[j]).sum()).collect();
                    let yhy: f64 = y.iter().zip(&hy).map(|(a, b)| a * b).sum();
                    let rho_k = 1.0 / sy;
                    for i in 0..dim {
                        for j in 0..dim {
                            hinv[i][j] += rho_k * rho_k * (sy + yhy) * s[i] * s[j] * 1.0
                                - rho_k * (hy[i] * s[j] + s[i] * hy[j]);
                        }
                    }
                    fresh = false;
                }
                z = trial;
                fz = ft;
                g = gt;
                it += 1;
                let m = par.decode(&z).expect("accepted iterate decodes");
                trace.push(row(it, &m)?);
            }
            None => {
                if fresh {
                    // no descent even along the gradient: finite-difference floor
                    converged = true;
                    break;
                }
                reset(&mut hinv);
                fresh = true;
            }
        }
    }
    let measure = par.decode(&z).expect("iterate decodes");
    let s_vol_fit = fit_s_vol(&measure, params)?;
    Ok(MinimizeResult { measure, trace, converged, s_vol_fit })
}
