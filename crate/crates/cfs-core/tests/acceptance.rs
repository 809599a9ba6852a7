//! Acceptance suite: one line per criterion, all run from a single test so
//! the report is printed in order.

use nalgebra::Complex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use cfs_core::action_optim::{minimize, Jet, MinimizeOptions, TraceHold};
use cfs_core::cli::{cut_for, group_for, interaction_of};
use cfs_core::fixtures::{fix_a, fix_b, random_point, System};
use cfs_core::fock_rep::{algebra_check, density_from_state, verify_reconstruction, FockRep};
use cfs_core::linalg::{c, cr, CMat, CVec, C64, RMat};
use cfs_core::linfield_complex::{complex_report, complex_structure, sigma_c, LinSolutionSpace};
use cfs_core::operator_core::{frame_spectrum, lagrangian, Frame, LagrangianParams, SpacetimePoint};
use cfs_core::quantum_state::eval::{random_element, random_word};
use cfs_core::quantum_state::{
    build_snapshot, haar_sample, insertion_bosonic, insertion_fermionic, positivity_check, prestate, prestate_refined,
    state_eval, Element, FieldSetup, GroupKind, Op, SetupOptions, SnapshotSpec, StateSnapshot, StateTable,
};
use cfs_core::surface_layer::{
    conservation_check, gamma_gradient, gamma_nonlinear, one_form, sl_inner, symplectic, CutSpec,
};
use cfs_core::system_measure::{DiscreteMeasure, InteractionMap};
use cfs_core::wavefunc::isospectral_defect;
use cfs_core::CfsError;

const SAMPLES: usize = 512;
const SEED: u64 = 7;

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: impl Into<String>) -> Outcome {
    Outcome { passed, detail: detail.into() }
}

struct Fixture {
    sys: System,
    map: InteractionMap,
    cut: CutSpec,
    setup: FieldSetup,
    snap: StateSnapshot,
    table: StateTable,
}

fn fixture() -> Fixture {
    let sys = fix_b();
    let map = interaction_of(&sys, None).unwrap();
    let cut = cut_for(&sys, None);
    let setup = FieldSetup::build(&sys.rho, &map, &cut, &sys.params, &SetupOptions::default()).unwrap();
    let group = group_for(&sys.rho, GroupKind::Torus(2)).unwrap();
    let snap = build_snapshot(&sys.rho, &map, &cut, &sys.params, &SnapshotSpec::plain(group, 1.0, SAMPLES, SEED)).unwrap();
    let table = StateTable::build(&snap, &setup).unwrap();
    Fixture { sys, map, cut, setup, snap, table }
}

fn fermi_counts(w: &[Op]) -> (usize, usize) {
    let cre = w.iter().filter(|o| matches!(o, Op::FCre(_))).count();
    let ann = w.iter().filter(|o| matches!(o, Op::FAnn(_))).count();
    (cre, ann)
}

fn positivity(fx: &Fixture) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let (mb, mf) = (fx.table.boson_modes, fx.table.fermi_modes);
    let els: Vec<Element> = (0..200).map(|_| random_element(&mut rng, mb, mf, 3, 3)).collect();
    let mut ok = true;
    let mut notes = Vec::new();
    for beta in [0.5, 1.0, 2.0] {
        let table = fx.table.reweighted(&fx.snap.reweighted(beta, 0.0)).unwrap();
        let rep = positivity_check(&table, &els, true).unwrap();
        ok &= rep.passed;
        notes.push(format!("beta {beta}: min {:.1e} imag {:.1e} sample {:.1e}", rep.min_scaled, rep.max_imag_scaled, rep.min_sample));
    }
    outcome(ok, notes.join("; "))
}

fn superselection(fx: &Fixture) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let (mb, mf) = (fx.table.boson_modes, fx.table.fermi_modes);
    let mut count = 0;
    let mut worst: f64 = 0.0;
    while count < 100 {
        let len = rng.random_range(1..=5);
        let w = random_word(&mut rng, mb, mf, len);
        let (cre, ann) = fermi_counts(&w);
        if cre == ann {
            continue;
        }
        count += 1;
        worst = worst.max(state_eval(&fx.table, &Element::word(w)).unwrap().norm());
    }
    outcome(worst == 0.0, format!("{count} words, max |omega| {worst:e}"))
}

/// Table with a single sample whose fermionic projector is a random rank-3
/// orthogonal projector on four modes.
fn projector_table(seed: u64) -> StateTable {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let g = CMat::from_fn(4, 3, |_, _| c(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5));
    let q = g.qr().q();
    let pi = &q * q.adjoint();
    let mut table = StateTable::vacuum(0, 4, 0);
    table.samples[0].pi = pi.clone();
    table.samples[0].bmat = pi;
    table
}

fn permutation_sign(p: &[usize]) -> f64 {
    let mut s = 1.0;
    for i in 0..p.len() {
        for j in i + 1..p.len() {
            if p[i] > p[j] {
                s = -s;
            }
        }
    }
    s
}

fn antisymmetry(fx: &Fixture) -> Outcome {
    let mut worst: f64 = 0.0;
    let mf = fx.table.fermi_modes;
    if mf >= 2 {
        for (a, b) in [(0, 1), (1, 0)] {
            let w = [Op::FCre(a), Op::FCre(b), Op::FAnn(1), Op::FAnn(0)];
            let s = [Op::FCre(b), Op::FCre(a), Op::FAnn(1), Op::FAnn(0)];
            let (x, y) = (prestate(&fx.table, &w).unwrap(), prestate(&fx.table, &s).unwrap());
            worst = worst.max((x + y).norm() / x.norm().max(1e-300));
        }
    }
    let perms = [[0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]];
    for seed in 0..5 {
        let t = projector_table(seed);
        let cre = [0usize, 1, 3];
        let ann = [Op::FAnn(2), Op::FAnn(1), Op::FAnn(0)];
        let base: Vec<Op> = cre.iter().map(|&k| Op::FCre(k)).chain(ann).collect();
        let v0 = prestate(&t, &base).unwrap();
        for p in &perms {
            let w: Vec<Op> = p.iter().map(|&k| Op::FCre(cre[k])).chain(ann).collect();
            let v = prestate(&t, &w).unwrap();
            worst = worst.max((v - v0 * permutation_sign(p)).norm() / v0.norm().max(1e-300));
        }
    }
    outcome(worst <= 1e-12, format!("max relative defect {worst:.1e}"))
}

fn ccr_car(fx: &Fixture) -> Outcome {
    let (mb, mf) = (fx.table.boson_modes, fx.table.fermi_modes);
    let one = cr(1.0);
    let mut car: f64 = 0.0;
    let mut ccr: f64 = 0.0;
    for i in 0..mf {
        for j in 0..mf {
            let e = Element { terms: vec![(one, vec![Op::FAnn(i), Op::FCre(j)]), (one, vec![Op::FCre(j), Op::FAnn(i)])] };
            car = car.max((state_eval(&fx.table, &e).unwrap() - cr(if i == j { 1.0 } else { 0.0 })).norm());
            let e = Element { terms: vec![(one, vec![Op::FAnn(i), Op::FAnn(j)]), (one, vec![Op::FAnn(j), Op::FAnn(i)])] };
            car = car.max(state_eval(&fx.table, &e).unwrap().norm());
        }
    }
    for i in 0..mb {
        for j in 0..mb {
            let e = Element { terms: vec![(one, vec![Op::BAnn(i), Op::BCre(j)]), (-one, vec![Op::BCre(j), Op::BAnn(i)])] };
            ccr = ccr.max((state_eval(&fx.table, &e).unwrap() - cr(if i == j { 1.0 } else { 0.0 })).norm());
        }
    }
    let fock = FockRep::for_table(&fx.table, fx.setup.sea_modes(), 4).unwrap();
    let alg = algebra_check(&fock);
    let ok = car <= 1e-9 && ccr <= 1e-9 && alg.car_defect == 0.0 && alg.car_zero_defect == 0.0 && alg.passed(1e-12);
    outcome(
        ok,
        format!(
            "state car {car:.1e} ccr {ccr:.1e}; fock car {:e} ccr below top {:.1e} (top level {})",
            alg.car_defect, alg.ccr_defect, alg.ccr_top_defect
        ),
    )
}

fn perturbed(sys: &System, seed: u64, size: f64) -> InteractionMap {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let target = sys
        .rho
        .points
        .iter()
        .map(|p| {
            let noise = CMat::from_fn(p.psi().nrows(), p.psi().ncols(), |_, _| c(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5));
            p.with_psi(p.psi() + noise * cr(size))
        })
        .collect();
    let fweight = (0..sys.rho.len()).map(|_| 1.0 + 0.2 * rng.random::<f64>()).collect();
    InteractionMap { target, fweight }
}

fn conservation(fx: &Fixture) -> Outcome {
    let a = fix_a();
    let mut id_max: f64 = 0.0;
    let mut pert_max: f64 = 0.0;
    let mut subsets = 0;
    for sys in [&a, &fx.sys] {
        let r = conservation_check(&sys.rho, &InteractionMap::identity(&sys.rho), &sys.params).unwrap();
        id_max = id_max.max(r.max_gamma);
        subsets += r.subsets_checked;
    }
    for (sys, map) in [(&a, perturbed(&a, 5, 0.2)), (&fx.sys, fx.map.clone()), (&fx.sys, perturbed(&fx.sys, 6, 0.1))] {
        let r = conservation_check(&sys.rho, &map, &sys.params).unwrap();
        pert_max = pert_max.max(r.max_identity_defect);
    }
    outcome(id_max <= 1e-12 && pert_max <= 1e-10, format!("{subsets} subsets; identity map {id_max:e}; perturbed {pert_max:.1e}"))
}

fn isospectrality() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    let params = LagrangianParams::default();
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let n = rng.random_range(1..=2);
        let f = rng.random_range(2 * n..=6);
        let sx = if rng.random::<bool>() { 1.0 } else { -1.0 };
        let sy = if rng.random::<bool>() { 1.0 } else { -1.0 };
        let x = random_point(&mut rng, n, f, sx);
        let y = random_point(&mut rng, n, f, sy);
        worst = worst.max(isospectral_defect(&x, &y, &params).unwrap());
    }
    outcome(worst < 1e-8, format!("100 pairs, max relative defect {worst:.1e}"))
}

fn complex_structure_check(fx: &Fixture) -> Outcome {
    let rep = complex_report(&fx.setup.space, &fx.setup.complex);
    let cs = &fx.setup.complex;
    let s = &fx.setup.space.gram_sympl;
    let jc = cs.j.map(|x| cr(x));
    let k = cs.hol_basis.ncols();
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    let mut coeffs = || CVec::from_fn(k, |_, _| c(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5));
    let mut imsig: f64 = 0.0;
    for _ in 0..50 {
        let u = &cs.hol_basis * coeffs();
        let v = &cs.hol_basis * coeffs();
        let scal = sigma_c(s, &u, &(&jc * &v));
        let scale = 1.0 + scal.norm();
        imsig = imsig.max((scal.im - sigma_c(s, &u, &v).re).abs() / scale);
    }
    let mut deg = RMat::zeros(4, 4);
    deg[(0, 1)] = 1.0;
    deg[(1, 0)] = -1.0;
    let sp = LinSolutionSpace::from_grams(RMat::identity(4, 4), deg).unwrap();
    let aborted = matches!(complex_structure(&sp), Err(CfsError::Singular(_)));
    outcome(
        rep.j_square_defect < 1e-8 && imsig < 1e-8 && aborted && k > 0,
        format!("J^2+1 {:.1e}; Im(u|v)-Re sigma {imsig:.1e} over 50 pairs; singular T aborts: {aborted}", rep.j_square_defect),
    )
}

fn reconstruction(fx: &Fixture) -> Outcome {
    let fock = FockRep::for_table(&fx.table, fx.setup.sea_modes(), 4).unwrap();
    let sigma = density_from_state(&fx.table, &fock, 2).unwrap();
    let rep = verify_reconstruction(&sigma, &fx.table, &fock, 2).unwrap();
    let vac = StateTable::vacuum(fx.table.boson_modes, fx.table.fermi_modes, fx.setup.sea_modes());
    let vf = FockRep::for_table(&vac, fx.setup.sea_modes(), 4).unwrap();
    let vs = density_from_state(&vac, &vf, 2).unwrap();
    let mut exact = true;
    for r in 0..vs.matrix.nrows() {
        for k in 0..vs.matrix.ncols() {
            let expect = if vs.sector[r] == 0 && r == k { cr(1.0) } else { cr(0.0) };
            exact &= vs.matrix[(r, k)] == expect;
        }
    }
    outcome(
        rep.max_residual <= 1e-8 && exact,
        format!("{} words, max residual {:.1e}, tail {:.1e}; vacuum exact: {exact}", rep.words, rep.max_residual, sigma.tail),
    )
}

/// Observed convergence order of a brute-force quotient `q(h)` towards the
/// module value `m`. Quotients already within the floor count as converged.
fn order(m: f64, q: impl Fn(f64) -> f64) -> (f64, bool) {
    let h = 1e-2;
    let (e1, e2) = ((q(h) - m).abs(), (q(h / 2.0) - m).abs());
    if e2 < 1e-9 * (1.0 + m.abs()) {
        return (f64::INFINITY, true);
    }
    let p = (e1 / e2).log2();
    (p, p >= 1.8)
}

fn random_jet(rng: &mut ChaCha8Rng, rho: &DiscreteMeasure) -> Jet {
    let (rows, cols) = rho.points[0].psi().shape();
    Jet {
        scalar: (0..rho.len()).map(|_| rng.random::<f64>() - 0.5).collect(),
        dpsi: (0..rho.len())
            .map(|_| CMat::from_fn(rows, cols, |_, _| c(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5)))
            .collect(),
    }
}

fn moved(p: &SpacetimePoint, d: &CMat, t: f64) -> SpacetimePoint {
    p.with_psi(p.psi() + d * cr(t))
}

fn lag(x: &SpacetimePoint, y: &SpacetimePoint, params: &LagrangianParams) -> f64 {
    lagrangian(x, y, params).unwrap()
}

fn cross(rho: &DiscreteMeasure, cut: &CutSpec) -> Vec<(usize, usize)> {
    let past = cut.past(rho);
    let mut out = Vec::new();
    for i in 0..rho.len() {
        for j in 0..rho.len() {
            if past[i] && !past[j] {
                out.push((i, j));
            }
        }
    }
    out
}

/// Smallest relative distance of a chain spectrum of the sample to a branch
/// point of the Lagrangian (coinciding or vanishing eigenvalues).
fn branch_distance(fx: &Fixture, u: &CMat) -> f64 {
    let vac: Vec<Frame> = fx.sys.rho.points.iter().map(|p| p.frame().conjugated(u, u)).collect();
    let mut d = f64::INFINITY;
    for t in &fx.setup.inter.target {
        for v in &vac {
            for (a, b) in [(t, v), (v, t)] {
                let e = frame_spectrum(a, b, fx.sys.params.eps_rank).unwrap();
                let l = &e.lambdas;
                let scale: f64 = l.iter().map(|x| x.norm()).sum::<f64>().max(1e-300);
                for i in 0..l.len() {
                    d = d.min(l[i].norm() / scale);
                    for k in i + 1..l.len() {
                        d = d.min((l[i] - l[k]).norm() / scale);
                    }
                }
            }
        }
    }
    d
}

fn derivative_consistency(fx: &Fixture) -> Outcome {
    let rho = &fx.sys.rho;
    let params = &fx.sys.params;
    let cut = &fx.cut;
    let pairs = cross(rho, cut);
    let mut rng = ChaCha8Rng::seed_from_u64(505);
    let mut worst = f64::INFINITY;
    let mut all = true;
    let mut record = |(p, ok): (f64, bool)| {
        worst = worst.min(p);
        all &= ok;
    };
    let pts = &rho.points;
    let w = &rho.weights;
    for _ in 0..3 {
        let u = random_jet(&mut rng, rho);
        let v = random_jet(&mut rng, rho);
        let m = one_form(rho, &u, cut, params).unwrap();
        record(order(m, |h| {
            let g = |t: f64| {
                pairs
                    .iter()
                    .map(|&(i, j)| {
                        w[i] * w[j]
                            * ((1.0 + t * u.scalar[i]) * lag(&moved(&pts[i], &u.dpsi[i], t), &pts[j], params)
                                - (1.0 + t * u.scalar[j]) * lag(&pts[i], &moved(&pts[j], &u.dpsi[j], t), params))
                    })
                    .sum::<f64>()
            };
            (g(h) - g(-h)) / (2.0 * h)
        }));
        let mixed = |g: &dyn Fn(f64, f64) -> f64, h: f64| (g(h, h) - g(h, -h) - g(-h, h) + g(-h, -h)) / (4.0 * h * h);
        let m = symplectic(rho, &u, &v, cut, params).unwrap();
        record(order(m, |h| {
            let g = |s: f64, t: f64| {
                pairs
                    .iter()
                    .map(|&(i, j)| {
                        let a = (1.0 + s * u.scalar[i]) * (1.0 + t * v.scalar[j])
                            * lag(&moved(&pts[i], &u.dpsi[i], s), &moved(&pts[j], &v.dpsi[j], t), params);
                        let b = (1.0 + s * u.scalar[j]) * (1.0 + t * v.scalar[i])
                            * lag(&moved(&pts[i], &v.dpsi[i], t), &moved(&pts[j], &u.dpsi[j], s), params);
                        w[i] * w[j] * (a - b)
                    })
                    .sum::<f64>()
            };
            mixed(&g, h)
        }));
        let m = sl_inner(rho, &u, &v, cut, params).unwrap();
        record(order(m, |h| {
            let g = |s: f64, t: f64| {
                pairs
                    .iter()
                    .map(|&(i, j)| {
                        let xi = pts[i].with_psi(pts[i].psi() + &u.dpsi[i] * cr(s) + &v.dpsi[i] * cr(t));
                        let yj = pts[j].with_psi(pts[j].psi() + &u.dpsi[j] * cr(s) + &v.dpsi[j] * cr(t));
                        let a = (1.0 + s * u.scalar[i]) * (1.0 + t * v.scalar[i]) * lag(&xi, &pts[j], params);
                        let b = (1.0 + s * u.scalar[j]) * (1.0 + t * v.scalar[j]) * lag(&pts[i], &yj, params);
                        w[i] * w[j] * (a - b)
                    })
                    .sum::<f64>()
            };
            mixed(&g, h)
        }));
    }

    // insertions at a few group samples, against quotients of the full sum
    let group = group_for(rho, GroupKind::Torus(2)).unwrap();
    let (rows, f) = pts[0].psi().shape();
    let past = cut.past(rho);
    let region = vec![true; rho.len()];
    let mut used = 0;
    let mut skipped = 0;
    for s in 0.. {
        if used == 3 {
            break;
        }
        let uu = haar_sample(&group, 900 + s);
        if branch_distance(fx, &uu) < 0.1 {
            skipped += 1;
            continue;
        }
        used += 1;
        let grad = gamma_gradient(&fx.setup.inter, rho, &uu, &uu, &past, &region, params).unwrap();
        let quotient = |dirs: &[CMat], h: f64| {
            let at = |t: f64| {
                let moved_pts = pts.iter().zip(dirs).map(|(p, d)| moved(p, d, t)).collect();
                gamma_nonlinear(&rho.with_points(moved_pts), &fx.map, cut, params, Some(&uu)).unwrap()
            };
            (at(h) - at(-h)) / (2.0 * h)
        };
        let real_dirs = |z: &[f64]| -> Vec<CMat> {
            (0..rho.len())
                .map(|j| {
                    CMat::from_fn(rows, f, |r, col| {
                        let k = ((j * rows + r) * f + col) * 2;
                        c(z[k], z[k + 1])
                    })
                })
                .collect()
        };
        for k in 0..fx.setup.boson_modes() {
            let z = &fx.setup.boson_dirs[k];
            let m = insertion_bosonic(&grad, z, false);
            let re: Vec<f64> = z.iter().map(|x| x.re).collect();
            let im: Vec<f64> = z.iter().map(|x| x.im).collect();
            let (dr, di) = (real_dirs(&re), real_dirs(&im));
            record(order(m.re, |h| quotient(&dr, h)));
            record(order(m.im, |h| quotient(&di, h)));
        }
        for m in 0..fx.setup.fermi_modes() {
            for l in 0..f {
                let val: C64 = insertion_fermionic(&fx.setup, &grad, m, l);
                let mut e = CVec::zeros(f);
                e[l] = cr(1.0);
                let d = fx.setup.fermi_direction(m, &e);
                let di: Vec<CMat> = d.iter().map(|x| x * Complex::i()).collect();
                // (D_d - i D_{i d}) / 2
                record(order(val.re, |h| quotient(&d, h) / 2.0));
                record(order(val.im, |h| -quotient(&di, h) / 2.0));
            }
        }
    }
    outcome(all, format!("minimum observed order {worst:.2}; {skipped} group samples near a branch point skipped"))
}

fn monte_carlo(fx: &Fixture) -> Outcome {
    let rho = &fx.sys.rho;
    let group = group_for(rho, GroupKind::Torus(2)).unwrap();
    let snap = |beta: f64, seed: u64| {
        build_snapshot(rho, &fx.map, &fx.cut, &fx.sys.params, &SnapshotSpec::plain(group.clone(), beta, SAMPLES, seed)).unwrap()
    };
    let zero = snap(0.0, SEED);
    let zero_ok = zero.z_hat == 1.0 && zero.stderr == 0.0;
    let runs: Vec<StateSnapshot> = (0..10).map(|s| snap(1.0, 1000 + s)).collect();
    let pooled = runs.iter().map(|r| r.z_hat).sum::<f64>() / runs.len() as f64;
    let worst = runs.iter().map(|r| (r.z_hat - pooled).abs() / r.stderr).fold(0.0, f64::max);
    let hot = snap(50.0, SEED);
    let hot_ok = hot.log_z.is_finite() && hot.log_stderr.is_finite();
    outcome(
        zero_ok && worst <= 4.0 && hot_ok,
        format!("beta 0: Z {} stderr {}; 10 seeds: max |Z - mean|/stderr {worst:.2}; beta 50: log Z {:.2}", zero.z_hat, zero.stderr, hot.log_z),
    )
}

fn minimizer(fx: &Fixture) -> Outcome {
    let mut ok = true;
    let mut notes = Vec::new();
    for seed in [1u64, 2, 3] {
        let opts = MinimizeOptions { seed: Some(seed), jitter: 0.05, trace_hold: TraceHold::Constant, ..Default::default() };
        let r = minimize(&fx.sys.rho, &fx.sys.params, &opts).unwrap();
        let (a, b) = (r.trace.first().unwrap(), r.trace.last().unwrap());
        let mono = r.trace.windows(2).all(|p| p[1].action <= p[0].action);
        let drift = r
            .trace
            .iter()
            .map(|row| (row.volume - a.volume).abs().max((row.trace_integral - a.trace_integral).abs()))
            .fold(0.0, f64::max);
        let ratio = b.residual / a.residual;
        ok &= mono && drift < 1e-6 && ratio <= 0.1;
        notes.push(format!("seed {seed}: S {:.3} -> {:.3}, drift {drift:.1e}, residual ratio {ratio:.1e}", a.action, b.action));
    }
    outcome(ok, notes.join("; "))
}

fn refined_reduction(fx: &Fixture) -> Outcome {
    let diag = fx.snap.as_refined_diagonal().unwrap();
    let refined = StateTable::build(&diag, &fx.setup).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(606);
    let (mb, mf) = (fx.table.boson_modes, fx.table.fermi_modes);
    let mut worst: f64 = 0.0;
    let mut tested = 0;
    while tested < 100 {
        let len = rng.random_range(0..=4);
        let mut w = random_word(&mut rng, mb, mf, len);
        w.sort_by_key(|o| match o {
            Op::BCre(_) => 0,
            Op::FCre(_) => 1,
            Op::BAnn(_) => 2,
            Op::FAnn(_) => 3,
        });
        let (cre, ann) = fermi_counts(&w);
        if cre != ann {
            continue;
        }
        tested += 1;
        let (p, r) = (prestate(&fx.table, &w).unwrap(), prestate_refined(&refined, &w).unwrap());
        worst = worst.max((p - r).norm() / (1.0 + p.norm()));
    }
    let els: Vec<Element> = (0..200).map(|_| random_element(&mut rng, mb, mf, 3, 3)).collect();
    let rep = positivity_check(&refined, &els, false).unwrap();
    outcome(worst <= 1e-10, format!("{tested} words, max defect {worst:.1e}; recorded min omega_ref(A*A) scaled {:.1e}", rep.min_scaled))
}

#[test]
fn acceptance() {
    let fx = fixture();
    let criteria: Vec<(&str, Box<dyn Fn(&Fixture) -> Outcome>)> = vec![
        ("positivity", Box::new(positivity)),
        ("superselection", Box::new(superselection)),
        ("antisymmetry", Box::new(antisymmetry)),
        ("ccr_car", Box::new(ccr_car)),
        ("conservation", Box::new(conservation)),
        ("isospectrality", Box::new(|_| isospectrality())),
        ("complex_structure", Box::new(complex_structure_check)),
        ("reconstruction", Box::new(reconstruction)),
        ("derivative_consistency", Box::new(derivative_consistency)),
        ("monte_carlo", Box::new(monte_carlo)),
        ("minimizer", Box::new(minimizer)),
        ("refined_reduction", Box::new(refined_reduction)),
    ];
    let mut failed = Vec::new();
    for (k, (name, run)) in criteria.iter().enumerate() {
        let o = run(&fx);
        println!("{:>2} {:<24} {}  {}", k + 1, name, if o.passed { "PASS" } else { "FAIL" }, o.detail);
        if !o.passed {
            failed.push(*name);
        }
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
