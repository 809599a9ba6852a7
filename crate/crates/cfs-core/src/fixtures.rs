//! Reference systems: the two-point system `fixA`, the seeded four-point
//! system `fixB` and a parameterised random generator.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{CfsError, Result};
use crate::linalg::{c, cr, CMat};
use crate::operator_core::{diag_op, HilbertSpec, LagrangianParams, SpacetimePoint};
use crate::system_measure::{DiscreteMeasure, InteractionMap, RegionMask};

/// A measure together with the optional interacting data used by the
/// nonlinear surface layer integrals.
#[derive(Clone, Debug, PartialEq)]
pub struct System {
    pub rho: DiscreteMeasure,
    pub params: LagrangianParams,
    pub map: Option<InteractionMap>,
    pub region: Option<RegionMask>,
}

pub const FIX_B_SEED: u64 = 0x5eed_b;

pub fn fix_a() -> System {
    let p1 = SpacetimePoint::from_operator(&diag_op(&[2.0, -1.0]), 1, 1e-12).expect("regular");
    let x = CMat::from_row_slice(2, 2, &[cr(0.0), cr(1.0), cr(1.0), cr(0.0)]);
    let p2 = SpacetimePoint::from_operator(&x, 1, 1e-12).expect("regular");
    let rho = DiscreteMeasure::new(
        vec![p1, p2],
        vec![1.0, 1.0],
        vec![0.0, 1.0],
        HilbertSpec { f: 2, n: 1, f_fermi: 1 },
    )
    .expect("valid fixture");
    System { rho, params: LagrangianParams::default(), map: None, region: None }
}

fn gaussian(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> CMat {
    CMat::from_fn(rows, cols, |_, _| {
        let a: f64 = StandardNormal.sample(rng);
        let b: f64 = StandardNormal.sample(rng);
        c(a, b) * std::f64::consts::FRAC_1_SQRT_2
    })
}

/// Random regular point with local trace `trace` (of either sign).
pub fn random_point(rng: &mut ChaCha8Rng, n: usize, f: usize, trace: f64) -> SpacetimePoint {
    loop {
        let psi = gaussian(rng, 2 * n, f);
        let p = SpacetimePoint::new(psi).expect("shape");
        let t = p.trace();
        if t.abs() < 1e-3 || t.signum() != trace.signum() || !p.is_regular(1e-10) {
            continue;
        }
        return p.with_psi(p.psi() * cr((trace / t).sqrt()));
    }
}

/// Options of the random generator.
#[derive(Clone, Debug, PartialEq)]
pub struct RandomSpec {
    pub points: usize,
    pub f: usize,
    pub n: usize,
    pub f_fermi: usize,
    pub with_map: bool,
    /// Size of the perturbation producing the interacting targets.
    pub map_noise: f64,
}

impl Default for RandomSpec {
    fn default() -> Self {
        Self { points: 4, f: 4, n: 1, f_fermi: 2, with_map: true, map_noise: 0.15 }
    }
}

pub fn random_system(spec: &RandomSpec, params: LagrangianParams, seed: u64) -> Result<System> {
    if spec.points == 0 {
        return Err(CfsError::Invalid("random system needs at least one point".into()));
    }
    let hs = HilbertSpec::new(spec.f, spec.n, spec.f_fermi)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let points: Vec<SpacetimePoint> = (0..spec.points).map(|_| random_point(&mut rng, spec.n, spec.f, params.c)).collect();
    let times = (0..spec.points).map(|i| i as f64).collect();
    let rho = DiscreteMeasure::new(points, vec![1.0; spec.points], times, hs)?;
    let map = if spec.with_map {
        let target = rho
            .points
            .iter()
            .map(|p| {
                let q = p.with_psi(p.psi() + gaussian(&mut rng, 2 * spec.n, spec.f) * cr(spec.map_noise));
                q.with_psi(q.psi() * cr((params.c / q.trace()).abs().sqrt()))
            })
            .collect();
        Some(InteractionMap { target, fweight: vec![1.0; spec.points] })
    } else {
        None
    };
    let region = Some(RegionMask { member: (0..spec.points).map(|i| i % 4 != 2).collect() });
    Ok(System { rho, params, map, region })
}

/// Default parameters of the seeded four-point system.
pub fn fix_b_params() -> LagrangianParams {
    LagrangianParams { kappa: 0.05, c: 1.0, ..LagrangianParams::default() }
}

pub fn fix_b() -> System {
    random_system(&RandomSpec::default(), fix_b_params(), FIX_B_SEED).expect("valid fixture")
}
