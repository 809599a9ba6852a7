//! Discrete measures: weighted, time-labelled point sets together with the
//! index-wise interaction map and region masks.

use crate::error::{CfsError, Result};
use crate::linalg::{self, CMat};
use crate::operator_core::{lagrangian, HilbertSpec, LagrangianParams, SpacetimePoint};

#[derive(Clone, Debug, PartialEq)]
pub struct DiscreteMeasure {
    pub points: Vec<SpacetimePoint>,
    pub weights: Vec<f64>,
    pub times: Vec<f64>,
    pub spec: HilbertSpec,
}

impl DiscreteMeasure {
    pub fn new(points: Vec<SpacetimePoint>, weights: Vec<f64>, times: Vec<f64>, spec: HilbertSpec) -> Result<Self> {
        spec.validate()?;
        if points.len() != weights.len() || points.len() != times.len() {
            return Err(CfsError::Dimension(format!(
                "{} points, {} weights, {} times",
                points.len(),
                weights.len(),
                times.len()
            )));
        }
        if points.is_empty() {
            return Err(CfsError::Invalid("measure without points".into()));
        }
        for (i, p) in points.iter().enumerate() {
            if p.n() != spec.n || p.f() != spec.f {
                return Err(CfsError::Dimension(format!(
                    "point {i} has shape {}x{}, expected {}x{}",
                    2 * p.n(),
                    p.f(),
                    2 * spec.n,
                    spec.f
                )));
            }
        }
        if let Some(w) = weights.iter().find(|w| !(**w > 0.0) || !w.is_finite()) {
            return Err(CfsError::Invalid(format!("weight {w} is not strictly positive")));
        }
        if times.iter().any(|t| !t.is_finite()) {
            return Err(CfsError::Invalid("non-finite time label".into()));
        }
        Ok(Self { points, weights, times, spec })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn volume(&self) -> f64 {
        self.weights.iter().sum()
    }

    /// Membership of the past set `{i : t_i <= t}`.
    pub fn past(&self, t: f64) -> Vec<bool> {
        self.times.iter().map(|&ti| ti <= t).collect()
    }

    pub fn with_points(&self, points: Vec<SpacetimePoint>) -> DiscreteMeasure {
        DiscreteMeasure { points, ..self.clone() }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct InteractionMap {
    pub target: Vec<SpacetimePoint>,
    pub fweight: Vec<f64>,
}

impl InteractionMap {
    pub fn identity(rho: &DiscreteMeasure) -> Self {
        Self { target: rho.points.clone(), fweight: vec![1.0; rho.len()] }
    }

    pub fn validate(&self, rho: &DiscreteMeasure) -> Result<()> {
        if self.target.len() != rho.len() || self.fweight.len() != rho.len() {
            return Err(CfsError::Dimension(format!(
                "map has {} targets and {} weights for {} points",
                self.target.len(),
                self.fweight.len(),
                rho.len()
            )));
        }
        if self.fweight.iter().any(|w| !(*w > 0.0)) {
            return Err(CfsError::Invalid("map weight must be positive".into()));
        }
        for t in &self.target {
            if t.psi().shape() != rho.points[0].psi().shape() {
                return Err(CfsError::Dimension("map target of wrong shape".into()));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RegionMask {
    pub member: Vec<bool>,
}

impl RegionMask {
    pub fn all(len: usize) -> Self {
        Self { member: vec![true; len] }
    }
}

pub fn push_forward(rho: &DiscreteMeasure, map: &InteractionMap) -> Result<DiscreteMeasure> {
    map.validate(rho)?;
    let weights = rho.weights.iter().zip(&map.fweight).map(|(r, f)| r * f).collect();
    DiscreteMeasure::new(map.target.clone(), weights, rho.times.clone(), rho.spec)
}

pub fn check_unitary(u: &CMat, f: usize) -> Result<()> {
    if u.nrows() != f || u.ncols() != f {
        return Err(CfsError::Dimension(format!("unitary is {}x{}, expected {f}x{f}", u.nrows(), u.ncols())));
    }
    let d = linalg::unitarity_defect(u);
    if d > 1e-10 {
        return Err(CfsError::NotUnitary(d));
    }
    Ok(())
}

pub fn unitary_transform(rho: &DiscreteMeasure, u: &CMat) -> Result<DiscreteMeasure> {
    check_unitary(u, rho.spec.f)?;
    Ok(rho.with_points(rho.points.iter().map(|p| p.transformed(u)).collect()))
}

/// Correlation measures `nu_i = rho_i sum_j L(x_i, x~_j) rho~_j` and the
/// symmetric counterpart for the second measure.
pub fn correlation_measure(
    rho: &DiscreteMeasure,
    rhotil: &DiscreteMeasure,
    params: &LagrangianParams,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut lmat = vec![vec![0.0; rhotil.len()]; rho.len()];
    for (i, x) in rho.points.iter().enumerate() {
        for (j, y) in rhotil.points.iter().enumerate() {
            lmat[i][j] = lagrangian(x, y, params)?;
        }
    }
    let nu = (0..rho.len())
        .map(|i| rho.weights[i] * (0..rhotil.len()).map(|j| lmat[i][j] * rhotil.weights[j]).sum::<f64>())
        .collect();
    let nutil = (0..rhotil.len())
        .map(|j| rhotil.weights[j] * (0..rho.len()).map(|i| lmat[i][j] * rho.weights[i]).sum::<f64>())
        .collect();
    Ok((nu, nutil))
}
