use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::group::{haar_sample_rng, GroupSpec};
use crate::error::{CfsError, Result};
use crate::linalg::{c, CMat};
use crate::operator_core::LagrangianParams;
use crate::surface_layer::{gamma_frames, t_functional_frames, vac_frames, CutSpec, Interacting};
use crate::system_measure::{DiscreteMeasure, InteractionMap};

pub const SNAPSHOT_FORMAT: u32 = 1;

/// Complex matrix as rows of `[re, im]` pairs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MatrixDoc(pub Vec<Vec<[f64; 2]>>);

impl MatrixDoc {
    pub fn from_matrix(m: &CMat) -> Self {
        Self((0..m.nrows()).map(|r| (0..m.ncols()).map(|k| [m[(r, k)].re, m[(r, k)].im]).collect()).collect())
    }

    pub fn to_matrix(&self) -> Result<CMat> {
        let rows = self.0.len();
        let cols = self.0.first().map(|r| r.len()).unwrap_or(0);
        if self.0.iter().any(|r| r.len() != cols) {
            return Err(CfsError::Invalid("ragged matrix".into()));
        }
        Ok(CMat::from_fn(rows, cols, |r, k| c(self.0[r][k][0], self.0[r][k][1])))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum SampleMode {
    /// One unitary per sample.
    Plain,
    /// Independent pairs `(U_lt, U_gt)`.
    Refined,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SamplePair {
    pub ult: MatrixDoc,
    pub ugt: MatrixDoc,
}

/// Frozen Haar sample set with the surface layer values, shared by the
/// partition function, every insertion and every word.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StateSnapshot {
    pub format_version: u32,
    pub seed: u64,
    pub sample_count: usize,
    pub beta: f64,
    pub alpha: f64,
    pub mode: SampleMode,
    pub cut_time: f64,
    pub region: Option<Vec<bool>>,
    pub group: GroupSpec,
    pub samples: Vec<SamplePair>,
    /// `gamma^t(rho~, T rho)` per sample (localized when a region is set).
    pub gammas: Vec<f64>,
    /// Localized functional of squared spectral weights per sample.
    pub tvalues: Vec<f64>,
    pub logweights: Vec<f64>,
    pub log_z: f64,
    /// `exp(log_z)`; stored as text when it overflows.
    #[serde(with = "nonfinite_as_text")]
    pub z_hat: f64,
    #[serde(with = "nonfinite_as_text")]
    pub stderr: f64,
    #[serde(with = "nonfinite_as_text")]
    pub log_stderr: f64,
}

mod nonfinite_as_text {
    use serde::{Deserialize, Deserializer, Serializer};

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Num(f64),
        Text(String),
    }

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else {
            s.serialize_str(&v.to_string())
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        match Repr::deserialize(d)? {
            Repr::Num(x) => Ok(x),
            Repr::Text(t) => t.parse().map_err(serde::de::Error::custom),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PartitionEstimate {
    pub z_hat: f64,
    pub log_z: f64,
    pub stderr: f64,
    /// Natural logarithm of the standard error, finite even when `stderr` overflows.
    pub log_stderr: f64,
}

/// `log mean exp`, the sample standard error and their logarithms.
pub fn estimate(logweights: &[f64]) -> PartitionEstimate {
    let n = logweights.len() as f64;
    let m = logweights.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let scaled: Vec<f64> = logweights.iter().map(|l| (l - m).exp()).collect();
    let mean = scaled.iter().sum::<f64>() / n;
    let log_z = m + mean.ln();
    let var = if logweights.len() > 1 {
        scaled.iter().map(|w| (w - mean) * (w - mean)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    let log_stderr = if var > 0.0 { m + 0.5 * (var / n).ln() } else { f64::NEG_INFINITY };
    PartitionEstimate { z_hat: log_z.exp(), log_z, stderr: log_stderr.exp(), log_stderr }
}

/// Inputs shared by every sample evaluation.
#[derive(Clone, Debug)]
pub struct SampleContext<'a> {
    pub rho: &'a DiscreteMeasure,
    pub inter: Interacting,
    pub params: &'a LagrangianParams,
    pub omega: Vec<bool>,
    pub region: Vec<bool>,
}

impl<'a> SampleContext<'a> {
    pub fn new(rho: &'a DiscreteMeasure, map: &InteractionMap, cut: &CutSpec, params: &'a LagrangianParams) -> Result<Self> {
        let region = match &cut.region {
            Some(r) if r.member.len() == rho.len() => r.member.clone(),
            Some(_) => return Err(CfsError::Dimension("region mask does not match the measure".into())),
            None => vec![true; rho.len()],
        };
        Ok(Self { rho, inter: Interacting::new(rho, map)?, params, omega: cut.past(rho), region })
    }

    pub fn gamma(&self, ult: &CMat, ugt: &CMat) -> Result<f64> {
        let vac = vac_frames(self.rho, ult, ugt);
        gamma_frames(&self.inter, &vac, &self.rho.weights, &self.omega, &self.region, self.params)
    }

    pub fn tvalue(&self, ult: &CMat, ugt: &CMat) -> Result<f64> {
        let vac = vac_frames(self.rho, ult, ugt);
        t_functional_frames(&self.inter, &vac, &self.rho.weights, &self.omega, &self.region, self.params)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SnapshotSpec {
    pub beta: f64,
    pub alpha: f64,
    pub samples: usize,
    pub seed: u64,
    pub group: GroupSpec,
    pub mode: SampleMode,
}

impl SnapshotSpec {
    pub fn plain(group: GroupSpec, beta: f64, samples: usize, seed: u64) -> Self {
        Self { beta, alpha: 0.0, samples, seed, group, mode: SampleMode::Plain }
    }
}

/// Draws the samples and evaluates the weights `exp(alpha T + beta gamma)`.
pub fn build_snapshot(
    rho: &DiscreteMeasure,
    map: &InteractionMap,
    cut: &CutSpec,
    params: &LagrangianParams,
    spec: &SnapshotSpec,
) -> Result<StateSnapshot> {
    if spec.samples == 0 {
        return Err(CfsError::Invalid("sample count must be positive".into()));
    }
    spec.group.validate()?;
    if spec.group.f != rho.spec.f {
        return Err(CfsError::Dimension("group dimension differs from the Hilbert space".into()));
    }
    let ctx = SampleContext::new(rho, map, cut, params)?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let pairs: Vec<(CMat, CMat)> = (0..spec.samples)
        .map(|_| {
            let a = haar_sample_rng(&spec.group, &mut rng);
            match spec.mode {
                SampleMode::Plain => (a.clone(), a),
                SampleMode::Refined => {
                    let b = haar_sample_rng(&spec.group, &mut rng);
                    (a, b)
                }
            }
        })
        .collect();
    let localized = cut.region.is_some() || spec.alpha != 0.0;
    let values: Result<Vec<(f64, f64)>> = pairs
        .par_iter()
        .map(|(ult, ugt)| {
            let g = ctx.gamma(ult, ugt)?;
            let t = if localized { ctx.tvalue(ult, ugt)? } else { 0.0 };
            Ok((g, t))
        })
        .collect();
    let values = values?;
    let gammas: Vec<f64> = values.iter().map(|v| v.0).collect();
    let tvalues: Vec<f64> = values.iter().map(|v| v.1).collect();
    let logweights = logweights_for(&gammas, &tvalues, spec.beta, spec.alpha);
    if logweights.iter().any(|w| !w.is_finite()) {
        return Err(CfsError::Invalid("non-finite sample weight".into()));
    }
    let est = estimate(&logweights);
    Ok(StateSnapshot {
        format_version: SNAPSHOT_FORMAT,
        seed: spec.seed,
        sample_count: spec.samples,
        beta: spec.beta,
        alpha: spec.alpha,
        mode: spec.mode,
        cut_time: cut.t,
        region: cut.region.as_ref().map(|r| r.member.clone()),
        group: spec.group.clone(),
        samples: pairs
            .iter()
            .map(|(a, b)| SamplePair { ult: MatrixDoc::from_matrix(a), ugt: MatrixDoc::from_matrix(b) })
            .collect(),
        gammas,
        tvalues,
        logweights,
        log_z: est.log_z,
        z_hat: est.z_hat,
        stderr: est.stderr,
        log_stderr: est.log_stderr,
    })
}

pub fn logweights_for(gammas: &[f64], tvalues: &[f64], beta: f64, alpha: f64) -> Vec<f64> {
    gammas
        .iter()
        .zip(tvalues)
        .map(|(g, t)| {
            let a = if alpha != 0.0 { alpha * t } else { 0.0 };
            let b = if beta != 0.0 { beta * g } else { 0.0 };
            a + b
        })
        .collect()
}

impl StateSnapshot {
    pub fn cut(&self) -> CutSpec {
        CutSpec { t: self.cut_time, region: self.region.clone().map(|member| crate::system_measure::RegionMask { member }) }
    }

    pub fn pairs(&self) -> Result<Vec<(CMat, CMat)>> {
        self.samples.iter().map(|p| Ok((p.ult.to_matrix()?, p.ugt.to_matrix()?))).collect()
    }

    /// Same samples with new `beta` and `alpha`.
    pub fn reweighted(&self, beta: f64, alpha: f64) -> StateSnapshot {
        let logweights = logweights_for(&self.gammas, &self.tvalues, beta, alpha);
        let est = estimate(&logweights);
        StateSnapshot { beta, alpha, logweights, log_z: est.log_z, z_hat: est.z_hat, stderr: est.stderr, log_stderr: est.log_stderr, ..self.clone() }
    }

    /// Refined snapshot whose pairs have `U_lt = U_gt = U` for every sample.
    /// The same samples read as pairs with `U_lt = U_gt`.
    pub fn as_refined_diagonal(&self) -> Result<StateSnapshot> {
        if self.mode != SampleMode::Plain {
            return Err(CfsError::Invalid("diagonal pairs need a plain snapshot".into()));
        }
        Ok(StateSnapshot { mode: SampleMode::Refined, ..self.clone() })
    }

    pub fn estimate(&self) -> PartitionEstimate {
        estimate(&self.logweights)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let snap: StateSnapshot = serde_json::from_str(s)?;
        if snap.format_version != SNAPSHOT_FORMAT {
            return Err(CfsError::Invalid(format!("unsupported snapshot format {}", snap.format_version)));
        }
        if snap.samples.len() != snap.sample_count || snap.logweights.len() != snap.sample_count {
            return Err(CfsError::Invalid("snapshot sample count mismatch".into()));
        }
        Ok(snap)
    }
}

/// Monte Carlo estimate of the partition function with the snapshot that
/// produced it.
pub fn partition_function(
    rho: &DiscreteMeasure,
    map: &InteractionMap,
    cut: &CutSpec,
    params: &LagrangianParams,
    beta: f64,
    group: &GroupSpec,
    samples: usize,
    seed: u64,
) -> Result<(PartitionEstimate, StateSnapshot)> {
    let snap = build_snapshot(rho, map, cut, params, &SnapshotSpec::plain(group.clone(), beta, samples, seed))?;
    Ok((snap.estimate(), snap))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::fix_b;
    use crate::quantum_state::group::GroupKind;

    #[test]
    fn beta_zero_and_identity_map() {
        let s = fix_b();
        let g = GroupSpec::on_fermi(GroupKind::Torus(2), 4, 2).unwrap();
        let cut = CutSpec::at(1.5);
        let (z, _) = partition_function(&s.rho, s.map.as_ref().unwrap(), &cut, &s.params, 0.0, &g, 64, 1).unwrap();
        assert_eq!(z.z_hat, 1.0);
        assert_eq!(z.stderr, 0.0);
        let id = InteractionMap::identity(&s.rho);
        let tr = GroupSpec::on_fermi(GroupKind::Trivial, 4, 2).unwrap();
        let (z, _) = partition_function(&s.rho, &id, &cut, &s.params, 1.0, &tr, 16, 1).unwrap();
        assert!((z.z_hat - 1.0).abs() < 1e-12);
    }

    #[test]
    fn large_beta_stays_finite_and_json_roundtrip() {
        let s = fix_b();
        let g = GroupSpec::on_fermi(GroupKind::Torus(2), 4, 2).unwrap();
        let (z, snap) = partition_function(&s.rho, s.map.as_ref().unwrap(), &CutSpec::at(1.5), &s.params, 50.0, &g, 64, 3).unwrap();
        assert!(z.log_z.is_finite() && z.log_stderr.is_finite());
        let back = StateSnapshot::from_json(&snap.to_json().unwrap()).unwrap();
        assert_eq!(back, snap);
        let r = snap.reweighted(1.0, 0.0);
        assert_eq!(r.gammas, snap.gammas);
    }
}
