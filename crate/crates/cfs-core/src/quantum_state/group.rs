use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{CfsError, Result};
use crate::linalg::{c, cr, CMat};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum GroupKind {
    /// Full unitary group on the embedded coordinates.
    FullUnitary(usize),
    /// Independent phases on the first `k` embedded coordinates.
    Torus(usize),
    Trivial,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroupSpec {
    pub kind: GroupKind,
    /// Coordinates of `H` on which the group acts.
    pub embed: Vec<usize>,
    pub f: usize,
}

impl GroupSpec {
    /// Group acting on the first `f_fermi` coordinates of a space of dimension `f`.
    pub fn on_fermi(kind: GroupKind, f: usize, f_fermi: usize) -> Result<Self> {
        let g = Self { kind, embed: (0..f_fermi).collect(), f };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        if self.embed.iter().any(|&k| k >= self.f) {
            return Err(CfsError::Invalid("group embedding outside the Hilbert space".into()));
        }
        let mut sorted = self.embed.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != self.embed.len() {
            return Err(CfsError::Invalid("group embedding repeats a coordinate".into()));
        }
        let need = match self.kind {
            GroupKind::FullUnitary(m) | GroupKind::Torus(m) => m,
            GroupKind::Trivial => 0,
        };
        if need > self.embed.len() {
            return Err(CfsError::Invalid(format!("group needs {need} coordinates, {} embedded", self.embed.len())));
        }
        Ok(())
    }
}

fn gaussian(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

/// Haar unitary on `C^m`: QR of a complex Gaussian matrix with the phases of
/// the triangular diagonal moved into `Q`.
pub fn haar_unitary(m: usize, rng: &mut ChaCha8Rng) -> CMat {
    let z = CMat::from_fn(m, m, |_, _| c(gaussian(rng), gaussian(rng)) / cr(std::f64::consts::SQRT_2));
    let qr = z.qr();
    let mut q = qr.q();
    let r = qr.r();
    for k in 0..m {
        let d = r[(k, k)];
        let ph = if d.norm() > 0.0 { d / cr(d.norm()) } else { cr(1.0) };
        let mut col = q.column_mut(k);
        col *= ph;
    }
    q
}

/// One sample from the normalized Haar measure of the group, extended by
/// the identity.
pub fn haar_sample_rng(group: &GroupSpec, rng: &mut ChaCha8Rng) -> CMat {
    let mut u = CMat::identity(group.f, group.f);
    match group.kind {
        GroupKind::Trivial => {}
        GroupKind::Torus(k) => {
            for &idx in group.embed.iter().take(k) {
                let th: f64 = rng.random::<f64>() * std::f64::consts::TAU;
                u[(idx, idx)] = c(th.cos(), th.sin());
            }
        }
        GroupKind::FullUnitary(m) => {
            let v = haar_unitary(m, rng);
            for a in 0..m {
                for b in 0..m {
                    u[(group.embed[a], group.embed[b])] = v[(a, b)];
                }
            }
        }
    }
    u
}

pub fn haar_sample(group: &GroupSpec, seed: u64) -> CMat {
    haar_sample_rng(group, &mut ChaCha8Rng::seed_from_u64(seed))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::unitarity_defect;

    #[test]
    fn trivial_is_identity() {
        let g = GroupSpec::on_fermi(GroupKind::Trivial, 4, 2).unwrap();
        assert_eq!(haar_sample(&g, 5), CMat::identity(4, 4));
    }

    #[test]
    fn unitary_and_identity_off_the_embedding() {
        let g = GroupSpec::on_fermi(GroupKind::FullUnitary(2), 4, 2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..20 {
            let u = haar_sample_rng(&g, &mut rng);
            assert!(unitarity_defect(&u) < 1e-12);
            assert_eq!(u[(3, 3)], cr(1.0));
            assert_eq!(u[(0, 3)], cr(0.0));
        }
        assert_eq!(haar_sample(&g, 9), haar_sample(&g, 9));
    }

    #[test]
    fn monte_carlo_means_vanish() {
        let t = GroupSpec::on_fermi(GroupKind::Torus(1), 2, 1).unwrap();
        let u = GroupSpec::on_fermi(GroupKind::FullUnitary(2), 2, 2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let (mut mt, mut mu) = (cr(0.0), cr(0.0));
        let n = 10_000;
        for _ in 0..n {
            mt += haar_sample_rng(&t, &mut rng)[(0, 0)];
            mu += haar_sample_rng(&u, &mut rng)[(0, 0)];
        }
        assert!((mt / cr(n as f64)).norm() < 0.05);
        assert!((mu / cr(n as f64)).norm() < 0.05);
    }

    #[test]
    fn rejects_bad_embedding() {
        assert!(GroupSpec::on_fermi(GroupKind::Torus(3), 4, 2).is_err());
        let g = GroupSpec { kind: GroupKind::Trivial, embed: vec![0, 0], f: 2 };
        assert!(g.validate().is_err());
    }
}
