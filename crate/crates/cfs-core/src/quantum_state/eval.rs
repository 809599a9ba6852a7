use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use super::algebra::{Element, Op, Word};
use super::insertions::{SampleInsertions, StateTable};
use super::setup::FieldSetup;
use super::snapshot::StateSnapshot;
use crate::error::{CfsError, Result};
use crate::linalg::{c, cr, det, CMat, C64};

/// Whether the word is in the order `a^dagger Psi^dagger a Psi`.
pub fn is_canonical(w: &[Op]) -> bool {
    let rank = |o: &Op| match o {
        Op::BCre(_) => 0,
        Op::FCre(_) => 1,
        Op::BAnn(_) => 2,
        Op::FAnn(_) => 3,
    };
    w.windows(2).all(|p| rank(&p[0]) <= rank(&p[1]))
}

/// Fermionic factor `(-1)^{r(r-1)/2} det[<phi'_j | pi phi_i>]` of the
/// creation list `cre` and annihilation list `ann`.
pub fn fermionic_factor(pi: &CMat, cre: &[usize], ann: &[usize]) -> C64 {
    if cre.len() != ann.len() {
        return cr(0.0);
    }
    let r = cre.len();
    let m = CMat::from_fn(r, r, |i, j| pi[(ann[j], cre[i])]);
    let sign = if (r * r.saturating_sub(1) / 2) % 2 == 0 { 1.0 } else { -1.0 };
    det(&m) * sign
}

/// Integrand of a canonical word at one sample.
pub fn eval_sample(s: &SampleInsertions, w: &[Op]) -> C64 {
    let mut bos = cr(1.0);
    let mut cre = Vec::new();
    let mut ann = Vec::new();
    for o in w {
        match *o {
            Op::BCre(k) => bos *= s.boson_c[k],
            Op::BAnn(k) => bos *= s.boson_a[k],
            Op::FCre(k) => cre.push(k),
            Op::FAnn(k) => ann.push(k),
        }
    }
    if cre.len() != ann.len() {
        return cr(0.0);
    }
    bos * fermionic_factor(&s.pi, &cre, &ann)
}

fn check_word(table: &StateTable, w: &[Op]) -> Result<()> {
    if !is_canonical(w) {
        return Err(CfsError::Word(format!("'{}' is not in canonical order", super::algebra::word_to_string(w))));
    }
    Element::word(w.to_vec()).validate(table.boson_modes, table.fermi_modes)
}

fn weighted(table: &StateTable, f: impl Fn(&SampleInsertions) -> C64 + Sync + Send) -> C64 {
    let vals: Vec<C64> = table.samples.par_iter().map(f).collect();
    vals.iter().zip(&table.weights).map(|(v, w)| v * *w).sum()
}

/// Pre-state on a canonical word.
pub fn prestate(table: &StateTable, w: &[Op]) -> Result<C64> {
    check_word(table, w)?;
    if w.iter().filter(|o| matches!(o, Op::FCre(_))).count() != w.iter().filter(|o| matches!(o, Op::FAnn(_))).count() {
        return Ok(cr(0.0));
    }
    Ok(weighted(table, |s| eval_sample(s, w)))
}

/// Refined pre-state; the table must be built from a paired snapshot.
pub fn prestate_refined(table: &StateTable, w: &[Op]) -> Result<C64> {
    if !table.refined {
        return Err(CfsError::Invalid("refined evaluation needs a paired snapshot".into()));
    }
    prestate(table, w)
}

/// Per-sample integrands of an arbitrary element.
pub fn sample_values(table: &StateTable, a: &Element) -> Result<Vec<C64>> {
    a.validate(table.boson_modes, table.fermi_modes)?;
    let no = a.normal_ordered();
    Ok(table
        .samples
        .par_iter()
        .map(|s| no.terms.iter().map(|(k, w)| k * eval_sample(s, w)).sum())
        .collect())
}

/// Per-sample sum of the moduli of the normal-ordered terms, the rounding
/// scale of the integrand.
fn sample_magnitudes(table: &StateTable, a: &Element) -> Vec<f64> {
    let no = a.normal_ordered();
    table.samples.par_iter().map(|s| no.terms.iter().map(|(k, w)| k.norm() * eval_sample(s, w).norm()).sum()).collect()
}

/// State on an arbitrary element, by normal ordering and linearity.
pub fn state_eval(table: &StateTable, a: &Element) -> Result<C64> {
    let vals = sample_values(table, a)?;
    Ok(vals.iter().zip(&table.weights).map(|(v, w)| v * *w).sum())
}

/// Localized state: the snapshot carries the region and `alpha`.
pub fn state_localized(snapshot: &StateSnapshot, setup: &FieldSetup, a: &Element) -> Result<C64> {
    if snapshot.region.is_none() && snapshot.alpha != 0.0 {
        return Err(CfsError::Invalid("localized weights need a region".into()));
    }
    let table = StateTable::build(snapshot, setup)?;
    state_eval(&table, a)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PositivityEntry {
    pub element: String,
    pub value_re: f64,
    pub value_im: f64,
    pub scale: f64,
    /// Smallest per-sample integrand relative to the sum of its term moduli.
    pub min_sample: f64,
    pub passed: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PositivityReport {
    pub entries: Vec<PositivityEntry>,
    /// Smallest `Re omega(A^* A) / scale`.
    pub min_scaled: f64,
    /// Largest `|Im omega(A^* A)| / scale`.
    pub max_imag_scaled: f64,
    /// Smallest per-sample integrand over all elements and samples.
    pub min_sample: f64,
    pub passed: bool,
}

pub const POSITIVITY_TOL: f64 = 1e-9;

fn element_label(a: &Element) -> String {
    a.terms
        .iter()
        .map(|(k, w)| format!("({:.3},{:.3})*{}", k.re, k.im, super::algebra::word_to_string(w)))
        .collect::<Vec<_>>()
        .join(" ; ")
}

/// Evaluates `omega(A^* A)` for each element; `enforce` selects whether the
/// sign conditions decide `passed` (the refined state is only recorded).
pub fn positivity_check(table: &StateTable, elements: &[Element], enforce: bool) -> Result<PositivityReport> {
    let mut entries = Vec::new();
    for a in elements {
        let aa = a.star_square();
        let vals = sample_values(table, &aa)?;
        let value: C64 = vals.iter().zip(&table.weights).map(|(v, w)| v * *w).sum();
        let scale = vals.iter().zip(&table.weights).map(|(v, w)| v.norm() * w).sum::<f64>().max(1.0);
        let mags = sample_magnitudes(table, &aa);
        let min_sample = vals.iter().zip(&mags).map(|(v, m)| v.re / m.max(1.0)).fold(f64::INFINITY, f64::min);
        let passed = !enforce
            || (value.im.abs() <= POSITIVITY_TOL * scale
                && value.re >= -POSITIVITY_TOL * scale
                && min_sample >= -POSITIVITY_TOL);
        entries.push(PositivityEntry { element: element_label(a), value_re: value.re, value_im: value.im, scale, min_sample, passed });
    }
    let min_scaled = entries.iter().map(|e| e.value_re / e.scale).fold(f64::INFINITY, f64::min);
    let max_imag_scaled = entries.iter().map(|e| e.value_im.abs() / e.scale).fold(0.0, f64::max);
    let min_sample = entries.iter().map(|e| e.min_sample).fold(f64::INFINITY, f64::min);
    let passed = entries.iter().all(|e| e.passed);
    Ok(PositivityReport { entries, min_scaled, max_imag_scaled, min_sample, passed })
}

/// Random operator over the given modes.
pub fn random_op<R: Rng>(rng: &mut R, bosons: usize, fermions: usize) -> Op {
    let kinds: Vec<u8> = (0..4).filter(|k| if *k < 2 { bosons > 0 } else { fermions > 0 }).collect();
    match kinds[rng.random_range(0..kinds.len())] {
        0 => Op::BCre(rng.random_range(0..bosons)),
        1 => Op::BAnn(rng.random_range(0..bosons)),
        2 => Op::FCre(rng.random_range(0..fermions)),
        _ => Op::FAnn(rng.random_range(0..fermions)),
    }
}

pub fn random_word<R: Rng>(rng: &mut R, bosons: usize, fermions: usize, len: usize) -> Word {
    (0..len).map(|_| random_op(rng, bosons, fermions)).collect()
}

/// Random element with up to `terms` words of length at most `max_degree`.
pub fn random_element<R: Rng>(rng: &mut R, bosons: usize, fermions: usize, max_degree: usize, terms: usize) -> Element {
    let count = rng.random_range(1..=terms.max(1));
    let mut terms_out = Vec::new();
    for _ in 0..count {
        let len = rng.random_range(0..=max_degree);
        let k = c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
        terms_out.push((k, random_word(rng, bosons, fermions, len)));
    }
    Element { terms: terms_out }
}
