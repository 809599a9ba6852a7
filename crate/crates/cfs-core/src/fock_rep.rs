//! Truncated Fock space, the field operators as ladder operators, the GNS
//! Gram matrix and the density operator reproducing a sampled state.

use std::collections::HashMap;
use std::fmt::Write as _;

use serde::Serialize;

use crate::error::{CfsError, Result};
use crate::linalg::{cr, herm_eig, CMat, C64};
use crate::quantum_state::algebra::{Element, Op, Word};
use crate::quantum_state::eval::{prestate, state_eval};
use crate::quantum_state::insertions::StateTable;

pub const MAX_FOCK_DIM: usize = 1_000_000;
/// Largest dimension for which dense operator matrices are produced.
pub const MAX_DENSE_DIM: usize = 4096;

/// Ladder operator on a global mode (bosons first, then fermions).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum FockOp {
    Cre(usize),
    Ann(usize),
}

/// Occupation number basis of `m_b` bosonic modes with cutoff `n_max` and
/// `m_f` fermionic modes, the first `sea_modes` of which are sea modes.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FockRep {
    pub boson_modes: usize,
    pub n_max: usize,
    pub fermi_modes: usize,
    pub sea_modes: usize,
    pub dim: usize,
}

impl FockRep {
    pub fn new(boson_modes: usize, n_max: usize, fermi_modes: usize, sea_modes: usize) -> Result<Self> {
        if sea_modes > fermi_modes {
            return Err(CfsError::Invalid("more sea modes than fermionic modes".into()));
        }
        let mut dim: usize = 1;
        for _ in 0..boson_modes {
            dim = dim.checked_mul(n_max + 1).unwrap_or(usize::MAX);
        }
        for _ in 0..fermi_modes {
            dim = dim.checked_mul(2).unwrap_or(usize::MAX);
        }
        if dim > MAX_FOCK_DIM {
            return Err(CfsError::TooLarge(format!("Fock dimension {dim} exceeds {MAX_FOCK_DIM}")));
        }
        Ok(Self { boson_modes, n_max, fermi_modes, sea_modes, dim })
    }

    /// Representation matching the modes of an evaluation table.
    pub fn for_table(table: &StateTable, sea_modes: usize, n_max: usize) -> Result<Self> {
        Self::new(table.boson_modes, n_max, table.fermi_modes, sea_modes)
    }

    pub fn modes(&self) -> usize {
        self.boson_modes + self.fermi_modes
    }

    pub fn occupations(&self, mut idx: usize) -> Vec<usize> {
        let mut occ = Vec::with_capacity(self.modes());
        for _ in 0..self.boson_modes {
            occ.push(idx % (self.n_max + 1));
            idx /= self.n_max + 1;
        }
        for _ in 0..self.fermi_modes {
            occ.push(idx % 2);
            idx /= 2;
        }
        occ
    }

    pub fn index(&self, occ: &[usize]) -> usize {
        let mut idx = 0;
        let mut stride = 1;
        for (k, &o) in occ.iter().enumerate() {
            idx += o * stride;
            stride *= if k < self.boson_modes { self.n_max + 1 } else { 2 };
        }
        idx
    }

    /// Image of a basis vector under a ladder operator, `None` when it vanishes.
    pub fn apply(&self, op: FockOp, idx: usize) -> Option<(usize, f64)> {
        let mut occ = self.occupations(idx);
        let (mode, create) = match op {
            FockOp::Cre(m) => (m, true),
            FockOp::Ann(m) => (m, false),
        };
        if mode < self.boson_modes {
            let n = occ[mode];
            if create {
                if n == self.n_max {
                    return None;
                }
                occ[mode] = n + 1;
                return Some((self.index(&occ), ((n + 1) as f64).sqrt()));
            }
            if n == 0 {
                return None;
            }
            occ[mode] = n - 1;
            return Some((self.index(&occ), (n as f64).sqrt()));
        }
        let n = occ[mode];
        if (create && n == 1) || (!create && n == 0) {
            return None;
        }
        let parity = occ[self.boson_modes..mode].iter().sum::<usize>() % 2;
        occ[mode] = if create { 1 } else { 0 };
        Some((self.index(&occ), if parity == 0 { 1.0 } else { -1.0 }))
    }

    /// Ladder operator realizing a field operator: particle modes keep their
    /// role, sea modes exchange creation and annihilation.
    pub fn field_op(&self, op: Op) -> FockOp {
        let b = self.boson_modes;
        match op {
            Op::BCre(k) => FockOp::Cre(k),
            Op::BAnn(k) => FockOp::Ann(k),
            Op::FCre(m) if m < self.sea_modes => FockOp::Ann(b + m),
            Op::FCre(m) => FockOp::Cre(b + m),
            Op::FAnn(m) if m < self.sea_modes => FockOp::Cre(b + m),
            Op::FAnn(m) => FockOp::Ann(b + m),
        }
    }

    /// Field operator realized by a ladder operator.
    pub fn op_of(&self, op: FockOp) -> Op {
        let b = self.boson_modes;
        match op {
            FockOp::Cre(k) if k < b => Op::BCre(k),
            FockOp::Ann(k) if k < b => Op::BAnn(k),
            FockOp::Cre(k) if k - b < self.sea_modes => Op::FAnn(k - b),
            FockOp::Cre(k) => Op::FCre(k - b),
            FockOp::Ann(k) if k - b < self.sea_modes => Op::FCre(k - b),
            FockOp::Ann(k) => Op::FAnn(k - b),
        }
    }

    /// Applies a word of field operators, rightmost first.
    pub fn apply_word(&self, w: &[Op], idx: usize) -> Option<(usize, f64)> {
        let mut cur = (idx, 1.0);
        for &o in w.iter().rev() {
            let (j, k) = self.apply(self.field_op(o), cur.0)?;
            cur = (j, cur.1 * k);
        }
        Some(cur)
    }

    fn check_field(&self, w: &[Op]) -> Result<()> {
        Element::word(w.to_vec()).validate(self.boson_modes, self.fermi_modes)
    }

    /// Dense matrix of a word of field operators.
    pub fn matrix(&self, w: &[Op]) -> Result<CMat> {
        self.check_field(w)?;
        if self.dim > MAX_DENSE_DIM {
            return Err(CfsError::TooLarge(format!("dense matrices are limited to dimension {MAX_DENSE_DIM}")));
        }
        let mut m = CMat::zeros(self.dim, self.dim);
        for s in 0..self.dim {
            if let Some((t, k)) = self.apply_word(w, s) {
                m[(t, s)] += cr(k);
            }
        }
        Ok(m)
    }

    pub fn mode_names(&self) -> Vec<String> {
        let mut out: Vec<String> = (0..self.boson_modes).map(|k| format!("z{} boson (occupation 0..={})", k + 1, self.n_max)).collect();
        for m in 0..self.fermi_modes {
            let kind = if m < self.sea_modes { "sea" } else { "particle" };
            out.push(format!("p{} {kind}", m + 1));
        }
        out
    }

    /// States with at most `n` excitations in total.
    pub fn sector(&self, n: usize) -> Vec<usize> {
        (0..self.dim).filter(|&s| self.occupations(s).iter().sum::<usize>() <= n).collect()
    }
}

fn apply_sparse(fock: &FockRep, ops: &[Op], s: usize, sign: f64, acc: &mut HashMap<usize, f64>) {
    if let Some((t, k)) = fock.apply_word(ops, s) {
        *acc.entry(t).or_insert(0.0) += sign * k;
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FockAlgebraReport {
    /// Largest defect of `{Psi(phi_i), Psi^dagger(phi_j)} = delta_ij`.
    pub car_defect: f64,
    /// Largest defect of `{Psi, Psi} = 0` and `{Psi^dagger, Psi^dagger} = 0`.
    pub car_zero_defect: f64,
    /// Largest defect of `[a_i, a^dagger_j] = delta_ij` on states below the cutoff.
    pub ccr_defect: f64,
    /// Largest defect of the commutator on the top occupation level.
    pub ccr_top_defect: f64,
    /// Largest bosonic/fermionic commutator.
    pub mixed_defect: f64,
    /// Largest norm of `Psi^dagger(sea)|0>`, `Psi(particle)|0>` and `a|0>`.
    pub vacuum_defect: f64,
}

impl FockAlgebraReport {
    pub fn passed(&self, tol: f64) -> bool {
        self.car_defect <= tol && self.car_zero_defect <= tol && self.ccr_defect <= tol && self.mixed_defect <= tol && self.vacuum_defect <= tol
    }
}

/// Checks the (anti)commutation relations on every basis vector.
pub fn algebra_check(fock: &FockRep) -> FockAlgebraReport {
    let mut rep = FockAlgebraReport { car_defect: 0.0, car_zero_defect: 0.0, ccr_defect: 0.0, ccr_top_defect: 0.0, mixed_defect: 0.0, vacuum_defect: 0.0 };
    let defect = |acc: &HashMap<usize, f64>, s: usize, expect: f64| -> f64 {
        let mut d: f64 = 0.0;
        for (&t, &v) in acc {
            let target = if t == s { expect } else { 0.0 };
            d = d.max((v - target).abs());
        }
        if !acc.contains_key(&s) {
            d = d.max(expect.abs());
        }
        d
    };
    let (mb, mf) = (fock.boson_modes, fock.fermi_modes);
    for s in 0..fock.dim {
        let occ = fock.occupations(s);
        for i in 0..mf {
            for j in 0..mf {
                let mut acc = HashMap::new();
                apply_sparse(fock, &[Op::FAnn(i), Op::FCre(j)], s, 1.0, &mut acc);
                apply_sparse(fock, &[Op::FCre(j), Op::FAnn(i)], s, 1.0, &mut acc);
                rep.car_defect = rep.car_defect.max(defect(&acc, s, if i == j { 1.0 } else { 0.0 }));
                for pair in [[Op::FCre(i), Op::FCre(j)], [Op::FAnn(i), Op::FAnn(j)]] {
                    let mut acc = HashMap::new();
                    apply_sparse(fock, &pair, s, 1.0, &mut acc);
                    apply_sparse(fock, &[pair[1], pair[0]], s, 1.0, &mut acc);
                    rep.car_zero_defect = rep.car_zero_defect.max(defect(&acc, s, 0.0));
                }
            }
        }
        for i in 0..mb {
            for j in 0..mb {
                let mut acc = HashMap::new();
                apply_sparse(fock, &[Op::BAnn(i), Op::BCre(j)], s, 1.0, &mut acc);
                apply_sparse(fock, &[Op::BCre(j), Op::BAnn(i)], s, -1.0, &mut acc);
                let d = defect(&acc, s, if i == j { 1.0 } else { 0.0 });
                if occ[j] == fock.n_max {
                    rep.ccr_top_defect = rep.ccr_top_defect.max(d);
                } else {
                    rep.ccr_defect = rep.ccr_defect.max(d);
                }
            }
            for m in 0..mf {
                for (x, y) in [(Op::BCre(i), Op::FCre(m)), (Op::BAnn(i), Op::FCre(m)), (Op::BCre(i), Op::FAnn(m)), (Op::BAnn(i), Op::FAnn(m))] {
                    let mut acc = HashMap::new();
                    apply_sparse(fock, &[x, y], s, 1.0, &mut acc);
                    apply_sparse(fock, &[y, x], s, -1.0, &mut acc);
                    rep.mixed_defect = rep.mixed_defect.max(defect(&acc, s, 0.0));
                }
            }
        }
    }
    let mut annihilators: Vec<Op> = (0..mb).map(Op::BAnn).collect();
    annihilators.extend((0..mf).map(|m| if m < fock.sea_modes { Op::FCre(m) } else { Op::FAnn(m) }));
    for o in annihilators {
        if let Some((_, k)) = fock.apply_word(&[o], 0) {
            rep.vacuum_defect = rep.vacuum_defect.max(k.abs());
        }
    }
    rep
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GnsReport {
    pub gram: Vec<Vec<[f64; 2]>>,
    pub hermitian_defect: f64,
    pub min_eigenvalue: f64,
    pub norm: f64,
    pub passed: bool,
}

/// `G_kl = omega(A_k^* A_l)` with its Hermiticity and positivity.
pub fn gns_gram(table: &StateTable, basis: &[Element]) -> Result<(CMat, GnsReport)> {
    let k = basis.len();
    let mut g = CMat::zeros(k, k);
    for a in 0..k {
        for b in 0..k {
            g[(a, b)] = state_eval(table, &basis[a].adjoint().product(&basis[b]))?;
        }
    }
    let herm = (&g - g.adjoint()).iter().fold(0.0_f64, |m, z| m.max(z.norm()));
    let sym = (&g + g.adjoint()) * cr(0.5);
    let (vals, _) = herm_eig(&sym);
    let norm = vals.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    let min = vals.first().cloned().unwrap_or(0.0);
    let passed = herm <= 1e-9 * norm.max(1.0) && min >= -1e-8 * norm.max(1.0);
    let rows = (0..k).map(|r| (0..k).map(|c| [g[(r, c)].re, g[(r, c)].im]).collect()).collect();
    Ok((g.clone(), GnsReport { gram: rows, hermitian_defect: herm, min_eigenvalue: min, norm, passed }))
}

/// Density operator on the sector of at most `n_cut` excitations.
#[derive(Clone, Debug, PartialEq)]
pub struct DensityOperator {
    pub n_cut: usize,
    /// Fock indices of the sector states.
    pub sector: Vec<usize>,
    /// `matrix[(g, d)]` is the coefficient of `|g><d|`.
    pub matrix: CMat,
    /// Largest modulus of a moment beyond the cutoff, relative to the largest
    /// moment within it.
    pub tail: f64,
    /// Set when moments beyond the cutoff do not vanish, so that the state
    /// is reproduced only on words up to the cutoff.
    pub approximate: bool,
}

impl DensityOperator {
    pub fn trace(&self) -> C64 {
        self.matrix.trace()
    }

    /// `tr(sigma A)` for a word of field operators.
    pub fn expectation(&self, fock: &FockRep, w: &[Op]) -> C64 {
        let pos: HashMap<usize, usize> = self.sector.iter().enumerate().map(|(i, &s)| (s, i)).collect();
        let mut acc = cr(0.0);
        for (gi, &g) in self.sector.iter().enumerate() {
            if let Some((d, k)) = fock.apply_word(w, g) {
                if let Some(&di) = pos.get(&d) {
                    acc += self.matrix[(gi, di)] * k;
                }
            }
        }
        acc
    }

    /// Dense export with a header naming the modes and the sector states.
    pub fn to_text(&self, fock: &FockRep) -> String {
        let mut out = String::new();
        for (k, name) in fock.mode_names().iter().enumerate() {
            let _ = writeln!(out, "# mode {k}: {name}");
        }
        for (i, &s) in self.sector.iter().enumerate() {
            let occ: Vec<String> = fock.occupations(s).iter().map(|o| o.to_string()).collect();
            let _ = writeln!(out, "# state {i}: [{}]", occ.join(","));
        }
        let _ = writeln!(out, "# cutoff {} approximate {}", self.n_cut, self.approximate);
        for r in 0..self.matrix.nrows() {
            let row: Vec<String> =
                (0..self.matrix.ncols()).map(|c| format!("{:.17e} {:.17e}", self.matrix[(r, c)].re, self.matrix[(r, c)].im)).collect();
            let _ = writeln!(out, "{}", row.join(" , "));
        }
        out
    }
}

/// Creation and annihilation ladder words of a pair of occupations:
/// `C^alpha A^beta` with modes in increasing order.
fn ladder_word(fock: &FockRep, alpha: &[usize], beta: &[usize]) -> Word {
    let mut w = Vec::new();
    for (m, &n) in alpha.iter().enumerate() {
        for _ in 0..n {
            w.push(fock.op_of(FockOp::Cre(m)));
        }
    }
    for (m, &n) in beta.iter().enumerate() {
        for _ in 0..n {
            w.push(fock.op_of(FockOp::Ann(m)));
        }
    }
    w
}

/// Density operator reproducing `omega` on every ladder word with at most
/// `n_cut` creators and `n_cut` annihilators. The coefficients are fixed by
/// decreasing excitation number: the moment of `C^alpha A^beta` determines
/// the coefficient of `|beta><alpha|` once those of `|beta+k><alpha+k|`
/// are known.
pub fn density_from_state(table: &StateTable, fock: &FockRep, n_cut: usize) -> Result<DensityOperator> {
    if fock.boson_modes != table.boson_modes || fock.fermi_modes != table.fermi_modes {
        return Err(CfsError::Dimension("Fock modes differ from the state modes".into()));
    }
    let sector = fock.sector(n_cut);
    let pos: HashMap<usize, usize> = sector.iter().enumerate().map(|(i, &s)| (s, i)).collect();
    let occ: Vec<Vec<usize>> = sector.iter().map(|&s| fock.occupations(s)).collect();
    let level: Vec<usize> = occ.iter().map(|o| o.iter().sum()).collect();
    let k = sector.len();
    let mut pairs: Vec<(usize, usize)> = (0..k).flat_map(|a| (0..k).map(move |b| (a, b))).collect();
    pairs.sort_by_key(|&(a, b)| std::cmp::Reverse(level[a] + level[b]));
    let mut s = CMat::zeros(k, k);
    let mut largest: f64 = 0.0;
    for (a, b) in pairs {
        let w = ladder_word(fock, &occ[a], &occ[b]);
        let mu = state_eval(table, &Element::word(w.clone()))?;
        largest = largest.max(mu.norm());
        let mut known = cr(0.0);
        let mut lead = 0.0;
        for (gi, &g) in sector.iter().enumerate() {
            if let Some((d, coef)) = fock.apply_word(&w, g) {
                if let Some(&di) = pos.get(&d) {
                    if gi == b {
                        lead = coef;
                    } else {
                        known += s[(gi, di)] * coef;
                    }
                }
            }
        }
        if lead == 0.0 {
            return Err(CfsError::Singular("ladder word does not reach its own sector state".into()));
        }
        s[(b, a)] = (mu - known) / lead;
    }
    let tail = tail_moments(table, fock, n_cut)?;
    let rel = if largest > 0.0 { tail / largest } else { tail };
    Ok(DensityOperator { n_cut, sector, matrix: s, tail: rel, approximate: rel > 1e-8 })
}

/// Largest moment of a number-type ladder word with `n_cut + 1` quanta.
fn tail_moments(table: &StateTable, fock: &FockRep, n_cut: usize) -> Result<f64> {
    let mut worst: f64 = 0.0;
    for s in 0..fock.dim {
        let occ = fock.occupations(s);
        if occ.iter().sum::<usize>() != n_cut + 1 {
            continue;
        }
        let w = ladder_word(fock, &occ, &occ);
        worst = worst.max(state_eval(table, &Element::word(w))?.norm());
    }
    Ok(worst)
}

fn sorted_sequences(modes: usize, max_len: usize, distinct: bool) -> Vec<Vec<usize>> {
    let mut out = vec![vec![]];
    let mut frontier = vec![vec![]];
    for _ in 0..max_len {
        let mut next = Vec::new();
        for seq in &frontier {
            let start = match seq.last() {
                Some(&l) if distinct => l + 1,
                Some(&l) => l,
                None => 0,
            };
            for m in start..modes {
                let mut s = seq.clone();
                s.push(m);
                next.push(s);
            }
        }
        out.extend(next.iter().cloned());
        frontier = next;
    }
    out
}

/// Canonical words `a^dagger.. Psi^dagger.. a.. Psi..` whose ladder form has
/// at most `n` creators and `n` annihilators.
pub fn canonical_words(fock: &FockRep, n: usize) -> Vec<Word> {
    let bos = sorted_sequences(fock.boson_modes, n, false);
    let fer = sorted_sequences(fock.fermi_modes, n, true);
    let mut out = Vec::new();
    for bc in &bos {
        for fc in &fer {
            for ba in &bos {
                for fa in &fer {
                    let mut w: Word = bc.iter().map(|&k| Op::BCre(k)).collect();
                    w.extend(fc.iter().map(|&m| Op::FCre(m)));
                    w.extend(ba.iter().map(|&k| Op::BAnn(k)));
                    w.extend(fa.iter().map(|&m| Op::FAnn(m)));
                    let (mut cre, mut ann) = (0, 0);
                    for &o in &w {
                        match fock.field_op(o) {
                            FockOp::Cre(_) => cre += 1,
                            FockOp::Ann(_) => ann += 1,
                        }
                    }
                    if cre <= n && ann <= n {
                        out.push(w);
                    }
                }
            }
        }
    }
    out
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ReconstructionReport {
    pub words: usize,
    pub max_residual: f64,
    pub scale: f64,
    pub worst_word: String,
    pub trace: f64,
    pub passed: bool,
}

/// Compares `tr(sigma A)` with `omega(A)` on every canonical word up to the cutoff.
pub fn verify_reconstruction(sigma: &DensityOperator, table: &StateTable, fock: &FockRep, n_cut: usize) -> Result<ReconstructionReport> {
    if n_cut > sigma.n_cut {
        return Err(CfsError::Invalid("verification cutoff exceeds the construction cutoff".into()));
    }
    let words = canonical_words(fock, n_cut);
    let mut rep = ReconstructionReport { words: words.len(), max_residual: 0.0, scale: 1.0, worst_word: String::new(), trace: sigma.trace().re, passed: true };
    for w in &words {
        let om = prestate(table, w)?;
        let tr = sigma.expectation(fock, w);
        rep.scale = rep.scale.max(om.norm());
        let r = (om - tr).norm();
        if r > rep.max_residual {
            rep.max_residual = r;
            rep.worst_word = crate::quantum_state::algebra::word_to_string(w);
        }
    }
    rep.passed = rep.max_residual < 1e-8 * rep.scale;
    Ok(rep)
}
