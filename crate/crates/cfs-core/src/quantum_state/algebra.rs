use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{CfsError, Result};
use crate::linalg::{c, cr, C64};

/// Field operator on a basis mode (0-based index).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Op {
    /// Bosonic creation `a^dagger(z_k)`.
    BCre(usize),
    /// Bosonic annihilation `a(conj z_k)`.
    BAnn(usize),
    /// Fermionic creation `Psi^dagger(phi_k)`.
    FCre(usize),
    /// Fermionic annihilation `Psi(conj phi_k)`.
    FAnn(usize),
}

impl Op {
    pub fn adjoint(self) -> Op {
        match self {
            Op::BCre(k) => Op::BAnn(k),
            Op::BAnn(k) => Op::BCre(k),
            Op::FCre(k) => Op::FAnn(k),
            Op::FAnn(k) => Op::FCre(k),
        }
    }

    pub fn is_fermionic(self) -> bool {
        matches!(self, Op::FCre(_) | Op::FAnn(_))
    }

    /// Position in the canonical order `a^dagger Psi^dagger a Psi`.
    fn rank(self) -> u8 {
        match self {
            Op::BCre(_) => 0,
            Op::FCre(_) => 1,
            Op::BAnn(_) => 2,
            Op::FAnn(_) => 3,
        }
    }

    pub fn mode(self) -> usize {
        match self {
            Op::BCre(k) | Op::BAnn(k) | Op::FCre(k) | Op::FAnn(k) => k,
        }
    }
}

impl fmt::Display for Op {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Op::BCre(k) => write!(f, "ad(z{})", k + 1),
            Op::BAnn(k) => write!(f, "a(z{})", k + 1),
            Op::FCre(k) => write!(f, "fd(p{})", k + 1),
            Op::FAnn(k) => write!(f, "f(p{})", k + 1),
        }
    }
}

pub type Word = Vec<Op>;

pub fn word_to_string(w: &[Op]) -> String {
    if w.is_empty() {
        return "1".into();
    }
    w.iter().map(|o| o.to_string()).collect::<Vec<_>>().join(" ")
}

/// Complex linear combination of words.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Element {
    pub terms: Vec<(C64, Word)>,
}

impl Element {
    pub fn one() -> Self {
        Self { terms: vec![(cr(1.0), Vec::new())] }
    }

    pub fn word(w: Word) -> Self {
        Self { terms: vec![(cr(1.0), w)] }
    }

    pub fn scaled(&self, a: C64) -> Self {
        Self { terms: self.terms.iter().map(|(k, w)| (k * a, w.clone())).collect() }
    }

    pub fn plus(&self, other: &Element) -> Self {
        let mut terms = self.terms.clone();
        terms.extend(other.terms.iter().cloned());
        Self { terms }
    }

    pub fn adjoint(&self) -> Self {
        Self {
            terms: self
                .terms
                .iter()
                .map(|(k, w)| (k.conj(), w.iter().rev().map(|o| o.adjoint()).collect()))
                .collect(),
        }
    }

    pub fn product(&self, other: &Element) -> Self {
        let mut terms = Vec::with_capacity(self.terms.len() * other.terms.len());
        for (a, wa) in &self.terms {
            for (b, wb) in &other.terms {
                let mut w = wa.clone();
                w.extend_from_slice(wb);
                terms.push((a * b, w));
            }
        }
        Self { terms }
    }

    /// `A^* A`.
    pub fn star_square(&self) -> Self {
        self.adjoint().product(self)
    }

    pub fn max_degree(&self) -> usize {
        self.terms.iter().map(|(_, w)| w.len()).max().unwrap_or(0)
    }

    /// Checks every mode index against the available modes.
    pub fn validate(&self, bosons: usize, fermions: usize) -> Result<()> {
        for (_, w) in &self.terms {
            for o in w {
                let limit = if o.is_fermionic() { fermions } else { bosons };
                if o.mode() >= limit {
                    return Err(CfsError::Word(format!("{o} refers to a mode beyond the {limit} available")));
                }
            }
        }
        Ok(())
    }

    /// Normal-ordered form: each word in the order `a^dagger Psi^dagger a Psi`,
    /// with the modes orthonormal so that the (anti)commutators are
    /// Kronecker deltas. Equal words are merged.
    pub fn normal_ordered(&self) -> Element {
        let mut acc: HashMap<Word, C64> = HashMap::new();
        let mut order: Vec<Word> = Vec::new();
        let mut stack: Vec<(C64, Word)> = self.terms.iter().filter(|(k, _)| k.norm() != 0.0).cloned().collect();
        while let Some((k, w)) = stack.pop() {
            match first_disorder(&w) {
                None => {
                    if has_repeated_fermion(&w) {
                        continue;
                    }
                    let e = acc.entry(w.clone()).or_insert_with(|| {
                        order.push(w.clone());
                        cr(0.0)
                    });
                    *e += k;
                }
                Some(p) => {
                    let (x, y) = (w[p], w[p + 1]);
                    let mut swapped = w.clone();
                    swapped.swap(p, p + 1);
                    let sign = if x.is_fermionic() && y.is_fermionic() { -1.0 } else { 1.0 };
                    stack.push((k * sign, swapped));
                    let contracts = match (x, y) {
                        (Op::BAnn(a), Op::BCre(b)) | (Op::FAnn(a), Op::FCre(b)) => a == b,
                        _ => false,
                    };
                    if contracts {
                        let mut short = w[..p].to_vec();
                        short.extend_from_slice(&w[p + 2..]);
                        stack.push((k, short));
                    }
                }
            }
        }
        Element { terms: order.into_iter().map(|w| (acc[&w], w)).filter(|(k, _)| k.norm() != 0.0).collect() }
    }
}

fn first_disorder(w: &[Op]) -> Option<usize> {
    (0..w.len().saturating_sub(1)).find(|&p| w[p].rank() > w[p + 1].rank())
}

fn has_repeated_fermion(w: &[Op]) -> bool {
    for (i, a) in w.iter().enumerate() {
        if a.is_fermionic() && w[i + 1..].iter().any(|b| b == a) {
            return true;
        }
    }
    false
}

fn parse_op(tok: &str) -> Result<Op> {
    let bad = || CfsError::Word(format!("cannot parse operator '{tok}'"));
    let open = tok.find('(').ok_or_else(bad)?;
    if !tok.ends_with(')') {
        return Err(bad());
    }
    let head = &tok[..open];
    let arg = &tok[open + 1..tok.len() - 1];
    let (prefix, num) = arg.split_at(arg.find(|ch: char| ch.is_ascii_digit()).ok_or_else(bad)?);
    let k: usize = num.parse().map_err(|_| bad())?;
    if k == 0 {
        return Err(CfsError::Word(format!("mode indices start at 1 in '{tok}'")));
    }
    let k = k - 1;
    match (head, prefix) {
        ("ad", "z") => Ok(Op::BCre(k)),
        ("a", "z") => Ok(Op::BAnn(k)),
        ("fd", "p") => Ok(Op::FCre(k)),
        ("f", "p") => Ok(Op::FAnn(k)),
        _ => Err(bad()),
    }
}

/// Parses a word such as `ad(z1) fd(p2) a(z1) f(p2)`; `1` is the empty word.
pub fn parse_word(s: &str) -> Result<Word> {
    let s = s.trim();
    if s.is_empty() || s == "1" {
        return Ok(Vec::new());
    }
    s.split_whitespace().map(parse_op).collect()
}

fn parse_coeff(s: &str) -> Result<C64> {
    let s = s.trim();
    let bad = || CfsError::Word(format!("cannot parse coefficient '{s}'"));
    if let Some(inner) = s.strip_prefix('(').and_then(|r| r.strip_suffix(')')) {
        let mut parts = inner.split(',');
        let re: f64 = parts.next().ok_or_else(bad)?.trim().parse().map_err(|_| bad())?;
        let im: f64 = parts.next().ok_or_else(bad)?.trim().parse().map_err(|_| bad())?;
        if parts.next().is_some() {
            return Err(bad());
        }
        Ok(c(re, im))
    } else {
        Ok(cr(s.parse().map_err(|_| bad())?))
    }
}

/// Parses `term ; term ; ...` where a term is `coeff * word` or a bare word
/// and a coefficient is a real number or `(re,im)`.
pub fn parse_element(s: &str) -> Result<Element> {
    let mut terms = Vec::new();
    for part in s.split(';') {
        let part = part.trim();
        if part.is_empty() {
            continue;
        }
        let (k, w) = match part.split_once('*') {
            Some((k, w)) => (parse_coeff(k)?, parse_word(w)?),
            None => (cr(1.0), parse_word(part)?),
        };
        terms.push((k, w));
    }
    if terms.is_empty() {
        return Err(CfsError::Word("empty element".into()));
    }
    Ok(Element { terms })
}
