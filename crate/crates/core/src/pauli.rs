//! Pauli words and decompositions of dense operators in the Pauli basis.
//!
//! A word is stored symplectically as an (x, z) bit-mask pair: per qubit,
//! (0,0) = I, (1,0) = X, (1,1) = Y, (0,1) = Z. Mask bits are aligned with
//! basis-index bits, i.e. bit `n-1-q` of a mask belongs to qubit `q` (qubit 0
//! is the most significant bit of a basis index). That makes applying a word
//! to a basis index a single XOR plus a sign lookup:
//!
//! `P |i> = i^{#Y} (-1)^{popcount(i & z)} |i XOR x>`

use crate::linalg::CMat;
use crate::{Error, Result};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

/// Single-qubit Pauli letter.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Pauli {
    I,
    X,
    Y,
    Z,
}

impl Pauli {
    /// (x, z) symplectic bits of the letter.
    fn bits(self) -> (u32, u32) {
        match self {
            Pauli::I => (0, 0),
            Pauli::X => (1, 0),
            Pauli::Y => (1, 1),
            Pauli::Z => (0, 1),
        }
    }

    fn from_bits(x: u32, z: u32) -> Self {
        match (x, z) {
            (0, 0) => Pauli::I,
            (1, 0) => Pauli::X,
            (1, 1) => Pauli::Y,
            _ => Pauli::Z,
        }
    }
}

/// A Pauli word on `n` qubits.
#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct PauliString {
    n: u8,
    x: u32,
    z: u32,
}

impl PauliString {
    pub fn identity(n: usize) -> Self {
        assert!(n <= 24, "qubit cap is 24");
        PauliString { n: n as u8, x: 0, z: 0 }
    }

    pub fn from_letters(letters: &[Pauli]) -> Self {
        let n = letters.len();
        let mut s = PauliString::identity(n);
        for (q, &p) in letters.iter().enumerate() {
            s.set_letter(q, p);
        }
        s
    }

    pub fn n_qubits(&self) -> usize {
        self.n as usize
    }

    /// Mask bit position for qubit `q` (qubit 0 = most significant index bit).
    #[inline]
    fn bit(&self, q: usize) -> u32 {
        1 << (self.n as usize - 1 - q)
    }

    pub fn letter(&self, q: usize) -> Pauli {
        let b = self.bit(q);
        Pauli::from_bits(u32::from(self.x & b != 0), u32::from(self.z & b != 0))
    }

    pub fn set_letter(&mut self, q: usize, p: Pauli) {
        let b = self.bit(q);
        let (xb, zb) = p.bits();
        self.x = (self.x & !b) | (b * xb);
        self.z = (self.z & !b) | (b * zb);
    }

    pub fn is_identity(&self) -> bool {
        self.x == 0 && self.z == 0
    }

    /// True when the word is diagonal in the computational basis (no X/Y).
    pub fn is_diagonal(&self) -> bool {
        self.x == 0
    }

    /// Number of non-identity letters.
    pub fn weight(&self) -> usize {
        (self.x | self.z).count_ones() as usize
    }

    /// Qubit indices carrying non-identity letters, ascending.
    pub fn support(&self) -> Vec<usize> {
        (0..self.n_qubits()).filter(|&q| self.letter(q) != Pauli::I).collect()
    }

    /// Symplectic commutation test: words commute iff the overlap count of
    /// X-parts against Z-parts is even.
    pub fn commutes_with(&self, other: &PauliString) -> bool {
        debug_assert_eq!(self.n, other.n);
        ((self.x & other.z).count_ones() + (self.z & other.x).count_ones()) % 2 == 0
    }

    /// `P |i> = phase |j>`; returns `(j, phase)`.
    #[inline]
    pub fn apply_index(&self, i: usize) -> (usize, Complex64) {
        let j = i ^ self.x as usize;
        let y_count = (self.x & self.z).count_ones();
        let sign_flips = (i as u32 & self.z).count_ones();
        let mut phase = match y_count % 4 {
            0 => Complex64::new(1.0, 0.0),
            1 => Complex64::new(0.0, 1.0),
            2 => Complex64::new(-1.0, 0.0),
            _ => Complex64::new(0.0, -1.0),
        };
        if sign_flips % 2 == 1 {
            phase = -phase;
        }
        (j, phase)
    }

    /// Dense `2^n x 2^n` matrix of the word.
    pub fn matrix(&self) -> CMat {
        let dim = 1 << self.n_qubits();
        let mut m = CMat::zeros(dim, dim);
        for col in 0..dim {
            let (row, phase) = self.apply_index(col);
            m[(row, col)] = phase;
        }
        m
    }

    /// Out-of-place matrix-vector product `out = P v`.
    pub fn apply_to_vec(&self, v: &[Complex64], out: &mut [Complex64]) {
        debug_assert_eq!(v.len(), 1 << self.n_qubits());
        debug_assert_eq!(v.len(), out.len());
        for (j, &amp) in v.iter().enumerate() {
            let (i, phase) = self.apply_index(j);
            out[i] = phase * amp;
        }
    }

    /// `<psi| P |psi>` (real for any Pauli word on a normalized state).
    pub fn expectation(&self, amps: &[Complex64]) -> f64 {
        let mut acc = Complex64::new(0.0, 0.0);
        for (i, &a) in amps.iter().enumerate() {
            let (j, phase) = self.apply_index(i);
            acc += amps[j].conj() * phase * a;
        }
        acc.re
    }
}

impl fmt::Display for PauliString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for q in 0..self.n_qubits() {
            let c = match self.letter(q) {
                Pauli::I => 'I',
                Pauli::X => 'X',
                Pauli::Y => 'Y',
                Pauli::Z => 'Z',
            };
            write!(f, "{c}")?;
        }
        Ok(())
    }
}

impl fmt::Debug for PauliString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self}")
    }
}

impl FromStr for PauliString {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let letters: Result<Vec<Pauli>> = s
            .chars()
            .map(|c| match c {
                'I' => Ok(Pauli::I),
                'X' => Ok(Pauli::X),
                'Y' => Ok(Pauli::Y),
                'Z' => Ok(Pauli::Z),
                other => Err(Error::InvalidParams(format!("bad Pauli letter '{other}'"))),
            })
            .collect();
        Ok(PauliString::from_letters(&letters?))
    }
}

impl Serialize for PauliString {
    fn serialize<S: serde::Serializer>(&self, ser: S) -> std::result::Result<S::Ok, S::Error> {
        ser.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for PauliString {
    fn deserialize<D: serde::Deserializer<'de>>(de: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(de)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// One term of a Hermitian operator's Pauli expansion.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PauliTerm {
    pub coefficient: f64,
    pub string: PauliString,
}

/// Canonical term order: by support (positions, then count via prefix rule),
/// then lexicographic word. Fixing one order makes Trotter products and
/// serialized decompositions reproducible.
pub fn canonical_sort(terms: &mut [PauliTerm]) {
    terms.sort_by(|a, b| {
        let sa = a.string.support();
        let sb = b.string.support();
        sa.cmp(&sb).then_with(|| a.string.to_string().cmp(&b.string.to_string()))
    });
}

/// Expands `m` (dimension `2^n`) in the Pauli basis; coefficients are
/// `trace(P m) / 2^n`, computed by recursive block reduction. Words with
/// `|coefficient| <= drop_tol` are omitted.
pub fn decompose(m: &CMat, drop_tol: f64) -> Result<Vec<(Complex64, PauliString)>> {
    let d = m.nrows();
    if d != m.ncols() {
        return Err(Error::Dimension(format!("matrix is {}x{}", m.nrows(), m.ncols())));
    }
    if !d.is_power_of_two() {
        return Err(Error::Dimension(format!(
            "Pauli decomposition needs a power-of-two dimension, got {d}"
        )));
    }
    let n = d.trailing_zeros() as usize;
    if n > 24 {
        return Err(Error::Dimension("qubit cap is 24".into()));
    }

    // flat row-major copy
    let flat: Vec<Complex64> = (0..d).flat_map(|i| (0..d).map(move |j| m[(i, j)])).collect();
    let mut out = Vec::new();
    block_reduce(&flat, d, PauliString::identity(n), 0, drop_tol, &mut out);
    let mut out: Vec<(Complex64, PauliString)> =
        out.into_iter().filter(|(c, _)| c.norm() > drop_tol).collect();
    out.sort_by(|a, b| {
        let sa = a.1.support();
        let sb = b.1.support();
        sa.cmp(&sb).then_with(|| a.1.to_string().cmp(&b.1.to_string()))
    });
    Ok(out)
}

/// One recursion level: peel off the most significant remaining qubit.
///
/// With M = [[A, B], [C, D]] in that qubit's blocks, the sub-operators paired
/// with each letter are I: (A+D)/2, Z: (A-D)/2, X: (B+C)/2, Y: i(B-C)/2.
/// Every entry of a child is an average of parent entries, so a block whose
/// max modulus is already <= drop_tol cannot produce a surviving word.
fn block_reduce(
    flat: &[Complex64],
    d: usize,
    prefix: PauliString,
    q: usize,
    drop_tol: f64,
    out: &mut Vec<(Complex64, PauliString)>,
) {
    if d == 1 {
        out.push((flat[0], prefix));
        return;
    }
    let h = d / 2;
    let idx = |i: usize, j: usize| i * d + j;
    let half = Complex64::new(0.5, 0.0);
    let ihalf = Complex64::new(0.0, 0.5);

    let mut child = vec![Complex64::new(0.0, 0.0); h * h];
    for (letter, f_a, f_d, f_b, f_c) in [
        (Pauli::I, half, half, Complex64::new(0.0, 0.0), Complex64::new(0.0, 0.0)),
        (Pauli::Z, half, -half, Complex64::new(0.0, 0.0), Complex64::new(0.0, 0.0)),
        (Pauli::X, Complex64::new(0.0, 0.0), Complex64::new(0.0, 0.0), half, half),
        (Pauli::Y, Complex64::new(0.0, 0.0), Complex64::new(0.0, 0.0), ihalf, -ihalf),
    ] {
        let mut maxabs = 0.0f64;
        for i in 0..h {
            for j in 0..h {
                let v = f_a * flat[idx(i, j)]
                    + f_d * flat[idx(i + h, j + h)]
                    + f_b * flat[idx(i, j + h)]
                    + f_c * flat[idx(i + h, j)];
                maxabs = maxabs.max(v.norm_sqr());
                child[i * h + j] = v;
            }
        }
        if maxabs.sqrt() > drop_tol {
            let mut p = prefix;
            p.set_letter(q, letter);
            block_reduce(&child, h, p, q + 1, drop_tol, out);
        }
    }
}

/// Rebuilds `sum coefficient * P` as a dense matrix.
pub fn reconstruct(terms: &[(Complex64, PauliString)], n: usize) -> CMat {
    let dim = 1 << n;
    let mut m = CMat::zeros(dim, dim);
    for (c, p) in terms {
        for col in 0..dim {
            let (row, phase) = p.apply_index(col);
            m[(row, col)] += c * phase;
        }
    }
    m
}

/// Decomposition restricted to Hermitian input: coefficients must come out
/// real (imaginary residue above 1e-9 is rejected); returns canonical order.
pub fn hermitian_terms(m: &CMat, drop_tol: f64) -> Result<Vec<PauliTerm>> {
    let raw = decompose(m, drop_tol)?;
    let mut terms = Vec::with_capacity(raw.len());
    for (c, s) in raw {
        if c.im.abs() > 1e-9 {
            return Err(Error::InvalidParams(format!(
                "non-Hermitian input: coefficient of {s} has imaginary part {:.3e}",
                c.im
            )));
        }
        terms.push(PauliTerm { coefficient: c.re, string: s });
    }
    canonical_sort(&mut terms);
    Ok(terms)
}
