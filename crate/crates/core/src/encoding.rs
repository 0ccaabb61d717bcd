//! Qubit encoding of hardcore-boson configurations.
//!
//! A p-particle configuration on the flattened 2N-site ladder is a size-p
//! subset of [0, 2N). Subsets are enumerated in lexicographic order of their
//! sorted site lists and ranked with the combinatorial number system, giving
//! a bijection onto [0, D) with D = C(2N, p). Basis indices are read
//! big-endian from the qubit register (qubit 0 is the most significant bit),
//! and a measured bitstring is physical iff its integer value is < D.

use crate::{Error, Result};

/// Ladder sublattice leg; `a` precedes `b` within each unit cell.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Leg {
    A,
    B,
}

/// Flattened site index of (cell, leg) with 1-based cell numbering:
/// (1, a) -> 0, (1, b) -> 1, ..., (N, b) -> 2N - 1.
pub fn encode_site(cell: usize, leg: Leg, n_cells: usize) -> Result<usize> {
    if cell == 0 || cell > n_cells {
        return Err(Error::Encoding(format!("cell {cell} outside [1, {n_cells}]")));
    }
    Ok(match leg {
        Leg::A => 2 * cell - 2,
        Leg::B => 2 * cell - 1,
    })
}

/// Binomial coefficient with saturation guard (inputs stay desk-scale).
fn binomial(n: usize, k: usize) -> u64 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u64 = 1;
    for i in 0..k {
        acc = acc * (n - i) as u64 / (i + 1) as u64;
    }
    acc
}

/// Bijection between sorted p-subsets of the 2N flattened sites and the
/// contiguous index range [0, D).
#[derive(Clone, Debug)]
pub struct SectorEncoding {
    n_cells: usize,
    p: usize,
    d: usize,
    n_qubits: usize,
}

impl SectorEncoding {
    pub fn new(n_cells: usize, p: usize) -> Result<Self> {
        if n_cells == 0 {
            return Err(Error::Encoding("need at least one unit cell".into()));
        }
        let m = 2 * n_cells;
        if p == 0 || p > m {
            return Err(Error::Encoding(format!("particle count {p} outside [1, {m}]")));
        }
        let d64 = binomial(m, p);
        let d = usize::try_from(d64)
            .map_err(|_| Error::Encoding(format!("sector dimension {d64} overflows usize")))?;
        let n_qubits = crate::linalg::pow2_ceil(d).0;
        Ok(SectorEncoding { n_cells, p, d, n_qubits })
    }

    pub fn n_cells(&self) -> usize {
        self.n_cells
    }

    pub fn n_sites(&self) -> usize {
        2 * self.n_cells
    }

    pub fn particles(&self) -> usize {
        self.p
    }

    /// Sector dimension D = C(2N, p).
    pub fn dim(&self) -> usize {
        self.d
    }

    /// Qubits needed to index the sector: ceil(log2 D).
    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    /// Dimension of the enclosing qubit space, `2^n_qubits`.
    pub fn padded_dim(&self) -> usize {
        1 << self.n_qubits
    }

    /// Lexicographic rank of a strictly increasing size-p site list.
    pub fn rank(&self, sites: &[usize]) -> Result<usize> {
        let m = self.n_sites();
        if sites.len() != self.p {
            return Err(Error::Encoding(format!(
                "expected {} sites, got {}",
                self.p,
                sites.len()
            )));
        }
        if sites.windows(2).any(|w| w[0] >= w[1]) || sites.iter().any(|&s| s >= m) {
            return Err(Error::Encoding(format!(
                "sites {sites:?} are not a strictly increasing subset of [0, {m})"
            )));
        }
        let mut acc: u64 = 0;
        for (i, &s) in sites.iter().enumerate() {
            acc += binomial(m - 1 - s, self.p - i);
        }
        Ok((binomial(m, self.p) - 1 - acc) as usize)
    }

    /// Inverse of `rank`: the sorted site list at lexicographic position `index`.
    pub fn unrank(&self, index: usize) -> Result<Vec<usize>> {
        if index >= self.d {
            return Err(Error::Encoding(format!(
                "index {index} outside physical sector [0, {})",
                self.d
            )));
        }
        let m = self.n_sites();
        let mut remaining = index as u64;
        let mut sites = Vec::with_capacity(self.p);
        let mut next = 0usize;
        for i in 0..self.p {
            let mut s = next;
            loop {
                let count = binomial(m - 1 - s, self.p - 1 - i);
                if remaining < count {
                    break;
                }
                remaining -= count;
                s += 1;
            }
            sites.push(s);
            next = s + 1;
        }
        Ok(sites)
    }

    /// True iff a measured register value indexes a physical configuration.
    pub fn is_physical(&self, value: usize) -> bool {
        value < self.d
    }

    /// 0/1 occupancy over the 2N flattened sites for a physical index.
    pub fn occupancy_from_index(&self, index: usize) -> Result<Vec<u8>> {
        let sites = self.unrank(index)?;
        let mut occ = vec![0u8; self.n_sites()];
        for s in sites {
            occ[s] = 1;
        }
        Ok(occ)
    }

    /// Register value of a big-endian bit list (qubit 0 first).
    pub fn value_from_bits(bits: &[bool]) -> usize {
        bits.iter().fold(0usize, |acc, &b| (acc << 1) | usize::from(b))
    }

    /// Big-endian bit list (length n_qubits) of a register value.
    pub fn bits_from_value(&self, value: usize) -> Vec<bool> {
        (0..self.n_qubits).map(|q| (value >> (self.n_qubits - 1 - q)) & 1 == 1).collect()
    }
}
