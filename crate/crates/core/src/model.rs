//! Non-Hermitian quantum-ladder model.
//!
//! Each unit cell x holds two sites (a, b). The single-particle Hamiltonian
//! combines an intra-cell hop v1, inter-cell hops of strength v2/2 (including
//! imaginary same-leg amplitudes +/- i v2/2 that produce the momentum-odd band
//! structure), and a uniform loss -i*gamma on every b site. In momentum space
//! this is the two-band Bloch operator
//!
//! `H(k) = (v1 + v2 cos k) sx + (v2 sin k + i gamma/2) sz - (i gamma/2) I`
//!
//! whose spectrum lies in the strip -gamma <= Im E <= 0. Many-body sectors
//! add density-density couplings U_r between occupied sites at flattened
//! distance r, in the hardcore limit (no double occupancy).

use crate::encoding::SectorEncoding;
use crate::linalg::CMat;
use crate::pauli::{self, PauliString};
use crate::{Error, Result};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::f64::consts::PI;

/// Chain termination.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Boundary {
    Open,
    Periodic,
}

/// Physical description of the lossy interacting ladder.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LadderParams {
    pub n_cells: usize,
    pub v1: f64,
    pub v2: f64,
    pub gamma: f64,
    pub boundary: Boundary,
    /// Density-density strength U_r keyed by flattened site distance r >= 1.
    #[serde(default)]
    pub interactions: BTreeMap<usize, f64>,
    /// Hardcore limit (no double occupancy); the only supported statistics.
    #[serde(default = "default_true")]
    pub hardcore: bool,
}

fn default_true() -> bool {
    true
}

impl LadderParams {
    pub fn new(n_cells: usize, v1: f64, v2: f64, gamma: f64, boundary: Boundary) -> Result<Self> {
        let p = LadderParams {
            n_cells,
            v1,
            v2,
            gamma,
            boundary,
            interactions: BTreeMap::new(),
            hardcore: true,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn with_interactions(mut self, pairs: &[(usize, f64)]) -> Result<Self> {
        for &(r, u) in pairs {
            self.interactions.insert(r, u);
        }
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_cells == 0 {
            return Err(Error::InvalidParams("need at least one unit cell".into()));
        }
        if self.boundary == Boundary::Periodic && self.n_cells < 2 {
            return Err(Error::InvalidParams("periodic chain needs at least two cells".into()));
        }
        if !(self.gamma > 0.0) || !self.gamma.is_finite() {
            return Err(Error::InvalidParams(format!("gamma must be positive, got {}", self.gamma)));
        }
        if self.v1 < 0.0 || self.v2 < 0.0 || !self.v1.is_finite() || !self.v2.is_finite() {
            return Err(Error::InvalidParams(format!(
                "hoppings must be nonnegative, got v1={}, v2={}",
                self.v1, self.v2
            )));
        }
        if !self.hardcore {
            return Err(Error::InvalidParams("only the hardcore limit is supported".into()));
        }
        for (&r, &u) in &self.interactions {
            if r == 0 || !u.is_finite() {
                return Err(Error::InvalidParams(format!("bad interaction entry ({r}, {u})")));
            }
        }
        Ok(())
    }

    pub fn n_sites(&self) -> usize {
        2 * self.n_cells
    }
}

/// Single-particle Hamiltonian on the 2N flattened sites; element (z', z) is
/// the amplitude for the transition z -> z'.
pub fn build_single_particle(params: &LadderParams) -> Result<CMat> {
    params.validate()?;
    let n = params.n_cells;
    let dim = 2 * n;
    let mut h = CMat::zeros(dim, dim);
    let v1 = Complex64::new(params.v1, 0.0);
    let v2h = Complex64::new(params.v2 / 2.0, 0.0);
    let iv2h = Complex64::new(0.0, params.v2 / 2.0);
    let loss = Complex64::new(0.0, -params.gamma);

    for x in 0..n {
        let (a, b) = (2 * x, 2 * x + 1);
        h[(b, b)] += loss;
        h[(a, b)] += v1;
        h[(b, a)] += v1;

        let wrap = x + 1 == n;
        if wrap && params.boundary == Boundary::Open {
            continue;
        }
        let y = if wrap { 0 } else { x + 1 };
        let (a2, b2) = (2 * y, 2 * y + 1);
        // cross-leg hops between neighboring cells
        h[(a2, b)] += v2h;
        h[(b, a2)] += v2h;
        h[(b2, a)] += v2h;
        h[(a, b2)] += v2h;
        // same-leg hops with opposite imaginary amplitudes on the two legs
        h[(a2, a)] += iv2h;
        h[(a, a2)] += -iv2h;
        h[(b2, b)] += -iv2h;
        h[(b, b2)] += iv2h;
    }
    Ok(h)
}

/// Flattened distance between two sites, wrapping on a periodic chain.
fn site_distance(z1: usize, z2: usize, n_sites: usize, boundary: Boundary) -> usize {
    let d = z1.abs_diff(z2);
    match boundary {
        Boundary::Open => d,
        Boundary::Periodic => d.min(n_sites - d),
    }
}

/// p-particle sector Hamiltonian over the ranked hardcore basis: hops carry
/// the single-particle amplitudes onto unoccupied targets, the diagonal holds
/// the loss of occupied b sites plus the range-r pair interactions.
pub fn build_many_body(params: &LadderParams, enc: &SectorEncoding) -> Result<CMat> {
    params.validate()?;
    if enc.n_cells() != params.n_cells {
        return Err(Error::Dimension(format!(
            "encoding is for {} cells, params for {}",
            enc.n_cells(),
            params.n_cells
        )));
    }
    let h_sp = build_single_particle(params)?;
    let m = params.n_sites();
    let d = enc.dim();
    let mut h = CMat::zeros(d, d);

    for col in 0..d {
        let sites = enc.unrank(col)?;
        let occupied = |z: usize| sites.binary_search(&z).is_ok();

        let mut diag = Complex64::new(0.0, 0.0);
        for &z in &sites {
            diag += h_sp[(z, z)];
        }
        for i in 0..sites.len() {
            for j in (i + 1)..sites.len() {
                let r = site_distance(sites[i], sites[j], m, params.boundary);
                if let Some(&u) = params.interactions.get(&r) {
                    diag += Complex64::new(u, 0.0);
                }
            }
        }
        h[(col, col)] += diag;

        for (pos, &z) in sites.iter().enumerate() {
            for z2 in 0..m {
                if z2 == z || occupied(z2) {
                    continue;
                }
                let amp = h_sp[(z2, z)];
                if amp == Complex64::new(0.0, 0.0) {
                    continue;
                }
                let mut moved = sites.clone();
                moved[pos] = z2;
                moved.sort_unstable();
                let row = enc.rank(&moved)?;
                h[(row, col)] += amp;
            }
        }
    }
    Ok(h)
}

/// Hermitian / anti-Hermitian decomposition H = H_H - i H_A.
#[derive(Clone, Debug)]
pub struct HamiltonianSplit {
    /// H_H = (H + H^dag) / 2.
    pub hermitian_part: CMat,
    /// H_A = i (H - H^dag) / 2; Hermitian and PSD for this model.
    pub antihermitian_generator: CMat,
    pub dimension: usize,
}

pub fn split(h: &CMat) -> Result<HamiltonianSplit> {
    if h.nrows() != h.ncols() {
        return Err(Error::Dimension(format!("split needs a square matrix, got {}x{}", h.nrows(), h.ncols())));
    }
    let dag = h.adjoint();
    let half = Complex64::new(0.5, 0.0);
    let ihalf = Complex64::new(0.0, 0.5);
    let hermitian_part = (h + &dag) * half;
    let antihermitian_generator = (h - &dag) * ihalf;
    Ok(HamiltonianSplit { hermitian_part, antihermitian_generator, dimension: h.nrows() })
}

/// Bloch operator at momentum k and its two band energies
/// `E_pm = -i gamma/2 +/- sqrt(h_x^2 + h_z^2)`.
pub fn bloch(params: &LadderParams, k: f64) -> (CMat, [Complex64; 2]) {
    let hx = Complex64::new(params.v1 + params.v2 * k.cos(), 0.0);
    let hz = Complex64::new(params.v2 * k.sin(), params.gamma / 2.0);
    let shift = Complex64::new(0.0, -params.gamma / 2.0);
    let mut m = CMat::zeros(2, 2);
    m[(0, 0)] = hz + shift;
    m[(0, 1)] = hx;
    m[(1, 0)] = hx;
    m[(1, 1)] = -hz + shift;
    let root = (hx * hx + hz * hz).sqrt();
    (m, [shift + root, shift - root])
}

/// Result of a dissipative-gap scan over momentum.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct GapScan {
    /// Delta = -max Im E over both bands (clamped at zero).
    pub gap: f64,
    pub max_im: f64,
    pub min_im: f64,
}

/// Scans `k_samples` uniform momenta plus the analytic extremal candidates
/// (k = 0, pi, and cos k* = -v1/v2 where the slow band touches Im E = 0).
pub fn dissipative_gap(params: &LadderParams, k_samples: usize) -> Result<GapScan> {
    if k_samples < 64 {
        return Err(Error::InvalidParams(format!("k_samples must be >= 64, got {k_samples}")));
    }
    let mut ks: Vec<f64> = (0..k_samples).map(|j| 2.0 * PI * j as f64 / k_samples as f64).collect();
    ks.push(0.0);
    ks.push(PI);
    if params.v2 > 0.0 && params.v1 <= params.v2 {
        let kstar = (-params.v1 / params.v2).acos();
        ks.push(kstar);
        ks.push(2.0 * PI - kstar);
    }
    let mut max_im = f64::NEG_INFINITY;
    let mut min_im = f64::INFINITY;
    for k in ks {
        let (_, bands) = bloch(params, k);
        for e in bands {
            max_im = max_im.max(e.im);
            min_im = min_im.min(e.im);
        }
    }
    Ok(GapScan { gap: (-max_im).max(0.0), max_im, min_im })
}

/// Pauli expansion of `m` zero-padded into the top-left block of the
/// `2^n_qubits` space. Unused basis states are annihilated by construction.
pub fn pauli_decompose(
    m: &CMat,
    n_qubits: usize,
    drop_tol: f64,
) -> Result<Vec<(Complex64, PauliString)>> {
    let dim = 1usize << n_qubits;
    if m.nrows() != m.ncols() {
        return Err(Error::Dimension(format!("matrix is {}x{}", m.nrows(), m.ncols())));
    }
    if m.nrows() > dim {
        return Err(Error::Dimension(format!(
            "matrix of dimension {} does not fit in {n_qubits} qubits",
            m.nrows()
        )));
    }
    let embedded = if m.nrows() == dim { m.clone() } else { crate::linalg::embed(m, dim) };
    pauli::decompose(&embedded, drop_tol)
}

/// Convenience: Hermitian Pauli terms of `m` embedded in `n_qubits`.
pub fn hermitian_pauli_terms(
    m: &CMat,
    n_qubits: usize,
    drop_tol: f64,
) -> Result<Vec<crate::pauli::PauliTerm>> {
    let dim = 1usize << n_qubits;
    if m.nrows() > dim {
        return Err(Error::Dimension(format!(
            "matrix of dimension {} does not fit in {n_qubits} qubits",
            m.nrows()
        )));
    }
    let embedded = if m.nrows() == dim { m.clone() } else { crate::linalg::embed(m, dim) };
    pauli::hermitian_terms(&embedded, drop_tol)
}
