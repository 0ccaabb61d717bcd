//! Dense exact-diagonalization references: non-unitary propagators,
//! norm/occupancy evolution, escape profiles, and complex spectra.
//!
//! Everything here works directly on the sector Hamiltonian with textbook
//! linear algebra — no circuits, no sampling — and serves as the ground
//! truth the stepping engine and the measurement pipeline are held against.

use crate::analysis::{self, EscapeProfile};
use crate::encoding::SectorEncoding;
use crate::linalg::{expm, CMat, CVec};
use crate::{Error, Result};
use num_complex::Complex64;
use std::collections::HashMap;

/// Complex eigenvalues with the derived dissipative figures of merit.
#[derive(Clone, Debug)]
pub struct SpectrumResult {
    pub eigenvalues: Vec<Complex64>,
    pub max_im: f64,
    pub min_im: f64,
    /// Dissipative gap: -max Im E, clamped at zero.
    pub gap: f64,
}

/// Default number of trapezoid intervals for escape-profile grids.
pub const DEFAULT_GRID: usize = 2000;

/// e^{-iHt} for a general (possibly non-Hermitian) H.
pub fn propagator(h: &CMat, t: f64) -> Result<CMat> {
    let gen = h.map(|x| x * Complex64::new(0.0, -t));
    let u = expm(&gen);
    if u.iter().any(|x| !x.re.is_finite() || !x.im.is_finite()) {
        return Err(Error::Solver(format!("propagator at t = {t} overflowed")));
    }
    Ok(u)
}

/// Relative residual of d/dt e^{-iHt} + iH e^{-iHt} at one t, with the
/// derivative taken by a fourth-order central difference.
pub fn derivative_residual(h: &CMat, t: f64) -> Result<f64> {
    let step = 3e-3 * t.abs().max(1.0);
    let um2 = propagator(h, t - 2.0 * step)?;
    let um1 = propagator(h, t - step)?;
    let up1 = propagator(h, t + step)?;
    let up2 = propagator(h, t + 2.0 * step)?;
    let u = propagator(h, t)?;
    let scale = Complex64::new(1.0 / (12.0 * step), 0.0);
    let deriv = ((&up1 - &um1) * Complex64::new(8.0, 0.0) - (&up2 - &um2)) * scale;
    let residual = &deriv + h.map(|x| x * Complex64::new(0.0, 1.0)) * &u;
    Ok(crate::linalg::norm_1(&residual) / crate::linalg::norm_1(&u).max(1e-300))
}

/// Exact norm and occupancy series of |ω_t> = e^{-iHt}|ψ0>.
#[derive(Clone, Debug)]
pub struct ExactEvolution {
    pub times: Vec<f64>,
    /// A_t = ||ω_t||.
    pub norm: Vec<f64>,
    /// <n_z>_ω per flattened site (carries the decaying norm).
    pub occupancies_unnormalized: Vec<Vec<f64>>,
    /// <n_z>_ρ = <n_z>_ω / A_t².
    pub occupancies_normalized: Vec<Vec<f64>>,
    /// True when the grid was cut short because A_t underflowed.
    pub truncated: bool,
}

/// Occupancy lookup for every sector basis state.
pub fn sector_occupancy_table(enc: &SectorEncoding) -> Result<Vec<Vec<u8>>> {
    (0..enc.dim()).map(|i| enc.occupancy_from_index(i)).collect()
}

/// Evolves ψ0 exactly over the given strictly increasing grid (t_0 = 0),
/// reusing step propagators across equal grid spacings.
pub fn evolve_exact(
    h: &CMat,
    psi0: &[Complex64],
    times: &[f64],
    occ_table: &[Vec<u8>],
) -> Result<ExactEvolution> {
    if times.is_empty() || times[0] != 0.0 || times.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidParams("time grid must start at 0 and increase".into()));
    }
    let d = h.nrows();
    if psi0.len() != d || occ_table.len() != d {
        return Err(Error::Dimension(format!(
            "state/occupancy tables must match the {d}-dimensional Hamiltonian"
        )));
    }
    let norm0: f64 = psi0.iter().map(|a| a.norm_sqr()).sum();
    if (norm0 - 1.0).abs() > 1e-8 {
        return Err(Error::InvalidParams(format!("ψ0 must be normalized, |ψ0|² = {norm0}")));
    }
    let n_sites = occ_table.first().map_or(0, Vec::len);

    let mut steps: HashMap<u64, CMat> = HashMap::new();
    let mut omega = CVec::from_column_slice(psi0);
    let mut out = ExactEvolution {
        times: Vec::with_capacity(times.len()),
        norm: Vec::with_capacity(times.len()),
        occupancies_unnormalized: Vec::with_capacity(times.len()),
        occupancies_normalized: Vec::with_capacity(times.len()),
        truncated: false,
    };

    let record = |out: &mut ExactEvolution, t: f64, omega: &CVec| {
        let a2: f64 = omega.iter().map(|a| a.norm_sqr()).sum();
        let mut occ_w = vec![0.0f64; n_sites];
        for i in 0..d {
            let w = omega[i].norm_sqr();
            if w == 0.0 {
                continue;
            }
            for (z, &o) in occ_table[i].iter().enumerate() {
                if o == 1 {
                    occ_w[z] += w;
                }
            }
        }
        let occ_r: Vec<f64> = occ_w.iter().map(|v| v / a2).collect();
        out.times.push(t);
        out.norm.push(a2.sqrt());
        out.occupancies_unnormalized.push(occ_w);
        out.occupancies_normalized.push(occ_r);
    };

    record(&mut out, 0.0, &omega);
    for w in times.windows(2) {
        let dt = w[1] - w[0];
        let u = match steps.get(&dt.to_bits()) {
            Some(u) => u,
            None => {
                let u = propagator(h, dt)?;
                steps.entry(dt.to_bits()).or_insert(u)
            }
        };
        omega = u * &omega;
        let a2: f64 = omega.iter().map(|a| a.norm_sqr()).sum();
        if a2.sqrt() < 1e-12 {
            out.truncated = true;
            log::warn!("norm underflow at t = {}; truncating the grid", w[1]);
            break;
        }
        record(&mut out, w[1], &omega);
    }
    Ok(out)
}

/// Escape profile by direct integration of the unnormalized b occupancies:
/// P_x(t) = 2 gamma ∫0^t <n_{xb}>_ω dτ on a uniform grid with `intervals`
/// trapezoid panels.
pub fn escape_profile(
    h: &CMat,
    psi0: &[Complex64],
    occ_table: &[Vec<u8>],
    gamma: f64,
    t_max: f64,
    intervals: usize,
) -> Result<EscapeProfile> {
    if !(t_max > 0.0) || intervals < 2 {
        return Err(Error::InvalidParams("need t_max > 0 and at least 2 intervals".into()));
    }
    let times: Vec<f64> = (0..=intervals).map(|j| t_max * j as f64 / intervals as f64).collect();
    let evo = evolve_exact(h, psi0, &times, occ_table)?;
    // A_t ≈ 1 on the ω series: escape integrates the raw (norm-carrying)
    // occupancies, so pass unnormalized rows with a unit norm series.
    let b_rows = analysis::b_cell_occupancies(&evo.occupancies_unnormalized);
    let ones = vec![1.0; evo.times.len()];
    let profile = analysis::escape_from_occupancies(&evo.times, &b_rows, &ones, gamma)?;
    if !analysis::is_terminated(&profile.p_of_t, 0.99) {
        log::warn!(
            "escape profile not converged: P(t_max) = {:.4} < 0.99",
            profile.p_of_t.last().copied().unwrap_or(0.0)
        );
    }
    Ok(profile)
}

/// Dense nonsymmetric eigensolve with the dissipative figures of merit.
pub fn spectrum(h: &CMat) -> Result<SpectrumResult> {
    let eigenvalues = crate::linalg::eigenvalues(h)?;
    let max_im = eigenvalues.iter().map(|e| e.im).fold(f64::NEG_INFINITY, f64::max);
    let min_im = eigenvalues.iter().map(|e| e.im).fold(f64::INFINITY, f64::min);
    Ok(SpectrumResult { eigenvalues, max_im, min_im, gap: (-max_im).max(0.0) })
}
