//! Post-processing of measured occupancy series into physical quantities.
//!
//! The non-unitary evolution shrinks the state norm A_t, and everything
//! downstream hinges on recovering it from data the device actually
//! produces. Two routes exist: integrate the measured normalized b-site
//! occupancy (A_t = exp(-gamma ∫ Σ<n_b>_rho), the production method, robust
//! because it uses post-selected distributions only) or take the square
//! root of the ancilla success probability (approximate — Trotter, LCU and
//! noise all distort it, kept as a diagnostic). With A_t in hand, escape
//! probabilities per cell follow by one more time integral.

use crate::{Error, Result};

/// Cell-resolved escape probabilities over a time grid.
#[derive(Clone, Debug)]
pub struct EscapeProfile {
    pub time_grid: Vec<f64>,
    /// P_x(t): outer index time, inner index cell (0-based cell x-1).
    pub p_x_of_t: Vec<Vec<f64>>,
    /// P(t) = sum over cells.
    pub p_of_t: Vec<f64>,
    /// P_x at t_max — the escape-probability estimate per cell.
    pub final_px: Vec<f64>,
    /// 1 - P(t_max): probability not yet escaped.
    pub residual: f64,
}

/// Default convergence threshold on P(t_max).
pub const TERMINATION_THRESHOLD: f64 = 0.995;

fn check_grid(time_grid: &[f64]) -> Result<()> {
    if time_grid.is_empty() || time_grid[0] != 0.0 {
        return Err(Error::InvalidParams("time grid must start at 0".into()));
    }
    if time_grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidParams("time grid must be strictly increasing".into()));
    }
    Ok(())
}

/// Cumulative trapezoid integral of y over t, starting at 0.
fn cumtrapz(t: &[f64], y: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(t.len());
    let mut acc = 0.0;
    out.push(0.0);
    for j in 1..t.len() {
        acc += 0.5 * (y[j] + y[j - 1]) * (t[j] - t[j - 1]);
        out.push(acc);
    }
    out
}

/// Norm recovery from normalized occupancies:
/// A_t = exp(-gamma ∫0^t Σ_x <n_{xb}>_rho dτ), composite trapezoid.
pub fn recover_norm_integral(
    time_grid: &[f64],
    b_occupancy_sums: &[f64],
    gamma: f64,
) -> Result<Vec<f64>> {
    check_grid(time_grid)?;
    if b_occupancy_sums.len() != time_grid.len() {
        return Err(Error::Dimension(format!(
            "{} occupancy samples for {} grid points",
            b_occupancy_sums.len(),
            time_grid.len()
        )));
    }
    if let Some(bad) = b_occupancy_sums.iter().find(|&&v| v < -1e-6) {
        return Err(Error::InvalidParams(format!(
            "negative b occupancy {bad} — raw counts must be mitigated/clipped first"
        )));
    }
    Ok(cumtrapz(time_grid, b_occupancy_sums)
        .into_iter()
        .map(|i| (-gamma * i).exp())
        .collect())
}

/// Norm recovery from the ancilla success probability: A_t ≈ sqrt(S_t).
/// Approximate by construction; use as a cross-check.
pub fn recover_norm_success(s_t: &[f64]) -> Result<Vec<f64>> {
    if let Some(bad) = s_t.iter().find(|&&s| !(s > 0.0 && s <= 1.0 + 1e-12)) {
        return Err(Error::InvalidParams(format!(
            "success probabilities must lie in (0, 1], got {bad}"
        )));
    }
    Ok(s_t.iter().map(|s| s.sqrt()).collect())
}

/// Escape profile from normalized per-cell b occupancies and a recovered
/// norm series: P_x(t) = 2 gamma ∫0^t A_τ² <n_{xb}>_rho dτ.
pub fn escape_from_occupancies(
    time_grid: &[f64],
    b_occ_rho: &[Vec<f64>],
    a_t: &[f64],
    gamma: f64,
) -> Result<EscapeProfile> {
    check_grid(time_grid)?;
    let nt = time_grid.len();
    if b_occ_rho.len() != nt || a_t.len() != nt {
        return Err(Error::Dimension("occupancy/norm series must match the grid".into()));
    }
    let n_cells = b_occ_rho[0].len();
    if b_occ_rho.iter().any(|row| row.len() != n_cells) {
        return Err(Error::Dimension("ragged occupancy rows".into()));
    }
    let mut p_x_of_t = vec![vec![0.0; n_cells]; nt];
    for x in 0..n_cells {
        let integrand: Vec<f64> =
            (0..nt).map(|j| 2.0 * gamma * a_t[j] * a_t[j] * b_occ_rho[j][x]).collect();
        let px = cumtrapz(time_grid, &integrand);
        for j in 0..nt {
            p_x_of_t[j][x] = px[j];
        }
    }
    let p_of_t: Vec<f64> = p_x_of_t.iter().map(|row| row.iter().sum()).collect();
    let final_px = p_x_of_t[nt - 1].clone();
    let residual = 1.0 - p_of_t[nt - 1];
    Ok(EscapeProfile { time_grid: time_grid.to_vec(), p_x_of_t, p_of_t, final_px, residual })
}

/// True when the total escape probability has converged (last P >= threshold).
pub fn is_terminated(p_of_t: &[f64], threshold: f64) -> bool {
    p_of_t.last().is_some_and(|&p| p >= threshold)
}

/// Per-cell b-site occupancies from flattened 2N-site rows.
pub fn b_cell_occupancies(occupancies: &[Vec<f64>]) -> Vec<Vec<f64>> {
    occupancies
        .iter()
        .map(|row| row.iter().skip(1).step_by(2).copied().collect())
        .collect()
}

/// Total b-site occupancy per time row.
pub fn b_occupancy_totals(occupancies: &[Vec<f64>]) -> Vec<f64> {
    occupancies.iter().map(|row| row.iter().skip(1).step_by(2).sum()).collect()
}
