//! Measurement-error mitigation: tensored readout calibration, layered
//! linear inversion with nearest-distribution projection, and
//! physicality-constrained zero-noise extrapolation.
//!
//! Readout calibration partitions the measured qubits into sub-registers of
//! at most five qubits, prepares every basis state of the largest register
//! (smaller registers ride along on the same circuits), and estimates one
//! column-stochastic confusion matrix per register. Inversion then applies
//! the tensor product of (marginalized) inverse matrices across measurement
//! layers; because inverses need not be stochastic, the result is a
//! pseudo-distribution that is projected back onto the probability simplex.
//!
//! For runs with one recycled ancilla measured every step, all ancilla
//! layers share a single 2x2 confusion matrix, so the number of observed
//! ancilla 1s is a sufficient statistic and the layered inverse collapses
//! to a cheap power-weighted contraction.

use crate::engine::{run_counts, NoiseModel};
use crate::circuit::Circuit;
use crate::qp::{self, Qp, RMat, RVec};
use crate::{Error, Result};
use serde::{Deserialize, Serialize};
use std::collections::HashMap;

/// Largest allowed sub-register (keeps calibration matrices ≤ 32x32).
pub const MAX_SUB_REGISTER: usize = 5;

/// Per-sub-register confusion matrices M[observed, prepared].
#[derive(Clone, Debug)]
pub struct CalibrationSet {
    /// Disjoint qubit groups, each ascending.
    pub sub_registers: Vec<Vec<usize>>,
    pub matrices: Vec<RMat>,
    /// Calibration circuits executed (= 2^(largest register)).
    pub circuits_used: usize,
}

#[derive(Serialize, Deserialize)]
struct RawCalibration {
    sub_registers: Vec<Vec<usize>>,
    matrices: Vec<Vec<Vec<f64>>>,
    circuits_used: usize,
}

impl CalibrationSet {
    pub fn validate(&self) -> Result<()> {
        if self.sub_registers.len() != self.matrices.len() {
            return Err(Error::Dimension("one matrix per sub-register required".into()));
        }
        let mut seen = std::collections::HashSet::new();
        for (qs, m) in self.sub_registers.iter().zip(&self.matrices) {
            if qs.is_empty() || qs.len() > MAX_SUB_REGISTER {
                return Err(Error::InvalidParams(format!(
                    "sub-register size {} outside [1, {MAX_SUB_REGISTER}]",
                    qs.len()
                )));
            }
            if qs.windows(2).any(|w| w[1] <= w[0]) || qs.iter().any(|q| !seen.insert(*q)) {
                return Err(Error::InvalidParams("sub-registers must be ascending and disjoint".into()));
            }
            let d = 1usize << qs.len();
            if m.nrows() != d || m.ncols() != d {
                return Err(Error::Dimension(format!("expected a {d}x{d} confusion matrix")));
            }
            for c in 0..d {
                let col: f64 = (0..d).map(|r| m[(r, c)]).sum();
                if (col - 1.0).abs() > 1e-9 {
                    return Err(Error::InvalidParams(format!(
                        "confusion column {c} sums to {col}, not 1"
                    )));
                }
            }
            if m.iter().any(|&x| x < -1e-12) {
                return Err(Error::InvalidParams("confusion entries must be nonnegative".into()));
            }
            let cond = condition_number(m);
            if cond > 1e6 {
                return Err(Error::IllConditioned { cond });
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        let raw = RawCalibration {
            sub_registers: self.sub_registers.clone(),
            matrices: self
                .matrices
                .iter()
                .map(|m| (0..m.nrows()).map(|r| (0..m.ncols()).map(|c| m[(r, c)]).collect()).collect())
                .collect(),
            circuits_used: self.circuits_used,
        };
        serde_json::to_string_pretty(&raw)
            .map_err(|e| Error::InvalidParams(format!("calibration serialization failed: {e}")))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let raw: RawCalibration = serde_json::from_str(text)
            .map_err(|e| Error::InvalidParams(format!("calibration parse failed: {e}")))?;
        let matrices = raw
            .matrices
            .iter()
            .map(|rows| {
                let d = rows.len();
                RMat::from_fn(d, d, |r, c| rows[r][c])
            })
            .collect();
        let cal = CalibrationSet {
            sub_registers: raw.sub_registers,
            matrices,
            circuits_used: raw.circuits_used,
        };
        cal.validate()?;
        Ok(cal)
    }
}

fn condition_number(m: &RMat) -> f64 {
    let sv = m.clone().svd(false, false).singular_values;
    let smax = sv.iter().copied().fold(0.0, f64::max);
    let smin = sv.iter().copied().fold(f64::INFINITY, f64::min);
    if smin <= 0.0 {
        f64::INFINITY
    } else {
        smax / smin
    }
}

/// Runs the merged calibration schedule against the shot engine: for each
/// pattern t of the largest register, one circuit prepares t's low bits on
/// every register simultaneously, so 2^(max register size) circuits cover
/// the whole partition.
pub fn calibrate(
    n_qubits: usize,
    sub_registers: &[Vec<usize>],
    shots_per_circuit: usize,
    noise: Option<&NoiseModel>,
    seed: u64,
    qubit_cap: usize,
) -> Result<CalibrationSet> {
    if sub_registers.is_empty() {
        return Err(Error::InvalidParams("need at least one sub-register".into()));
    }
    for qs in sub_registers {
        if qs.iter().any(|&q| q >= n_qubits) {
            return Err(Error::InvalidParams("calibration qubit out of range".into()));
        }
    }
    if shots_per_circuit == 0 {
        return Err(Error::InvalidParams("need calibration shots".into()));
    }
    if shots_per_circuit < 1000 {
        log::warn!("calibration with {shots_per_circuit} shots per circuit is statistically thin");
    }
    let n_max = sub_registers.iter().map(Vec::len).max().unwrap();
    let circuits_used = 1usize << n_max;
    let mut tallies: Vec<RMat> =
        sub_registers.iter().map(|qs| RMat::zeros(1 << qs.len(), 1 << qs.len())).collect();

    for t in 0..circuits_used {
        let mut c = Circuit::new(n_qubits);
        let prepared: Vec<usize> =
            sub_registers.iter().map(|qs| t & ((1usize << qs.len()) - 1)).collect();
        for (qs, &v) in sub_registers.iter().zip(&prepared) {
            let w = qs.len();
            for (j, &q) in qs.iter().enumerate() {
                if (v >> (w - 1 - j)) & 1 == 1 {
                    c.x(q);
                }
            }
        }
        // measurement order fixes the clbit layout: register-major, then qubit
        for qs in sub_registers {
            for &q in qs {
                c.measure(q);
            }
        }
        let counts = run_counts(&c, shots_per_circuit, noise, seed.wrapping_add(t as u64), qubit_cap)?;
        for (bits, cnt) in counts {
            let mut cl = 0usize;
            for (g, qs) in sub_registers.iter().enumerate() {
                let w = qs.len();
                let mut observed = 0usize;
                for j in 0..w {
                    observed |= usize::from(bits[cl]) << (w - 1 - j);
                    cl += 1;
                }
                tallies[g][(observed, prepared[g])] += cnt as f64;
            }
        }
    }

    for m in &mut tallies {
        for c in 0..m.ncols() {
            let total: f64 = (0..m.nrows()).map(|r| m[(r, c)]).sum();
            if total == 0.0 {
                return Err(Error::InvalidParams(format!("calibration column {c} has no shots")));
            }
            for r in 0..m.nrows() {
                m[(r, c)] /= total;
            }
        }
    }
    let cal = CalibrationSet {
        sub_registers: sub_registers.to_vec(),
        matrices: tallies,
        circuits_used,
    };
    cal.validate()?;
    Ok(cal)
}

/// Marginalizes a register confusion matrix onto a subset of its bit
/// positions (MSB-first positions within the register): observed bits
/// outside the subset are summed over, prepared bits outside are averaged.
pub fn confusion_marginal(m: &RMat, width: usize, keep: &[usize]) -> Result<RMat> {
    if keep.is_empty() || keep.windows(2).any(|w| w[1] <= w[0]) || keep.iter().any(|&p| p >= width) {
        return Err(Error::InvalidParams("marginal positions must be ascending and in range".into()));
    }
    let d_full = 1usize << width;
    if m.nrows() != d_full || m.ncols() != d_full {
        return Err(Error::Dimension("confusion matrix width mismatch".into()));
    }
    let k = keep.len();
    let d_keep = 1usize << k;
    let extract = |v: usize| -> usize {
        keep.iter()
            .enumerate()
            .fold(0usize, |acc, (j, &p)| acc | (((v >> (width - 1 - p)) & 1) << (k - 1 - j)))
    };
    let mut out = RMat::zeros(d_keep, d_keep);
    for p in 0..d_full {
        for o in 0..d_full {
            out[(extract(o), extract(p))] += m[(o, p)];
        }
    }
    // each kept prepared value received 2^(width-k) full columns
    out /= (d_full / d_keep) as f64;
    Ok(out)
}

/// Joint confusion matrix over the listed qubits (ascending), assembled as
/// the tensor product of the per-register marginals covering them.
pub fn assemble_confusion(cal: &CalibrationSet, qubits: &[usize]) -> Result<RMat> {
    if qubits.is_empty() || qubits.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidParams("qubit list must be ascending and non-empty".into()));
    }
    let covered: std::collections::HashSet<usize> =
        cal.sub_registers.iter().flatten().copied().collect();
    if let Some(q) = qubits.iter().find(|q| !covered.contains(q)) {
        return Err(Error::InvalidParams(format!("qubit {q} is not calibrated")));
    }
    let w = qubits.len();
    let dim = 1usize << w;
    // per register: marginal matrix + positions of its kept qubits in `qubits`
    let mut pieces: Vec<(RMat, Vec<usize>)> = Vec::new();
    for (qs, m) in cal.sub_registers.iter().zip(&cal.matrices) {
        let keep: Vec<usize> =
            (0..qs.len()).filter(|&j| qubits.contains(&qs[j])).collect();
        if keep.is_empty() {
            continue;
        }
        let marg = confusion_marginal(m, qs.len(), &keep)?;
        let slots: Vec<usize> = keep
            .iter()
            .map(|&j| qubits.iter().position(|&q| q == qs[j]).unwrap())
            .collect();
        pieces.push((marg, slots));
    }
    let extract = |v: usize, slots: &[usize]| -> usize {
        slots
            .iter()
            .enumerate()
            .fold(0usize, |acc, (j, &s)| acc | (((v >> (w - 1 - s)) & 1) << (slots.len() - 1 - j)))
    };
    let mut out = RMat::zeros(dim, dim);
    for p in 0..dim {
        for o in 0..dim {
            let mut val = 1.0;
            for (m, slots) in &pieces {
                val *= m[(extract(o, slots), extract(p, slots))];
            }
            out[(o, p)] = val;
        }
    }
    Ok(out)
}

// --------------------------------------------------------------------------
// simplex projection
// --------------------------------------------------------------------------

/// l2-nearest vector with nonnegative entries summing to `total`
/// (sort-based threshold shift, O(n log n)).
pub fn simplex_projection(y: &[f64], total: f64) -> Result<Vec<f64>> {
    if !(total > 0.0) || !total.is_finite() {
        return Err(Error::InvalidParams(format!("projection total must be positive, got {total}")));
    }
    let mut u: Vec<f64> = y.to_vec();
    u.sort_by(|a, b| b.total_cmp(a));
    let mut acc = 0.0;
    let mut tau = 0.0;
    for (j, &uj) in u.iter().enumerate() {
        acc += uj;
        let candidate = (acc - total) / (j + 1) as f64;
        if uj - candidate > 0.0 {
            tau = candidate;
        }
    }
    Ok(y.iter().map(|&v| (v - tau).max(0.0)).collect())
}

/// Brute-force projection through the quadratic-program solver (test oracle).
pub fn simplex_projection_qp(y: &[f64], total: f64) -> Result<Vec<f64>> {
    let n = y.len();
    let mut ineq = Vec::with_capacity(n);
    for i in 0..n {
        let mut a = RVec::zeros(n);
        a[i] = -1.0;
        ineq.push((a, 0.0));
    }
    let problem = Qp {
        q: RMat::identity(n, n) * 2.0,
        lin: RVec::from_iterator(n, y.iter().map(|&v| -2.0 * v)),
        eq: vec![(RVec::from_element(n, 1.0), total)],
        ineq,
    };
    let start = RVec::from_element(n, total / n as f64);
    let sol = qp::solve(&problem, &start, 1e-12, 2000)?;
    Ok(sol.x.iter().copied().collect())
}

// --------------------------------------------------------------------------
// layered inversion
// --------------------------------------------------------------------------

/// Applies a matrix along one axis of a flattened layer-major tensor.
fn apply_along_axis(v: &mut [f64], dims: &[usize], axis: usize, m: &RMat) {
    let d = dims[axis];
    let stride: usize = dims[axis + 1..].iter().product();
    let block = d * stride;
    let total = v.len();
    let mut x = vec![0.0f64; d];
    for base in (0..total).step_by(block) {
        for off in 0..stride {
            for (i, xi) in x.iter_mut().enumerate() {
                *xi = v[base + i * stride + off];
            }
            for r in 0..d {
                let mut acc = 0.0;
                for (i, &xi) in x.iter().enumerate() {
                    acc += m[(r, i)] * xi;
                }
                v[base + r * stride + off] = acc;
            }
        }
    }
}

/// Raw layered inversion: applies the tensor product of per-layer inverse
/// confusion matrices to the observed histogram. Keys are per-layer observed
/// values; the returned pseudo-distribution is layer-major flattened.
pub fn invert_layered(
    counts: &HashMap<Vec<u32>, u64>,
    layers: &[Vec<usize>],
    cal: &CalibrationSet,
) -> Result<Vec<f64>> {
    if layers.is_empty() {
        return Err(Error::InvalidParams("need at least one measurement layer".into()));
    }
    let dims: Vec<usize> = layers.iter().map(|l| 1usize << l.len()).collect();
    let total_dim: usize = dims.iter().product();
    let mut v = vec![0.0f64; total_dim];
    for (key, &cnt) in counts {
        if key.len() != layers.len() {
            return Err(Error::Dimension(format!(
                "count key has {} layers, structure has {}",
                key.len(),
                layers.len()
            )));
        }
        let mut idx = 0usize;
        for (l, &k) in key.iter().enumerate() {
            if (k as usize) >= dims[l] {
                return Err(Error::Dimension(format!("layer {l} outcome {k} out of range")));
            }
            idx = idx * dims[l] + k as usize;
        }
        v[idx] += cnt as f64;
    }
    for (l, layer) in layers.iter().enumerate() {
        let m = assemble_confusion(cal, layer)?;
        let inv = m
            .try_inverse()
            .ok_or_else(|| Error::IllConditioned { cond: f64::INFINITY })?;
        apply_along_axis(&mut v, &dims, l, &inv);
    }
    Ok(v)
}

/// Layered inversion followed by projection onto the simplex of the shot
/// total — the paper's full readout-mitigation step.
pub fn mitigate_counts(
    counts: &HashMap<Vec<u32>, u64>,
    layers: &[Vec<usize>],
    cal: &CalibrationSet,
) -> Result<Vec<f64>> {
    let shots: u64 = counts.values().sum();
    let v = invert_layered(counts, layers, cal)?;
    simplex_projection(&v, shots as f64)
}

/// Post-selected layered inversion for step-recycled ancilla runs: with all
/// ancilla layers sharing one confusion matrix, the mitigated all-zero
/// ancilla slice is sum_k a^(layers-k) b^k M_sys^{-1} counts(k, .), where
/// a, b are the top row of the 2x2 ancilla inverse.
pub fn contract_postselected(
    counts: &HashMap<(u32, u32), u64>,
    n_layers: usize,
    anc_inverse: &RMat,
    sys_inverse: &RMat,
) -> Result<Vec<f64>> {
    let d = sys_inverse.nrows();
    if anc_inverse.nrows() != 2 || anc_inverse.ncols() != 2 || sys_inverse.ncols() != d {
        return Err(Error::Dimension("inverse matrices have unexpected shapes".into()));
    }
    let (a, b) = (anc_inverse[(0, 0)], anc_inverse[(0, 1)]);
    let mut g = vec![0.0f64; d];
    for (&(k, sys), &cnt) in counts {
        if k as usize > n_layers || (sys as usize) >= d {
            return Err(Error::Dimension(format!("count key ({k}, {sys}) out of range")));
        }
        g[sys as usize] += cnt as f64 * a.powi((n_layers - k as usize) as i32) * b.powi(k as i32);
    }
    let mut out = vec![0.0f64; d];
    for (r, o) in out.iter_mut().enumerate() {
        *o = (0..d).map(|c| sys_inverse[(r, c)] * g[c]).sum();
    }
    Ok(out)
}

/// Contraction plus projection; returns the per-value distribution (summing
/// to the recovered success mass) and that mass.
pub fn mitigate_postselected(
    counts: &HashMap<(u32, u32), u64>,
    n_layers: usize,
    anc_inverse: &RMat,
    sys_inverse: &RMat,
) -> Result<(Vec<f64>, f64)> {
    let v = contract_postselected(counts, n_layers, anc_inverse, sys_inverse)?;
    let mass: f64 = v.iter().sum();
    if !(mass > 0.0) {
        return Err(Error::Solver(format!(
            "mitigated success mass {mass} is not positive"
        )));
    }
    let projected = simplex_projection(&v, mass)?;
    Ok((projected, mass))
}

// --------------------------------------------------------------------------
// zero-noise extrapolation
// --------------------------------------------------------------------------

/// Physicality constraints imposed on the joint affine regression.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ZneConstraint {
    /// Plain least squares.
    Unconstrained,
    /// Observables are occupancies: each line stays in [0,1] on [0, λmax],
    /// intercepts sum to the particle number, gradients sum to zero.
    Occupancy { p: f64 },
    /// Observables are -<H_A> values: lines stay in [-p γ, 0] on [0, λmax].
    ImaginaryEnergy { p: f64, gamma: f64 },
}

#[derive(Clone, Debug)]
pub struct ZneFit {
    pub intercepts: Vec<f64>,
    pub gradients: Vec<f64>,
    pub kkt_residual: f64,
}

/// Joint affine extrapolation to λ = 0 of per-observable noisy values.
/// `values[l][k]` is observable k measured at noise scale `lambdas[l]`.
pub fn zne(lambdas: &[f64], values: &[Vec<f64>], constraint: &ZneConstraint) -> Result<ZneFit> {
    if lambdas.len() < 2 || lambdas.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidParams("need at least two increasing noise scales".into()));
    }
    if (lambdas[0] - 1.0).abs() > 1e-12 {
        return Err(Error::InvalidParams(format!(
            "noise scales must start at 1, got {}",
            lambdas[0]
        )));
    }
    if values.len() != lambdas.len() || values.is_empty() {
        return Err(Error::Dimension("one value row per noise scale required".into()));
    }
    let kn = values[0].len();
    if kn == 0 || values.iter().any(|row| row.len() != kn) {
        return Err(Error::Dimension("ragged observable rows".into()));
    }
    let l = lambdas.len() as f64;
    let s1: f64 = lambdas.iter().sum();
    let s2: f64 = lambdas.iter().map(|x| x * x).sum();
    let lam_max = *lambdas.last().unwrap();

    // unknowns x = [c_0..c_{K-1}, m_0..m_{K-1}]
    let n = 2 * kn;
    let mut q = RMat::zeros(n, n);
    let mut lin = RVec::zeros(n);
    for k in 0..kn {
        q[(k, k)] = 2.0 * l;
        q[(k, kn + k)] = 2.0 * s1;
        q[(kn + k, k)] = 2.0 * s1;
        q[(kn + k, kn + k)] = 2.0 * s2;
        let sy: f64 = values.iter().map(|row| row[k]).sum();
        let sly: f64 = values.iter().zip(lambdas).map(|(row, lam)| lam * row[k]).sum();
        lin[k] = -2.0 * sy;
        lin[kn + k] = -2.0 * sly;
    }

    let line_bounds = |lo: f64, hi: f64| -> Vec<(RVec, f64)> {
        // affine lines attain extrema at interval ends: bound c and c + λmax m
        let mut rows = Vec::with_capacity(4 * kn);
        for k in 0..kn {
            for &(scale, at_end) in &[(1.0, false), (1.0, true)] {
                let mut upper = RVec::zeros(n);
                upper[k] = scale;
                if at_end {
                    upper[kn + k] = scale * lam_max;
                }
                let mut lower = RVec::zeros(n);
                lower[k] = -scale;
                if at_end {
                    lower[kn + k] = -scale * lam_max;
                }
                rows.push((upper, hi));
                rows.push((lower, -lo));
            }
        }
        rows
    };

    let (eq, ineq, x0) = match *constraint {
        ZneConstraint::Unconstrained => (vec![], vec![], RVec::zeros(n)),
        ZneConstraint::Occupancy { p } => {
            if !(p > 0.0) || p > kn as f64 {
                return Err(Error::InvalidParams(format!(
                    "particle number {p} incompatible with {kn} occupancy lines"
                )));
            }
            let mut sum_c = RVec::zeros(n);
            let mut sum_m = RVec::zeros(n);
            for k in 0..kn {
                sum_c[k] = 1.0;
                sum_m[kn + k] = 1.0;
            }
            let mut x0 = RVec::zeros(n);
            for k in 0..kn {
                x0[k] = p / kn as f64;
            }
            (vec![(sum_c, p), (sum_m, 0.0)], line_bounds(0.0, 1.0), x0)
        }
        ZneConstraint::ImaginaryEnergy { p, gamma } => {
            if !(p > 0.0) || !(gamma > 0.0) {
                return Err(Error::InvalidParams("need positive p and gamma".into()));
            }
            let mut x0 = RVec::zeros(n);
            for k in 0..kn {
                x0[k] = -p * gamma / 2.0;
            }
            (vec![], line_bounds(-p * gamma, 0.0), x0)
        }
    };

    let problem = Qp { q, lin, eq, ineq };
    let sol = qp::solve(&problem, &x0, 1e-10, 2000)?;
    Ok(ZneFit {
        intercepts: (0..kn).map(|k| sol.x[k]).collect(),
        gradients: (0..kn).map(|k| sol.x[kn + k]).collect(),
        kkt_residual: sol.kkt_residual,
    })
}
