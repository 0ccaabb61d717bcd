//! Acceptance gate: every headline behavior of the stack, each checked at a
//! fixed tolerance against the exact-diagonalization oracle. One test per
//! behavior; each prints a PASS line with the measured margins.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use edgeburst::analysis;
use edgeburst::circuit::{fold, twirl, Circuit, Instruction, TwirlTable};
use edgeburst::encoding::SectorEncoding;
use edgeburst::engine::{self, EvolveOptions, MhStrategy};
use edgeburst::lcu;
use edgeburst::linalg::{expm, CVec, C_ONE};
use edgeburst::mitigation::{
    assemble_confusion, simplex_projection, zne, CalibrationSet, ZneConstraint,
};
use edgeburst::model::{self, Boundary, LadderParams};
use edgeburst::oracle;
use edgeburst::pauli;
use edgeburst::qp::{RMat, RVec};

use edgeburst_cli::config::ExperimentConfig;
use edgeburst_cli::pipeline;
use edgeburst_cli::presets;

// ----------------------------------------------------------------------------
// helpers
// ----------------------------------------------------------------------------

fn load(name: &str) -> ExperimentConfig {
    presets::load(name).unwrap_or_else(|e| panic!("preset {name}: {e}"))
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0f64, f64::max)
}

fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in xs.iter().enumerate() {
        if v > xs[best] {
            best = i;
        }
    }
    best
}

/// Engine run plus the oracle reference evaluated on the engine's recorded
/// grid, so quadrature error cancels in the comparison.
struct Pair {
    engine_px: Vec<f64>,
    oracle_px: Vec<f64>,
    engine_total: f64,
    oracle_total: f64,
}

fn engine_vs_oracle(cfg: &ExperimentConfig) -> Pair {
    let art = pipeline::run_evolution(cfg).unwrap();
    let reference = pipeline::oracle_run_on_grid(cfg, &art.result.time_grid).unwrap();
    Pair {
        engine_total: art.escape.final_px.iter().sum(),
        oracle_total: reference.escape.final_px.iter().sum(),
        engine_px: art.escape.final_px,
        oracle_px: reference.escape.final_px,
    }
}

// ----------------------------------------------------------------------------
// escape-burst phenomenology
// ----------------------------------------------------------------------------

#[test]
fn edge_burst_peaks_at_the_open_boundary() {
    let cfg = load("edge-burst-N8");
    let x0 = cfg.particles[0].cell;
    let pair = engine_vs_oracle(&cfg);

    // interior cells 1..x0-1: the escape profile must peak at the boundary
    let interior = &pair.engine_px[..x0 - 1];
    assert_eq!(argmax(interior) + 1, 1, "interior peak away from the boundary");
    assert!(
        pair.engine_px[0] >= 2.0 * pair.engine_px[1],
        "no burst: P1 = {}, P2 = {}",
        pair.engine_px[0],
        pair.engine_px[1]
    );
    let err = max_abs_diff(&pair.engine_px, &pair.oracle_px);
    assert!(err <= 0.02, "engine deviates from the oracle by {err}");
    println!(
        "PASS edge burst: P1 = {:.4}, P1/P2 = {:.2}, max|engine - oracle| = {:.2e}",
        pair.engine_px[0],
        pair.engine_px[0] / pair.engine_px[1],
        err
    );
}

#[test]
fn trivial_regime_peaks_at_the_initial_cell() {
    let cfg = load("trivial-N8");
    let x0 = cfg.particles[0].cell;
    let pair = engine_vs_oracle(&cfg);
    assert_eq!(argmax(&pair.engine_px) + 1, x0, "engine peak moved away from x0");
    assert_eq!(argmax(&pair.oracle_px) + 1, x0, "oracle peak moved away from x0");
    println!(
        "PASS trivial regime: engine and oracle both peak at cell {x0} (P = {:.4})",
        pair.engine_px[x0 - 1]
    );
}

#[test]
fn boundary_spike_contrast_persists_at_large_size() {
    let burst = load("edge-burst-N64");
    let trivial = load("trivial-N64");

    let b = engine_vs_oracle(&burst);
    for (label, px) in [("engine", &b.engine_px), ("oracle", &b.oracle_px)] {
        assert!(
            px[0] >= 5.0 * px[1],
            "{label}: no x = 1 spike in the burst regime (P1 = {}, P2 = {})",
            px[0],
            px[1]
        );
    }
    assert!(b.engine_total >= 0.995, "burst run not terminated: {}", b.engine_total);
    assert!(b.oracle_total >= 0.995, "oracle burst profile incomplete: {}", b.oracle_total);

    let t = engine_vs_oracle(&trivial);
    for (label, px) in [("engine", &t.engine_px), ("oracle", &t.oracle_px)] {
        assert!(px[0] <= 0.005, "{label}: spurious x = 1 spike ({})", px[0]);
    }
    assert!(t.engine_total >= 0.995, "trivial run not terminated: {}", t.engine_total);

    println!(
        "PASS large lattice: burst P1 = {:.4} >= 5 x P2 = {:.4}; trivial P1 = {:.2e}; escape {:.4}/{:.4}",
        b.engine_px[0],
        b.engine_px[1],
        t.engine_px[0],
        b.engine_total,
        t.engine_total
    );
}

// ----------------------------------------------------------------------------
// stepping accuracy
// ----------------------------------------------------------------------------

#[test]
fn stepping_error_halves_when_steps_double() {
    let cfg = load("edge-burst-N8");
    let params = cfg.ladder_params().unwrap();
    let enc = cfg.encoding().unwrap();
    let start = cfg.initial_sites().unwrap();
    let h = model::build_many_body(&params, &enc).unwrap();
    let table = oracle::sector_occupancy_table(&enc).unwrap();
    let mut psi0 = CVec::zeros(enc.dim());
    psi0[enc.rank(&start).unwrap()] = C_ONE;

    let max_error = |steps: usize| -> f64 {
        let opts = EvolveOptions::exact(10.0, steps);
        let run = engine::evolve(&params, &enc, &start, &opts).unwrap();
        let exact = oracle::evolve_exact(&h, psi0.as_slice(), &run.time_grid, &table).unwrap();
        let mut err = 0.0f64;
        for (a, b) in run.occupancies.iter().zip(&exact.occupancies_normalized) {
            err = err.max(max_abs_diff(a, b));
        }
        err
    };

    let coarse = max_error(100);
    let fine = max_error(200);
    let ratio = coarse / fine;
    assert!(
        (1.4..=2.6).contains(&ratio),
        "error ratio {ratio} outside [1.4, 2.6] ({coarse} vs {fine})"
    );
    println!("PASS stepping order: occupancy error {coarse:.2e} -> {fine:.2e}, ratio {ratio:.2}");
}

// ----------------------------------------------------------------------------
// loss realizations
// ----------------------------------------------------------------------------

/// Largest deviation between the ancilla-0 block of one gate-level loss step
/// and the exact decay map on the physical sector.
fn onsite_block_error(n_cells: usize, p: usize, gamma: f64, dt: f64) -> f64 {
    let params = LadderParams::new(n_cells, 0.0, 0.0, gamma, Boundary::Open).unwrap();
    let enc = SectorEncoding::new(n_cells, p).unwrap();
    let mut opts = EvolveOptions::exact(dt, 1);
    opts.mh = MhStrategy::CircuitLevel;
    let ops = engine::build_step_operators(&params, &enc, dt, &opts).unwrap();

    // the pre-measurement unitary carries the realized map in its ancilla-0
    // block, so drop the trailing measurement and reset
    let mut gate_block = ops.step_circuit().unwrap().clone();
    gate_block.instructions.retain(|ins| {
        !matches!(ins, Instruction::Measure { .. } | Instruction::ConditionalX { .. })
    });
    let u = gate_block.unitary().unwrap();
    let table = oracle::sector_occupancy_table(&enc).unwrap();

    // qubit 0 is the most significant bit and the ancilla is the last qubit,
    // so (ancilla 0, system i) sits at statevector index 2i
    let mut err = 0.0f64;
    for (i, occ) in table.iter().enumerate() {
        let n_b: u32 = occ.iter().skip(1).step_by(2).map(|&o| u32::from(o)).sum();
        let decay = (-gamma * dt * f64::from(n_b)).exp();
        for j in 0..table.len() {
            let want = if i == j { Complex64::new(decay, 0.0) } else { Complex64::new(0.0, 0.0) };
            err = err.max((u[(2 * i, 2 * j)] - want).norm());
        }
    }
    err
}

#[test]
fn onsite_loss_step_is_exact_on_the_physical_sector() {
    let gamma = 0.5;
    let mut worst = 0.0f64;
    for &(n_cells, p) in &[(3usize, 1usize), (4, 2)] {
        for &gdt in &[0.01f64, 0.1, 1.0] {
            let err = onsite_block_error(n_cells, p, gamma, gdt / gamma);
            assert!(
                err <= 1e-10,
                "one-step loss block off by {err} at gamma*dt = {gdt}, p = {p}"
            );
            worst = worst.max(err);
        }
    }
    println!("PASS exact on-site loss step: worst block error {worst:.2e} (tolerance 1e-10)");
}

#[test]
fn solved_expansion_error_falls_fast_when_steps_shrink() {
    let gamma = 0.5;
    let params = LadderParams::new(3, 0.0, 0.0, gamma, Boundary::Open).unwrap();
    let enc = SectorEncoding::new(3, 1).unwrap();
    let h = model::build_many_body(&params, &enc).unwrap();
    let split = model::split(&h).unwrap();
    let root = lcu::hermitian_root(&split.antihermitian_generator).unwrap();

    let step_error = |dt: f64| -> f64 {
        let sol = lcu::solve_expansion(2, 1, dt, true).unwrap();
        let realized = sol.realized_operator(&root.matrix);
        let exact = expm(&(&split.antihermitian_generator * Complex64::new(-dt, 0.0)));
        (realized - exact).iter().map(|e| e.norm()).fold(0.0f64, f64::max)
    };

    let coarse = step_error(0.2);
    let fine = step_error(0.1);
    let ratio = coarse / fine;
    assert!(
        ratio >= 3.4,
        "order-2 expansion error ratio {ratio} < 3.4 ({coarse} vs {fine})"
    );
    println!("PASS solved expansion: one-step error {coarse:.2e} -> {fine:.2e}, ratio {ratio:.2}");
}

// ----------------------------------------------------------------------------
// spectral scan and symmetries
// ----------------------------------------------------------------------------

#[test]
fn purified_decay_rates_track_the_exact_gap_scan() {
    let cfg = load("spectral-N12");
    let gamma = cfg.model.gamma;
    let scan = pipeline::run_spectral(&cfg).unwrap();

    let mut previous_gap = 0.0f64;
    let mut worst = 0.0f64;
    for p in &scan.points {
        if p.ratio <= 1.0 + 1e-12 {
            assert!(
                p.dissipative_gap <= 1e-8,
                "gap should close at ratio {}: {}",
                p.ratio,
                p.dissipative_gap
            );
        } else {
            assert!(
                p.dissipative_gap > previous_gap,
                "gap should grow monotonically past the transition: {} -> {} at ratio {}",
                previous_gap,
                p.dissipative_gap,
                p.ratio
            );
        }
        previous_gap = p.dissipative_gap;
        let err = (p.engine_max_im - p.oracle_max_im).abs();
        assert!(
            err <= 0.02 * gamma,
            "purification misses the exact rate by {err} at ratio {}",
            p.ratio
        );
        assert!(p.converged, "purification still drifting at ratio {}", p.ratio);
        worst = worst.max(err);
    }
    println!(
        "PASS gap scan: {} points, worst |engine - oracle| = {:.2e} (tolerance {:.2e})",
        scan.points.len(),
        worst,
        0.02 * gamma
    );
}

/// Greedy tolerance matching between two eigenvalue multisets.
fn spectrum_mismatch(a: &[Complex64], b: &[Complex64]) -> f64 {
    assert_eq!(a.len(), b.len());
    let mut used = vec![false; b.len()];
    let mut worst = 0.0f64;
    for &e in a {
        let mut best = f64::INFINITY;
        let mut best_j = 0;
        for (j, &f) in b.iter().enumerate() {
            if !used[j] && (e - f).norm() < best {
                best = (e - f).norm();
                best_j = j;
            }
        }
        used[best_j] = true;
        worst = worst.max(best);
    }
    worst
}

#[test]
fn periodic_spectra_keep_both_reflection_symmetries() {
    let gamma = 0.4;
    let mut worst = 0.0f64;
    for &v1 in &[0.5f64, 1.3] {
        let params = LadderParams::new(12, v1, 1.0, gamma, Boundary::Periodic).unwrap();
        let h = model::build_single_particle(&params).unwrap();
        let spec = oracle::spectrum(&h).unwrap().eigenvalues;

        let negated: Vec<Complex64> = spec.iter().map(|e| -e.conj()).collect();
        let shifted: Vec<Complex64> =
            spec.iter().map(|e| e.conj() - Complex64::new(0.0, gamma)).collect();

        let m1 = spectrum_mismatch(&negated, &spec);
        let m2 = spectrum_mismatch(&shifted, &spec);
        assert!(m1 <= 1e-8, "E -> -conj(E) breaks at v1 = {v1}: {m1}");
        assert!(m2 <= 1e-8, "E -> conj(E) - i gamma breaks at v1 = {v1}: {m2}");
        worst = worst.max(m1.max(m2));
    }
    println!("PASS spectral symmetries: worst multiset mismatch {worst:.2e} (tolerance 1e-8)");
}

// ----------------------------------------------------------------------------
// interacting patterns
// ----------------------------------------------------------------------------

/// Cells within one unit of any initial cell (the launch vicinity).
fn vicinity(cfg: &ExperimentConfig) -> Vec<usize> {
    let mut cells = Vec::new();
    for p in &cfg.particles {
        for c in p.cell.saturating_sub(1)..=p.cell + 1 {
            if (1..=cfg.model.n_cells).contains(&c) && !cells.contains(&c) {
                cells.push(c);
            }
        }
    }
    cells
}

#[test]
fn interactions_extend_the_burst_to_the_second_cell() {
    let cfg = load("extended-burst-N12");
    let pair = engine_vs_oracle(&cfg);
    let near = vicinity(&cfg);

    let mut outside: Vec<(usize, f64)> = (1..=cfg.model.n_cells)
        .filter(|c| !near.contains(c))
        .map(|c| (c, pair.oracle_px[c - 1]))
        .collect();
    outside.sort_by(|a, b| b.1.total_cmp(&a.1));
    let top: Vec<usize> = outside.iter().take(2).map(|&(c, _)| c).collect();
    assert!(
        top.contains(&1) && top.contains(&2),
        "top-2 escape cells outside the vicinity are {top:?}, expected 1 and 2"
    );

    let err = max_abs_diff(&pair.engine_px, &pair.oracle_px);
    assert!(err <= 0.03, "engine deviates from the oracle by {err}");
    println!(
        "PASS extended burst: P1 = {:.4}, P2 = {:.4}, next-best outside = {:.4}, engine err {:.2e}",
        pair.oracle_px[0], pair.oracle_px[1], outside[2].1, err
    );
}

#[test]
fn interaction_range_sets_the_burst_period() {
    // period-2 ordering: peaks at cells 1 and 3, trough at cell 2
    let cfg2 = load("z2-N14");
    let p2 = engine_vs_oracle(&cfg2);
    let ratio2 = p2.oracle_px[0].min(p2.oracle_px[2]) / p2.oracle_px[1];
    assert!(
        ratio2 >= 2.0,
        "period-2 peak/trough ratio {ratio2} < 2 ({:?})",
        &p2.oracle_px[..3]
    );
    let err2 = max_abs_diff(&p2.engine_px, &p2.oracle_px);
    assert!(err2 <= 0.03, "period-2 engine deviates by {err2}");

    // period-3 ordering: peaks at cells 1 and 4, troughs at cells 2 and 3
    let cfg3 = load("z3-N14");
    let p3 = engine_vs_oracle(&cfg3);
    let ratio3 =
        p3.oracle_px[0].min(p3.oracle_px[3]) / p3.oracle_px[1].max(p3.oracle_px[2]);
    assert!(
        ratio3 >= 2.0,
        "period-3 peak/trough ratio {ratio3} < 2 ({:?})",
        &p3.oracle_px[..4]
    );
    let err3 = max_abs_diff(&p3.engine_px, &p3.oracle_px);
    assert!(err3 <= 0.03, "period-3 engine deviates by {err3}");

    println!(
        "PASS burst period: one-cell spacing ratio {ratio2:.2}, two-cell spacing ratio {ratio3:.2}, engine err {:.2e}/{:.2e}",
        err2, err3
    );
}

#[test]
fn cluster_initial_states_escape_in_place() {
    for name in ["cluster-N14", "cluster-trivial-N14"] {
        let cfg = load(name);
        let cells: Vec<usize> = cfg.particles.iter().map(|p| p.cell).collect();
        let pair = engine_vs_oracle(&cfg);
        for (label, px) in [("engine", &pair.engine_px), ("oracle", &pair.oracle_px)] {
            let in_place: f64 = cells.iter().map(|&c| px[c - 1]).sum();
            assert!(
                in_place >= 0.8,
                "{name} {label}: cluster escape {in_place} < 0.8"
            );
            assert!(
                px[0] <= 0.05,
                "{name} {label}: spurious boundary spike {}",
                px[0]
            );
        }
        println!(
            "PASS cluster burst ({name}): in-place escape {:.4}, P1 = {:.2e}",
            cells.iter().map(|&c| pair.engine_px[c - 1]).sum::<f64>(),
            pair.engine_px[0]
        );
    }
}

// ----------------------------------------------------------------------------
// error mitigation
// ----------------------------------------------------------------------------

#[test]
fn layered_mitigation_strictly_reduces_occupancy_error() {
    let cfg = load("mitigation-N8");
    let campaign = pipeline::run_noisy_campaign(&cfg).unwrap();
    let cal = pipeline::run_calibration(&cfg).unwrap();
    let report = pipeline::apply_mitigation(&cfg, &campaign, &cal).unwrap();

    assert!(
        report.readout_mae < report.raw_mae,
        "readout inversion did not improve: {} vs raw {}",
        report.readout_mae,
        report.raw_mae
    );
    assert!(
        report.full_mae < report.readout_mae,
        "extrapolation did not improve: {} vs readout-only {}",
        report.full_mae,
        report.readout_mae
    );
    println!(
        "PASS mitigation: escape-profile MAE raw {:.5} > readout-only {:.5} > full {:.5}",
        report.raw_mae, report.readout_mae, report.full_mae
    );
}

#[test]
fn readout_inversion_recovers_a_known_distribution() {
    let n_q = 4usize;
    let dim = 1usize << n_q;
    let shots = 100_000usize;
    let (e01, e10) = (0.02f64, 0.03f64);

    // exact per-qubit confusion matrices, column-stochastic
    let cal = CalibrationSet {
        sub_registers: (0..n_q).map(|q| vec![q]).collect(),
        matrices: (0..n_q)
            .map(|_| RMat::from_row_slice(2, 2, &[1.0 - e01, e10, e01, 1.0 - e10]))
            .collect(),
        circuits_used: 2,
    };
    cal.validate().unwrap();
    let a = assemble_confusion(&cal, &(0..n_q).collect::<Vec<_>>()).unwrap();

    // a fixed non-uniform truth, pushed through the confusion channel
    let raw: Vec<f64> = (0..dim).map(|i| 1.0 + ((i * 7) % 5) as f64).collect();
    let total: f64 = raw.iter().sum();
    let truth: Vec<f64> = raw.iter().map(|v| v / total).collect();
    let corrupted = &a * RVec::from_vec(truth.clone());

    // multinomial sample of the corrupted distribution
    let mut rng = ChaCha8Rng::seed_from_u64(20260815);
    let mut tallies = vec![0u64; dim];
    for _ in 0..shots {
        let mut u: f64 = rng.gen();
        let mut outcome = dim - 1;
        for (i, &q) in corrupted.iter().enumerate() {
            if u < q {
                outcome = i;
                break;
            }
            u -= q;
        }
        tallies[outcome] += 1;
    }
    let y: Vec<f64> = tallies.iter().map(|&c| c as f64 / shots as f64).collect();

    // invert, then compare against the truth at three sigmas, with the
    // covariance of the multinomial propagated through the inverse
    let a_inv = a.clone().try_inverse().expect("confusion matrix invertible");
    let recovered = &a_inv * RVec::from_vec(y.clone());
    let mut worst_pull = 0.0f64;
    for i in 0..dim {
        let mut var = 0.0f64;
        for j in 0..dim {
            for k in 0..dim {
                let cov_jk = if j == k { y[j] * (1.0 - y[j]) } else { -y[j] * y[k] };
                var += a_inv[(i, j)] * a_inv[(i, k)] * cov_jk / shots as f64;
            }
        }
        let sigma = var.sqrt();
        let pull = (recovered[i] - truth[i]).abs() / sigma.max(1e-15);
        assert!(
            pull <= 3.0,
            "outcome {i} off by {} sigmas ({} vs {})",
            pull,
            recovered[i],
            truth[i]
        );
        worst_pull = worst_pull.max(pull);
    }
    println!("PASS readout inversion: worst pull {worst_pull:.2} sigma over {dim} outcomes at {shots} shots");
}

// ----------------------------------------------------------------------------
// structural identities
// ----------------------------------------------------------------------------

/// Largest entry difference after removing the (unobservable) global phase,
/// plus any departure of that phase from the unit circle.
fn phase_aligned_max_diff(a: &edgeburst::linalg::CMat, b: &edgeburst::linalg::CMat) -> f64 {
    let mut anchor = (0usize, 0usize);
    let mut best = 0.0f64;
    for i in 0..a.nrows() {
        for j in 0..a.ncols() {
            if a[(i, j)].norm() > best {
                best = a[(i, j)].norm();
                anchor = (i, j);
            }
        }
    }
    let phase = b[anchor] / a[anchor];
    let mut err = (phase.norm() - 1.0).abs();
    for i in 0..a.nrows() {
        for j in 0..a.ncols() {
            err = err.max((b[(i, j)] - phase * a[(i, j)]).norm());
        }
    }
    err
}

/// Exact simplex projection by enumerating every active set (brute oracle).
fn brute_simplex(y: &[f64], total: f64) -> Vec<f64> {
    let n = y.len();
    for mask in 1..(1usize << n) {
        let active: Vec<usize> = (0..n).filter(|i| mask & (1 << i) != 0).collect();
        let tau = (active.iter().map(|&i| y[i]).sum::<f64>() - total) / active.len() as f64;
        let x: Vec<f64> =
            (0..n).map(|i| if mask & (1 << i) != 0 { y[i] - tau } else { 0.0 }).collect();
        let feasible = x.iter().all(|&v| v >= -1e-12)
            && (0..n).all(|i| mask & (1 << i) != 0 || y[i] - tau <= 1e-12);
        if feasible {
            return x;
        }
    }
    unreachable!("some active set is always feasible");
}

#[test]
fn structural_identities_hold() {
    // binary sector encoding is a bijection
    let enc = SectorEncoding::new(14, 2).unwrap();
    for i in 0..enc.dim() {
        let sites = enc.unrank(i).unwrap();
        assert_eq!(enc.rank(&sites).unwrap(), i, "rank(unrank({i})) != {i}");
        let occ = enc.occupancy_from_index(i).unwrap();
        assert_eq!(occ.iter().map(|&o| u32::from(o)).sum::<u32>(), 2);
    }

    // Pauli decomposition resums to the original operator
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let dim = 16;
    let m = edgeburst::linalg::CMat::from_fn(dim, dim, |_, _| {
        Complex64::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5)
    });
    let herm = (&m + m.adjoint()) * Complex64::new(0.5, 0.0);
    let terms = pauli::hermitian_terms(&herm, 0.0).unwrap();
    let tuples: Vec<(Complex64, pauli::PauliString)> = terms
        .iter()
        .map(|t| (Complex64::new(t.coefficient, 0.0), t.string.clone()))
        .collect();
    let back = pauli::reconstruct(&tuples, 4);
    let pauli_err =
        (&herm - &back).iter().map(|e| e.norm()).fold(0.0f64, f64::max);
    assert!(pauli_err <= 1e-10, "Pauli resummation off by {pauli_err}");

    // folding and twirling preserve the circuit unitary exactly
    let mut c = Circuit::new(3);
    c.h(0).cx(0, 1).rz(2, 0.7).s(1).cx(1, 2).rx(0, 0.3).sdg(2).cx(2, 0).h(2).rz(0, -1.1);
    let u0 = c.unitary().unwrap();
    let table = TwirlTable::standard().unwrap();
    let mut fold_twirl_err = 0.0f64;
    for (i, lambda) in [1.0f64, 1.8, 3.0].into_iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(100 + i as u64);
        let folded = fold(&c, lambda, &mut rng).unwrap();
        let twirled = twirl(&folded, &table, &mut rng);
        let u1 = twirled.unitary().unwrap();
        fold_twirl_err = fold_twirl_err.max(phase_aligned_max_diff(&u0, &u1));
    }
    assert!(fold_twirl_err <= 1e-10, "fold/twirl changed the unitary by {fold_twirl_err}");

    // fast simplex projection equals the brute-force active-set solution
    let mut simplex_err = 0.0f64;
    for y in [
        vec![0.4, -0.2, 0.5, 0.1, 0.3],
        vec![-1.0, -2.0, 3.0, 0.0, 0.25],
        vec![0.2, 0.2, 0.2, 0.2, 0.2],
    ] {
        let fast = simplex_projection(&y, 1.0).unwrap();
        let brute = brute_simplex(&y, 1.0);
        simplex_err = simplex_err.max(max_abs_diff(&fast, &brute));
    }
    assert!(simplex_err <= 1e-10, "simplex projection off by {simplex_err}");

    // unconstrained extrapolation equals the closed-form least squares
    let lambdas = [1.0, 1.25, 1.5, 1.75, 2.0];
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let values: Vec<Vec<f64>> = lambdas
        .iter()
        .map(|&l| (0..3).map(|k| 0.3 + 0.1 * k as f64 - 0.05 * l + 0.01 * rng.gen::<f64>()).collect())
        .collect();
    let fit = zne(&lambdas, &values, &ZneConstraint::Unconstrained).unwrap();
    let mean_l = lambdas.iter().sum::<f64>() / lambdas.len() as f64;
    let var_l =
        lambdas.iter().map(|l| (l - mean_l) * (l - mean_l)).sum::<f64>() / lambdas.len() as f64;
    let mut zne_err = 0.0f64;
    for k in 0..3 {
        let mean_y = values.iter().map(|row| row[k]).sum::<f64>() / lambdas.len() as f64;
        let cov = lambdas
            .iter()
            .zip(&values)
            .map(|(l, row)| (l - mean_l) * (row[k] - mean_y))
            .sum::<f64>()
            / lambdas.len() as f64;
        let slope = cov / var_l;
        let intercept = mean_y - slope * mean_l;
        zne_err = zne_err.max((fit.intercepts[k] - intercept).abs());
    }
    assert!(zne_err <= 1e-10, "extrapolation differs from least squares by {zne_err}");

    // the two norm-recovery routes agree and tighten with the step count
    let cfg = load("edge-burst-N8");
    let params = cfg.ladder_params().unwrap();
    let enc8 = cfg.encoding().unwrap();
    let start = cfg.initial_sites().unwrap();
    let disagreement = |steps: usize| -> f64 {
        let opts = EvolveOptions::exact(20.0, steps);
        let run = engine::evolve(&params, &enc8, &start, &opts).unwrap();
        let b_tot = analysis::b_occupancy_totals(&run.occupancies);
        let from_occ =
            analysis::recover_norm_integral(&run.time_grid, &b_tot, params.gamma).unwrap();
        let from_succ = analysis::recover_norm_success(&run.success_probability).unwrap();
        max_abs_diff(&from_occ, &from_succ)
    };
    let coarse = disagreement(200);
    let fine = disagreement(400);
    assert!(coarse <= 0.1, "norm recovery routes disagree by {coarse} at 200 steps");
    assert!(fine <= 0.75 * coarse, "norm disagreement should shrink: {coarse} -> {fine}");

    println!(
        "PASS structural identities: pauli {pauli_err:.1e}, fold/twirl {fold_twirl_err:.1e}, \
         simplex {simplex_err:.1e}, extrapolation {zne_err:.1e}, norm routes {coarse:.1e} -> {fine:.1e}"
    );
}
