//! Cross-module closure: the engine's recorded series, pushed through the
//! analysis-layer norm recovery, must land on the exact-diagonalization
//! references within the stepping error.

use edgeburst::analysis;
use edgeburst::encoding::{encode_site, Leg, SectorEncoding};
use edgeburst::engine::{self, EvolveOptions, MhStrategy};
use edgeburst::linalg::{CVec, C_ONE};
use edgeburst::model::{self, Boundary, LadderParams};
use edgeburst::oracle;

fn basis_state(dim: usize, index: usize) -> Vec<num_complex::Complex64> {
    let mut psi = CVec::zeros(dim);
    psi[index] = C_ONE;
    psi.as_slice().to_vec()
}

/// Engine escape profile (recover norm from occupancies, then integrate the
/// per-cell loss) for an exact-mode run.
fn engine_escape(
    run: &engine::RunResult,
    gamma: f64,
) -> (analysis::EscapeProfile, Vec<f64>) {
    let b_tot = analysis::b_occupancy_totals(&run.occupancies);
    let a_t = analysis::recover_norm_integral(&run.time_grid, &b_tot, gamma).unwrap();
    let b_rows = analysis::b_cell_occupancies(&run.occupancies);
    let esc = analysis::escape_from_occupancies(&run.time_grid, &b_rows, &a_t, gamma).unwrap();
    (esc, a_t)
}

// --- engine vs oracle -------------------------------------------------------

#[test]
fn engine_escape_profile_tracks_the_exact_reference() {
    let n = 6;
    let gamma = 0.4;
    let params = LadderParams::new(n, 0.3, 1.0, gamma, Boundary::Open).unwrap();
    let enc = SectorEncoding::new(n, 1).unwrap();
    let start = vec![encode_site(4, Leg::A, n).unwrap()];
    let steps = 600;
    let opts = EvolveOptions::exact(30.0, steps);

    let run = engine::evolve(&params, &enc, &start, &opts).unwrap();
    let (esc, _) = engine_escape(&run, gamma);

    let h = model::build_many_body(&params, &enc).unwrap();
    let table = oracle::sector_occupancy_table(&enc).unwrap();
    let psi0 = basis_state(enc.dim(), enc.rank(&start).unwrap());
    let exact = oracle::escape_profile(&h, &psi0, &table, gamma, 30.0, steps).unwrap();

    assert_eq!(esc.final_px.len(), exact.final_px.len());
    let max_err = esc
        .final_px
        .iter()
        .zip(&exact.final_px)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0f64, f64::max);
    assert!(max_err <= 0.02, "escape profiles disagree by {max_err}");
}

#[test]
fn two_particle_engine_occupancies_match_the_exact_reference() {
    let n = 5;
    let gamma = 0.4;
    let params = LadderParams::new(n, 0.7, 1.0, gamma, Boundary::Open)
        .unwrap()
        .with_interactions(&[(1, 2.0)])
        .unwrap();
    let enc = SectorEncoding::new(n, 2).unwrap();
    let start = vec![
        encode_site(2, Leg::A, n).unwrap(),
        encode_site(4, Leg::A, n).unwrap(),
    ];
    let steps = 400;
    let mut opts = EvolveOptions::exact(10.0, steps);
    opts.mh = MhStrategy::DenseExponential;
    opts.record_every = 8;

    let run = engine::evolve(&params, &enc, &start, &opts).unwrap();

    let h = model::build_many_body(&params, &enc).unwrap();
    let table = oracle::sector_occupancy_table(&enc).unwrap();
    let psi0 = basis_state(enc.dim(), enc.rank(&start).unwrap());
    let exact = oracle::evolve_exact(&h, &psi0, &run.time_grid, &table).unwrap();
    assert!(!exact.truncated);

    let mut max_err = 0.0f64;
    for (row_e, row_o) in run.occupancies.iter().zip(&exact.occupancies_normalized) {
        for (a, b) in row_e.iter().zip(row_o) {
            max_err = max_err.max((a - b).abs());
        }
    }
    assert!(max_err <= 0.01, "occupancy series disagree by {max_err}");
}

// --- norm recovery ----------------------------------------------------------

#[test]
fn norm_recovery_methods_agree_and_converge_with_step_count() {
    let n = 6;
    let gamma = 0.4;
    let params = LadderParams::new(n, 0.3, 1.0, gamma, Boundary::Open).unwrap();
    let enc = SectorEncoding::new(n, 1).unwrap();
    let start = vec![encode_site(4, Leg::A, n).unwrap()];

    let disagreement = |steps: usize| -> f64 {
        let opts = EvolveOptions::exact(20.0, steps);
        let run = engine::evolve(&params, &enc, &start, &opts).unwrap();
        let b_tot = analysis::b_occupancy_totals(&run.occupancies);
        let from_occ = analysis::recover_norm_integral(&run.time_grid, &b_tot, gamma).unwrap();
        let from_succ = analysis::recover_norm_success(&run.success_probability).unwrap();
        from_occ
            .iter()
            .zip(&from_succ)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f64, f64::max)
    };

    let coarse = disagreement(200);
    let fine = disagreement(400);
    assert!(
        coarse <= 20.0 / 200.0,
        "norm recovery methods disagree too much at 200 steps: {coarse}"
    );
    assert!(
        fine <= 0.75 * coarse,
        "disagreement should shrink with the step count: {coarse} -> {fine}"
    );
}

// --- stepping order ---------------------------------------------------------

#[test]
fn occupancy_error_halves_when_steps_double() {
    let n = 6;
    let gamma = 0.4;
    let params = LadderParams::new(n, 0.3, 1.0, gamma, Boundary::Open).unwrap();
    let enc = SectorEncoding::new(n, 1).unwrap();
    let start = vec![encode_site(4, Leg::A, n).unwrap()];
    let h = model::build_many_body(&params, &enc).unwrap();
    let table = oracle::sector_occupancy_table(&enc).unwrap();
    let psi0 = basis_state(enc.dim(), enc.rank(&start).unwrap());

    let max_error = |steps: usize| -> f64 {
        let opts = EvolveOptions::exact(10.0, steps);
        let run = engine::evolve(&params, &enc, &start, &opts).unwrap();
        let exact = oracle::evolve_exact(&h, &psi0, &run.time_grid, &table).unwrap();
        let mut err = 0.0f64;
        for (row_e, row_o) in run.occupancies.iter().zip(&exact.occupancies_normalized) {
            for (a, b) in row_e.iter().zip(row_o) {
                err = err.max((a - b).abs());
            }
        }
        err
    };

    let coarse = max_error(100);
    let fine = max_error(200);
    let ratio = coarse / fine;
    assert!(
        (1.4..=2.6).contains(&ratio),
        "first-order stepping should halve the error: {coarse} / {fine} = {ratio}"
    );
}
