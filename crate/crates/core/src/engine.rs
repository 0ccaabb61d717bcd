//! Circuit execution and the non-unitary time-stepping driver.
//!
//! One time step of the non-Hermitian evolution is M_A applied after M_H:
//! a first-order Trotter step for the Hermitian part, then the LCU block
//! realizing the loss factor e^{-H_A dt} with one recycled ancilla whose
//! measurement post-selects the success branch. The driver offers three
//! interchangeable step implementations:
//!
//! - `CircuitLevel`: the literal gate sequence, executed either as a
//!   statevector with deterministic ancilla-0 projection (noise-free
//!   baseline) or as sampled shot trajectories with optional Pauli/readout
//!   noise.
//! - `TrotterizedMatrix`: the same ordered product of Pauli rotations,
//!   precomputed once as a dense step matrix (bit-for-bit the circuit's
//!   Trotter error without gate bookkeeping).
//! - `DenseExponential`: e^{-i H_H dt} by matrix exponential, removing the
//!   Trotter error inside M_H — useful as a reference and for sectors whose
//!   Pauli expansions are large.
//!
//! Shot trajectories are shared across the time grid: each trajectory runs
//! once to t_max, the ancilla is measured (and reset) with collapse every
//! step, and at each recorded time the system register is peek-sampled
//! without collapse — statistically identical to running one circuit per
//! recorded time, since only per-time marginals are consumed downstream.

use crate::circuit::{apply_gate, lcu_step, trotter_step, Circuit, Gate, Instruction};
use crate::encoding::SectorEncoding;
use crate::lcu::{self, LcuSolution};
use crate::linalg::{expm, CMat, CVec, C_ONE, C_ZERO};
use crate::model::{self, LadderParams};
use crate::pauli::{Pauli, PauliString, PauliTerm};
use crate::{par, Error, Result};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::collections::HashMap;

/// Stochastic-Pauli gate noise plus independent per-qubit readout flips.
#[derive(Clone, Debug)]
pub struct NoiseModel {
    /// Probability of a random non-identity Pauli after each 1-qubit gate.
    pub p1: f64,
    /// Same for 2-qubit gates (a random non-identity pair on its qubits).
    pub p2: f64,
    /// Per qubit: (p(read 1 | true 0), p(read 0 | true 1)).
    pub readout: Vec<(f64, f64)>,
    pub seed: u64,
}

impl NoiseModel {
    pub fn uniform(p1: f64, p2: f64, e01: f64, e10: f64, n_qubits: usize, seed: u64) -> Self {
        NoiseModel { p1, p2, readout: vec![(e01, e10); n_qubits], seed }
    }

    pub fn validate(&self, n_qubits: usize) -> Result<()> {
        let ok = |p: f64| (0.0..1.0).contains(&p);
        if !ok(self.p1) || !ok(self.p2) {
            return Err(Error::InvalidParams(format!(
                "gate error probabilities must be in [0,1), got p1={}, p2={}",
                self.p1, self.p2
            )));
        }
        if self.readout.len() < n_qubits {
            return Err(Error::InvalidParams(format!(
                "readout table covers {} qubits, circuit needs {n_qubits}",
                self.readout.len()
            )));
        }
        if self.readout.iter().any(|&(a, b)| !ok(a) || !ok(b)) {
            return Err(Error::InvalidParams("readout probabilities must be in [0,1)".into()));
        }
        Ok(())
    }

    /// True when every error channel is off.
    pub fn is_trivial(&self) -> bool {
        self.p1 == 0.0 && self.p2 == 0.0 && self.readout.iter().all(|&(a, b)| a == 0.0 && b == 0.0)
    }
}

/// Execution mode of a run.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RunMode {
    /// Dense statevector; ancilla measurements project deterministically
    /// onto the success branch with recorded weight. Noise is ignored.
    Exact,
    /// Shot sampling with the given trajectory count.
    Shots(usize),
}

// --------------------------------------------------------------------------
// statevector kernels
// --------------------------------------------------------------------------

fn apply_pauli_letter(state: &mut [Complex64], n: usize, q: usize, p: Pauli) {
    let m = 1usize << (n - 1 - q);
    match p {
        Pauli::I => {}
        Pauli::X => apply_gate(state, n, Gate::X, &[q]),
        Pauli::Z => {
            for (i, amp) in state.iter_mut().enumerate() {
                if i & m != 0 {
                    *amp = -*amp;
                }
            }
        }
        Pauli::Y => {
            let im = Complex64::new(0.0, 1.0);
            for i in 0..state.len() {
                if i & m == 0 {
                    let (a, b) = (state[i], state[i | m]);
                    state[i] = -im * b;
                    state[i | m] = im * a;
                }
            }
        }
    }
}

fn insert_gate_noise<R: Rng>(
    state: &mut [Complex64],
    n: usize,
    qubits: &[usize],
    noise: &NoiseModel,
    rng: &mut R,
) {
    const LETTERS: [Pauli; 4] = [Pauli::I, Pauli::X, Pauli::Y, Pauli::Z];
    if qubits.len() == 1 {
        if rng.gen::<f64>() < noise.p1 {
            let p = LETTERS[rng.gen_range(1..4)];
            apply_pauli_letter(state, n, qubits[0], p);
        }
    } else if rng.gen::<f64>() < noise.p2 {
        let pair = rng.gen_range(1..16);
        apply_pauli_letter(state, n, qubits[0], LETTERS[pair / 4]);
        apply_pauli_letter(state, n, qubits[1], LETTERS[pair % 4]);
    }
}

/// Born-rule measurement with collapse; returns the true outcome.
fn measure_collapse<R: Rng>(state: &mut [Complex64], n: usize, qubit: usize, rng: &mut R) -> bool {
    let m = 1usize << (n - 1 - qubit);
    let p_one: f64 = state
        .iter()
        .enumerate()
        .filter(|(i, _)| i & m != 0)
        .map(|(_, a)| a.norm_sqr())
        .sum();
    let outcome = rng.gen::<f64>() < p_one;
    let keep_mask_set = outcome;
    let p_kept = if outcome { p_one } else { 1.0 - p_one };
    let scale = 1.0 / p_kept.max(1e-300).sqrt();
    for (i, amp) in state.iter_mut().enumerate() {
        if (i & m != 0) == keep_mask_set {
            *amp *= scale;
        } else {
            *amp = C_ZERO;
        }
    }
    outcome
}

fn readout_flip<R: Rng>(outcome: bool, errors: (f64, f64), rng: &mut R) -> bool {
    let p = if outcome { errors.1 } else { errors.0 };
    outcome ^ (rng.gen::<f64>() < p)
}

fn sample_basis_index<R: Rng>(state: &[Complex64], rng: &mut R) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for (i, a) in state.iter().enumerate() {
        acc += a.norm_sqr();
        if u < acc {
            return i;
        }
    }
    state.len() - 1
}

/// One full trajectory through an arbitrary circuit; returns recorded bits.
fn run_trajectory<R: Rng>(
    circuit: &Circuit,
    state: &mut [Complex64],
    noise: Option<&NoiseModel>,
    rng: &mut R,
    clbits: &mut [bool],
) {
    let n = circuit.n_qubits;
    for ins in &circuit.instructions {
        match ins {
            Instruction::Gate { gate, qubits } => {
                apply_gate(state, n, *gate, qubits);
                if let Some(nm) = noise {
                    insert_gate_noise(state, n, qubits, nm, rng);
                }
            }
            Instruction::Measure { qubit, clbit } => {
                let outcome = measure_collapse(state, n, *qubit, rng);
                let recorded = match noise {
                    Some(nm) => readout_flip(outcome, nm.readout[*qubit], rng),
                    None => outcome,
                };
                clbits[*clbit] = recorded;
            }
            Instruction::ConditionalX { qubit, clbit } => {
                if clbits[*clbit] {
                    apply_gate(state, n, Gate::X, &[*qubit]);
                }
            }
            Instruction::Barrier => {}
        }
    }
}

/// Samples `shots` independent trajectories of `circuit` from |0...0> and
/// tallies the recorded classical registers.
pub fn run_counts(
    circuit: &Circuit,
    shots: usize,
    noise: Option<&NoiseModel>,
    seed: u64,
    qubit_cap: usize,
) -> Result<HashMap<Vec<bool>, u64>> {
    circuit.validate()?;
    if circuit.n_qubits > qubit_cap {
        return Err(Error::Dimension(format!(
            "{} qubits exceed the cap of {qubit_cap}",
            circuit.n_qubits
        )));
    }
    if let Some(nm) = noise {
        nm.validate(circuit.n_qubits)?;
    }
    let dim = 1usize << circuit.n_qubits;
    let records: Vec<Vec<bool>> = par::map_indexed(shots, |s| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(s as u64));
        let mut state = vec![C_ZERO; dim];
        state[0] = C_ONE;
        let mut clbits = vec![false; circuit.n_clbits];
        run_trajectory(circuit, &mut state, noise, &mut rng, &mut clbits);
        clbits
    });
    let mut counts: HashMap<Vec<bool>, u64> = HashMap::new();
    for r in records {
        *counts.entry(r).or_insert(0) += 1;
    }
    Ok(counts)
}

/// Runs a circuit exactly once with Born-rule branching on measurements
/// (no noise); returns the final state and the recorded bits.
pub fn run_exact(circuit: &Circuit, seed: u64, qubit_cap: usize) -> Result<(Vec<Complex64>, Vec<bool>)> {
    circuit.validate()?;
    if circuit.n_qubits > qubit_cap {
        return Err(Error::Dimension(format!(
            "{} qubits exceed the cap of {qubit_cap}",
            circuit.n_qubits
        )));
    }
    let dim = 1usize << circuit.n_qubits;
    let mut state = vec![C_ZERO; dim];
    state[0] = C_ONE;
    let mut clbits = vec![false; circuit.n_clbits];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    run_trajectory(circuit, &mut state, None, &mut rng, &mut clbits);
    Ok((state, clbits))
}

// --------------------------------------------------------------------------
// time-stepping driver
// --------------------------------------------------------------------------

/// Implementation of the Hermitian half-step M_H.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MhStrategy {
    /// Ordered product of per-term Pauli rotations, precomputed as a matrix.
    TrotterizedMatrix,
    /// e^{-i H_H dt} by dense exponential (no Trotter error).
    DenseExponential,
    /// Explicit gate sequence (required for shots/noise).
    CircuitLevel,
}

/// Realization of the loss factor e^{-H_A dt}.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LossRealization {
    /// Diagonal arccos generator, exact at any step size.
    ExactOnsite,
    /// Taylor-matched mixture of order `order` with `pairs` forward/backward
    /// pairs around the Hermitian root of H_A.
    SolvedExpansion { order: usize, pairs: usize },
    /// The per-site single-angle diagonal form (exact only for one particle).
    ScalarAngleOnsite,
}

/// Full configuration of one evolution run.
#[derive(Clone, Debug)]
pub struct EvolveOptions {
    pub t_max: f64,
    pub steps: usize,
    pub mh: MhStrategy,
    pub loss: LossRealization,
    pub mode: RunMode,
    pub noise: Option<NoiseModel>,
    pub seed: u64,
    /// Record occupancies every this many steps (1 = every step).
    pub record_every: usize,
    pub qubit_cap: usize,
}

impl EvolveOptions {
    /// Noise-free exact-mode defaults.
    pub fn exact(t_max: f64, steps: usize) -> Self {
        EvolveOptions {
            t_max,
            steps,
            mh: MhStrategy::TrotterizedMatrix,
            loss: LossRealization::ExactOnsite,
            mode: RunMode::Exact,
            noise: None,
            seed: 7,
            record_every: 1,
            qubit_cap: 24,
        }
    }
}

/// Time series produced by one evolution run.
#[derive(Clone, Debug)]
pub struct RunResult {
    pub time_grid: Vec<f64>,
    /// Normalized site occupancies <n_z> on the post-selected state, per
    /// recorded time, over the 2N flattened sites.
    pub occupancies: Vec<Vec<f64>>,
    /// Cumulative ancilla-success probability S_t per recorded time.
    pub success_probability: Vec<f64>,
    /// Shots mode: per recorded time, (observed ancilla-1 count, observed
    /// system value) -> shot count. All ancilla layers share one readout
    /// channel, so the 1-count is a sufficient statistic for mitigation.
    pub counts: Vec<HashMap<(u32, u32), u64>>,
    /// Shots mode: ancilla-successful shots discarded as unphysical.
    pub discarded_shots: Vec<u64>,
    /// Exact mode: probability weight outside the physical sector.
    pub unphysical_fraction: Vec<f64>,
    pub shots: usize,
    pub seed: u64,
    pub dt: f64,
    pub n_system_qubits: usize,
}

/// Precomputed per-step operators shared by every trajectory/initial state.
#[derive(Clone)]
pub struct StepOperators {
    enc: SectorEncoding,
    n_q: usize,
    dim_e: usize,
    d_phys: usize,
    u_h: Option<CMat>,
    k0: Option<CMat>,
    step_circuit: Option<Circuit>,
    occ_table: Vec<Vec<u8>>,
    pub eta: f64,
}

impl StepOperators {
    /// Gate sequence of one time step, when circuit-level stepping is on.
    pub fn step_circuit(&self) -> Option<&Circuit> {
        self.step_circuit.as_ref()
    }

    /// Replaces the per-step gate sequence with a noise-scaling transform of
    /// it (folding, twirling). The register shape must be unchanged.
    pub fn set_step_circuit(&mut self, circuit: Circuit) -> Result<()> {
        let current = self.step_circuit.as_ref().ok_or_else(|| {
            Error::InvalidParams("no step circuit to replace: not in circuit mode".into())
        })?;
        if circuit.n_qubits != current.n_qubits || circuit.n_clbits != current.n_clbits {
            return Err(Error::Circuit(format!(
                "replacement step circuit has {} qubits / {} clbits, expected {} / {}",
                circuit.n_qubits, circuit.n_clbits, current.n_qubits, current.n_clbits
            )));
        }
        circuit.validate()?;
        self.step_circuit = Some(circuit);
        Ok(())
    }
}

fn extend_terms(terms: &[PauliTerm], n_total: usize) -> Vec<PauliTerm> {
    terms
        .iter()
        .map(|t| {
            let mut letters: Vec<Pauli> = (0..t.string.n_qubits()).map(|q| t.string.letter(q)).collect();
            letters.resize(n_total, Pauli::I);
            PauliTerm { coefficient: t.coefficient, string: PauliString::from_letters(&letters) }
        })
        .collect()
}

/// Ordered product of the per-term rotation matrices (first term rightmost),
/// the dense mirror of the Trotter-step circuit.
fn trotter_product_matrix(terms: &[PauliTerm], dt: f64, n_q: usize) -> CMat {
    let dim = 1usize << n_q;
    let mut m = CMat::identity(dim, dim);
    let mut scratch = vec![C_ZERO; dim];
    for t in terms {
        let theta = t.coefficient * dt;
        if t.string.is_identity() {
            m *= Complex64::from_polar(1.0, -theta);
            continue;
        }
        let (c, s) = (theta.cos(), theta.sin());
        let cc = Complex64::new(c, 0.0);
        let ms = Complex64::new(0.0, -s);
        for col in 0..dim {
            {
                let column: Vec<Complex64> = (0..dim).map(|r| m[(r, col)]).collect();
                t.string.apply_to_vec(&column, &mut scratch);
                for r in 0..dim {
                    m[(r, col)] = cc * column[r] + ms * scratch[r];
                }
            }
        }
    }
    m
}

/// Builds the step operators for (params, enc, dt) under the given options.
pub fn build_step_operators(
    params: &LadderParams,
    enc: &SectorEncoding,
    dt: f64,
    opts: &EvolveOptions,
) -> Result<StepOperators> {
    if !(dt > 0.0) {
        return Err(Error::InvalidParams(format!("step size must be positive, got {dt}")));
    }
    let h = model::build_many_body(params, enc)?;
    let split = model::split(&h)?;
    let n_q = enc.n_qubits();
    let dim_e = enc.padded_dim();
    let d_phys = enc.dim();
    let n_total = n_q + 1;
    if n_total > opts.qubit_cap {
        return Err(Error::Dimension(format!(
            "{n_total} qubits (system + ancilla) exceed the cap of {}",
            opts.qubit_cap
        )));
    }

    // loss block: embedded success Kraus + (for circuits) branch generator
    let (k0, eta, branch): (CMat, f64, Option<(CMat, (f64, f64))>) = match opts.loss {
        LossRealization::ExactOnsite => {
            let aux = lcu::exact_onsite_sector(params.gamma, dt, enc)?;
            let g = crate::linalg::embed(&aux.matrix, dim_e);
            let k0 = half_cos(&g);
            (k0, aux.eta, Some((g, (0.5, 0.5))))
        }
        LossRealization::ScalarAngleOnsite => {
            let aux = lcu::onsite_scalar_angle_sector(params.gamma, dt, enc)?;
            let g = crate::linalg::embed(&aux.matrix, dim_e);
            let k0 = half_cos(&g);
            (k0, aux.eta, Some((g, (0.5, 0.5))))
        }
        LossRealization::SolvedExpansion { order, pairs } => {
            let sol = lcu::solve_expansion(order, pairs, dt, true)?;
            let root = lcu::hermitian_root(&split.antihermitian_generator)?;
            let r_emb = crate::linalg::embed(&root.matrix, dim_e);
            let k0 = sol.realized_operator(&r_emb);
            let branch = single_pair_branch(&sol, &r_emb);
            (k0, 1.0, branch)
        }
    };

    let mut ops = StepOperators {
        enc: enc.clone(),
        n_q,
        dim_e,
        d_phys,
        u_h: None,
        k0: None,
        step_circuit: None,
        occ_table: (0..d_phys).map(|i| enc.occupancy_from_index(i)).collect::<Result<_>>()?,
        eta,
    };

    match opts.mh {
        MhStrategy::TrotterizedMatrix | MhStrategy::DenseExponential => {
            let h_emb = crate::linalg::embed(&split.hermitian_part, dim_e);
            let u_h = if opts.mh == MhStrategy::DenseExponential {
                expm(&(h_emb * Complex64::new(0.0, -dt)))
            } else {
                let terms = crate::pauli::hermitian_terms(&h_emb, 1e-12)?;
                trotter_product_matrix(&terms, dt, n_q)
            };
            ops.u_h = Some(u_h);
            ops.k0 = Some(k0);
        }
        MhStrategy::CircuitLevel => {
            let (g, weights) = branch.ok_or_else(|| {
                Error::InvalidParams(
                    "circuit-level stepping needs a single-ancilla loss realization \
                     (exact on-site or a solved order-2 single-pair expansion)"
                        .into(),
                )
            })?;
            let h_emb = crate::linalg::embed(&split.hermitian_part, dim_e);
            let h_terms = extend_terms(&crate::pauli::hermitian_terms(&h_emb, 1e-12)?, n_total);
            let g_terms = extend_terms(&crate::pauli::hermitian_terms(&g, 1e-12)?, n_total);
            let anc = n_q;

            let mut step = trotter_step(&h_terms, dt, n_total, None)?;
            let plus = trotter_step(&g_terms, 1.0, n_total, Some((anc, false)))?;
            let minus = trotter_step(&g_terms, -1.0, n_total, Some((anc, true)))?;
            let lcu_block = lcu_step(&plus, &minus, weights, anc)?;
            step.extend_from(&lcu_block)?;
            step.validate()?;
            ops.step_circuit = Some(step);
            ops.k0 = Some(k0);
        }
    }
    Ok(ops)
}

/// (e^{+iG} + e^{-iG}) / 2 for a Hermitian G.
fn half_cos(g: &CMat) -> CMat {
    let gen = g * Complex64::new(0.0, 1.0);
    (expm(&gen) + expm(&(-&gen))) * Complex64::new(0.5, 0.0)
}

fn single_pair_branch(sol: &LcuSolution, r_emb: &CMat) -> Option<(CMat, (f64, f64))> {
    if sol.pairs.len() == 1 && sol.a0.abs() < 1e-12 {
        let (a, dtau) = sol.pairs[0];
        Some((r_emb * Complex64::new(dtau, 0.0), (a, a)))
    } else {
        None
    }
}

/// Evolves `p` particles initially on `initial_sites` for t_max in `steps`
/// steps, recording normalized occupancies and ancilla success statistics.
pub fn evolve(
    params: &LadderParams,
    enc: &SectorEncoding,
    initial_sites: &[usize],
    opts: &EvolveOptions,
) -> Result<RunResult> {
    if opts.steps == 0 || opts.record_every == 0 {
        return Err(Error::InvalidParams("need steps >= 1 and record_every >= 1".into()));
    }
    if !(opts.t_max > 0.0) {
        return Err(Error::InvalidParams(format!("t_max must be positive, got {}", opts.t_max)));
    }
    let initial = enc.rank(initial_sites)?;
    let dt = opts.t_max / opts.steps as f64;
    let ops = build_step_operators(params, enc, dt, opts)?;
    evolve_with_ops(&ops, initial, opts)
}

/// Sorted list of recorded step indices (0 and the final step always).
fn record_steps(steps: usize, every: usize) -> Vec<usize> {
    let mut out: Vec<usize> = (0..=steps).step_by(every).collect();
    if *out.last().unwrap() != steps {
        out.push(steps);
    }
    out
}

/// Runs one evolution with prebuilt step operators (lets spectral drivers
/// share the build across many initial states).
pub fn evolve_with_ops(ops: &StepOperators, initial: usize, opts: &EvolveOptions) -> Result<RunResult> {
    let dt = opts.t_max / opts.steps as f64;
    match (opts.mode, ops.step_circuit.is_some()) {
        (RunMode::Exact, false) => exact_matrix_run(ops, initial, dt, opts),
        (RunMode::Exact, true) => exact_circuit_run(ops, initial, dt, opts),
        (RunMode::Shots(n), true) => shots_run(ops, initial, dt, n, opts),
        (RunMode::Shots(_), false) => Err(Error::InvalidParams(
            "shots mode requires circuit-level stepping".into(),
        )),
    }
}

fn occupancies_of_state(ops: &StepOperators, amps: &[Complex64], stride: usize, offset: usize) -> (Vec<f64>, f64) {
    let n_sites = ops.occ_table.first().map_or(0, Vec::len);
    let mut num = vec![0.0f64; n_sites];
    let mut den = 0.0f64;
    for i in 0..ops.d_phys {
        let w = amps[i * stride + offset].norm_sqr();
        if w == 0.0 {
            continue;
        }
        den += w;
        for (z, &o) in ops.occ_table[i].iter().enumerate() {
            if o == 1 {
                num[z] += w;
            }
        }
    }
    if den > 0.0 {
        for v in &mut num {
            *v /= den;
        }
    }
    (num, den)
}

fn exact_matrix_run(ops: &StepOperators, initial: usize, dt: f64, opts: &EvolveOptions) -> Result<RunResult> {
    let u_h = ops.u_h.as_ref().expect("matrix path has u_h");
    let k0 = ops.k0.as_ref().expect("matrix path has k0");
    let mut psi = CVec::zeros(ops.dim_e);
    psi[initial] = C_ONE;
    let recorded = record_steps(opts.steps, opts.record_every);
    let mut result = empty_result(ops, dt, opts.seed, 0);

    let mut s_cum = 1.0f64;
    let push = |result: &mut RunResult, step: usize, psi: &CVec, s_cum: f64| {
        let amps = psi.as_slice();
        let (occ, den) = occupancies_of_state(ops, amps, 1, 0);
        result.time_grid.push(step as f64 * dt);
        result.occupancies.push(occ);
        result.success_probability.push(s_cum);
        result.unphysical_fraction.push((1.0 - den).max(0.0));
    };
    push(&mut result, 0, &psi, s_cum);

    let mut next_record = 1usize;
    for step in 1..=opts.steps {
        psi = u_h * &psi;
        psi = k0 * &psi;
        let s = psi.iter().map(|a| a.norm_sqr()).sum::<f64>();
        if s < 1e-300 {
            return Err(Error::AllShotsFailed { step });
        }
        s_cum *= s;
        psi /= Complex64::new(s.sqrt(), 0.0);
        if recorded.get(next_record) == Some(&step) {
            push(&mut result, step, &psi, s_cum);
            next_record += 1;
        }
    }
    Ok(result)
}

fn exact_circuit_run(ops: &StepOperators, initial: usize, dt: f64, opts: &EvolveOptions) -> Result<RunResult> {
    let circuit = ops.step_circuit.as_ref().expect("circuit path");
    let n_total = circuit.n_qubits;
    let dim_total = 1usize << n_total;
    let mut state = vec![C_ZERO; dim_total];
    state[initial << 1] = C_ONE; // ancilla (last qubit) starts in |0>
    let recorded = record_steps(opts.steps, opts.record_every);
    let mut result = empty_result(ops, dt, opts.seed, 0);

    let mut s_cum = 1.0f64;
    let push = |result: &mut RunResult, step: usize, state: &[Complex64], s_cum: f64, ops: &StepOperators| {
        let (occ, den) = occupancies_of_state(ops, state, 2, 0);
        result.time_grid.push(step as f64 * dt);
        result.occupancies.push(occ);
        result.success_probability.push(s_cum);
        result.unphysical_fraction.push((1.0 - den).max(0.0));
    };
    push(&mut result, 0, &state, s_cum, ops);

    let mut next_record = 1usize;
    for step in 1..=opts.steps {
        for ins in &circuit.instructions {
            match ins {
                Instruction::Gate { gate, qubits } => apply_gate(&mut state, n_total, *gate, qubits),
                Instruction::Measure { qubit, .. } => {
                    // deterministic success-branch projection onto |0>
                    let m = 1usize << (n_total - 1 - qubit);
                    let mut kept = 0.0f64;
                    for (i, amp) in state.iter_mut().enumerate() {
                        if i & m != 0 {
                            *amp = C_ZERO;
                        } else {
                            kept += amp.norm_sqr();
                        }
                    }
                    if kept < 1e-300 {
                        return Err(Error::AllShotsFailed { step });
                    }
                    s_cum *= kept;
                    let scale = Complex64::new(1.0 / kept.sqrt(), 0.0);
                    state.iter_mut().for_each(|a| *a *= scale);
                }
                // the projected record is 0, so the conditional X never fires
                Instruction::ConditionalX { .. } | Instruction::Barrier => {}
            }
        }
        if recorded.get(next_record) == Some(&step) {
            push(&mut result, step, &state, s_cum, ops);
            next_record += 1;
        }
    }
    Ok(result)
}

fn shots_run(
    ops: &StepOperators,
    initial: usize,
    dt: f64,
    shots: usize,
    opts: &EvolveOptions,
) -> Result<RunResult> {
    if shots == 0 {
        return Err(Error::InvalidParams("need at least one shot".into()));
    }
    let circuit = ops.step_circuit.as_ref().expect("circuit path");
    let n_total = circuit.n_qubits;
    if n_total > opts.qubit_cap {
        return Err(Error::Dimension(format!("{n_total} qubits exceed the cap")));
    }
    if let Some(nm) = &opts.noise {
        nm.validate(n_total)?;
    }
    let dim_total = 1usize << n_total;
    let recorded = record_steps(opts.steps, opts.record_every);
    let inner: Vec<usize> = recorded[1..].to_vec();
    let noise = opts.noise.as_ref();
    let n_q = ops.n_q;

    // one pass per trajectory; peek-sample the system at each recorded step
    let per_shot: Vec<Vec<(u32, u32)>> = par::map_indexed(shots, |s| {
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed.wrapping_add(s as u64));
        let mut state = vec![C_ZERO; dim_total];
        state[initial << 1] = C_ONE;
        let mut clbits = vec![false; circuit.n_clbits];
        let mut anc_ones = 0u32;
        let mut out = Vec::with_capacity(inner.len());
        let mut next = 0usize;
        for step in 1..=opts.steps {
            for ins in &circuit.instructions {
                match ins {
                    Instruction::Gate { gate, qubits } => {
                        apply_gate(&mut state, n_total, *gate, qubits);
                        if let Some(nm) = noise {
                            insert_gate_noise(&mut state, n_total, qubits, nm, &mut rng);
                        }
                    }
                    Instruction::Measure { qubit, clbit } => {
                        let outcome = measure_collapse(&mut state, n_total, *qubit, &mut rng);
                        let rec = match noise {
                            Some(nm) => readout_flip(outcome, nm.readout[*qubit], &mut rng),
                            None => outcome,
                        };
                        clbits[*clbit] = rec;
                        anc_ones += u32::from(rec);
                    }
                    Instruction::ConditionalX { qubit, clbit } => {
                        if clbits[*clbit] {
                            apply_gate(&mut state, n_total, Gate::X, &[*qubit]);
                        }
                    }
                    Instruction::Barrier => {}
                }
            }
            if inner.get(next) == Some(&step) {
                let idx = sample_basis_index(&state, &mut rng);
                let mut sys = idx >> 1;
                if let Some(nm) = noise {
                    for q in 0..n_q {
                        let m = 1usize << (n_q - 1 - q);
                        let bit = sys & m != 0;
                        let (e01, e10) = nm.readout[q];
                        let p = if bit { e10 } else { e01 };
                        if rng.gen::<f64>() < p {
                            sys ^= m;
                        }
                    }
                }
                out.push((anc_ones, sys as u32));
                next += 1;
            }
        }
        out
    });

    // merge (sequential, deterministic)
    let mut result = empty_result(ops, dt, opts.seed, shots);
    // t = 0 row: the prepared state, exactly
    {
        let mut occ0 = vec![0.0; 2 * ops.enc.n_cells()];
        for (z, &o) in ops.occ_table[initial].iter().enumerate() {
            occ0[z] = o as f64;
        }
        result.time_grid.push(0.0);
        result.occupancies.push(occ0);
        result.success_probability.push(1.0);
        result.counts.push(HashMap::new());
        result.discarded_shots.push(0);
        result.unphysical_fraction.push(0.0);
    }

    for (j, &step) in inner.iter().enumerate() {
        let mut map: HashMap<(u32, u32), u64> = HashMap::new();
        for traj in &per_shot {
            *map.entry(traj[j]).or_insert(0) += 1;
        }
        let mut survivors = 0u64;
        let mut discarded = 0u64;
        let n_sites = 2 * ops.enc.n_cells();
        let mut num = vec![0.0f64; n_sites];
        let mut den = 0.0f64;
        for (&(k, sys), &cnt) in &map {
            if k != 0 {
                continue;
            }
            survivors += cnt;
            let sys = sys as usize;
            if sys >= ops.d_phys {
                discarded += cnt;
                continue;
            }
            den += cnt as f64;
            for (z, &o) in ops.occ_table[sys].iter().enumerate() {
                if o == 1 {
                    num[z] += cnt as f64;
                }
            }
        }
        if den == 0.0 {
            return Err(Error::AllShotsFailed { step });
        }
        for v in &mut num {
            *v /= den;
        }
        result.time_grid.push(step as f64 * dt);
        result.occupancies.push(num);
        result.success_probability.push(survivors as f64 / shots as f64);
        result.discarded_shots.push(discarded);
        result.unphysical_fraction.push(discarded as f64 / (survivors.max(1)) as f64);
        result.counts.push(map);
    }
    Ok(result)
}

fn empty_result(ops: &StepOperators, dt: f64, seed: u64, shots: usize) -> RunResult {
    RunResult {
        time_grid: Vec::new(),
        occupancies: Vec::new(),
        success_probability: Vec::new(),
        counts: Vec::new(),
        discarded_shots: Vec::new(),
        unphysical_fraction: Vec::new(),
        shots,
        seed,
        dt,
        n_system_qubits: ops.n_q,
    }
}

// --------------------------------------------------------------------------
// observables and mixed-state drivers
// --------------------------------------------------------------------------

/// -<H_A> from an explicit Pauli expansion of H_A (Hamiltonian averaging).
pub fn imaginary_energy_from_terms(state: &[Complex64], terms: &[PauliTerm]) -> f64 {
    -terms.iter().map(|t| t.coefficient * t.string.expectation(state)).sum::<f64>()
}

/// -<H_A> = -gamma * (total b-site occupancy) from site occupancies.
pub fn imaginary_energy_from_occupancies(occupancies: &[f64], gamma: f64) -> f64 {
    -gamma * occupancies.iter().skip(1).step_by(2).sum::<f64>()
}

/// Site lists of every physical basis state: the trajectory decomposition of
/// the maximally mixed sector state.
pub fn maximally_mixed_initials(enc: &SectorEncoding) -> Result<Vec<Vec<usize>>> {
    (0..enc.dim()).map(|i| enc.unrank(i)).collect()
}

/// Im E(t) estimated by evolving the maximally mixed sector state: each
/// basis-state trajectory is weighted by its cumulative success probability
/// (the squared norm the non-unitary evolution assigns it), and -<H_A> is
/// averaged. Long-time limit purifies toward the extremal-Im-E eigenstate.
#[derive(Clone, Debug)]
pub struct SpectralSeries {
    pub times: Vec<f64>,
    pub imaginary_energy: Vec<f64>,
}

pub fn purified_imaginary_energy(
    params: &LadderParams,
    enc: &SectorEncoding,
    opts: &EvolveOptions,
) -> Result<SpectralSeries> {
    if opts.mode != RunMode::Exact {
        return Err(Error::InvalidParams("spectral purification runs in exact mode".into()));
    }
    let dt = opts.t_max / opts.steps as f64;
    let ops = build_step_operators(params, enc, dt, opts)?;
    let d = enc.dim();
    let runs: Vec<Result<RunResult>> =
        par::map_indexed(d, |j| evolve_with_ops(&ops, j, opts));
    let mut collected = Vec::with_capacity(d);
    for r in runs {
        collected.push(r?);
    }
    let times = collected[0].time_grid.clone();
    let mut imaginary_energy = Vec::with_capacity(times.len());
    for ti in 0..times.len() {
        let mut num = 0.0;
        let mut den = 0.0;
        for run in &collected {
            let w = run.success_probability[ti];
            num += w * imaginary_energy_from_occupancies(&run.occupancies[ti], params.gamma);
            den += w;
        }
        imaginary_energy.push(num / den);
    }
    Ok(SpectralSeries { times, imaginary_energy })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Boundary;
    use approx::assert_abs_diff_eq;

    fn params(n: usize, v1: f64, v2: f64, gamma: f64, boundary: Boundary) -> LadderParams {
        LadderParams::new(n, v1, v2, gamma, boundary).unwrap()
    }

    // --- low-level executor ---------------------------------------------

    #[test]
    fn empty_circuit_leaves_ground_state() {
        let c = Circuit::new(2);
        let (state, _) = run_exact(&c, 1, 24).unwrap();
        assert_abs_diff_eq!(state[0].re, 1.0, epsilon = 1e-15);
        assert!(state[1..].iter().all(|a| a.norm() < 1e-15));
    }

    #[test]
    fn hadamard_measurement_is_a_fair_coin() {
        let mut c = Circuit::new(1);
        c.h(0);
        c.measure(0);
        let shots = 100_000usize;
        let counts = run_counts(&c, shots, None, 42, 24).unwrap();
        let ones = counts.get(&vec![true]).copied().unwrap_or(0) as f64;
        let sigma = (shots as f64 * 0.25).sqrt();
        assert!(
            (ones - shots as f64 / 2.0).abs() < 3.0 * sigma,
            "ones = {ones} of {shots}"
        );
    }

    #[test]
    fn readout_error_biases_recorded_outcomes() {
        let mut c = Circuit::new(1);
        c.x(0);
        c.measure(0);
        let shots = 50_000usize;
        let noise = NoiseModel { p1: 0.0, p2: 0.0, readout: vec![(0.0, 0.1)], seed: 0 };
        let counts = run_counts(&c, shots, Some(&noise), 7, 24).unwrap();
        let ones = counts.get(&vec![true]).copied().unwrap_or(0) as f64;
        let expect = shots as f64 * 0.9;
        let sigma = (shots as f64 * 0.09).sqrt();
        assert!((ones - expect).abs() < 3.0 * sigma, "ones = {ones}, expected ~{expect}");
    }

    #[test]
    fn noise_model_validation_rejects_bad_probabilities() {
        let bad = NoiseModel::uniform(1.5, 0.0, 0.0, 0.0, 2, 0);
        assert!(bad.validate(2).is_err());
        let short = NoiseModel { p1: 0.0, p2: 0.0, readout: vec![(0.0, 0.0)], seed: 0 };
        assert!(short.validate(2).is_err());
        assert!(NoiseModel::uniform(0.001, 0.01, 0.02, 0.02, 3, 0).validate(3).is_ok());
    }

    // --- frozen-site decay ------------------------------------------------

    #[test]
    fn isolated_b_site_decays_at_the_analytic_rate() {
        let gamma = 0.8;
        let p = params(2, 0.0, 0.0, gamma, Boundary::Open);
        let enc = SectorEncoding::new(2, 1).unwrap();
        let t_max = 1.5;
        let opts = EvolveOptions::exact(t_max, 30);
        let res = evolve(&p, &enc, &[1], &opts).unwrap();
        // occupancies frozen on the starting site
        for occ in &res.occupancies {
            assert_abs_diff_eq!(occ[1], 1.0, epsilon = 1e-12);
        }
        // S_t = e^{-2 gamma t} exactly (loss realization is exact, H_H = 0)
        for (t, s) in res.time_grid.iter().zip(&res.success_probability) {
            assert_abs_diff_eq!(*s, (-2.0 * gamma * t).exp(), epsilon = 1e-10);
        }
    }

    #[test]
    fn hermitian_limit_keeps_unit_success() {
        let p = params(3, 0.8, 1.0, 1e-12, Boundary::Open);
        let enc = SectorEncoding::new(3, 1).unwrap();
        let opts = EvolveOptions::exact(2.0, 40);
        let res = evolve(&p, &enc, &[2], &opts).unwrap();
        for s in &res.success_probability {
            assert!((s - 1.0).abs() < 1e-9);
        }
        // sum of occupancies is the particle count
        for occ in &res.occupancies {
            assert_abs_diff_eq!(occ.iter().sum::<f64>(), 1.0, epsilon = 1e-10);
        }
    }

    #[test]
    fn success_probability_is_non_increasing() {
        let p = params(3, 0.5, 1.0, 0.6, Boundary::Open);
        let enc = SectorEncoding::new(3, 1).unwrap();
        let res = evolve(&p, &enc, &[0], &EvolveOptions::exact(3.0, 60)).unwrap();
        for w in res.success_probability.windows(2) {
            assert!(w[1] <= w[0] + 1e-12);
        }
    }

    // --- convergence to the dense propagator ---------------------------------

    fn oracle_occupancies(p: &LadderParams, enc: &SectorEncoding, initial: usize, t: f64) -> Vec<f64> {
        let h = model::build_many_body(p, enc).unwrap();
        let u = expm(&(h * Complex64::new(0.0, -t)));
        let d = enc.dim();
        let mut psi = vec![C_ZERO; d];
        for i in 0..d {
            psi[i] = u[(i, initial)];
        }
        let den: f64 = psi.iter().map(|a| a.norm_sqr()).sum();
        let n_sites = 2 * p.n_cells;
        let mut occ = vec![0.0; n_sites];
        for i in 0..d {
            let w = psi[i].norm_sqr() / den;
            for (z, &o) in enc.occupancy_from_index(i).unwrap().iter().enumerate() {
                if o == 1 {
                    occ[z] += w;
                }
            }
        }
        occ
    }

    fn max_occ_err(p: &LadderParams, enc: &SectorEncoding, initial: usize, opts: &EvolveOptions) -> f64 {
        let res = evolve(p, enc, &enc.unrank(initial).unwrap(), opts).unwrap();
        let last = res.occupancies.last().unwrap();
        let want = oracle_occupancies(p, enc, initial, opts.t_max);
        last.iter().zip(&want).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
    }

    #[test]
    fn halving_the_step_halves_the_occupancy_error() {
        let p = params(3, 0.5, 1.0, 0.7, Boundary::Open);
        let enc = SectorEncoding::new(3, 1).unwrap();
        let mut coarse = EvolveOptions::exact(1.2, 10);
        coarse.record_every = 10;
        let mut fine = EvolveOptions::exact(1.2, 20);
        fine.record_every = 20;
        let (e_coarse, e_fine) = (
            max_occ_err(&p, &enc, 0, &coarse),
            max_occ_err(&p, &enc, 0, &fine),
        );
        let ratio = e_coarse / e_fine;
        assert!(
            (1.4..2.6).contains(&ratio),
            "first-order stepping: expected ~2x error drop, got {ratio:.2} ({e_coarse:.2e} -> {e_fine:.2e})"
        );
    }

    #[test]
    fn dense_exponential_strategy_has_no_trotter_error_in_mh() {
        // with exact loss and exact M_H, the only deviation from the dense
        // propagator is the M_A/M_H splitting error
        let p = params(2, 0.6, 1.0, 0.5, Boundary::Open);
        let enc = SectorEncoding::new(2, 1).unwrap();
        let mut opts = EvolveOptions::exact(1.0, 400);
        opts.mh = MhStrategy::DenseExponential;
        opts.record_every = 400;
        let err = max_occ_err(&p, &enc, 1, &opts);
        assert!(err < 2e-3, "splitting error at m=400 should be small, got {err:.2e}");
    }

    // --- path equivalence -----------------------------------------------------

    #[test]
    fn circuit_and_matrix_paths_agree_exactly() {
        for (n, p_cnt) in [(2usize, 1usize), (2, 2)] {
            let p = params(n, 0.5, 1.0, 0.6, Boundary::Open);
            let enc = SectorEncoding::new(n, p_cnt).unwrap();
            let mut a = EvolveOptions::exact(0.8, 8);
            a.mh = MhStrategy::TrotterizedMatrix;
            let mut b = a.clone();
            b.mh = MhStrategy::CircuitLevel;
            let init = enc.unrank(0).unwrap();
            let ra = evolve(&p, &enc, &init, &a).unwrap();
            let rb = evolve(&p, &enc, &init, &b).unwrap();
            for (oa, ob) in ra.occupancies.iter().zip(&rb.occupancies) {
                for (x, y) in oa.iter().zip(ob) {
                    assert_abs_diff_eq!(x, y, epsilon = 1e-10);
                }
            }
            for (sa, sb) in ra.success_probability.iter().zip(&rb.success_probability) {
                assert_abs_diff_eq!(sa, sb, epsilon = 1e-10);
            }
        }
    }

    #[test]
    fn solved_expansion_circuit_matches_its_matrix_form() {
        let p = params(2, 0.4, 1.0, 0.5, Boundary::Open);
        let enc = SectorEncoding::new(2, 1).unwrap();
        let mut a = EvolveOptions::exact(0.6, 6);
        a.loss = LossRealization::SolvedExpansion { order: 2, pairs: 1 };
        a.mh = MhStrategy::TrotterizedMatrix;
        let mut b = a.clone();
        b.mh = MhStrategy::CircuitLevel;
        let ra = evolve(&p, &enc, &[1], &a).unwrap();
        let rb = evolve(&p, &enc, &[1], &b).unwrap();
        for (sa, sb) in ra.success_probability.iter().zip(&rb.success_probability) {
            assert_abs_diff_eq!(sa, sb, epsilon = 1e-10);
        }
        for (oa, ob) in ra.occupancies.iter().zip(&rb.occupancies) {
            for (x, y) in oa.iter().zip(ob) {
                assert_abs_diff_eq!(x, y, epsilon = 1e-10);
            }
        }
    }

    #[test]
    fn shots_converge_to_the_exact_path() {
        let p = params(2, 0.7, 1.0, 0.5, Boundary::Open);
        let enc = SectorEncoding::new(2, 1).unwrap();
        let mut exact = EvolveOptions::exact(0.5, 5);
        exact.mh = MhStrategy::CircuitLevel;
        let mut sampled = exact.clone();
        sampled.mode = RunMode::Shots(20_000);
        let re = evolve(&p, &enc, &[0], &exact).unwrap();
        let rs = evolve(&p, &enc, &[0], &sampled).unwrap();
        assert_eq!(rs.discarded_shots.iter().sum::<u64>(), 0, "noise-free run discards nothing");
        let last = re.occupancies.len() - 1;
        for z in 0..4 {
            let (want, got) = (re.occupancies[last][z], rs.occupancies[last][z]);
            let sigma = (want * (1.0 - want) / 20_000.0).sqrt().max(1e-4);
            assert!(
                (got - want).abs() < 4.0 * sigma,
                "site {z}: exact {want:.4}, sampled {got:.4}"
            );
        }
        let (s_want, s_got) = (
            re.success_probability[last],
            rs.success_probability[last],
        );
        let sigma = (s_want * (1.0 - s_want) / 20_000.0).sqrt();
        assert!((s_got - s_want).abs() < 4.0 * sigma);
    }

    #[test]
    fn all_failed_shots_are_reported() {
        let gamma = 40.0;
        let p = params(2, 0.0, 0.0, gamma, Boundary::Open);
        let enc = SectorEncoding::new(2, 1).unwrap();
        let mut opts = EvolveOptions::exact(1.0, 2);
        opts.mh = MhStrategy::CircuitLevel;
        opts.mode = RunMode::Shots(50);
        let err = evolve(&p, &enc, &[1], &opts);
        assert!(matches!(err, Err(Error::AllShotsFailed { .. })), "got {err:?}");
    }

    // --- observables -------------------------------------------------------------

    #[test]
    fn imaginary_energy_examples() {
        let gamma = 0.9;
        // single particle on an a site / a b site (4-site chain, 2 qubits)
        assert_abs_diff_eq!(
            imaginary_energy_from_occupancies(&[1.0, 0.0, 0.0, 0.0], gamma),
            0.0,
            epsilon = 1e-15
        );
        assert_abs_diff_eq!(
            imaginary_energy_from_occupancies(&[0.0, 1.0, 0.0, 0.0], gamma),
            -gamma,
            epsilon = 1e-15
        );
        // agreement between the Pauli-expansion and occupancy estimators
        let p = params(2, 0.3, 1.0, gamma, Boundary::Open);
        let enc = SectorEncoding::new(2, 1).unwrap();
        let h = model::build_many_body(&p, &enc).unwrap();
        let h_a = model::split(&h).unwrap().antihermitian_generator;
        let terms = model::hermitian_pauli_terms(&h_a, 2, 1e-12).unwrap();
        let mut state = vec![C_ZERO; 4];
        state[1] = Complex64::new(0.6, 0.0);
        state[3] = Complex64::new(0.8, 0.0);
        let from_terms = imaginary_energy_from_terms(&state, &terms);
        let occ = [0.0, 0.36, 0.0, 0.64];
        let from_occ = imaginary_energy_from_occupancies(&occ, gamma);
        assert_abs_diff_eq!(from_terms, from_occ, epsilon = 1e-12);
        // maximally mixed single-particle sector: half the sites are lossy
        let mixed = maximally_mixed_initials(&enc).unwrap();
        assert_eq!(mixed.len(), 4);
        let avg: f64 = mixed
            .iter()
            .map(|sites| {
                let mut occ = vec![0.0; 4];
                occ[sites[0]] = 1.0;
                imaginary_energy_from_occupancies(&occ, gamma)
            })
            .sum::<f64>()
            / 4.0;
        assert_abs_diff_eq!(avg, -gamma / 2.0, epsilon = 1e-12);
    }

    #[test]
    fn purification_approaches_the_slowest_decay_mode() {
        let p = params(3, 0.4, 1.0, 0.5, Boundary::Periodic);
        let enc = SectorEncoding::new(3, 1).unwrap();
        let mut opts = EvolveOptions::exact(14.0, 280);
        opts.record_every = 40;
        let series = purified_imaginary_energy(&p, &enc, &opts).unwrap();
        let h = model::build_single_particle(&p).unwrap();
        let spec = crate::linalg::eigenvalues(&h).unwrap();
        let max_im = spec.iter().map(|e| e.im).fold(f64::NEG_INFINITY, f64::max);
        let last = *series.imaginary_energy.last().unwrap();
        assert!(
            (last - max_im).abs() < 0.02 * p.gamma,
            "late-time Im E {last:.4} vs extremal {max_im:.4}"
        );
        // early-time value starts near the mixed-state average -gamma/2
        assert!((series.imaginary_energy[0] + p.gamma / 2.0).abs() < 1e-9);
    }
}
