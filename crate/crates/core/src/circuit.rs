//! Gate-level circuit IR and compilation passes.
//!
//! Circuits are flat instruction lists over the basis set
//! {X, H, S, Sdg, RZ, RX, CX} plus mid-circuit measurement, a classically
//! conditioned X (used to reset the recycled ancilla), and barriers. The
//! passes built on top are: Pauli-rotation synthesis (basis changes + CX
//! ladder + central RZ), first-order Trotter steps with an optional ancilla
//! control on the central rotations, commuting-group partitioning for
//! simultaneous measurement, the LCU step assembly around one ancilla,
//! probabilistic gate folding for zero-noise extrapolation, and CX Pauli
//! twirling from a brute-forced conjugation table.
//!
//! Qubit 0 is the most significant bit of a basis index, matching the Pauli
//! mask convention.

use crate::linalg::{CMat, C_ONE, C_ZERO};
use crate::pauli::{Pauli, PauliString, PauliTerm};
use crate::{Error, Result};
use num_complex::Complex64;
use rand::Rng;
use serde::Serialize;

/// Basis gate.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub enum Gate {
    X,
    H,
    S,
    Sdg,
    RZ(f64),
    RX(f64),
    CX,
}

impl Gate {
    pub fn arity(&self) -> usize {
        match self {
            Gate::CX => 2,
            _ => 1,
        }
    }

    /// Inverse gate (used by folding).
    pub fn inverse(&self) -> Gate {
        match *self {
            Gate::S => Gate::Sdg,
            Gate::Sdg => Gate::S,
            Gate::RZ(t) => Gate::RZ(-t),
            Gate::RX(t) => Gate::RX(-t),
            g => g,
        }
    }
}

/// One circuit instruction.
#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Instruction {
    Gate { gate: Gate, qubits: Vec<usize> },
    Measure { qubit: usize, clbit: usize },
    /// X on `qubit` when classical bit `clbit` reads 1 (ancilla reset).
    ConditionalX { qubit: usize, clbit: usize },
    Barrier,
}

/// Gate-level circuit with classical-bit bookkeeping.
#[derive(Clone, Debug, Default, Serialize)]
pub struct Circuit {
    pub n_qubits: usize,
    pub n_clbits: usize,
    pub instructions: Vec<Instruction>,
}

impl Circuit {
    pub fn new(n_qubits: usize) -> Self {
        Circuit { n_qubits, n_clbits: 0, instructions: Vec::new() }
    }

    pub fn gate(&mut self, gate: Gate, qubits: &[usize]) -> &mut Self {
        self.instructions.push(Instruction::Gate { gate, qubits: qubits.to_vec() });
        self
    }

    pub fn x(&mut self, q: usize) -> &mut Self {
        self.gate(Gate::X, &[q])
    }
    pub fn h(&mut self, q: usize) -> &mut Self {
        self.gate(Gate::H, &[q])
    }
    pub fn s(&mut self, q: usize) -> &mut Self {
        self.gate(Gate::S, &[q])
    }
    pub fn sdg(&mut self, q: usize) -> &mut Self {
        self.gate(Gate::Sdg, &[q])
    }
    pub fn rz(&mut self, q: usize, theta: f64) -> &mut Self {
        self.gate(Gate::RZ(theta), &[q])
    }
    pub fn rx(&mut self, q: usize, theta: f64) -> &mut Self {
        self.gate(Gate::RX(theta), &[q])
    }
    pub fn cx(&mut self, control: usize, target: usize) -> &mut Self {
        self.gate(Gate::CX, &[control, target])
    }
    pub fn barrier(&mut self) -> &mut Self {
        self.instructions.push(Instruction::Barrier);
        self
    }

    /// Measures `qubit` into a fresh classical bit; returns its index.
    pub fn measure(&mut self, qubit: usize) -> usize {
        let clbit = self.n_clbits;
        self.n_clbits += 1;
        self.instructions.push(Instruction::Measure { qubit, clbit });
        clbit
    }

    pub fn conditional_x(&mut self, qubit: usize, clbit: usize) -> &mut Self {
        self.instructions.push(Instruction::ConditionalX { qubit, clbit });
        self
    }

    /// Appends `other`, shifting its classical bits past this circuit's.
    pub fn extend_from(&mut self, other: &Circuit) -> Result<()> {
        if other.n_qubits != self.n_qubits {
            return Err(Error::Circuit(format!(
                "register mismatch: {} vs {} qubits",
                self.n_qubits, other.n_qubits
            )));
        }
        let shift = self.n_clbits;
        for ins in &other.instructions {
            self.instructions.push(match ins {
                Instruction::Measure { qubit, clbit } => {
                    Instruction::Measure { qubit: *qubit, clbit: clbit + shift }
                }
                Instruction::ConditionalX { qubit, clbit } => {
                    Instruction::ConditionalX { qubit: *qubit, clbit: clbit + shift }
                }
                other => other.clone(),
            });
        }
        self.n_clbits += other.n_clbits;
        Ok(())
    }

    /// (1-qubit, 2-qubit) gate counts; measurements and resets not included.
    pub fn gate_counts(&self) -> (usize, usize) {
        let mut one = 0;
        let mut two = 0;
        for ins in &self.instructions {
            if let Instruction::Gate { gate, .. } = ins {
                match gate.arity() {
                    1 => one += 1,
                    _ => two += 1,
                }
            }
        }
        (one, two)
    }

    /// Lint pass: index ranges, gate arities, finite angles, and the rule
    /// that conditions only reference classical bits already written.
    pub fn validate(&self) -> Result<()> {
        let mut written = vec![false; self.n_clbits];
        for (pos, ins) in self.instructions.iter().enumerate() {
            match ins {
                Instruction::Gate { gate, qubits } => {
                    if qubits.len() != gate.arity() {
                        return Err(Error::Circuit(format!(
                            "instruction {pos}: {gate:?} takes {} qubit(s), got {}",
                            gate.arity(),
                            qubits.len()
                        )));
                    }
                    if qubits.iter().any(|&q| q >= self.n_qubits) {
                        return Err(Error::Circuit(format!("instruction {pos}: qubit out of range")));
                    }
                    if qubits.len() == 2 && qubits[0] == qubits[1] {
                        return Err(Error::Circuit(format!("instruction {pos}: CX needs distinct qubits")));
                    }
                    if let Gate::RZ(t) | Gate::RX(t) = gate {
                        if !t.is_finite() {
                            return Err(Error::Circuit(format!("instruction {pos}: non-finite angle")));
                        }
                    }
                }
                Instruction::Measure { qubit, clbit } => {
                    if *qubit >= self.n_qubits || *clbit >= self.n_clbits {
                        return Err(Error::Circuit(format!("instruction {pos}: measure out of range")));
                    }
                    written[*clbit] = true;
                }
                Instruction::ConditionalX { qubit, clbit } => {
                    if *qubit >= self.n_qubits || *clbit >= self.n_clbits {
                        return Err(Error::Circuit(format!("instruction {pos}: condition out of range")));
                    }
                    if !written[*clbit] {
                        return Err(Error::Circuit(format!(
                            "instruction {pos}: condition reads classical bit {clbit} before any measurement"
                        )));
                    }
                }
                Instruction::Barrier => {}
            }
        }
        Ok(())
    }

    /// Dense unitary of a measurement-free circuit (test-scale sizes only).
    pub fn unitary(&self) -> Result<CMat> {
        if self.n_qubits > 12 {
            return Err(Error::Dimension(format!(
                "dense unitary limited to 12 qubits, circuit has {}",
                self.n_qubits
            )));
        }
        let dim = 1usize << self.n_qubits;
        let mut cols: Vec<Vec<Complex64>> = Vec::with_capacity(dim);
        for j in 0..dim {
            let mut state = vec![C_ZERO; dim];
            state[j] = C_ONE;
            for ins in &self.instructions {
                match ins {
                    Instruction::Gate { gate, qubits } => {
                        apply_gate(&mut state, self.n_qubits, *gate, qubits)
                    }
                    Instruction::Barrier => {}
                    other => {
                        return Err(Error::Circuit(format!(
                            "unitary undefined for non-gate instruction {other:?}"
                        )))
                    }
                }
            }
            cols.push(state);
        }
        Ok(CMat::from_fn(dim, dim, |i, j| cols[j][i]))
    }
}

/// In-place statevector kernel for one basis gate. `n` is the register width;
/// qubit 0 is the most significant index bit.
pub fn apply_gate(state: &mut [Complex64], n: usize, gate: Gate, qubits: &[usize]) {
    let dim = state.len();
    debug_assert_eq!(dim, 1 << n);
    let mask = |q: usize| 1usize << (n - 1 - q);
    match gate {
        Gate::X => {
            let m = mask(qubits[0]);
            for i in 0..dim {
                if i & m == 0 {
                    state.swap(i, i | m);
                }
            }
        }
        Gate::H => {
            let m = mask(qubits[0]);
            let inv = std::f64::consts::FRAC_1_SQRT_2;
            for i in 0..dim {
                if i & m == 0 {
                    let (a, b) = (state[i], state[i | m]);
                    state[i] = (a + b) * inv;
                    state[i | m] = (a - b) * inv;
                }
            }
        }
        Gate::S => {
            let m = mask(qubits[0]);
            for (i, amp) in state.iter_mut().enumerate() {
                if i & m != 0 {
                    *amp *= Complex64::new(0.0, 1.0);
                }
            }
        }
        Gate::Sdg => {
            let m = mask(qubits[0]);
            for (i, amp) in state.iter_mut().enumerate() {
                if i & m != 0 {
                    *amp *= Complex64::new(0.0, -1.0);
                }
            }
        }
        Gate::RZ(theta) => {
            let m = mask(qubits[0]);
            let lo = Complex64::from_polar(1.0, -theta / 2.0);
            let hi = Complex64::from_polar(1.0, theta / 2.0);
            for (i, amp) in state.iter_mut().enumerate() {
                *amp *= if i & m == 0 { lo } else { hi };
            }
        }
        Gate::RX(theta) => {
            let m = mask(qubits[0]);
            let c = (theta / 2.0).cos();
            let s = Complex64::new(0.0, -(theta / 2.0).sin());
            for i in 0..dim {
                if i & m == 0 {
                    let (a, b) = (state[i], state[i | m]);
                    state[i] = a * c + b * s;
                    state[i | m] = a * s + b * c;
                }
            }
        }
        Gate::CX => {
            let mc = mask(qubits[0]);
            let mt = mask(qubits[1]);
            for i in 0..dim {
                if i & mc != 0 && i & mt == 0 {
                    state.swap(i, i | mt);
                }
            }
        }
    }
}

/// Appends gates realizing `exp(-i theta/2 * word)`. With `control` set to
/// (ancilla, value), only the central RZ is promoted to its controlled form,
/// so the fragment acts as the rotation on the matching ancilla branch and as
/// the identity on the other.
pub fn append_pauli_rotation(
    circuit: &mut Circuit,
    word: &PauliString,
    theta: f64,
    control: Option<(usize, bool)>,
) -> Result<()> {
    if word.is_identity() {
        return Err(Error::Circuit(
            "identity word is a global phase; rotation synthesis needs support".into(),
        ));
    }
    if word.n_qubits() > circuit.n_qubits {
        return Err(Error::Circuit(format!(
            "word on {} qubits does not fit a {}-qubit circuit",
            word.n_qubits(),
            circuit.n_qubits
        )));
    }
    let support = word.support();
    if let Some((anc, _)) = control {
        if support.contains(&anc) || anc >= circuit.n_qubits {
            return Err(Error::Circuit(format!("control qubit {anc} collides with the word support")));
        }
    }

    // map each letter to the Z basis
    for &q in &support {
        match word.letter(q) {
            Pauli::X => {
                circuit.h(q);
            }
            Pauli::Y => {
                circuit.sdg(q);
                circuit.h(q);
            }
            _ => {}
        }
    }
    // parity ladder onto the last support qubit
    for w in support.windows(2) {
        circuit.cx(w[0], w[1]);
    }
    let target = *support.last().unwrap();
    match control {
        None => {
            circuit.rz(target, theta);
        }
        Some((anc, value)) => {
            // controlled-RZ from two half rotations; the sign of the second
            // half selects which ancilla branch accumulates the full angle
            let second = if value { -theta / 2.0 } else { theta / 2.0 };
            circuit.rz(target, theta / 2.0);
            circuit.cx(anc, target);
            circuit.rz(target, second);
            circuit.cx(anc, target);
        }
    }
    for w in support.windows(2).rev() {
        circuit.cx(w[0], w[1]);
    }
    for &q in &support {
        match word.letter(q) {
            Pauli::X => {
                circuit.h(q);
            }
            Pauli::Y => {
                circuit.h(q);
                circuit.s(q);
            }
            _ => {}
        }
    }
    Ok(())
}

/// Relative phase between ancilla branches produced by an identity Pauli term
/// under control: `exp(-i theta/2)` lands on the controlled branch only, up
/// to a global quarter-angle phase that cancels between the paired forward
/// and backward branch fragments of an LCU step.
fn append_controlled_global_phase(circuit: &mut Circuit, anc: usize, value: bool, theta: f64) {
    let angle = if value { -theta / 2.0 } else { theta / 2.0 };
    circuit.rz(anc, angle);
}

/// First-order Trotter step: the product of `exp(-i coeff_k word_k dt)` over
/// terms in the given order (first term acts first). With `control`, every
/// rotation is controlled on the ancilla branch, identity terms included —
/// their branch-relative phase is physical there.
pub fn trotter_step(
    terms: &[PauliTerm],
    dt: f64,
    n_qubits: usize,
    control: Option<(usize, bool)>,
) -> Result<Circuit> {
    let mut c = Circuit::new(n_qubits);
    for term in terms {
        let theta = 2.0 * term.coefficient * dt;
        if term.string.is_identity() {
            if let Some((anc, value)) = control {
                append_controlled_global_phase(&mut c, anc, value, theta);
            }
            continue;
        }
        append_pauli_rotation(&mut c, &term.string, theta, control)?;
    }
    Ok(c)
}

/// Greedy commuting-group partition: each term joins the first group (largest
/// current size first) it fully commutes with.
pub fn group_commuting(terms: &[PauliTerm]) -> Vec<Vec<PauliTerm>> {
    let mut groups: Vec<Vec<PauliTerm>> = Vec::new();
    for term in terms {
        let mut order: Vec<usize> = (0..groups.len()).collect();
        order.sort_by_key(|&g| std::cmp::Reverse(groups[g].len()));
        let slot = order.into_iter().find(|&g| {
            groups[g].iter().all(|other| other.string.commutes_with(&term.string))
        });
        match slot {
            Some(g) => groups[g].push(*term),
            None => groups.push(vec![*term]),
        }
    }
    groups
}

/// Assembles one LCU step around `ancilla`: weight-preparation V, the two
/// controlled branch fragments (already controlled on ancilla 0 and 1
/// respectively), V^dag, ancilla measurement, and a conditional X reset.
/// Success is the outcome 0.
pub fn lcu_step(
    controlled_plus: &Circuit,
    controlled_minus: &Circuit,
    weights: (f64, f64),
    ancilla: usize,
) -> Result<Circuit> {
    let (wp, wm) = weights;
    if wp < 0.0 || wm < 0.0 || wp + wm <= 0.0 {
        return Err(Error::InvalidParams(format!("invalid branch weights ({wp}, {wm})")));
    }
    if controlled_plus.n_qubits != controlled_minus.n_qubits {
        return Err(Error::Circuit("branch fragments disagree on register width".into()));
    }
    let n = controlled_plus.n_qubits;
    if ancilla >= n {
        return Err(Error::Circuit(format!("ancilla {ancilla} out of range")));
    }

    let mut c = Circuit::new(n);
    let equal = (wp - wm).abs() < 1e-14 * (wp + wm);
    let theta_v = 2.0 * (wm.sqrt()).atan2(wp.sqrt());
    if equal {
        c.h(ancilla);
    } else {
        // RY(theta) = S RX(theta) Sdg puts sqrt(w+/W) on |0> and sqrt(w-/W) on |1>
        c.sdg(ancilla);
        c.rx(ancilla, theta_v);
        c.s(ancilla);
    }
    c.extend_from(controlled_plus)?;
    c.extend_from(controlled_minus)?;
    if equal {
        c.h(ancilla);
    } else {
        c.sdg(ancilla);
        c.rx(ancilla, -theta_v);
        c.s(ancilla);
    }
    let clbit = c.measure(ancilla);
    c.conditional_x(ancilla, clbit);
    Ok(c)
}

/// Probabilistic local gate folding: every gate is replaced by G G^dag G with
/// probability (lambda-1)/2 per round, tripling rounds first while lambda > 3,
/// so expected 1q and 2q gate counts are each lambda times the original.
/// Measurements, resets, and barriers are never folded.
pub fn fold<R: Rng>(circuit: &Circuit, lambda: f64, rng: &mut R) -> Result<Circuit> {
    if lambda < 1.0 || !lambda.is_finite() {
        return Err(Error::InvalidParams(format!("fold factor must be >= 1, got {lambda}")));
    }
    let mut remaining = lambda;
    let mut current = circuit.clone();
    while remaining > 3.0 {
        current = fold_round(&current, 1.0);
        remaining /= 3.0;
    }
    let p = (remaining - 1.0) / 2.0;
    Ok(fold_round_random(&current, p, rng))
}

fn fold_gate(out: &mut Vec<Instruction>, gate: Gate, qubits: &[usize]) {
    out.push(Instruction::Gate { gate, qubits: qubits.to_vec() });
    out.push(Instruction::Gate { gate: gate.inverse(), qubits: qubits.to_vec() });
    out.push(Instruction::Gate { gate, qubits: qubits.to_vec() });
}

fn fold_round(circuit: &Circuit, _p_one: f64) -> Circuit {
    let mut out = circuit.clone();
    out.instructions.clear();
    for ins in &circuit.instructions {
        match ins {
            Instruction::Gate { gate, qubits } => fold_gate(&mut out.instructions, *gate, qubits),
            other => out.instructions.push(other.clone()),
        }
    }
    out
}

fn fold_round_random<R: Rng>(circuit: &Circuit, p: f64, rng: &mut R) -> Circuit {
    let mut out = circuit.clone();
    out.instructions.clear();
    for ins in &circuit.instructions {
        match ins {
            Instruction::Gate { gate, qubits } if rng.gen::<f64>() < p => {
                fold_gate(&mut out.instructions, *gate, qubits)
            }
            other => out.instructions.push(other.clone()),
        }
    }
    out
}

/// Conjugation table for CX Pauli twirling: entry ((P_c, P_d) -> (P_a, P_b))
/// satisfies `(P_a x P_b) CX (P_c x P_d) = CX` up to global phase.
#[derive(Clone, Debug)]
pub struct TwirlTable {
    entries: Vec<((Pauli, Pauli), (Pauli, Pauli))>,
}

const PAULIS: [Pauli; 4] = [Pauli::I, Pauli::X, Pauli::Y, Pauli::Z];

fn pauli_1q(p: Pauli) -> CMat {
    let i = Complex64::new(0.0, 1.0);
    match p {
        Pauli::I => CMat::from_row_slice(2, 2, &[C_ONE, C_ZERO, C_ZERO, C_ONE]),
        Pauli::X => CMat::from_row_slice(2, 2, &[C_ZERO, C_ONE, C_ONE, C_ZERO]),
        Pauli::Y => CMat::from_row_slice(2, 2, &[C_ZERO, -i, i, C_ZERO]),
        Pauli::Z => CMat::from_row_slice(2, 2, &[C_ONE, C_ZERO, C_ZERO, -C_ONE]),
    }
}

fn cx_4x4() -> CMat {
    let mut m = CMat::zeros(4, 4);
    m[(0, 0)] = C_ONE;
    m[(1, 1)] = C_ONE;
    m[(2, 3)] = C_ONE;
    m[(3, 2)] = C_ONE;
    m
}

impl TwirlTable {
    /// Derives all 16 entries by brute force over 4x4 matrices.
    pub fn standard() -> Result<Self> {
        let cx = cx_4x4();
        let mut entries = Vec::with_capacity(16);
        for pc in PAULIS {
            for pd in PAULIS {
                let pre = pauli_1q(pc).kronecker(&pauli_1q(pd));
                let conj = &cx * pre * &cx;
                let mut found = None;
                'search: for pa in PAULIS {
                    for pb in PAULIS {
                        let cand = pauli_1q(pa).kronecker(&pauli_1q(pb));
                        if equal_up_to_phase(&conj, &cand, 1e-12) {
                            found = Some((pa, pb));
                            break 'search;
                        }
                    }
                }
                let post = found.ok_or_else(|| {
                    Error::Circuit(format!("no Pauli pair conjugate for ({pc:?}, {pd:?})"))
                })?;
                entries.push(((pc, pd), post));
            }
        }
        Ok(TwirlTable { entries })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entry(&self, i: usize) -> ((Pauli, Pauli), (Pauli, Pauli)) {
        self.entries[i]
    }

    /// Re-checks every entry against the 4x4 identity.
    pub fn verify(&self) -> Result<()> {
        let cx = cx_4x4();
        for &((pc, pd), (pa, pb)) in &self.entries {
            let lhs = pauli_1q(pa).kronecker(&pauli_1q(pb)) * &cx * pauli_1q(pc).kronecker(&pauli_1q(pd));
            if !equal_up_to_phase(&lhs, &cx, 1e-12) {
                return Err(Error::Circuit(format!(
                    "twirl entry ({pc:?},{pd:?}) -> ({pa:?},{pb:?}) fails identity"
                )));
            }
        }
        Ok(())
    }

    pub fn lookup(&self, pre: (Pauli, Pauli)) -> Option<(Pauli, Pauli)> {
        self.entries.iter().find(|(k, _)| *k == pre).map(|(_, v)| *v)
    }
}

/// True when `a = phase * b` for some unit phase.
pub fn equal_up_to_phase(a: &CMat, b: &CMat, tol: f64) -> bool {
    if a.shape() != b.shape() {
        return false;
    }
    // anchor the phase on the largest entry of b
    let mut anchor = (0, 0);
    let mut best = 0.0;
    for i in 0..b.nrows() {
        for j in 0..b.ncols() {
            if b[(i, j)].norm() > best {
                best = b[(i, j)].norm();
                anchor = (i, j);
            }
        }
    }
    if best < tol {
        return a.iter().all(|c| c.norm() < tol);
    }
    let phase = a[anchor] / b[anchor];
    if (phase.norm() - 1.0).abs() > tol {
        return false;
    }
    (a - b * phase).iter().all(|c| c.norm() < tol)
}

fn emit_pauli_gates(c: &mut Circuit, q: usize, p: Pauli) {
    match p {
        Pauli::I => {}
        Pauli::X => {
            c.x(q);
        }
        Pauli::Z => {
            c.s(q);
            c.s(q);
        }
        Pauli::Y => {
            // ZX = -iY; the phase is global
            c.s(q);
            c.s(q);
            c.x(q);
        }
    }
}

/// Conjugates every CX by a uniformly random twirl-table entry. The unitary
/// is unchanged up to global phase.
pub fn twirl<R: Rng>(circuit: &Circuit, table: &TwirlTable, rng: &mut R) -> Circuit {
    let mut out = circuit.clone();
    out.instructions.clear();
    for ins in &circuit.instructions {
        match ins {
            Instruction::Gate { gate: Gate::CX, qubits } => {
                let ((pc, pd), (pa, pb)) = table.entry(rng.gen_range(0..table.len()));
                emit_pauli_gates(&mut out, qubits[0], pc);
                emit_pauli_gates(&mut out, qubits[1], pd);
                out.instructions.push(ins.clone());
                emit_pauli_gates(&mut out, qubits[0], pa);
                emit_pauli_gates(&mut out, qubits[1], pb);
            }
            other => out.instructions.push(other.clone()),
        }
    }
    out
}
