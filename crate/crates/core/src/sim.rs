//! Ground-truth simulation backends.
//!
//! [`run_clifford_trajectories`] propagates stochastic Pauli errors through
//! Clifford circuits exactly: per shot it samples one Pauli per tagged noise
//! channel, conjugates the accumulated error through subsequent gates, adds
//! preparation/readout flips, and emits a deterministic ±1 per observable.
//! The shot mean of observable `b` converges to the SPAM offset times the
//! product of channel fidelities along the circuit path.
//!
//! [`run_state_trajectories`] does the same with dense state evolution and
//! supports arbitrary rotations (guarded to 14 qubits);
//! [`noiseless_expectation`] is its exact noise-free oracle.

use num_complex::Complex64;
use rand::Rng;
use thiserror::Error;

use crate::circuit::{Circuit, CircuitError, Gate1, Moment, NoiseSpec, ShotTable};
use crate::lindblad::apply_probability;
use crate::pauli::{GateKind, Letter, PauliString, SignedPauli};

#[derive(Debug, Error)]
pub enum SimError {
    #[error("non-Clifford gate in a Clifford-only simulation: {0:?}")]
    NonCliffordGate(Gate1),
    #[error("observable {0} is not diagonal in the measurement frame")]
    NonDiagonalObservable(PauliString),
    #[error("observable {0} has no deterministic value in this circuit")]
    NonDeterministicObservable(PauliString),
    #[error("dense backend supports at most {max} qubits, circuit has {got}")]
    SizeGuard { max: usize, got: usize },
    #[error("observable length {got} does not match circuit width {expected}")]
    LengthMismatch { expected: usize, got: usize },
    #[error(transparent)]
    Circuit(#[from] CircuitError),
}

const DENSE_MAX_QUBITS: usize = 14;

fn check_observables(circuit: &Circuit, observables: &[PauliString]) -> Result<(), SimError> {
    for b in observables {
        if b.n() != circuit.n() {
            return Err(SimError::LengthMismatch {
                expected: circuit.n(),
                got: b.n(),
            });
        }
        // Diagonal in the final (computational) frame: Z/I letters only.
        if (0..b.n()).any(|q| b.x_bit(q)) {
            return Err(SimError::NonDiagonalObservable(b.clone()));
        }
    }
    Ok(())
}

fn conjugate_singles(err: &mut PauliString, ops: &[Gate1]) -> Result<(), SimError> {
    for (q, g) in ops.iter().enumerate() {
        let letter = err.get(q);
        if letter == Letter::I && matches!(g, Gate1::I) {
            continue;
        }
        let (img, _sign) = g
            .clifford_conjugation(letter)
            .ok_or(SimError::NonCliffordGate(*g))?;
        err.set(q, img);
    }
    Ok(())
}

/// Heisenberg pullback of `b` through the ideal circuit (noise skipped,
/// Pauli frames included). The result must be a signed Z-type Pauli for the
/// shot outcome to be deterministic; its sign is the noiseless outcome.
fn ideal_value(circuit: &Circuit, b: &PauliString) -> Result<i8, SimError> {
    let mut sp = SignedPauli::positive(b.clone());
    for moment in circuit.moments().iter().rev() {
        match moment {
            Moment::Measure(_) => {}
            Moment::Singles(ops) => {
                for (q, g) in ops.iter().enumerate() {
                    let letter = sp.pauli.get(q);
                    let (img, sign) = g
                        .clifford_conjugation_inv(letter)
                        .ok_or(SimError::NonCliffordGate(*g))?;
                    sp.pauli.set(q, img);
                    if sign < 0 {
                        sp.phase_exp = (sp.phase_exp + 2) % 4;
                    }
                }
            }
            Moment::Layer(lm) => {
                if let Some(post) = &lm.post {
                    if sp.pauli.symplectic_inner(post) == 1 {
                        sp.phase_exp = (sp.phase_exp + 2) % 4;
                    }
                }
                sp = lm.layer.conjugate(&sp);
                if let Some(pre) = &lm.pre {
                    if sp.pauli.symplectic_inner(pre) == 1 {
                        sp.phase_exp = (sp.phase_exp + 2) % 4;
                    }
                }
            }
        }
    }
    if (0..sp.pauli.n()).any(|q| sp.pauli.x_bit(q)) {
        return Err(SimError::NonDeterministicObservable(b.clone()));
    }
    Ok(sp.sign())
}

/// Exact stochastic-Pauli trajectory simulation of a Clifford circuit.
///
/// Requires every gate to be Clifford and every observable to be diagonal
/// (Z-type) in the final frame with a deterministic noiseless value.
pub fn run_clifford_trajectories<R: Rng + ?Sized>(
    circuit: &Circuit,
    noise: &NoiseSpec,
    observables: &[PauliString],
    shots: usize,
    rng: &mut R,
) -> Result<ShotTable, SimError> {
    noise.validate(circuit)?;
    check_observables(circuit, observables)?;
    let n = circuit.n();

    let ideal: Vec<i8> = observables
        .iter()
        .map(|b| ideal_value(circuit, b))
        .collect::<Result<_, _>>()?;

    // Resolve models and idle sets per layer moment once.
    struct LayerNoise<'a> {
        model: Option<&'a crate::lindblad::SparseModel>,
        idle: Vec<usize>,
    }
    let mut layer_noise = Vec::new();
    for m in circuit.moments() {
        if let Moment::Layer(lm) = m {
            let idle = if noise.idle_z_rate.is_some() {
                let busy = lm.layer.gate_qubits();
                (0..n).filter(|q| !busy.contains(q)).collect()
            } else {
                vec![]
            };
            layer_noise.push(LayerNoise {
                model: noise.layer_models.get(&lm.tag),
                idle,
            });
        }
    }
    let idle_threshold = noise
        .idle_z_rate
        .map(|r| (apply_probability(r) * 2.0f64.powi(64)) as u64)
        .unwrap_or(0);
    let prep_thresholds: Vec<u64> = noise
        .prep_flip
        .iter()
        .map(|&p| (p * 2.0f64.powi(64)) as u64)
        .collect();
    let readout_thresholds: Vec<u64> = noise
        .readout_flip
        .iter()
        .map(|&p| (p * 2.0f64.powi(64)) as u64)
        .collect();

    let mut outcomes = vec![vec![0i8; shots]; observables.len()];
    for shot in 0..shots {
        let mut err = PauliString::identity(n);
        for (q, &t) in prep_thresholds.iter().enumerate() {
            if t > 0 && rng.next_u64() < t {
                err.flip_x(q);
            }
        }
        let mut layer_idx = 0;
        for moment in circuit.moments() {
            match moment {
                Moment::Measure(_) => {}
                Moment::Singles(ops) => conjugate_singles(&mut err, ops)?,
                Moment::Layer(lm) => {
                    let ln = &layer_noise[layer_idx];
                    layer_idx += 1;
                    if let Some(model) = ln.model {
                        model.sample_physical_into(&mut err, rng);
                    }
                    for &q in &ln.idle {
                        if rng.next_u64() < idle_threshold {
                            err.flip_z(q);
                        }
                    }
                    err = lm.layer.conjugate_unsigned(&err);
                }
            }
        }
        for (q, &t) in readout_thresholds.iter().enumerate() {
            if t > 0 && rng.next_u64() < t {
                err.flip_x(q);
            }
        }
        for ((b, row), &v) in observables.iter().zip(&mut outcomes).zip(&ideal) {
            let flip = err.symplectic_inner(b);
            row[shot] = if flip == 1 { -v } else { v };
        }
    }

    Ok(ShotTable {
        observables: observables.to_vec(),
        outcomes,
    })
}

// --- dense state backend ---

struct State {
    n: usize,
    amps: Vec<Complex64>,
}

impl State {
    fn zero(n: usize) -> Self {
        let mut amps = vec![Complex64::new(0.0, 0.0); 1 << n];
        amps[0] = Complex64::new(1.0, 0.0);
        State { n, amps }
    }

    fn apply_gate1(&mut self, q: usize, g: &Gate1) {
        if matches!(g, Gate1::I) {
            return;
        }
        let m = g.matrix();
        let bit = 1usize << q;
        for base in 0..self.amps.len() {
            if base & bit == 0 {
                let a = self.amps[base];
                let b = self.amps[base | bit];
                self.amps[base] = m[0][0] * a + m[0][1] * b;
                self.amps[base | bit] = m[1][0] * a + m[1][1] * b;
            }
        }
    }

    fn apply_two_qubit(&mut self, kind: GateKind, control: usize, target: usize) {
        let cb = 1usize << control;
        let tb = 1usize << target;
        match kind {
            GateKind::CX => {
                for i in 0..self.amps.len() {
                    if i & cb != 0 && i & tb == 0 {
                        self.amps.swap(i, i | tb);
                    }
                }
            }
            GateKind::CZ => {
                for amp in self.amps.iter_mut().enumerate().filter_map(|(i, a)| {
                    (i & cb != 0 && i & tb != 0).then_some(a)
                }) {
                    *amp = -*amp;
                }
            }
        }
    }

    /// Apply a (canonical, positive) Pauli operator.
    fn apply_pauli(&mut self, p: &PauliString) {
        let mut xmask = 0usize;
        let mut zmask = 0usize;
        let mut y_count = 0u32;
        for q in 0..self.n {
            if p.x_bit(q) {
                xmask |= 1 << q;
            }
            if p.z_bit(q) {
                zmask |= 1 << q;
            }
            if p.x_bit(q) && p.z_bit(q) {
                y_count += 1;
            }
        }
        if xmask == 0 && zmask == 0 {
            return;
        }
        let y_phase = match y_count % 4 {
            0 => Complex64::new(1.0, 0.0),
            1 => Complex64::new(0.0, 1.0),
            2 => Complex64::new(-1.0, 0.0),
            _ => Complex64::new(0.0, -1.0),
        };
        let mut out = vec![Complex64::new(0.0, 0.0); self.amps.len()];
        for (i, &a) in self.amps.iter().enumerate() {
            // P|b⟩ = i^{#Y} (−1)^{|b ∧ (Z∪Y)|} |b ⊕ X⟩ with masks over sites.
            let sign = if ((i & zmask).count_ones() & 1) == 1 {
                -1.0
            } else {
                1.0
            };
            out[i ^ xmask] = y_phase * sign * a;
        }
        self.amps = out;
    }

    fn sample_bits<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        for (i, a) in self.amps.iter().enumerate() {
            acc += a.norm_sqr();
            if u < acc {
                return i;
            }
        }
        self.amps.len() - 1
    }
}

fn evolve_once<R: Rng + ?Sized>(
    circuit: &Circuit,
    noise: Option<(&NoiseSpec, &mut R)>,
) -> Result<State, SimError> {
    let n = circuit.n();
    let mut state = State::zero(n);
    let mut noise = noise;
    if let Some((ns, rng)) = noise.as_mut() {
        for q in 0..n {
            if rng.random::<f64>() < ns.prep_flip[q] {
                state.apply_gate1(q, &Gate1::X);
            }
        }
    }
    for moment in circuit.moments() {
        match moment {
            Moment::Measure(_) => {}
            Moment::Singles(ops) => {
                for (q, g) in ops.iter().enumerate() {
                    state.apply_gate1(q, g);
                }
            }
            Moment::Layer(lm) => {
                if let Some(pre) = &lm.pre {
                    state.apply_pauli(pre);
                }
                if let Some((ns, rng)) = noise.as_mut() {
                    if let Some(model) = ns.layer_models.get(&lm.tag) {
                        let draw = model.sample_physical(rng);
                        state.apply_pauli(&draw);
                    }
                    if let Some(rate) = ns.idle_z_rate {
                        let busy = lm.layer.gate_qubits();
                        let p = apply_probability(rate);
                        for q in (0..n).filter(|q| !busy.contains(q)) {
                            if rng.random::<f64>() < p {
                                state.apply_gate1(q, &Gate1::Z);
                            }
                        }
                    }
                }
                for g in lm.layer.gates() {
                    state.apply_two_qubit(g.kind, g.control, g.target);
                }
                if let Some(post) = &lm.post {
                    state.apply_pauli(post);
                }
            }
        }
    }
    Ok(state)
}

/// Dense trajectory simulation: per shot, evolve the state with freshly
/// sampled Pauli insertions and SPAM flips, then sample one computational
/// outcome from the exact distribution.
pub fn run_state_trajectories<R: Rng + ?Sized>(
    circuit: &Circuit,
    noise: &NoiseSpec,
    observables: &[PauliString],
    shots: usize,
    rng: &mut R,
) -> Result<ShotTable, SimError> {
    let n = circuit.n();
    if n > DENSE_MAX_QUBITS {
        return Err(SimError::SizeGuard {
            max: DENSE_MAX_QUBITS,
            got: n,
        });
    }
    noise.validate(circuit)?;
    check_observables(circuit, observables)?;

    let zmasks: Vec<usize> = observables
        .iter()
        .map(|b| {
            (0..n)
                .filter(|&q| b.z_bit(q))
                .fold(0usize, |m, q| m | (1 << q))
        })
        .collect();

    let mut outcomes = vec![vec![0i8; shots]; observables.len()];
    for shot in 0..shots {
        let state = evolve_once(circuit, Some((noise, rng)))?;
        let mut bits = state.sample_bits(rng);
        for q in 0..n {
            if rng.random::<f64>() < noise.readout_flip[q] {
                bits ^= 1 << q;
            }
        }
        for (&zm, row) in zmasks.iter().zip(&mut outcomes) {
            row[shot] = if ((bits & zm).count_ones() & 1) == 1 { -1 } else { 1 };
        }
    }
    Ok(ShotTable {
        observables: observables.to_vec(),
        outcomes,
    })
}

/// Exact noise-free expectation value of a (Hermitian) Pauli observable.
pub fn noiseless_expectation(circuit: &Circuit, observable: &PauliString) -> Result<f64, SimError> {
    let n = circuit.n();
    if n > DENSE_MAX_QUBITS {
        return Err(SimError::SizeGuard {
            max: DENSE_MAX_QUBITS,
            got: n,
        });
    }
    if observable.n() != n {
        return Err(SimError::LengthMismatch {
            expected: n,
            got: observable.n(),
        });
    }
    let state = evolve_once::<rand_chacha::ChaCha8Rng>(circuit, None)?;
    let mut transformed = State {
        n,
        amps: state.amps.clone(),
    };
    transformed.apply_pauli(observable);
    let val: Complex64 = state
        .amps
        .iter()
        .zip(&transformed.amps)
        .map(|(a, b)| a.conj() * b)
        .sum();
    Ok(val.re)
}
