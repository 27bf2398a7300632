//! Pauli algebra in the symplectic (binary) representation.
//!
//! An n-qubit Pauli is stored as two packed bit vectors: `x` bits and `z`
//! bits, one bit per qubit. Site `(x, z)` encodes `I=(0,0)`, `X=(1,0)`,
//! `Z=(0,1)` and `Y=(1,1)` with the convention `Y = i·X·Z`. Commutation,
//! multiplication with exact phase tracking and conjugation by layers of
//! CX/CZ gates all reduce to word-level bit operations.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PauliError {
    #[error("invalid Pauli character {0:?} (expected I, X, Y or Z)")]
    InvalidChar(char),
    #[error("empty Pauli string")]
    Empty,
    #[error("gate qubits out of range or overlapping in layer")]
    InvalidLayer,
}

/// Single-qubit Pauli letter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[repr(u8)]
pub enum Letter {
    I = 0,
    X = 1,
    Y = 2,
    Z = 3,
}

impl Letter {
    pub fn from_xz(x: bool, z: bool) -> Self {
        match (x, z) {
            (false, false) => Letter::I,
            (true, false) => Letter::X,
            (true, true) => Letter::Y,
            (false, true) => Letter::Z,
        }
    }

    pub fn xz(self) -> (bool, bool) {
        match self {
            Letter::I => (false, false),
            Letter::X => (true, false),
            Letter::Y => (true, true),
            Letter::Z => (false, true),
        }
    }

    pub fn to_char(self) -> char {
        match self {
            Letter::I => 'I',
            Letter::X => 'X',
            Letter::Y => 'Y',
            Letter::Z => 'Z',
        }
    }
}

const WORD_BITS: usize = 64;

fn n_words(n: usize) -> usize {
    n.div_ceil(WORD_BITS)
}

/// An n-qubit Pauli operator without phase, in symplectic form.
///
/// The representation is canonical: two values are equal iff their bit
/// vectors are equal. The text form is big-endian over `{I,X,Y,Z}` with
/// qubit 0 leftmost; this is the format used in all files and CLI output.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct PauliString {
    n: usize,
    x: Vec<u64>,
    z: Vec<u64>,
}

impl PauliString {
    /// The identity on `n` qubits.
    pub fn identity(n: usize) -> Self {
        assert!(n >= 1, "qubit count must be at least 1");
        PauliString {
            n,
            x: vec![0; n_words(n)],
            z: vec![0; n_words(n)],
        }
    }

    pub fn from_letters(letters: &[Letter]) -> Self {
        assert!(!letters.is_empty());
        let mut p = PauliString::identity(letters.len());
        for (q, &l) in letters.iter().enumerate() {
            p.set(q, l);
        }
        p
    }

    /// Single non-identity letter at qubit `q`, identity elsewhere.
    pub fn single(n: usize, q: usize, letter: Letter) -> Self {
        let mut p = PauliString::identity(n);
        p.set(q, letter);
        p
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn is_identity(&self) -> bool {
        self.x.iter().all(|&w| w == 0) && self.z.iter().all(|&w| w == 0)
    }

    #[inline]
    pub fn x_bit(&self, q: usize) -> bool {
        (self.x[q / WORD_BITS] >> (q % WORD_BITS)) & 1 == 1
    }

    #[inline]
    pub fn z_bit(&self, q: usize) -> bool {
        (self.z[q / WORD_BITS] >> (q % WORD_BITS)) & 1 == 1
    }

    #[inline]
    pub fn get(&self, q: usize) -> Letter {
        Letter::from_xz(self.x_bit(q), self.z_bit(q))
    }

    pub fn set(&mut self, q: usize, letter: Letter) {
        assert!(q < self.n, "qubit index out of range");
        let (x, z) = letter.xz();
        let (w, b) = (q / WORD_BITS, q % WORD_BITS);
        self.x[w] = (self.x[w] & !(1u64 << b)) | ((x as u64) << b);
        self.z[w] = (self.z[w] & !(1u64 << b)) | ((z as u64) << b);
    }

    #[inline]
    pub fn flip_x(&mut self, q: usize) {
        self.x[q / WORD_BITS] ^= 1u64 << (q % WORD_BITS);
    }

    #[inline]
    pub fn flip_z(&mut self, q: usize) {
        self.z[q / WORD_BITS] ^= 1u64 << (q % WORD_BITS);
    }

    /// Number of non-identity sites.
    pub fn weight(&self) -> usize {
        self.x
            .iter()
            .zip(&self.z)
            .map(|(&x, &z)| (x | z).count_ones() as usize)
            .sum()
    }

    /// Qubits with a non-identity letter, ascending.
    pub fn support(&self) -> Vec<usize> {
        (0..self.n).filter(|&q| self.get(q) != Letter::I).collect()
    }

    /// Symplectic inner product: 0 if `self` and `other` commute, 1 otherwise.
    ///
    /// Computed as the parity of `x·z' ⊕ z·x'`. Panics on length mismatch.
    #[inline]
    pub fn symplectic_inner(&self, other: &PauliString) -> u8 {
        assert_eq!(self.n, other.n, "Pauli length mismatch");
        let mut acc = 0u32;
        for i in 0..self.x.len() {
            acc ^= (self.x[i] & other.z[i]).count_ones() ^ (self.z[i] & other.x[i]).count_ones();
        }
        (acc & 1) as u8
    }

    pub fn commutes_with(&self, other: &PauliString) -> bool {
        self.symplectic_inner(other) == 0
    }

    /// Phase-free product: the Pauli whose bits are the XOR of both operands.
    pub fn mul_unsigned(&self, other: &PauliString) -> PauliString {
        assert_eq!(self.n, other.n, "Pauli length mismatch");
        let mut out = self.clone();
        out.mul_unsigned_inplace(other);
        out
    }

    #[inline]
    pub fn mul_unsigned_inplace(&mut self, other: &PauliString) {
        debug_assert_eq!(self.n, other.n);
        for i in 0..self.x.len() {
            self.x[i] ^= other.x[i];
            self.z[i] ^= other.z[i];
        }
    }

    /// Ordering key used wherever a canonical generator order is required:
    /// by support (weight, then site indices), then by letters.
    pub fn canonical_key(&self) -> (usize, Vec<usize>, Vec<u8>) {
        let support = self.support();
        let letters = support.iter().map(|&q| self.get(q) as u8).collect();
        (support.len(), support, letters)
    }
}

impl fmt::Display for PauliString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for q in 0..self.n {
            write!(f, "{}", self.get(q).to_char())?;
        }
        Ok(())
    }
}

impl FromStr for PauliString {
    type Err = PauliError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s.is_empty() {
            return Err(PauliError::Empty);
        }
        let mut letters = Vec::with_capacity(s.len());
        for c in s.chars() {
            letters.push(match c {
                'I' | 'i' => Letter::I,
                'X' | 'x' => Letter::X,
                'Y' | 'y' => Letter::Y,
                'Z' | 'z' => Letter::Z,
                other => return Err(PauliError::InvalidChar(other)),
            });
        }
        Ok(PauliString::from_letters(&letters))
    }
}

impl Serialize for PauliString {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for PauliString {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// A Pauli with a global phase `i^phase_exp`, `phase_exp` mod 4.
///
/// Hermitian observables carry `phase_exp ∈ {0, 2}` only; [`SignedPauli::sign`]
/// rejects imaginary phases as a programming error.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SignedPauli {
    pub phase_exp: u8,
    pub pauli: PauliString,
}

impl SignedPauli {
    pub fn positive(pauli: PauliString) -> Self {
        SignedPauli {
            phase_exp: 0,
            pauli,
        }
    }

    pub fn identity(n: usize) -> Self {
        SignedPauli::positive(PauliString::identity(n))
    }

    /// The ±1 sign of a Hermitian Pauli. Panics if the phase is imaginary.
    pub fn sign(&self) -> i8 {
        match self.phase_exp {
            0 => 1,
            2 => -1,
            _ => panic!("imaginary phase i^{} on a Pauli observable", self.phase_exp),
        }
    }

    /// Exact operator product: `matrix(result) = matrix(self) · matrix(other)`.
    pub fn multiply(&self, other: &SignedPauli) -> SignedPauli {
        assert_eq!(
            self.pauli.n, other.pauli.n,
            "Pauli length mismatch in multiply"
        );
        let mut phase = u32::from(self.phase_exp) + u32::from(other.phase_exp);
        // Per site: i^{ax·az} X^ax Z^az · i^{bx·bz} X^bx Z^bz
        //         = i^{ax·az + bx·bz + 2·(az&bx) − cx·cz} · i^{cx·cz} X^cx Z^cz.
        for q in 0..self.pauli.n {
            let (ax, az) = (self.pauli.x_bit(q) as u32, self.pauli.z_bit(q) as u32);
            let (bx, bz) = (other.pauli.x_bit(q) as u32, other.pauli.z_bit(q) as u32);
            let (cx, cz) = (ax ^ bx, az ^ bz);
            phase = phase + ax * az + bx * bz + 2 * (az & bx) + 4 - cx * cz;
        }
        SignedPauli {
            phase_exp: (phase % 4) as u8,
            pauli: self.pauli.mul_unsigned(&other.pauli),
        }
    }
}

/// Two-qubit Clifford gate kinds supported in layers. Both square to the
/// identity, which is what makes repeated layers produce fidelity pairs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum GateKind {
    CX,
    CZ,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TwoQubitGate {
    pub kind: GateKind,
    pub control: usize,
    pub target: usize,
}

/// A moment of non-overlapping two-qubit Clifford gates.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct GateLayer {
    n: usize,
    gates: Vec<TwoQubitGate>,
}

impl<'de> Deserialize<'de> for GateLayer {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        struct Raw {
            n: usize,
            gates: Vec<TwoQubitGate>,
        }
        let raw = Raw::deserialize(d)?;
        GateLayer::new(raw.n, raw.gates).map_err(serde::de::Error::custom)
    }
}

impl GateLayer {
    pub fn new(n: usize, gates: Vec<TwoQubitGate>) -> Result<Self, PauliError> {
        let mut seen = vec![false; n];
        for g in &gates {
            if g.control >= n || g.target >= n || g.control == g.target {
                return Err(PauliError::InvalidLayer);
            }
            if seen[g.control] || seen[g.target] {
                return Err(PauliError::InvalidLayer);
            }
            seen[g.control] = true;
            seen[g.target] = true;
        }
        Ok(GateLayer { n, gates })
    }

    pub fn empty(n: usize) -> Self {
        GateLayer { n, gates: vec![] }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn gates(&self) -> &[TwoQubitGate] {
        &self.gates
    }

    /// Qubits touched by some gate in the layer.
    pub fn gate_qubits(&self) -> Vec<usize> {
        let mut qs: Vec<usize> = self
            .gates
            .iter()
            .flat_map(|g| [g.control, g.target])
            .collect();
        qs.sort_unstable();
        qs
    }

    /// Conjugate `p` by the layer: returns `U p U†` with exact phase.
    /// CX/CZ layers are self-adjoint, so applying this twice returns `p`.
    pub fn conjugate(&self, p: &SignedPauli) -> SignedPauli {
        assert_eq!(self.n, p.pauli.n(), "layer/Pauli length mismatch");
        let mut out = p.clone();
        for g in &self.gates {
            conjugate_gate(&mut out, g);
        }
        out
    }

    /// Phase-free conjugation of an unsigned Pauli (error propagation path).
    pub fn conjugate_unsigned(&self, p: &PauliString) -> PauliString {
        self.conjugate(&SignedPauli::positive(p.clone())).pauli
    }
}

/// Images of the single-site generators under gate conjugation, as
/// (letters, sign) on (control, target). All CX/CZ images carry sign +1.
fn generator_images(kind: GateKind) -> [(Letter, Letter); 4] {
    // Order: X_c, Z_c, X_t, Z_t.
    match kind {
        GateKind::CX => [
            (Letter::X, Letter::X), // X_c -> X_c X_t
            (Letter::Z, Letter::I), // Z_c -> Z_c
            (Letter::I, Letter::X), // X_t -> X_t
            (Letter::Z, Letter::Z), // Z_t -> Z_c Z_t
        ],
        GateKind::CZ => [
            (Letter::X, Letter::Z), // X_c -> X_c Z_t
            (Letter::Z, Letter::I), // Z_c -> Z_c
            (Letter::Z, Letter::X), // X_t -> Z_c X_t
            (Letter::I, Letter::Z), // Z_t -> Z_t
        ],
    }
}

fn conjugate_gate(p: &mut SignedPauli, g: &TwoQubitGate) {
    let (cx, cz) = p.pauli.get(g.control).xz();
    let (tx, tz) = p.pauli.get(g.target).xz();
    if !(cx | cz | tx | tz) {
        return;
    }
    let images = generator_images(g.kind);
    // Decompose the two-site operator as i^{cx·cz + tx·tz} X_c^cx Z_c^cz X_t^tx Z_t^tz
    // and push each generator through the gate.
    let mut acc = SignedPauli {
        phase_exp: ((cx & cz) as u8 + (tx & tz) as u8) % 4,
        pauli: PauliString::identity(2),
    };
    let factors = [cx, cz, tx, tz];
    for (i, &present) in factors.iter().enumerate() {
        if present {
            let (lc, lt) = images[i];
            let mut img = PauliString::identity(2);
            img.set(0, lc);
            img.set(1, lt);
            acc = acc.multiply(&SignedPauli::positive(img));
        }
    }
    // Fold the canonical two-site result back into p.
    let new_c = acc.pauli.get(0);
    let new_t = acc.pauli.get(1);
    p.pauli.set(g.control, new_c);
    p.pauli.set(g.target, new_t);
    p.phase_exp = (p.phase_exp + acc.phase_exp) % 4;
}

/// Uniform Pauli on the masked qubits, identity elsewhere. `mask[q] = true`
/// means qubit `q` is in the support set.
pub fn random_pauli<R: Rng + ?Sized>(n: usize, mask: &[bool], rng: &mut R) -> PauliString {
    assert!(n >= 1);
    assert_eq!(mask.len(), n, "mask length mismatch");
    let mut p = PauliString::identity(n);
    for (q, &masked) in mask.iter().enumerate() {
        if masked {
            let letter = match rng.random_range(0..4u8) {
                0 => Letter::I,
                1 => Letter::X,
                2 => Letter::Y,
                _ => Letter::Z,
            };
            p.set(q, letter);
        }
    }
    p
}

/// Uniform Pauli on all `n` qubits.
pub fn random_pauli_full<R: Rng + ?Sized>(n: usize, rng: &mut R) -> PauliString {
    let mask = vec![true; n];
    random_pauli(n, &mask, rng)
}
