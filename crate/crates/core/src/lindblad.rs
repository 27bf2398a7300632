//! Sparse Pauli-Lindblad noise channels.
//!
//! A model is a set of generator Paulis `K` with nonnegative rates `λ_k`;
//! the channel is the product over `k` of `w_k·ρ + (1−w_k)·P_k ρ P_k` with
//! `w_k = (1 + e^{−2λ_k})/2`. Everything observable about the channel is a
//! function of the Pauli fidelities `f_b = exp(−2 Σ_{k anticommuting with b} λ_k)`:
//! composition adds rates, time evolution scales them, and inversion negates
//! them at sampling overhead `γ = exp(2 Σ λ_k)`.

use std::collections::BTreeMap;
use std::collections::HashMap;

use rand::RngCore;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::pauli::{Letter, PauliString};

#[derive(Debug, Error, PartialEq)]
pub enum ModelError {
    #[error("generator set must not contain the identity")]
    IdentityGenerator,
    #[error("rate must be finite and nonnegative, got {0}")]
    InvalidRate(f64),
    #[error("generator length {got} does not match model qubit count {expected}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("time scale must be finite and nonnegative, got {0}")]
    NegativeTime(f64),
    #[error("canonical expansion too large: |K| = {generators}, n = {qubits}")]
    SizeGuard { generators: usize, qubits: usize },
    #[error("fidelity vector length {0} is not a power of four")]
    BadVectorLength(usize),
    #[error("edge ({0}, {1}) references a qubit outside the model set")]
    UnknownEdgeQubit(usize, usize),
    #[error("model JSON is invalid: {0}")]
    BadFile(String),
}

/// Probability that the factor for rate `λ` applies its Pauli: `1 − w = (1 − e^{−2λ})/2`.
#[inline]
pub fn apply_probability(rate: f64) -> f64 {
    (1.0 - (-2.0 * rate).exp()) / 2.0
}

/// `w = (1 + e^{−2λ})/2`, the identity weight of one factor.
#[inline]
pub fn identity_weight(rate: f64) -> f64 {
    (1.0 + (-2.0 * rate).exp()) / 2.0
}

/// A sparse Pauli-Lindblad channel: distinct non-identity generators with
/// nonnegative rates, held in a fixed canonical order (by support, then
/// letters) so sampling streams are reproducible for a given seed.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseModel {
    n: usize,
    generators: Vec<PauliString>,
    rates: Vec<f64>,
    // 2^64-scaled application probabilities, cached for the samplers.
    thresholds: Vec<u64>,
}

impl SparseModel {
    /// Build a model from (generator, rate) pairs. Duplicate generators are
    /// merged by adding their rates; identity generators and negative or
    /// non-finite rates are rejected.
    pub fn new(n: usize, terms: Vec<(PauliString, f64)>) -> Result<Self, ModelError> {
        type CanonicalKey = (usize, Vec<usize>, Vec<u8>);
        let mut merged: BTreeMap<CanonicalKey, (PauliString, f64)> = BTreeMap::new();
        for (p, rate) in terms {
            if p.n() != n {
                return Err(ModelError::LengthMismatch {
                    expected: n,
                    got: p.n(),
                });
            }
            if p.is_identity() {
                return Err(ModelError::IdentityGenerator);
            }
            if !rate.is_finite() || rate < 0.0 {
                return Err(ModelError::InvalidRate(rate));
            }
            merged
                .entry(p.canonical_key())
                .and_modify(|e| e.1 += rate)
                .or_insert((p, rate));
        }
        let mut generators = Vec::with_capacity(merged.len());
        let mut rates = Vec::with_capacity(merged.len());
        for (_, (p, r)) in merged {
            generators.push(p);
            rates.push(r);
        }
        let thresholds = rates
            .iter()
            .map(|&r| (apply_probability(r) * 2.0f64.powi(64)) as u64)
            .collect();
        Ok(SparseModel {
            n,
            generators,
            rates,
            thresholds,
        })
    }

    /// The zero-rate model on `n` qubits (identity channel).
    pub fn zero(n: usize) -> Self {
        SparseModel::new(n, vec![]).unwrap()
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn generators(&self) -> &[PauliString] {
        &self.generators
    }

    pub fn rates(&self) -> &[f64] {
        &self.rates
    }

    pub fn len(&self) -> usize {
        self.generators.len()
    }

    pub fn is_empty(&self) -> bool {
        self.generators.is_empty()
    }

    /// Pauli fidelity `f_b = exp(−2 Σ_{k: ⟨b,k⟩=1} λ_k)`, in (0, 1].
    pub fn fidelity(&self, b: &PauliString) -> f64 {
        let mut rate_sum = 0.0;
        for (g, &r) in self.generators.iter().zip(&self.rates) {
            if b.symplectic_inner(g) == 1 {
                rate_sum += r;
            }
        }
        (-2.0 * rate_sum).exp()
    }

    /// Fidelities for a list of Paulis; elementwise identical to [`fidelity`].
    ///
    /// [`fidelity`]: SparseModel::fidelity
    pub fn fidelities(&self, paulis: &[PauliString]) -> Vec<f64> {
        paulis.iter().map(|b| self.fidelity(b)).collect()
    }

    /// Sampling overhead `γ = exp(2 Σ λ_k) ≥ 1`.
    pub fn gamma(&self) -> f64 {
        (2.0 * self.rates.iter().sum::<f64>()).exp()
    }

    /// Combine two channels: rates add on the union of generators.
    pub fn compose(&self, other: &SparseModel) -> Result<SparseModel, ModelError> {
        if self.n != other.n {
            return Err(ModelError::LengthMismatch {
                expected: self.n,
                got: other.n,
            });
        }
        let mut terms: Vec<(PauliString, f64)> = self
            .generators
            .iter()
            .cloned()
            .zip(self.rates.iter().copied())
            .collect();
        terms.extend(
            other
                .generators
                .iter()
                .cloned()
                .zip(other.rates.iter().copied()),
        );
        SparseModel::new(self.n, terms)
    }

    /// Evolve for time `t ≥ 0`: all rates scale by `t`.
    pub fn scale(&self, t: f64) -> Result<SparseModel, ModelError> {
        if !t.is_finite() || t < 0.0 {
            return Err(ModelError::NegativeTime(t));
        }
        SparseModel::new(
            self.n,
            self.generators
                .iter()
                .cloned()
                .zip(self.rates.iter().map(|&r| r * t))
                .collect(),
        )
    }

    /// The quasi-probability inverse of this channel.
    pub fn invert(&self) -> InverseModel {
        InverseModel {
            gamma: self.gamma(),
            base: self.clone(),
        }
    }

    /// Draw one Pauli from the physical channel: each factor applies its
    /// generator independently with probability `1 − w_k`; the product is
    /// returned sign-free (conjugation signs cancel in `ρ ↦ PρP†`).
    pub fn sample_physical<R: RngCore + ?Sized>(&self, rng: &mut R) -> PauliString {
        let mut acc = PauliString::identity(self.n);
        self.sample_physical_into(&mut acc, rng);
        acc
    }

    /// As [`sample_physical`], multiplying the draw into `acc` and returning
    /// the number of factors that applied their Pauli.
    ///
    /// [`sample_physical`]: SparseModel::sample_physical
    #[inline]
    pub fn sample_physical_into<R: RngCore + ?Sized>(
        &self,
        acc: &mut PauliString,
        rng: &mut R,
    ) -> usize {
        let mut applied = 0;
        for (g, &t) in self.generators.iter().zip(&self.thresholds) {
            if rng.next_u64() < t {
                acc.mul_unsigned_inplace(g);
                applied += 1;
            }
        }
        applied
    }

    /// Canonical Pauli-channel probabilities `Λ(ρ) = Σ c_i P_i ρ P_i†`.
    ///
    /// Small instances only: expands the `2^|K|` product form directly, or
    /// goes through the symplectic Walsh-Hadamard transform of the fidelity
    /// vector when the `4^n` table is the smaller object. Both routes agree
    /// and are kept for cross-validation.
    pub fn canonical_probabilities(&self) -> Result<HashMap<PauliString, f64>, ModelError> {
        let k = self.generators.len();
        if k <= 2 * self.n || self.n > 3 {
            if k > 20 {
                return Err(ModelError::SizeGuard {
                    generators: k,
                    qubits: self.n,
                });
            }
            Ok(self.probabilities_by_product_expansion())
        } else {
            Ok(self.probabilities_by_walsh())
        }
    }

    /// Product-form expansion: fold each factor into a Pauli-indexed map.
    pub fn probabilities_by_product_expansion(&self) -> HashMap<PauliString, f64> {
        let mut dist: HashMap<PauliString, f64> = HashMap::new();
        dist.insert(PauliString::identity(self.n), 1.0);
        for (g, &r) in self.generators.iter().zip(&self.rates) {
            let w = identity_weight(r);
            let mut next: HashMap<PauliString, f64> = HashMap::with_capacity(dist.len() * 2);
            for (p, pr) in &dist {
                *next.entry(p.clone()).or_insert(0.0) += w * pr;
                *next.entry(p.mul_unsigned(g)).or_insert(0.0) += (1.0 - w) * pr;
            }
            dist = next;
        }
        dist
    }

    /// Walsh-Hadamard route: transform the full fidelity vector (4^n entries).
    pub fn probabilities_by_walsh(&self) -> HashMap<PauliString, f64> {
        let dim = 4usize.pow(self.n as u32);
        let f: Vec<f64> = (0..dim)
            .map(|i| self.fidelity(&pauli_from_index(self.n, i)))
            .collect();
        let c = walsh_hadamard(&f).expect("dimension is a power of four by construction");
        c.into_iter()
            .enumerate()
            .map(|(i, ci)| (pauli_from_index(self.n, i), ci))
            .collect()
    }
}

/// Inverse channel of a physical model, with its sampling overhead
/// `γ = exp(2 Σ λ_k) = Π (2 w_k − 1)^{-1}` stored at construction.
#[derive(Debug, Clone, PartialEq)]
pub struct InverseModel {
    base: SparseModel,
    gamma: f64,
}

impl InverseModel {
    pub fn base(&self) -> &SparseModel {
        &self.base
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    /// Fidelity of the inverse map: `exp(+2 Σ_{k anticommuting} λ_k) = 1/f_b`.
    pub fn inverse_fidelity(&self, b: &PauliString) -> f64 {
        1.0 / self.base.fidelity(b)
    }
}

/// Sampling overhead `γ_total` normalized per qubit and layer: `γ̄ = γ^{1/(nl)}`.
pub fn gamma_bar(gamma_total: f64, qubits: usize, layers: usize) -> f64 {
    assert!(gamma_total >= 1.0, "gamma must be at least 1");
    assert!(qubits * layers >= 1, "need at least one qubit-layer");
    gamma_total.powf(1.0 / (qubits * layers) as f64)
}

/// All weight-one Paulis on the listed qubits plus all nine weight-two
/// Paulis on each listed edge, deduplicated, in canonical order.
pub fn two_local_generators(
    n: usize,
    qubits: &[usize],
    edges: &[(usize, usize)],
) -> Result<Vec<PauliString>, ModelError> {
    let letters = [Letter::X, Letter::Y, Letter::Z];
    let mut set: BTreeMap<(usize, Vec<usize>, Vec<u8>), PauliString> = BTreeMap::new();
    for &q in qubits {
        assert!(q < n, "qubit index out of range");
        for &l in &letters {
            let p = PauliString::single(n, q, l);
            set.insert(p.canonical_key(), p);
        }
    }
    for &(a, b) in edges {
        if !qubits.contains(&a) || !qubits.contains(&b) {
            return Err(ModelError::UnknownEdgeQubit(a, b));
        }
        for &la in &letters {
            for &lb in &letters {
                let mut p = PauliString::identity(n);
                p.set(a, la);
                p.set(b, lb);
                set.insert(p.canonical_key(), p);
            }
        }
    }
    Ok(set.into_values().collect())
}

/// Random two-local model with rates drawn uniformly and rescaled so the
/// sampling overhead hits `gamma_target` exactly.
pub fn random_two_local_model<R: RngCore + ?Sized>(
    n: usize,
    qubits: &[usize],
    edges: &[(usize, usize)],
    gamma_target: f64,
    rng: &mut R,
) -> Result<SparseModel, ModelError> {
    if gamma_target.is_nan() || gamma_target < 1.0 {
        return Err(ModelError::InvalidRate(gamma_target));
    }
    let gens = two_local_generators(n, qubits, edges)?;
    let raw: Vec<f64> = gens
        .iter()
        .map(|_| (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64))
        .collect();
    let raw_sum: f64 = raw.iter().sum();
    let target_sum = gamma_target.ln() / 2.0;
    let scale = if raw_sum > 0.0 { target_sum / raw_sum } else { 0.0 };
    SparseModel::new(
        n,
        gens.into_iter().zip(raw.into_iter().map(|r| r * scale)).collect(),
    )
}

/// Index of a Pauli in the full 4^n enumeration: qubit q contributes
/// `code · 4^q` with codes I=0, X=1, Y=2, Z=3.
pub fn pauli_index(p: &PauliString) -> usize {
    let mut idx = 0usize;
    for q in (0..p.n()).rev() {
        idx = idx * 4 + p.get(q) as usize;
    }
    idx
}

pub fn pauli_from_index(n: usize, mut idx: usize) -> PauliString {
    let mut p = PauliString::identity(n);
    for q in 0..n {
        let code = idx % 4;
        idx /= 4;
        p.set(
            q,
            match code {
                0 => Letter::I,
                1 => Letter::X,
                2 => Letter::Y,
                _ => Letter::Z,
            },
        );
    }
    p
}

/// Symplectic Walsh-Hadamard transform of a fidelity vector over all 4^n
/// Paulis: `c_b = 4^{−n} Σ_a (−1)^{⟨a,b⟩} f_a`. Applied to the all-ones
/// vector this yields a point mass on the identity. The transform is its
/// own inverse up to the normalization.
pub fn walsh_hadamard(f: &[f64]) -> Result<Vec<f64>, ModelError> {
    let dim = f.len();
    let mut n = 0u32;
    while 4usize.pow(n) < dim {
        n += 1;
    }
    if 4usize.pow(n) != dim || dim == 0 {
        return Err(ModelError::BadVectorLength(dim));
    }
    // Per-qubit 4x4 character butterfly with rows/cols ordered I, X, Y, Z.
    const T: [[f64; 4]; 4] = [
        [1.0, 1.0, 1.0, 1.0],
        [1.0, 1.0, -1.0, -1.0],
        [1.0, -1.0, 1.0, -1.0],
        [1.0, -1.0, -1.0, 1.0],
    ];
    let mut out = f.to_vec();
    let mut stride = 1usize;
    for _ in 0..n {
        let block = stride * 4;
        for base in (0..dim).step_by(block) {
            for offset in 0..stride {
                let idx = [
                    base + offset,
                    base + offset + stride,
                    base + offset + 2 * stride,
                    base + offset + 3 * stride,
                ];
                let vals = [out[idx[0]], out[idx[1]], out[idx[2]], out[idx[3]]];
                for (r, &i) in idx.iter().enumerate() {
                    out[i] = (0..4).map(|c| T[r][c] * vals[c]).sum();
                }
            }
        }
        stride = block;
    }
    let norm = 1.0 / dim as f64;
    for v in &mut out {
        *v *= norm;
    }
    Ok(out)
}

/// Serialized form of a model: `{"n": 4, "terms": [{"pauli": "ZIII",
/// "lambda": 1.2e-3}, ...], "meta": {...}}`. Rates round-trip bit-exactly
/// through the decimal representation.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelFile {
    pub n: usize,
    pub terms: Vec<ModelTerm>,
    #[serde(default, skip_serializing_if = "serde_json::Map::is_empty")]
    pub meta: serde_json::Map<String, serde_json::Value>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelTerm {
    pub pauli: PauliString,
    pub lambda: f64,
}

impl ModelFile {
    pub fn from_model(m: &SparseModel) -> Self {
        ModelFile {
            n: m.n(),
            terms: m
                .generators()
                .iter()
                .zip(m.rates())
                .map(|(p, &r)| ModelTerm {
                    pauli: p.clone(),
                    lambda: r,
                })
                .collect(),
            meta: serde_json::Map::new(),
        }
    }

    pub fn into_model(self) -> Result<SparseModel, ModelError> {
        SparseModel::new(
            self.n,
            self.terms.into_iter().map(|t| (t.pauli, t.lambda)).collect(),
        )
    }
}
