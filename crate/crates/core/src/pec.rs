//! Probabilistic error cancellation.
//!
//! The inverse of a sparse Pauli-Lindblad channel factors over its
//! generators: each factor applies the identity with probability `w_k` and
//! `P_k` with probability `1 − w_k`, recording a minus sign per applied
//! Pauli. A circuit instance folds one such draw (times a fresh twirl frame)
//! into every noisy layer; the measured outcome is scaled by the product of
//! signs and by `γ(l) = Π γ_i`. On average this cancels the noise bias at
//! the cost of a `γ(l)²` variance factor.

use std::collections::HashMap;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::circuit::{Circuit, Moment, NoiseSpec};
use crate::fitting::{bound_constants, FitError};
use crate::lindblad::{identity_weight, InverseModel};
use crate::pauli::{random_pauli_full, PauliString};
use crate::seed;
use crate::sim::{run_clifford_trajectories, run_state_trajectories, SimError};

#[derive(Debug, Error)]
pub enum PecError {
    #[error("no mitigation model for layer tag {0:?}")]
    MissingModel(String),
    #[error("need at least two instances for a standard error, got {0}")]
    TooFewInstances(usize),
    #[error("expansion subsets must be disjoint, within range and of size <= {max}")]
    BadExpansionSubsets { max: usize },
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Fit(#[from] FitError),
}

/// One draw from a quasi-probability inverse: the Pauli to insert, the count
/// `m` of negative factors drawn, and the resulting sign `(−1)^m`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QuasiSample {
    pub sign: i8,
    pub pauli: PauliString,
    pub m: usize,
}

/// Draw one sample of the inverse channel in time linear in the number of
/// generators.
pub fn sample_inverse<R: Rng + ?Sized>(inv: &InverseModel, rng: &mut R) -> QuasiSample {
    let mut pauli = PauliString::identity(inv.base().n());
    let m = inv.base().sample_physical_into(&mut pauli, rng);
    QuasiSample {
        sign: if m % 2 == 1 { -1 } else { 1 },
        pauli,
        m,
    }
}

/// Quasi-probability sampler with selected generator subsets expanded into
/// explicit Pauli channels. Combining terms lets opposite-sign weights
/// cancel, so the expanded overhead never exceeds the plain `γ`. Off by
/// default; subsets are capped at [`MAX_EXPANSION`] generators.
#[derive(Debug, Clone)]
pub struct ExpandedInverse {
    groups: Vec<ExpandedGroup>,
    /// Generators outside any group, sampled factor-by-factor.
    rest: Vec<(PauliString, u64)>,
    n: usize,
    gamma: f64,
}

pub const MAX_EXPANSION: usize = 10;

#[derive(Debug, Clone)]
struct ExpandedGroup {
    paulis: Vec<PauliString>,
    signs: Vec<i8>,
    /// Cumulative |c|/γ_g sampling distribution.
    cumulative: Vec<f64>,
}

impl ExpandedInverse {
    /// Expand the given disjoint index subsets of `inv`'s generator list.
    pub fn new(inv: &InverseModel, subsets: &[Vec<usize>]) -> Result<Self, PecError> {
        let base = inv.base();
        let k = base.len();
        let mut used = vec![false; k];
        for s in subsets {
            if s.is_empty() || s.len() > MAX_EXPANSION {
                return Err(PecError::BadExpansionSubsets { max: MAX_EXPANSION });
            }
            for &i in s {
                if i >= k || used[i] {
                    return Err(PecError::BadExpansionSubsets { max: MAX_EXPANSION });
                }
                used[i] = true;
            }
        }
        let mut gamma = 1.0f64;
        let mut groups = Vec::with_capacity(subsets.len());
        for s in subsets {
            // Signed canonical coefficients of the inverse product over the
            // subset: start from {I: 1} and fold in each inverse factor
            // (2w−1)^{-1} (w·ρ − (1−w)·PρP).
            let mut dist: HashMap<PauliString, f64> = HashMap::new();
            dist.insert(PauliString::identity(base.n()), 1.0);
            for &i in s {
                let w = identity_weight(base.rates()[i]);
                let norm = 1.0 / (2.0 * w - 1.0);
                let g = &base.generators()[i];
                let mut next: HashMap<PauliString, f64> = HashMap::with_capacity(dist.len() * 2);
                for (p, c) in &dist {
                    *next.entry(p.clone()).or_insert(0.0) += norm * w * c;
                    *next.entry(p.mul_unsigned(g)).or_insert(0.0) -= norm * (1.0 - w) * c;
                }
                dist = next;
            }
            let gamma_g: f64 = dist.values().map(|c| c.abs()).sum();
            gamma *= gamma_g;
            let mut entries: Vec<(PauliString, f64)> = dist.into_iter().collect();
            entries.sort_by_key(|a| a.0.canonical_key());
            let mut cumulative = Vec::with_capacity(entries.len());
            let mut acc = 0.0;
            let mut paulis = Vec::with_capacity(entries.len());
            let mut signs = Vec::with_capacity(entries.len());
            for (p, c) in entries {
                acc += c.abs() / gamma_g;
                cumulative.push(acc);
                paulis.push(p);
                signs.push(if c < 0.0 { -1 } else { 1 });
            }
            groups.push(ExpandedGroup {
                paulis,
                signs,
                cumulative,
            });
        }
        let mut rest = Vec::new();
        for ((&in_use, g), &rate) in used.iter().zip(base.generators()).zip(base.rates()) {
            if !in_use {
                let w = identity_weight(rate);
                gamma /= 2.0 * w - 1.0;
                rest.push((g.clone(), ((1.0 - w) * 2.0f64.powi(64)) as u64));
            }
        }
        Ok(ExpandedInverse {
            groups,
            rest,
            n: base.n(),
            gamma,
        })
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> QuasiSample {
        let mut pauli = PauliString::identity(self.n);
        let mut m = 0usize;
        for g in &self.groups {
            let u: f64 = rng.random();
            let idx = g
                .cumulative
                .iter()
                .position(|&c| u < c)
                .unwrap_or(g.cumulative.len() - 1);
            pauli.mul_unsigned_inplace(&g.paulis[idx]);
            if g.signs[idx] < 0 {
                m += 1;
            }
        }
        for (p, t) in &self.rest {
            if rng.next_u64() < *t {
                pauli.mul_unsigned_inplace(p);
                m += 1;
            }
        }
        QuasiSample {
            sign: if m % 2 == 1 { -1 } else { 1 },
            pauli,
            m,
        }
    }
}

/// Fold one twirl frame and one inverse draw into every noisy layer of `c`.
/// Returns the instance circuit (same moment structure), the product of the
/// draw signs and the total sampling overhead `Π γ_i`.
pub fn build_mitigated_instance<R: Rng + ?Sized>(
    circuit: &Circuit,
    models: &HashMap<String, InverseModel>,
    rng: &mut R,
) -> Result<(Circuit, i8, f64), PecError> {
    let n = circuit.n();
    let mut instance = circuit.clone();
    let mut sign = 1i8;
    let mut gamma_total = 1.0f64;
    for moment in instance.moments_mut() {
        if let Moment::Layer(lm) = moment {
            let inv = models
                .get(&lm.tag)
                .ok_or_else(|| PecError::MissingModel(lm.tag.clone()))?;
            let twirl = random_pauli_full(n, rng);
            let conj = lm.layer.conjugate_unsigned(&twirl);
            let draw = sample_inverse(inv, rng);
            sign *= draw.sign;
            gamma_total *= inv.gamma();
            lm.fold_pre(&twirl.mul_unsigned(&draw.pauli));
            lm.fold_post(&conj);
        }
    }
    Ok((instance, sign, gamma_total))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Backend {
    Clifford,
    State,
}

/// Bias-cancelled estimate of one observable.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MitigatedEstimate {
    pub value: f64,
    pub stderr: f64,
    pub gamma_total: f64,
    pub instances: usize,
    pub shots_per_instance: usize,
}

/// PEC estimator: `value = γ(l) · mean_r(X_r)` over `N` mitigated circuit
/// instances, where `X_r` is the signed per-instance shot mean. All shots of
/// an instance share its (sign, frame), so instance means are the i.i.d.
/// unit for the standard error.
#[allow(clippy::too_many_arguments)]
pub fn mitigate_expectation(
    circuit: &Circuit,
    models: &HashMap<String, InverseModel>,
    injected_noise: &NoiseSpec,
    observable: &PauliString,
    instances: usize,
    shots: usize,
    backend: Backend,
    master_seed: u64,
) -> Result<MitigatedEstimate, PecError> {
    let ests = mitigate_expectations(
        circuit,
        models,
        injected_noise,
        std::slice::from_ref(observable),
        instances,
        shots,
        backend,
        master_seed,
    )?;
    Ok(ests.into_iter().next().unwrap())
}

/// Signed per-instance shot means for a set of observables, the raw
/// material of mitigated estimators (including linear combinations such as
/// magnetization components, whose errors must respect the per-instance
/// correlation induced by shared signs and frames).
#[derive(Debug, Clone)]
pub struct InstanceMeans {
    /// `signed_means[r][i]`: sign_r × shot mean of observable `i`.
    pub signed_means: Vec<Vec<f64>>,
    pub gamma_total: f64,
    pub shots_per_instance: usize,
}

impl InstanceMeans {
    /// Estimate `Σ_i weights_i · ⟨A_i⟩` with an instance-level stderr.
    pub fn estimate(&self, weights: &[f64]) -> MitigatedEstimate {
        let n = self.signed_means.len();
        let xs: Vec<f64> = self
            .signed_means
            .iter()
            .map(|row| row.iter().zip(weights).map(|(x, w)| x * w).sum())
            .collect();
        let mean = xs.iter().sum::<f64>() / n as f64;
        let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1) as f64;
        MitigatedEstimate {
            value: self.gamma_total * mean,
            stderr: self.gamma_total * (var / n as f64).sqrt(),
            gamma_total: self.gamma_total,
            instances: n,
            shots_per_instance: self.shots_per_instance,
        }
    }

    pub fn estimate_single(&self, index: usize) -> MitigatedEstimate {
        let mut w = vec![0.0; self.signed_means[0].len()];
        w[index] = 1.0;
        self.estimate(&w)
    }
}

/// Run `instances` mitigated circuit instances and collect signed shot means
/// per observable.
#[allow(clippy::too_many_arguments)]
pub fn mitigated_instance_means(
    circuit: &Circuit,
    models: &HashMap<String, InverseModel>,
    injected_noise: &NoiseSpec,
    observables: &[PauliString],
    instances: usize,
    shots: usize,
    backend: Backend,
    master_seed: u64,
) -> Result<InstanceMeans, PecError> {
    if instances < 2 {
        return Err(PecError::TooFewInstances(instances));
    }
    let per_instance: Vec<(Vec<f64>, f64)> = (0..instances)
        .into_par_iter()
        .map(|r| -> Result<(Vec<f64>, f64), PecError> {
            let mut rng = seed::derive_rng(master_seed, &[0x9ec, r as u64]);
            let (inst, sign, gamma) = build_mitigated_instance(circuit, models, &mut rng)?;
            let table = match backend {
                Backend::Clifford => {
                    run_clifford_trajectories(&inst, injected_noise, observables, shots, &mut rng)?
                }
                Backend::State => {
                    run_state_trajectories(&inst, injected_noise, observables, shots, &mut rng)?
                }
            };
            let xs = (0..observables.len())
                .map(|i| sign as f64 * table.mean(i))
                .collect();
            Ok((xs, gamma))
        })
        .collect::<Result<_, _>>()?;
    let gamma_total = per_instance[0].1;
    Ok(InstanceMeans {
        signed_means: per_instance.into_iter().map(|(v, _)| v).collect(),
        gamma_total,
        shots_per_instance: shots,
    })
}

/// As [`mitigate_expectation`] for several observables sharing the same
/// mitigated circuit instances (one table read per instance).
#[allow(clippy::too_many_arguments)]
pub fn mitigate_expectations(
    circuit: &Circuit,
    models: &HashMap<String, InverseModel>,
    injected_noise: &NoiseSpec,
    observables: &[PauliString],
    instances: usize,
    shots: usize,
    backend: Backend,
    master_seed: u64,
) -> Result<Vec<MitigatedEstimate>, PecError> {
    let means = mitigated_instance_means(
        circuit,
        models,
        injected_noise,
        observables,
        instances,
        shots,
        backend,
        master_seed,
    )?;
    Ok((0..observables.len())
        .map(|i| means.estimate_single(i))
        .collect())
}

/// Unmitigated counterpart under the same twirled-instance structure: frames
/// only, sign +1, no γ scaling.
pub fn unmitigated_expectation(
    circuit: &Circuit,
    injected_noise: &NoiseSpec,
    observable: &PauliString,
    instances: usize,
    shots: usize,
    backend: Backend,
    master_seed: u64,
) -> Result<MitigatedEstimate, PecError> {
    let ests = unmitigated_expectations(
        circuit,
        injected_noise,
        std::slice::from_ref(observable),
        instances,
        shots,
        backend,
        master_seed,
    )?;
    Ok(ests.into_iter().next().unwrap())
}

/// Instance means of the plain twirled (unmitigated) circuit: frames only,
/// sign +1, γ = 1.
pub fn unmitigated_instance_means(
    circuit: &Circuit,
    injected_noise: &NoiseSpec,
    observables: &[PauliString],
    instances: usize,
    shots: usize,
    backend: Backend,
    master_seed: u64,
) -> Result<InstanceMeans, PecError> {
    if instances < 2 {
        return Err(PecError::TooFewInstances(instances));
    }
    let per_instance: Vec<Vec<f64>> = (0..instances)
        .into_par_iter()
        .map(|r| -> Result<Vec<f64>, PecError> {
            let mut rng = seed::derive_rng(master_seed, &[0x4a11, r as u64]);
            let mut inst = circuit.clone();
            for moment in inst.moments_mut() {
                if let Moment::Layer(lm) = moment {
                    let twirl = random_pauli_full(circuit.n(), &mut rng);
                    let conj = lm.layer.conjugate_unsigned(&twirl);
                    lm.fold_pre(&twirl);
                    lm.fold_post(&conj);
                }
            }
            let table = match backend {
                Backend::Clifford => {
                    run_clifford_trajectories(&inst, injected_noise, observables, shots, &mut rng)?
                }
                Backend::State => {
                    run_state_trajectories(&inst, injected_noise, observables, shots, &mut rng)?
                }
            };
            Ok((0..observables.len()).map(|i| table.mean(i)).collect())
        })
        .collect::<Result<_, _>>()?;
    Ok(InstanceMeans {
        signed_means: per_instance,
        gamma_total: 1.0,
        shots_per_instance: shots,
    })
}

/// As [`unmitigated_expectation`] for several observables sharing instances.
pub fn unmitigated_expectations(
    circuit: &Circuit,
    injected_noise: &NoiseSpec,
    observables: &[PauliString],
    instances: usize,
    shots: usize,
    backend: Backend,
    master_seed: u64,
) -> Result<Vec<MitigatedEstimate>, PecError> {
    let means = unmitigated_instance_means(
        circuit,
        injected_noise,
        observables,
        instances,
        shots,
        backend,
        master_seed,
    )?;
    Ok((0..observables.len())
        .map(|i| means.estimate_single(i))
        .collect())
}

/// Bound on `|⟨A⟩ − ⟨Â_N⟩|` holding with probability ≥ 1−δ:
/// `(C_ε^{lτ} − 1) + γ(l)·√(2 log(2/δ)/N)`.
#[allow(clippy::too_many_arguments)]
pub fn pec_error_bound(
    epsilon: f64,
    delta: f64,
    k_size: usize,
    b_size: usize,
    sigma_min: f64,
    depth: usize,
    layers: usize,
    gamma_l: f64,
    instances: usize,
) -> Result<f64, PecError> {
    assert!(delta > 0.0 && delta < 1.0);
    assert!(layers >= 1 && instances >= 1);
    assert!(gamma_l >= 1.0);
    let b = bound_constants(epsilon, b_size, k_size, sigma_min, depth)?;
    let learning_term = b.c_eps.powf(layers as f64 * b.tau) - 1.0;
    let sampling_term = gamma_l * (2.0 * (2.0 / delta).ln() / instances as f64).sqrt();
    Ok(learning_term + sampling_term)
}
