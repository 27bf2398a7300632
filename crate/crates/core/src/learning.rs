//! Layer-noise learning from twirled decay benchmarks.
//!
//! Benchmark circuits prepare a basis, repeat the noisy layer an even number
//! of times inside random Pauli-twirl frames, undo the basis and read out
//! through a readout twirl. The shot mean of observable `b` at depth `k`
//! follows `α_o (f_b f_{b'})^{k/2}`, with the SPAM offset `α_o` specific to
//! the observable and `b'` the layer conjugate of `b`. Decays that share the
//! same fidelity pair are fitted jointly with one rate and per-observable
//! offsets; pairs are resolved into individual fidelities by the symmetry
//! assumption (or, optionally, unit-depth benchmarks), and the model rates
//! come from a nonnegative least-squares fit.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bases::{plan_learning, FidelitySpec, MeasurementPlan, PlanError, Topology};
use crate::circuit::{Circuit, CircuitError, Gate1, Moment, NoiseSpec};
use crate::fitting::{
    fit_from_fidelities, FidelityObservation, FitError, FitOptions, FitReport, ObservationPaulis,
};
use crate::lindblad::SparseModel;
use crate::pauli::{random_pauli_full, GateLayer, PauliString};
use crate::seed;
use crate::sim::{run_clifford_trajectories, SimError};

#[derive(Debug, Error)]
pub enum LearnError {
    #[error("benchmark depth {0} is odd; layer repetitions must be even")]
    OddDepth(usize),
    #[error("invalid learning config: {0}")]
    BadConfig(String),
    #[error(transparent)]
    Plan(#[from] PlanError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Fit(#[from] FitError),
    #[error(transparent)]
    Circuit(#[from] CircuitError),
    #[error("no usable decay data survived (all specs dropped)")]
    NoData,
}

/// Benchmark schedule. Depths are layer repetition counts and must be even.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LearningConfig {
    pub depths: Vec<usize>,
    pub instances_per_point: usize,
    pub shots_per_instance: usize,
    pub bootstrap_resamples: usize,
}

impl Default for LearningConfig {
    fn default() -> Self {
        LearningConfig {
            depths: vec![0, 2, 4, 8, 16],
            instances_per_point: 100,
            shots_per_instance: 256,
            bootstrap_resamples: 100,
        }
    }
}

impl LearningConfig {
    pub fn validate(&self) -> Result<(), LearnError> {
        if self.depths.len() < 2 {
            return Err(LearnError::BadConfig("need at least two depths".into()));
        }
        let mut seen = std::collections::HashSet::new();
        for &k in &self.depths {
            if k % 2 != 0 {
                return Err(LearnError::OddDepth(k));
            }
            if !seen.insert(k) {
                return Err(LearnError::BadConfig(format!("duplicate depth {k}")));
            }
        }
        if self.instances_per_point == 0 || self.shots_per_instance == 0 {
            return Err(LearnError::BadConfig(
                "instances and shots must be positive".into(),
            ));
        }
        Ok(())
    }

    pub fn max_depth(&self) -> usize {
        self.depths.iter().copied().max().unwrap_or(0)
    }
}

/// One benchmark circuit instance plus the classical readout-twirl pattern
/// needed to undo its bit flips in post-processing.
#[derive(Debug, Clone)]
pub struct LearningInstance {
    pub circuit: Circuit,
    pub readout_twirl: Vec<bool>,
}

/// Build one random benchmark circuit: basis preparation, `k` twirled noisy
/// layer repetitions, inverse basis change, readout twirl. Twirl and frame
/// Paulis fold into the layer moments, so the moment structure is the same
/// at every depth count.
pub fn generate_learning_circuit<R: Rng + ?Sized>(
    layer: &GateLayer,
    basis: &PauliString,
    k: usize,
    rng: &mut R,
) -> Result<LearningInstance, LearnError> {
    if !k.is_multiple_of(2) {
        return Err(LearnError::OddDepth(k));
    }
    let n = layer.n();
    let mut circuit = Circuit::new(n);
    circuit.push_basis_prep(basis)?;
    for _ in 0..k {
        let twirl = random_pauli_full(n, rng);
        let conj = layer.conjugate_unsigned(&twirl);
        circuit.push_layer(layer.clone(), "layer")?;
        let idx = circuit.moments().len() - 1;
        if let Moment::Layer(lm) = &mut circuit.moments_mut()[idx] {
            lm.fold_pre(&twirl);
            lm.fold_post(&conj);
        }
    }
    circuit.push_basis_unprep(basis)?;
    let readout_twirl: Vec<bool> = (0..n).map(|_| rng.random::<bool>()).collect();
    circuit.push_singles(
        readout_twirl
            .iter()
            .map(|&x| if x { Gate1::X } else { Gate1::I })
            .collect(),
    )?;
    Ok(LearningInstance {
        circuit,
        readout_twirl,
    })
}

/// Mean and bootstrap error of one observable at one depth, averaged over
/// circuit instances.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DecayRecord {
    pub basis: usize,
    pub observable: PauliString,
    pub depth: usize,
    pub mean: f64,
    pub stderr: f64,
    pub instances: usize,
}

/// Raw per-instance decay data for one fidelity spec.
#[derive(Debug, Clone)]
pub struct SpecDecays {
    pub spec: FidelitySpec,
    pub depths: Vec<usize>,
    /// `instance_means[d][i]`: mean outcome of instance `i` at depth `depths[d]`.
    pub instance_means: Vec<Vec<f64>>,
}

/// How a fidelity estimate was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Provenance {
    Measured,
    SymmetryDerived,
    UnitDepth,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FidelityEstimate {
    pub observation: FidelityObservation,
    pub provenance: Provenance,
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Joint log-linear weighted least squares for one group of decay streams
/// sharing a rate: `log(mean_{o,k}) = log α_o + (k/2)·g`. Returns `g` or
/// None when no stream has two usable (positive-mean) depths.
fn fit_group_slope(streams: &[(Vec<usize>, Vec<f64>, Vec<f64>)]) -> Option<f64> {
    // streams: (depths, cell means, cell weight) with nonpositive cells
    // already removed.
    let usable: Vec<&(Vec<usize>, Vec<f64>, Vec<f64>)> =
        streams.iter().filter(|(d, _, _)| d.len() >= 2).collect();
    if usable.is_empty() {
        return None;
    }
    let n_offsets = usable.len();
    let n_rows: usize = usable.iter().map(|(d, _, _)| d.len()).sum();
    let cols = n_offsets + 1;
    let mut a = vec![0.0f64; n_rows * cols];
    let mut y = vec![0.0f64; n_rows];
    let mut row = 0;
    for (s, (depths, means, weights)) in usable.iter().enumerate() {
        for ((&k, &m), &w) in depths.iter().zip(means).zip(weights) {
            let sw = w.sqrt();
            a[row * cols + s] = sw;
            a[row * cols + n_offsets] = sw * k as f64 / 2.0;
            y[row] = sw * m.ln();
            row += 1;
        }
    }
    crate::fitting::lstsq(&mut a, n_rows, cols, &y).map(|x| x[n_offsets])
}

/// Estimate fidelity products from grouped decay data.
///
/// Specs measuring the same unordered fidelity pair are fitted jointly, one
/// offset per (basis, observable) stream and one shared rate. Streams whose
/// aggregate mean is nonpositive at any depth are dropped with a warning
/// (their log is undefined). Standard errors come from a bootstrap over
/// instances.
pub fn estimate_decays(
    data: &[SpecDecays],
    bootstrap_resamples: usize,
    bootstrap_seed: u64,
) -> (Vec<FidelityEstimate>, Vec<String>) {
    use std::collections::BTreeMap;
    let mut groups: BTreeMap<(String, String), Vec<&SpecDecays>> = BTreeMap::new();
    for sd in data {
        let (a, b) = sd.spec.pair_key();
        groups
            .entry((a.to_string(), b.to_string()))
            .or_default()
            .push(sd);
    }

    let mut estimates = Vec::new();
    let mut warnings = Vec::new();
    for ((pa, pb), members) in groups {
        let is_single = pa == pb;
        // Assemble usable streams: drop nonpositive cells, require >= 2 depths.
        let mut streams: Vec<(Vec<usize>, Vec<f64>, Vec<f64>)> = Vec::new();
        let mut stream_sources: Vec<&SpecDecays> = Vec::new();
        for sd in members {
            let mut depths = Vec::new();
            let mut means = Vec::new();
            let mut weights = Vec::new();
            let mut dropped = false;
            for (d, inst) in sd.depths.iter().zip(&sd.instance_means) {
                let m = mean(inst);
                if m <= 0.0 {
                    dropped = true;
                    continue;
                }
                let var_mean = if inst.len() > 1 {
                    let mu = m;
                    let v = inst.iter().map(|x| (x - mu) * (x - mu)).sum::<f64>()
                        / (inst.len() - 1) as f64
                        / inst.len() as f64;
                    v.max(1e-18)
                } else {
                    1e-18
                };
                depths.push(*d);
                means.push(m);
                // Weight of log(mean): mean² / var(mean).
                weights.push(m * m / var_mean);
            }
            if dropped {
                warnings.push(format!(
                    "spec {} in basis {}: nonpositive aggregate mean, depth point dropped",
                    sd.spec.observable, sd.spec.basis
                ));
            }
            if depths.len() >= 2 {
                streams.push((depths, means, weights));
                stream_sources.push(sd);
            } else {
                warnings.push(format!(
                    "spec {} in basis {}: fewer than two usable depths, stream dropped",
                    sd.spec.observable, sd.spec.basis
                ));
            }
        }
        let Some(g) = fit_group_slope(&streams) else {
            warnings.push(format!("pair {pa}-{pb}: no usable streams, no estimate"));
            continue;
        };
        let value = if is_single { (g / 2.0).exp() } else { g.exp() };

        // Bootstrap over instances, resampling each (stream, depth) cell.
        let stderr = if bootstrap_resamples > 0 {
            let mut rng = seed::derive_rng(bootstrap_seed, &[0xb007, estimates.len() as u64]);
            let mut vals = Vec::with_capacity(bootstrap_resamples);
            for _ in 0..bootstrap_resamples {
                let mut resampled = Vec::with_capacity(streams.len());
                for (si, (depths, _, _)) in streams.iter().enumerate() {
                    let sd = stream_sources[si];
                    let mut means = Vec::with_capacity(depths.len());
                    let mut weights = Vec::with_capacity(depths.len());
                    let mut ok_depths = Vec::with_capacity(depths.len());
                    for &d in depths {
                        let pos = sd.depths.iter().position(|&x| x == d).unwrap();
                        let inst = &sd.instance_means[pos];
                        let picked: Vec<f64> = (0..inst.len())
                            .map(|_| inst[rng.random_range(0..inst.len())])
                            .collect();
                        let m = mean(&picked);
                        if m <= 0.0 {
                            continue;
                        }
                        let var_mean = if picked.len() > 1 {
                            let v = picked.iter().map(|x| (x - m) * (x - m)).sum::<f64>()
                                / (picked.len() - 1) as f64
                                / picked.len() as f64;
                            v.max(1e-18)
                        } else {
                            1e-18
                        };
                        ok_depths.push(d);
                        means.push(m);
                        weights.push(m * m / var_mean);
                    }
                    if ok_depths.len() >= 2 {
                        resampled.push((ok_depths, means, weights));
                    }
                }
                if let Some(gb) = fit_group_slope(&resampled) {
                    vals.push(if is_single { (gb / 2.0).exp() } else { gb.exp() });
                }
            }
            if vals.len() > 1 {
                let mu = mean(&vals);
                (vals.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>() / (vals.len() - 1) as f64)
                    .sqrt()
            } else {
                0.0
            }
        } else {
            0.0
        };

        let paulis = if is_single {
            ObservationPaulis::Single(pa.parse().unwrap())
        } else {
            ObservationPaulis::Pair(pa.parse().unwrap(), pb.parse().unwrap())
        };
        estimates.push(FidelityEstimate {
            observation: FidelityObservation {
                paulis,
                value,
                stderr,
            },
            provenance: Provenance::Measured,
        });
    }
    (estimates, warnings)
}

/// Secondary two-point estimator: the depth-`k` to depth-0 mean ratio gives
/// `(f_b f_{b'})^{k/2}` free of SPAM offsets. Kept alongside the joint fit
/// because the accuracy guarantees are stated for this form.
pub fn two_point_product(depth0_mean: f64, depthk_mean: f64, k: usize) -> Option<f64> {
    if depth0_mean <= 0.0 || depthk_mean <= 0.0 || k == 0 {
        return None;
    }
    Some((depthk_mean / depth0_mean).powf(2.0 / k as f64))
}

/// Resolve pair products into individual fidelities under the symmetry
/// assumption `f = f' = √(f·f')`. Singles pass through unchanged.
pub fn symmetry_complete(estimates: &[FidelityEstimate]) -> Vec<FidelityEstimate> {
    let mut out = Vec::with_capacity(estimates.len() * 2);
    for e in estimates {
        match &e.observation.paulis {
            ObservationPaulis::Single(_) => out.push(e.clone()),
            ObservationPaulis::Pair(a, b) => {
                let f = e.observation.value.sqrt();
                let stderr = if e.observation.value > 0.0 {
                    e.observation.stderr / (2.0 * f)
                } else {
                    0.0
                };
                for pauli in [a, b] {
                    out.push(FidelityEstimate {
                        observation: FidelityObservation {
                            paulis: ObservationPaulis::Single(pauli.clone()),
                            value: f,
                            stderr,
                        },
                        provenance: Provenance::SymmetryDerived,
                    });
                }
            }
        }
    }
    out
}

/// Full learning output: everything needed for reports and accuracy bands.
#[derive(Debug, Clone)]
pub struct LearnReport {
    pub plan: MeasurementPlan,
    pub records: Vec<DecayRecord>,
    pub estimates: Vec<FidelityEstimate>,
    pub completed: Vec<FidelityEstimate>,
    pub fit: FitReport,
    pub warnings: Vec<String>,
    pub gamma: f64,
    pub max_depth: usize,
    /// Paulis of the rows used in the final fit, in order.
    pub fit_paulis: Vec<PauliString>,
}

/// Learn the noise model of one layer end to end against a simulated noise
/// source: plan bases, run benchmark circuits on the Clifford trajectory
/// engine, fit decays, complete pairs by symmetry, and fit rates.
pub fn learn_layer_noise(
    layer: &GateLayer,
    topology: &Topology,
    generators: &[PauliString],
    config: &LearningConfig,
    noise_under_test: &NoiseSpec,
    master_seed: u64,
) -> Result<(SparseModel, LearnReport), LearnError> {
    config.validate()?;
    let n = layer.n();
    let mut plan_rng = seed::derive_rng(master_seed, &[0x91a7]);
    let plan = plan_learning(layer, topology, generators, &mut plan_rng)?;

    // Observables per basis: one Z-support readout per distinct spec support.
    let mut basis_specs: Vec<Vec<&FidelitySpec>> = vec![Vec::new(); plan.bases.len()];
    for s in &plan.specs {
        basis_specs[s.basis].push(s);
    }
    let basis_observables: Vec<Vec<PauliString>> = basis_specs
        .iter()
        .map(|specs| {
            specs
                .iter()
                .map(|s| {
                    let mut z = PauliString::identity(n);
                    for q in s.observable.support() {
                        z.set(q, crate::pauli::Letter::Z);
                    }
                    z
                })
                .collect()
        })
        .collect();

    // All (basis, depth) points share the instance count; simulate instances
    // in parallel with per-instance derived RNG streams.
    struct Job {
        basis: usize,
        depth_idx: usize,
        instance: usize,
    }
    let mut jobs = Vec::new();
    for basis in 0..plan.bases.len() {
        for depth_idx in 0..config.depths.len() {
            for instance in 0..config.instances_per_point {
                jobs.push(Job {
                    basis,
                    depth_idx,
                    instance,
                });
            }
        }
    }
    let per_job: Vec<Vec<f64>> = jobs
        .par_iter()
        .map(|job| -> Result<Vec<f64>, LearnError> {
            let k = config.depths[job.depth_idx];
            let mut rng = seed::derive_rng(
                master_seed,
                &[1, job.basis as u64, k as u64, job.instance as u64],
            );
            let inst = generate_learning_circuit(layer, &plan.bases[job.basis], k, &mut rng)?;
            let table = run_clifford_trajectories(
                &inst.circuit,
                noise_under_test,
                &basis_observables[job.basis],
                config.shots_per_instance,
                &mut rng,
            )?;
            // Undo the readout twirl classically per observable.
            let means = basis_specs[job.basis]
                .iter()
                .enumerate()
                .map(|(oi, spec)| {
                    let flips = spec
                        .observable
                        .support()
                        .iter()
                        .filter(|&&q| inst.readout_twirl[q])
                        .count();
                    let undo = if flips % 2 == 1 { -1.0 } else { 1.0 };
                    undo * table.mean(oi)
                })
                .collect();
            Ok(means)
        })
        .collect::<Result<_, _>>()?;

    // Reassemble instance means per (basis, spec, depth).
    let mut spec_decays: Vec<SpecDecays> = Vec::new();
    for (basis, specs) in basis_specs.iter().enumerate() {
        for (si, spec) in specs.iter().enumerate() {
            let mut per_depth = vec![Vec::with_capacity(config.instances_per_point); config.depths.len()];
            for (ji, job) in jobs.iter().enumerate() {
                if job.basis == basis {
                    per_depth[job.depth_idx].push(per_job[ji][si]);
                }
            }
            spec_decays.push(SpecDecays {
                spec: (*spec).clone(),
                depths: config.depths.clone(),
                instance_means: per_depth,
            });
        }
    }

    let records: Vec<DecayRecord> = spec_decays
        .iter()
        .flat_map(|sd| {
            sd.depths.iter().zip(&sd.instance_means).map(|(&d, inst)| {
                let m = mean(inst);
                let stderr = if inst.len() > 1 {
                    (inst.iter().map(|x| (x - m) * (x - m)).sum::<f64>()
                        / (inst.len() - 1) as f64
                        / inst.len() as f64)
                        .sqrt()
                } else {
                    0.0
                };
                DecayRecord {
                    basis: sd.spec.basis,
                    observable: sd.spec.observable.clone(),
                    depth: d,
                    mean: m,
                    stderr,
                    instances: inst.len(),
                }
            })
        })
        .collect();

    let (estimates, warnings) = estimate_decays(
        &spec_decays,
        config.bootstrap_resamples,
        seed::derive_seed(master_seed, &[2]),
    );
    if estimates.is_empty() {
        return Err(LearnError::NoData);
    }
    let completed = symmetry_complete(&estimates);

    // Deduplicate completed estimates per Pauli (a pair can be measured in
    // several bases only through its shared group fit, but symmetry can
    // produce the same Pauli from its own group once; keep the first).
    let mut seen = std::collections::HashSet::new();
    let mut observations = Vec::new();
    let mut fit_paulis = Vec::new();
    for e in &completed {
        if let ObservationPaulis::Single(b) = &e.observation.paulis {
            if seen.insert(b.to_string()) {
                observations.push(e.observation.clone());
                fit_paulis.push(b.clone());
            }
        }
    }

    let fit_options = FitOptions {
        weighted: false,
        bootstrap_resamples: config.bootstrap_resamples,
        bootstrap_seed: seed::derive_seed(master_seed, &[3]),
    };
    let (model, fit) = fit_from_fidelities(&observations, generators, n, &fit_options)?;
    let gamma = model.gamma();
    let report = LearnReport {
        plan,
        records,
        estimates,
        completed,
        fit,
        warnings,
        gamma,
        max_depth: config.max_depth(),
        fit_paulis,
    };
    Ok((model, report))
}

/// Calibrate the largest usable benchmark depth: binary-search the largest
/// even `k ≤ k_max` at which every planned observable still averages above
/// `1/2 + epsilon` (the regime the accuracy guarantees require). Returns 0
/// when even `k = 2` decays below the threshold.
#[allow(clippy::too_many_arguments)]
pub fn calibrate_max_depth(
    layer: &GateLayer,
    topology: &Topology,
    generators: &[PauliString],
    noise: &NoiseSpec,
    k_max: usize,
    epsilon: f64,
    instances: usize,
    shots: usize,
    master_seed: u64,
) -> Result<usize, LearnError> {
    if k_max < 2 || !k_max.is_multiple_of(2) {
        return Err(LearnError::BadConfig(
            "k_max must be an even integer of at least 2".into(),
        ));
    }
    let mut plan_rng = seed::derive_rng(master_seed, &[0x91a7]);
    let plan = plan_learning(layer, topology, generators, &mut plan_rng)?;
    let n = layer.n();

    let min_mean_at = |k: usize| -> Result<f64, LearnError> {
        let mut worst = f64::INFINITY;
        for (bi, basis) in plan.bases.iter().enumerate() {
            let specs: Vec<&FidelitySpec> = plan.specs_for_basis(bi).collect();
            let observables: Vec<PauliString> = specs
                .iter()
                .map(|s| {
                    let mut z = PauliString::identity(n);
                    for q in s.observable.support() {
                        z.set(q, crate::pauli::Letter::Z);
                    }
                    z
                })
                .collect();
            let mut sums = vec![0.0f64; specs.len()];
            for inst in 0..instances {
                let mut rng =
                    seed::derive_rng(master_seed, &[5, bi as u64, k as u64, inst as u64]);
                let instance = generate_learning_circuit(layer, basis, k, &mut rng)?;
                let table =
                    run_clifford_trajectories(&instance.circuit, noise, &observables, shots, &mut rng)?;
                for (oi, spec) in specs.iter().enumerate() {
                    let flips = spec
                        .observable
                        .support()
                        .iter()
                        .filter(|&&q| instance.readout_twirl[q])
                        .count();
                    let undo = if flips % 2 == 1 { -1.0 } else { 1.0 };
                    sums[oi] += undo * table.mean(oi);
                }
            }
            for s in sums {
                worst = worst.min(s / instances as f64);
            }
        }
        Ok(worst)
    };

    // Binary search over even depths in [2, k_max], counted in layer pairs.
    let threshold = 0.5 + epsilon;
    if min_mean_at(2)? < threshold {
        return Ok(0);
    }
    if min_mean_at(k_max)? >= threshold {
        return Ok(k_max);
    }
    let mut lo = 1usize;
    let mut hi = k_max / 2;
    while hi - lo > 1 {
        let mid = (lo + hi) / 2;
        if min_mean_at(2 * mid)? >= threshold {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(2 * lo)
}

/// Estimate individual fidelities of pair specs by applying the noisy layer
/// once and measuring the conjugated Pauli, normalizing with a zero-depth
/// circuit prepared directly in the conjugate basis. Readout errors cancel
/// in the ratio; preparation errors do not (they cancel only when the
/// initial state is exactly the ground state), which is the documented bias
/// of this path.
pub fn unit_depth_complete(
    layer: &GateLayer,
    specs: &[FidelitySpec],
    noise: &NoiseSpec,
    instances: usize,
    shots: usize,
    master_seed: u64,
) -> Result<Vec<FidelityEstimate>, LearnError> {
    let n = layer.n();
    let mut out = Vec::new();
    for (si, spec) in specs.iter().enumerate() {
        let Some(partner) = &spec.partner else {
            continue;
        };
        for (side, (start, end)) in [
            (0u64, (&spec.observable, partner)),
            (1u64, (partner, &spec.observable)),
        ] {
            let basis_in = basis_for(start);
            let basis_out = basis_for(end);
            let z_out = z_support(end);

            let mut num_means = Vec::with_capacity(instances);
            let mut den_means = Vec::with_capacity(instances);
            for inst in 0..instances {
                let mut rng =
                    seed::derive_rng(master_seed, &[4, si as u64, side, inst as u64]);
                // Depth-1 circuit: prepare `start`, one noisy layer, read `end`.
                let mut c = Circuit::new(n);
                c.push_basis_prep(&basis_in)?;
                let twirl = random_pauli_full(n, &mut rng);
                let conj = layer.conjugate_unsigned(&twirl);
                c.push_layer(layer.clone(), "layer")?;
                let idx = c.moments().len() - 1;
                if let Moment::Layer(lm) = &mut c.moments_mut()[idx] {
                    lm.fold_pre(&twirl);
                    lm.fold_post(&conj);
                }
                c.push_basis_unprep(&basis_out)?;
                let twirl_bits: Vec<bool> = (0..n).map(|_| rng.random::<bool>()).collect();
                c.push_singles(
                    twirl_bits
                        .iter()
                        .map(|&x| if x { Gate1::X } else { Gate1::I })
                        .collect(),
                )?;
                let undo_sign = |bits: &[bool], b: &PauliString| {
                    let f = b.support().iter().filter(|&&q| bits[q]).count();
                    if f % 2 == 1 {
                        -1.0
                    } else {
                        1.0
                    }
                };
                let t = run_clifford_trajectories(&c, noise, std::slice::from_ref(&z_out), shots, &mut rng)?;
                num_means.push(undo_sign(&twirl_bits, end) * t.mean(0));

                // Zero-depth normalizer prepared directly in the `end` basis.
                let mut c0 = Circuit::new(n);
                c0.push_basis_prep(&basis_out)?;
                c0.push_basis_unprep(&basis_out)?;
                let twirl_bits0: Vec<bool> = (0..n).map(|_| rng.random::<bool>()).collect();
                c0.push_singles(
                    twirl_bits0
                        .iter()
                        .map(|&x| if x { Gate1::X } else { Gate1::I })
                        .collect(),
                )?;
                let t0 = run_clifford_trajectories(&c0, noise, std::slice::from_ref(&z_out), shots, &mut rng)?;
                den_means.push(undo_sign(&twirl_bits0, end) * t0.mean(0));
            }
            let num = mean(&num_means);
            let den = mean(&den_means);
            if num <= 0.0 || den <= 0.0 {
                continue;
            }
            let value = num / den;
            let se_num = stderr_of_mean(&num_means);
            let se_den = stderr_of_mean(&den_means);
            let stderr =
                value * ((se_num / num).powi(2) + (se_den / den).powi(2)).sqrt();
            out.push(FidelityEstimate {
                observation: FidelityObservation {
                    paulis: ObservationPaulis::Single(start.clone()),
                    value,
                    stderr,
                },
                provenance: Provenance::UnitDepth,
            });
        }
    }
    Ok(out)
}

fn stderr_of_mean(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    (xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() - 1) as f64 / xs.len() as f64)
        .sqrt()
}

/// Basis string that makes `b` diagonal: the letters of `b` on its support,
/// Z elsewhere.
fn basis_for(b: &PauliString) -> PauliString {
    let mut basis = PauliString::identity(b.n());
    for q in 0..b.n() {
        let l = b.get(q);
        basis.set(
            q,
            if l == crate::pauli::Letter::I {
                crate::pauli::Letter::Z
            } else {
                l
            },
        );
    }
    basis
}

fn z_support(b: &PauliString) -> PauliString {
    let mut z = PauliString::identity(b.n());
    for q in b.support() {
        z.set(q, crate::pauli::Letter::Z);
    }
    z
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lindblad::two_local_generators;
    use crate::pauli::{GateKind, Letter, SignedPauli, TwoQubitGate};
    use crate::testutil::{self as dense, seeded_rng};
    use num_complex::Complex64;

    fn p(s: &str) -> PauliString {
        s.parse().unwrap()
    }

    fn two_cx_layer() -> GateLayer {
        GateLayer::new(
            4,
            vec![
                TwoQubitGate {
                    kind: GateKind::CX,
                    control: 0,
                    target: 1,
                },
                TwoQubitGate {
                    kind: GateKind::CX,
                    control: 2,
                    target: 3,
                },
            ],
        )
        .unwrap()
    }

    #[test]
    fn config_validation() {
        assert!(LearningConfig::default().validate().is_ok());
        let odd = LearningConfig {
            depths: vec![0, 3],
            ..LearningConfig::default()
        };
        assert!(matches!(odd.validate(), Err(LearnError::OddDepth(3))));
        let short = LearningConfig {
            depths: vec![0],
            ..LearningConfig::default()
        };
        assert!(short.validate().is_err());
    }

    #[test]
    fn learning_circuit_structure() {
        let mut rng = seeded_rng(81);
        let layer = two_cx_layer();
        let basis = p("XYZX");
        let inst = generate_learning_circuit(&layer, &basis, 0, &mut rng).unwrap();
        // Depth 0: prep, unprep, readout twirl.
        assert_eq!(inst.circuit.moments().len(), 3);

        let inst2 = generate_learning_circuit(&layer, &basis, 2, &mut rng).unwrap();
        assert_eq!(inst2.circuit.moments().len(), 5);
        let layers: Vec<_> = inst2
            .circuit
            .moments()
            .iter()
            .filter_map(|m| match m {
                Moment::Layer(lm) => Some(lm),
                _ => None,
            })
            .collect();
        assert_eq!(layers.len(), 2);
        for lm in layers {
            let pre = lm.pre.as_ref().unwrap();
            let post = lm.post.as_ref().unwrap();
            assert_eq!(&lm.layer.conjugate_unsigned(pre), post);
        }
        assert!(matches!(
            generate_learning_circuit(&layer, &basis, 3, &mut rng),
            Err(LearnError::OddDepth(3))
        ));
    }

    #[test]
    fn twirl_average_diagonalizes_a_coherent_channel() {
        // One-qubit coherent rotation is not a Pauli channel; averaging its
        // conjugation by the four Paulis kills all off-diagonal transfer
        // entries. Dense transfer matrices computed from first principles.
        let theta = 0.4f64;
        let u = [
            [
                Complex64::new((theta / 2.0).cos(), 0.0),
                Complex64::new(0.0, -(theta / 2.0).sin()),
            ],
            [
                Complex64::new(0.0, -(theta / 2.0).sin()),
                Complex64::new((theta / 2.0).cos(), 0.0),
            ],
        ];
        let u_mat: dense::Mat = vec![vec![u[0][0], u[0][1]], vec![u[1][0], u[1][1]]];
        let letters = [Letter::I, Letter::X, Letter::Y, Letter::Z];
        let channel = |rho: &dense::Mat| -> dense::Mat {
            dense::matmul(&u_mat, &dense::matmul(rho, &dense::dagger(&u_mat)))
        };
        let twirled = |rho: &dense::Mat| -> dense::Mat {
            let mut acc = vec![vec![Complex64::new(0.0, 0.0); 2]; 2];
            for l in letters {
                let pm = dense::letter_matrix(l);
                let inner = dense::matmul(&pm, &dense::matmul(rho, &pm));
                let out = channel(&inner);
                let out = dense::matmul(&pm, &dense::matmul(&out, &pm));
                acc = dense::add(&acc, &dense::scale(&out, Complex64::new(0.25, 0.0)));
            }
            acc
        };
        // Transfer matrices T[a][b] = Tr[P_a Λ(P_b)] / 2.
        let mut raw_off = 0.0;
        let mut twirled_off = 0.0;
        for (ai, &a) in letters.iter().enumerate() {
            for (bi, &b) in letters.iter().enumerate() {
                if ai == bi {
                    continue;
                }
                let pb = dense::letter_matrix(b);
                let pa = dense::letter_matrix(a);
                let t_raw = dense::trace(&dense::matmul(&pa, &channel(&pb))).re / 2.0;
                let t_tw = dense::trace(&dense::matmul(&pa, &twirled(&pb))).re / 2.0;
                raw_off += t_raw.abs();
                twirled_off += t_tw.abs();
            }
        }
        assert!(raw_off > 0.1, "coherent channel must have off-diagonal PTM");
        assert!(twirled_off < 1e-12, "twirl must diagonalize the PTM");
    }

    #[test]
    fn estimate_decays_exact_recovery() {
        // Noiseless synthetic decays: alpha = 0.9, product 0.98.
        let alpha = 0.9f64;
        let product = 0.98f64;
        let depths = vec![0usize, 2, 4, 8, 16];
        let spec = FidelitySpec {
            basis: 0,
            observable: p("IX"),
            partner: Some(p("ZX")),
        };
        let means: Vec<Vec<f64>> = depths
            .iter()
            .map(|&k| vec![alpha * product.powf(k as f64 / 2.0); 5])
            .collect();
        let data = vec![SpecDecays {
            spec,
            depths: depths.clone(),
            instance_means: means,
        }];
        let (est, warnings) = estimate_decays(&data, 0, 0);
        assert!(warnings.is_empty());
        assert_eq!(est.len(), 1);
        assert!((est[0].observation.value - product).abs() < 1e-10);

        // Flat decays give product exactly 1.
        let flat: Vec<Vec<f64>> = depths.iter().map(|_| vec![0.85; 5]).collect();
        let data = vec![SpecDecays {
            spec: FidelitySpec {
                basis: 1,
                observable: p("ZI"),
                partner: None,
            },
            depths: depths.clone(),
            instance_means: flat,
        }];
        let (est, _) = estimate_decays(&data, 0, 0);
        assert!((est[0].observation.value - 1.0).abs() < 1e-12);
    }

    #[test]
    fn shared_pair_with_two_offsets_fits_one_rate() {
        let depths = vec![0usize, 2, 4, 8];
        let product = 0.95f64;
        let mk = |alpha: f64, basis: usize, obs: &str, partner: &str| SpecDecays {
            spec: FidelitySpec {
                basis,
                observable: p(obs),
                partner: Some(p(partner)),
            },
            depths: depths.clone(),
            instance_means: depths
                .iter()
                .map(|&k| vec![alpha * product.powf(k as f64 / 2.0); 4])
                .collect(),
        };
        // Same unordered pair {IY, ZY} from two observables with different α.
        let data = vec![mk(0.88, 0, "IY", "ZY"), mk(0.97, 0, "ZY", "IY")];
        let (est, _) = estimate_decays(&data, 0, 0);
        assert_eq!(est.len(), 1, "one estimate per unordered pair");
        assert!((est[0].observation.value - product).abs() < 1e-10);
    }

    #[test]
    fn nonpositive_cells_are_dropped_with_warning() {
        let depths = vec![0usize, 2, 4];
        let data = vec![SpecDecays {
            spec: FidelitySpec {
                basis: 0,
                observable: p("XI"),
                partner: None,
            },
            depths,
            instance_means: vec![vec![0.9; 4], vec![-0.1; 4], vec![0.8; 4]],
        }];
        let (est, warnings) = estimate_decays(&data, 0, 0);
        assert_eq!(est.len(), 1);
        assert!(!warnings.is_empty());
    }

    #[test]
    fn two_point_matches_joint_on_exact_data() {
        let product = 0.97f64;
        let alpha = 0.91;
        let d0 = alpha;
        let d8 = alpha * product.powf(4.0);
        let tp = two_point_product(d0, d8, 8).unwrap();
        assert!((tp - product).abs() < 1e-12);
        assert!(two_point_product(-0.1, 0.5, 8).is_none());
    }

    #[test]
    fn symmetry_completion_square_root() {
        let pair = FidelityEstimate {
            observation: FidelityObservation {
                paulis: ObservationPaulis::Pair(p("IX"), p("ZX")),
                value: 0.9604,
                stderr: 0.001,
            },
            provenance: Provenance::Measured,
        };
        let single = FidelityEstimate {
            observation: FidelityObservation {
                paulis: ObservationPaulis::Single(p("ZI")),
                value: 0.99,
                stderr: 0.001,
            },
            provenance: Provenance::Measured,
        };
        let done = symmetry_complete(&[pair, single]);
        assert_eq!(done.len(), 3);
        assert!((done[0].observation.value - 0.98).abs() < 1e-12);
        assert!((done[1].observation.value - 0.98).abs() < 1e-12);
        assert_eq!(done[0].provenance, Provenance::SymmetryDerived);
        assert_eq!(done[2].provenance, Provenance::Measured);
        assert_eq!(done[2].observation.value, 0.99);
    }

    fn small_config() -> LearningConfig {
        LearningConfig {
            depths: vec![0, 2, 4, 8],
            instances_per_point: 30,
            shots_per_instance: 128,
            bootstrap_resamples: 40,
        }
    }

    #[test]
    fn zero_noise_learns_zero_model() {
        let layer = two_cx_layer();
        let topo = Topology::path(4);
        let k = two_local_generators(4, &[0, 1, 2, 3], &[(0, 1), (1, 2), (2, 3)]).unwrap();
        let (model, report) = learn_layer_noise(
            &layer,
            &topo,
            &k,
            &small_config(),
            &NoiseSpec::noiseless(4),
            7,
        )
        .unwrap();
        assert!(model.rates().iter().all(|&r| r == 0.0));
        assert_eq!(report.gamma, 1.0);
    }

    #[test]
    fn round_trip_recovers_fidelities() {
        let mut rng = seeded_rng(83);
        let layer = two_cx_layer();
        let topo = Topology::path(4);
        let k = two_local_generators(4, &[0, 1, 2, 3], &[(0, 1), (1, 2), (2, 3)]).unwrap();
        let truth = SparseModel::new(
            4,
            k.iter()
                .map(|g| (g.clone(), rng.random::<f64>() * 8e-4))
                .collect(),
        )
        .unwrap();
        let noise = NoiseSpec::noiseless(4)
            .with_model("layer", truth.clone())
            .with_spam(0.01, 0.02);
        let (model, report) =
            learn_layer_noise(&layer, &topo, &k, &small_config(), &noise, 11).unwrap();
        // Model-predicted fidelities track the truth closely.
        for b in &report.fit_paulis {
            let err = (model.fidelity(b) - truth.fidelity(b)).abs();
            assert!(err < 0.02, "fidelity of {b}: error {err}");
        }
        // Gamma lands near the injected value.
        assert!((model.gamma() - truth.gamma()).abs() < 0.05);
    }

    #[test]
    fn spam_invariance_of_learned_rates() {
        let layer = two_cx_layer();
        let topo = Topology::path(4);
        let k = two_local_generators(4, &[0, 1, 2, 3], &[(0, 1), (1, 2), (2, 3)]).unwrap();
        let truth = SparseModel::new(4, k.iter().map(|g| (g.clone(), 6e-4)).collect()).unwrap();
        let mut learned = Vec::new();
        for (prep, readout) in [(0.0, 0.0), (0.02, 0.02), (0.05, 0.05)] {
            let noise = NoiseSpec::noiseless(4)
                .with_model("layer", truth.clone())
                .with_spam(prep, readout);
            let (model, report) =
                learn_layer_noise(&layer, &topo, &k, &small_config(), &noise, 13).unwrap();
            learned.push((model, report.fit.rate_stderr.unwrap()));
        }
        for i in 1..learned.len() {
            let (m0, se0) = &learned[0];
            let (mi, sei) = &learned[i];
            let mut exceed = 0usize;
            for j in 0..m0.rates().len() {
                let diff = (m0.rates()[j] - mi.rates()[j]).abs();
                let se = (se0[j] * se0[j] + sei[j] * sei[j]).sqrt();
                if diff > 3.0 * se + 1e-5 {
                    exceed += 1;
                }
                assert!(
                    diff <= 6.0 * se + 1e-4,
                    "rate {j} shifted by {diff} (6se = {})",
                    6.0 * se
                );
            }
            // With 39 rates a few 3σ excursions are binomially expected;
            // systematic SPAM leakage would blow past this allowance.
            assert!(exceed <= 4, "{exceed} of 39 rates shifted beyond 3σ");
        }
    }

    #[test]
    fn instance_count_is_size_invariant() {
        // The 20-qubit plan uses the same bases and instance counts as the
        // 4-qubit plan; learning cost does not grow with n.
        let mut rng = seeded_rng(84);
        let t4 = Topology::path(4);
        let t20 = Topology::path(20);
        let k4 = two_local_generators(4, &[0, 1, 2, 3], &[(0, 1), (1, 2), (2, 3)]).unwrap();
        let q20: Vec<usize> = (0..20).collect();
        let e20: Vec<(usize, usize)> = (0..19).map(|i| (i, i + 1)).collect();
        let k20 = two_local_generators(20, &q20, &e20).unwrap();
        let layer4 = two_cx_layer();
        let gates20: Vec<TwoQubitGate> = (0..10)
            .map(|g| TwoQubitGate {
                kind: GateKind::CX,
                control: 2 * g,
                target: 2 * g + 1,
            })
            .collect();
        let layer20 = GateLayer::new(20, gates20).unwrap();
        let plan4 = plan_learning(&layer4, &t4, &k4, &mut rng).unwrap();
        let plan20 = plan_learning(&layer20, &t20, &k20, &mut rng).unwrap();
        assert_eq!(plan4.bases.len(), 9);
        assert_eq!(plan20.bases.len(), 9);
        let config = LearningConfig::default();
        let circuits4 = plan4.bases.len() * config.depths.len() * config.instances_per_point;
        let circuits20 = plan20.bases.len() * config.depths.len() * config.instances_per_point;
        assert_eq!(circuits4, circuits20);
    }

    #[test]
    fn depth_calibration_tracks_noise_strength() {
        let layer = two_cx_layer();
        let topo = Topology::path(4);
        let k = two_local_generators(4, &[0, 1, 2, 3], &[(0, 1), (1, 2), (2, 3)]).unwrap();
        // Mild noise: even the deepest circuits stay well above 1/2.
        let mild = SparseModel::new(4, k.iter().map(|g| (g.clone(), 2e-4)).collect()).unwrap();
        let noise = NoiseSpec::noiseless(4).with_model("layer", mild);
        let depth =
            calibrate_max_depth(&layer, &topo, &k, &noise, 16, 0.05, 12, 128, 31).unwrap();
        assert_eq!(depth, 16);

        // Strong noise: the usable depth collapses.
        let strong = SparseModel::new(4, k.iter().map(|g| (g.clone(), 0.02)).collect()).unwrap();
        let noise = NoiseSpec::noiseless(4).with_model("layer", strong);
        let depth =
            calibrate_max_depth(&layer, &topo, &k, &noise, 16, 0.05, 12, 128, 31).unwrap();
        assert!(depth < 16, "strong noise must cap the depth, got {depth}");

        assert!(matches!(
            calibrate_max_depth(&layer, &topo, &k, &noise, 3, 0.05, 4, 16, 31),
            Err(LearnError::BadConfig(_))
        ));
    }

    #[test]
    fn unit_depth_matches_symmetry_path_on_symmetric_truth() {
        // Ground truth closed under layer conjugation with equal rates on
        // conjugate partners: pair fidelities are genuinely symmetric, so
        // the square-root completion and the unit-depth estimates must
        // agree (both match the truth).
        let layer = GateLayer::new(
            2,
            vec![TwoQubitGate {
                kind: GateKind::CX,
                control: 0,
                target: 1,
            }],
        )
        .unwrap();
        let k = two_local_generators(2, &[0, 1], &[(0, 1)]).unwrap();
        let mut terms = Vec::new();
        for g in &k {
            let conj = layer.conjugate(&SignedPauli::positive(g.clone())).pauli;
            terms.push((g.clone(), 3e-3));
            if !conj.is_identity() {
                terms.push((conj, 3e-3));
            }
        }
        let truth = SparseModel::new(2, terms).unwrap();
        let b = p("ZZ");
        let b2 = layer.conjugate(&SignedPauli::positive(b.clone())).pauli;
        assert!(
            (truth.fidelity(&b) - truth.fidelity(&b2)).abs() < 1e-12,
            "construction must be symmetric"
        );

        let noise = NoiseSpec::noiseless(2).with_model("layer", truth.clone());
        let spec = FidelitySpec {
            basis: 0,
            observable: b.clone(),
            partner: Some(b2.clone()),
        };
        let unit = unit_depth_complete(&layer, &[spec], &noise, 50, 512, 19).unwrap();
        // Symmetry path applied to the exact pair product.
        let sym = symmetry_complete(&[FidelityEstimate {
            observation: FidelityObservation {
                paulis: ObservationPaulis::Pair(b.clone(), b2.clone()),
                value: truth.fidelity(&b) * truth.fidelity(&b2),
                stderr: 0.0,
            },
            provenance: Provenance::Measured,
        }]);
        for u in &unit {
            let ObservationPaulis::Single(pauli) = &u.observation.paulis else {
                unreachable!()
            };
            let s = sym
                .iter()
                .find(|e| matches!(&e.observation.paulis, ObservationPaulis::Single(q) if q == pauli))
                .unwrap();
            let dev = (u.observation.value - s.observation.value).abs();
            assert!(
                dev < 5.0 * u.observation.stderr.max(2e-4),
                "{pauli}: unit-depth {} vs symmetry {}",
                u.observation.value,
                s.observation.value
            );
        }
    }

    #[test]
    fn unit_depth_estimates_are_unbiased_without_spam() {
        let layer = GateLayer::new(
            2,
            vec![TwoQubitGate {
                kind: GateKind::CX,
                control: 0,
                target: 1,
            }],
        )
        .unwrap();
        let k = two_local_generators(2, &[0, 1], &[(0, 1)]).unwrap();
        let truth = SparseModel::new(2, k.iter().map(|g| (g.clone(), 4e-3)).collect()).unwrap();
        let noise = NoiseSpec::noiseless(2).with_model("layer", truth.clone());
        // The ZZ observable conjugates to IZ under CX: a genuine pair.
        let spec = FidelitySpec {
            basis: 0,
            observable: p("ZZ"),
            partner: Some(
                layer
                    .conjugate(&SignedPauli::positive(p("ZZ")))
                    .pauli,
            ),
        };
        let est = unit_depth_complete(&layer, std::slice::from_ref(&spec), &noise, 60, 512, 17).unwrap();
        assert_eq!(est.len(), 2);
        for e in &est {
            let ObservationPaulis::Single(b) = &e.observation.paulis else {
                panic!("unit depth yields singles");
            };
            let truth_f = truth.fidelity(b);
            let dev = (e.observation.value - truth_f).abs();
            assert!(
                dev < 5.0 * e.observation.stderr.max(2e-4),
                "{b}: {} vs {truth_f}",
                e.observation.value
            );
            assert_eq!(e.provenance, Provenance::UnitDepth);
        }

        // With preparation error the documented bias appears: the estimates
        // move away from the truth by more than the no-SPAM deviation.
        let noisy_prep = NoiseSpec::noiseless(2)
            .with_model("layer", truth.clone())
            .with_spam(0.08, 0.0);
        let est_biased =
            unit_depth_complete(&layer, &[spec], &noisy_prep, 60, 512, 17).unwrap();
        let max_bias = est_biased
            .iter()
            .map(|e| {
                let ObservationPaulis::Single(b) = &e.observation.paulis else {
                    unreachable!()
                };
                (e.observation.value - truth.fidelity(b)).abs()
            })
            .fold(0.0, f64::max);
        assert!(
            max_bias > 0.01,
            "prep error should bias unit-depth estimates, got {max_bias}"
        );
    }
}
