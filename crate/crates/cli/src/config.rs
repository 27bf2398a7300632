//! Experiment configuration: one JSON file drives every subcommand.
//!
//! The effective config (after command-line overrides) is hashed; outputs
//! land in `<out>/<command>-<hash8>/` so distinct configurations never
//! clobber each other, and every output row carries the hash, seed and
//! crate version.

use std::collections::BTreeMap;
use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use plec_core::bases::Topology;
use plec_core::circuit::NoiseSpec;
use plec_core::learning::LearningConfig;
use plec_core::lindblad::{two_local_generators, ModelFile, SparseModel};
use plec_core::pauli::{GateLayer, TwoQubitGate};
use plec_core::pec::Backend;
use plec_core::seed;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentConfig {
    /// Master seed; reproducibility of every output is keyed to it.
    pub seed: u64,
    #[serde(default = "default_out_dir")]
    pub out_dir: String,
    /// Free-form label recorded in provenance (e.g. when the noise was
    /// learned); no scheduling semantics.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timestamp: Option<String>,
    pub topology: TopologySpec,
    #[serde(default)]
    pub layers: Vec<LayerSpec>,
    #[serde(default)]
    pub noise: NoiseConfig,
    #[serde(default)]
    pub learning: LearningConfig,
    #[serde(default)]
    pub pec: PecConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ising: Option<IsingConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma_scaling: Option<GammaScalingConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mitigate: Option<MitigateConfig>,
}

fn default_out_dir() -> String {
    "out".to_string()
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path)
            .with_context(|| format!("cannot read config file {}", path.display()))?;
        let cfg: ExperimentConfig =
            serde_json::from_slice(&bytes).context("config file is not valid JSON")?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.learning
            .validate()
            .map_err(|e| anyhow::anyhow!("learning config: {e}"))?;
        let t = self.topology.to_topology()?;
        let mut tags = std::collections::HashSet::new();
        for l in &self.layers {
            if !tags.insert(&l.tag) {
                bail!("duplicate layer tag {:?}", l.tag);
            }
            l.to_layer(t.n())?;
        }
        if let Some(i) = &self.ising {
            if i.n < 2 {
                bail!("ising chain needs at least 2 sites");
            }
        }
        Ok(())
    }

    pub fn topology(&self) -> Result<Topology> {
        self.topology.to_topology()
    }

    /// Model generator set: all weight-one terms on the topology qubits plus
    /// all weight-two terms on its edges.
    pub fn model_generators(&self) -> Result<Vec<plec_core::PauliString>> {
        let t = self.topology()?;
        let qubits: Vec<usize> = (0..t.n()).collect();
        Ok(two_local_generators(t.n(), &qubits, &t.edges())?)
    }

    /// Injected ground-truth model for a layer tag, if configured.
    pub fn injected_model(&self, tag: &str, n: usize) -> Result<Option<SparseModel>> {
        let Some(spec) = self.noise.inject.get(tag) else {
            return Ok(None);
        };
        let t = self.topology()?;
        let qubits: Vec<usize> = (0..t.n()).collect();
        let gens = two_local_generators(n, &qubits, &t.edges())?;
        let model = match spec {
            InjectSpec::RandomTwoLocal { gamma, seed_offset } => {
                if *gamma < 1.0 {
                    bail!("injected gamma must be at least 1, got {gamma}");
                }
                let mut rng =
                    seed::derive_rng(self.seed, &[0x1213ec7, hash_tag(tag), *seed_offset]);
                plec_core::lindblad::random_two_local_model(
                    n,
                    &qubits,
                    &t.edges(),
                    *gamma,
                    &mut rng,
                )?
            }
            InjectSpec::DepolarizingTwoLocal { fidelity } => {
                if fidelity.is_nan() || *fidelity <= 0.0 || *fidelity > 1.0 {
                    bail!("depolarizing fidelity must be in (0, 1], got {fidelity}");
                }
                let rate = -fidelity.ln() / 16.0;
                SparseModel::new(n, gens.into_iter().map(|g| (g, rate)).collect())?
            }
            InjectSpec::Terms { terms } => SparseModel::new(
                n,
                terms
                    .iter()
                    .map(|t| (t.pauli.clone(), t.lambda))
                    .collect(),
            )?,
            InjectSpec::File { path } => {
                let bytes = std::fs::read(path)
                    .with_context(|| format!("cannot read model file {path}"))?;
                let file: ModelFile =
                    serde_json::from_slice(&bytes).context("model file is not valid JSON")?;
                file.into_model()?
            }
        };
        Ok(Some(model))
    }

    /// The injected noise source seen by the simulators, with the layer
    /// model registered under `layer_tag_override` when given (the learning
    /// pipeline tags its benchmark layers uniformly).
    pub fn noise_spec_for(
        &self,
        n: usize,
        tags: &[(&str, Option<&str>)],
    ) -> Result<NoiseSpec> {
        let mut ns = NoiseSpec::noiseless(n);
        ns.prep_flip = vec![self.noise.prep_flip; n];
        ns.readout_flip = vec![self.noise.readout_flip; n];
        ns.idle_z_rate = self.noise.idle_z_rate;
        for (tag, rename) in tags {
            if let Some(model) = self.injected_model(tag, n)? {
                ns.layer_models
                    .insert(rename.unwrap_or(tag).to_string(), model);
            }
        }
        Ok(ns)
    }
}

fn hash_tag(tag: &str) -> u64 {
    tag.bytes().fold(0xcbf29ce484222325u64, |h, b| {
        (h ^ b as u64).wrapping_mul(0x100000001b3)
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TopologySpec {
    Builtin { builtin: String },
    Explicit { n: usize, edges: Vec<(usize, usize)> },
}

impl TopologySpec {
    pub fn to_topology(&self) -> Result<Topology> {
        match self {
            TopologySpec::Builtin { builtin } => match builtin.as_str() {
                "heavy-hex-27" => Ok(Topology::heavy_hex_27()),
                "heavy-hex-7" => Ok(Topology::heavy_hex_7()),
                other => {
                    if let Some(n) = other.strip_prefix("path-") {
                        let n: usize = n.parse().context("bad path-<n> topology")?;
                        Ok(Topology::path(n))
                    } else {
                        bail!("unknown builtin topology {other:?}")
                    }
                }
            },
            TopologySpec::Explicit { n, edges } => {
                Topology::new(*n, edges).map_err(|e| anyhow::anyhow!("{e}"))
            }
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LayerSpec {
    pub tag: String,
    pub gates: Vec<TwoQubitGate>,
}

impl LayerSpec {
    pub fn to_layer(&self, n: usize) -> Result<GateLayer> {
        GateLayer::new(n, self.gates.clone())
            .map_err(|e| anyhow::anyhow!("layer {:?}: {e}", self.tag))
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct NoiseConfig {
    #[serde(default)]
    pub inject: BTreeMap<String, InjectSpec>,
    #[serde(default)]
    pub prep_flip: f64,
    #[serde(default)]
    pub readout_flip: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub idle_z_rate: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InjectSpec {
    /// Random two-local model rescaled to the requested sampling overhead.
    RandomTwoLocal {
        gamma: f64,
        #[serde(default)]
        seed_offset: u64,
    },
    /// Uniform two-local rates matching a per-gate depolarizing fidelity.
    DepolarizingTwoLocal { fidelity: f64 },
    /// Explicit generator rates.
    Terms { terms: Vec<plec_core::lindblad::ModelTerm> },
    /// A model JSON file (e.g. produced by `plec learn`).
    File { path: String },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PecConfig {
    /// Instance schedule cap and base: N(s) = min(cap, ceil(base·(γ₁γ₂)^{2s})).
    #[serde(default = "default_cap")]
    pub instance_cap: usize,
    #[serde(default = "default_base")]
    pub instance_base: f64,
    /// Fixed instance count overriding the schedule.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub instances: Option<usize>,
    #[serde(default = "default_shots")]
    pub shots: usize,
    #[serde(default = "default_backend")]
    pub backend: Backend,
    /// Where the mitigator's models come from: the injected ground truth or
    /// model files per layer tag.
    #[serde(default)]
    pub models: ModelSource,
}

fn default_cap() -> usize {
    200
}
fn default_base() -> f64 {
    40.0
}
fn default_shots() -> usize {
    1024
}
fn default_backend() -> Backend {
    Backend::State
}

impl Default for PecConfig {
    fn default() -> Self {
        PecConfig {
            instance_cap: default_cap(),
            instance_base: default_base(),
            instances: None,
            shots: default_shots(),
            backend: default_backend(),
            models: ModelSource::default(),
        }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelSource {
    #[default]
    Exact,
    Files { paths: BTreeMap<String, String> },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IsingConfig {
    pub n: usize,
    pub j: f64,
    pub h: f64,
    pub dt: f64,
    pub steps: usize,
    #[serde(default = "default_ising_observables")]
    pub observables: Vec<IsingObservable>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IsingObservable {
    /// ⟨X⟩, ⟨Y⟩, ⟨Z⟩ global magnetization components.
    Magnetization,
    /// The weight-n Pauli-Z string.
    ZFull,
    /// All weight-(n−1) Pauli-Z strings.
    ZWeightNm1,
}

fn default_ising_observables() -> Vec<IsingObservable> {
    vec![
        IsingObservable::Magnetization,
        IsingObservable::ZFull,
        IsingObservable::ZWeightNm1,
    ]
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GammaScalingConfig {
    pub n_values: Vec<usize>,
    pub one_minus_f: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MitigateConfig {
    pub circuit: CircuitSource,
    pub observables: Vec<plec_core::PauliString>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub instances: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shots: Option<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CircuitSource {
    /// Circuit JSON file (the serialized [`plec_core::circuit::Circuit`]).
    File { path: String },
    /// `repetitions` applications of a configured layer.
    RepeatedLayer { tag: String, repetitions: usize },
}
