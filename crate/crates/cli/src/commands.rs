//! Subcommand implementations wiring the library into file-driven runs.

use std::collections::HashMap;
use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::Serialize;

use plec_core::bases::plan_learning;
use plec_core::circuit::Circuit;
use plec_core::learning::learn_layer_noise;
use plec_core::lindblad::{gamma_bar, ModelFile, SparseModel};
use plec_core::pauli::{Letter, PauliString};
use plec_core::pec::{mitigated_instance_means, unmitigated_instance_means, MitigatedEstimate};
use plec_core::seed;
use plec_core::sim::noiseless_expectation;

use crate::config::{CircuitSource, ExperimentConfig, IsingObservable, ModelSource};
use crate::output::{OutputDir, Provenance};
use crate::trotter::{chain_layer, trotter_circuit, EVEN_TAG, ODD_TAG};

/// Learn a noise model per configured layer; writes model JSON, decay CSV
/// and fit-report JSON per layer tag.
pub fn cmd_learn(cfg: &ExperimentConfig, out_root: &Path) -> Result<OutputDir> {
    cmd_learn_impl(cfg, out_root, None)
}

/// As [`cmd_learn`], but first binary-search the largest even depth `k ≤
/// k_max` at which all planned observables stay above 1/2, and benchmark on
/// the doubling ladder {0, 2, 4, ...} capped at that depth.
pub fn cmd_learn_calibrated(
    cfg: &ExperimentConfig,
    out_root: &Path,
    k_max: usize,
) -> Result<OutputDir> {
    cmd_learn_impl(cfg, out_root, Some(k_max))
}

fn cmd_learn_impl(
    cfg: &ExperimentConfig,
    out_root: &Path,
    calibrate_k_max: Option<usize>,
) -> Result<OutputDir> {
    if cfg.layers.is_empty() {
        bail!("no layers configured");
    }
    let prov = Provenance::new(cfg)?;
    let mut out = OutputDir::create(out_root, "learn", &prov)?;
    let topology = cfg.topology()?;
    let n = topology.n();
    let generators = cfg.model_generators()?;

    for layer_spec in &cfg.layers {
        let layer = layer_spec.to_layer(n)?;
        // The learning circuits tag their benchmark layer "layer".
        let noise = cfg.noise_spec_for(n, &[(layer_spec.tag.as_str(), Some("layer"))])?;
        let layer_seed = seed::derive_seed(cfg.seed, &[tag_word(&layer_spec.tag)]);

        let mut learning = cfg.learning.clone();
        if let Some(k_max) = calibrate_k_max {
            let k_star = plec_core::learning::calibrate_max_depth(
                &layer,
                &topology,
                &generators,
                &noise,
                k_max,
                0.05,
                (cfg.learning.instances_per_point / 4).max(10),
                cfg.learning.shots_per_instance,
                seed::derive_seed(layer_seed, &[0xca11]),
            )?;
            if k_star == 0 {
                bail!(
                    "calibration: observables of layer {:?} decay below 1/2 already at depth 2",
                    layer_spec.tag
                );
            }
            let mut depths = vec![0usize];
            let mut d = 2usize;
            while d <= k_star {
                depths.push(d);
                d *= 2;
            }
            learning.depths = depths;
        }

        let (model, report) = learn_layer_noise(
            &layer,
            &topology,
            &generators,
            &learning,
            &noise,
            layer_seed,
        )?;

        let mut file = ModelFile::from_model(&model);
        file.meta.insert(
            "provenance".into(),
            serde_json::to_value(&prov).unwrap(),
        );
        file.meta
            .insert("layer_tag".into(), layer_spec.tag.clone().into());
        file.meta.insert("gamma".into(), report.gamma.into());
        out.write_json(&format!("model-{}.json", layer_spec.tag), &file)?;

        let mut csv = format!(
            "basis,observable,depth,mean,stderr,n_instances,{}\n",
            Provenance::CSV_HEADER_SUFFIX
        );
        for r in &report.records {
            csv.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                r.basis,
                r.observable,
                r.depth,
                r.mean,
                r.stderr,
                r.instances,
                prov.csv_suffix()
            ));
        }
        out.write_text(&format!("decays-{}.csv", layer_spec.tag), &csv)?;

        #[derive(Serialize)]
        struct FitReportFile<'a> {
            provenance: &'a Provenance,
            layer_tag: &'a str,
            gamma: f64,
            max_depth: usize,
            fit: &'a plec_core::fitting::FitReport,
            warnings: &'a [String],
            bases: Vec<String>,
        }
        out.write_json(
            &format!("fit-report-{}.json", layer_spec.tag),
            &FitReportFile {
                provenance: &prov,
                layer_tag: &layer_spec.tag,
                gamma: report.gamma,
                max_depth: report.max_depth,
                fit: &report.fit,
                warnings: &report.warnings,
                bases: report.plan.bases.iter().map(|b| b.to_string()).collect(),
            },
        )?;
    }
    Ok(out)
}

/// Emit the nine-basis measurement plan per layer.
pub fn cmd_bases(cfg: &ExperimentConfig, out_root: &Path) -> Result<OutputDir> {
    if cfg.layers.is_empty() {
        bail!("no layers configured");
    }
    let prov = Provenance::new(cfg)?;
    let mut out = OutputDir::create(out_root, "bases", &prov)?;
    let topology = cfg.topology()?;
    let generators = cfg.model_generators()?;
    for layer_spec in &cfg.layers {
        let layer = layer_spec.to_layer(topology.n())?;
        let mut rng = seed::derive_rng(
            cfg.seed,
            &[0x91a7, tag_word(&layer_spec.tag)],
        );
        let plan = plan_learning(&layer, &topology, &generators, &mut rng)?;
        #[derive(Serialize)]
        struct PlanFile<'a> {
            provenance: &'a Provenance,
            layer_tag: &'a str,
            #[serde(flatten)]
            plan: &'a plec_core::bases::MeasurementPlan,
        }
        out.write_json(
            &format!("plan-{}.json", layer_spec.tag),
            &PlanFile {
                provenance: &prov,
                layer_tag: &layer_spec.tag,
                plan: &plan,
            },
        )?;
    }
    Ok(out)
}

fn tag_word(tag: &str) -> u64 {
    tag.bytes().fold(0xcbf29ce484222325u64, |h, b| {
        (h ^ b as u64).wrapping_mul(0x100000001b3)
    })
}

/// Resolve the mitigator's models per layer tag.
fn mitigation_models(
    cfg: &ExperimentConfig,
    n: usize,
    tags: &[&str],
) -> Result<HashMap<String, plec_core::lindblad::InverseModel>> {
    let mut out = HashMap::new();
    for &tag in tags {
        let model: SparseModel = match &cfg.pec.models {
            ModelSource::Exact => cfg
                .injected_model(tag, n)?
                .with_context(|| format!("no injected model for layer tag {tag:?}"))?,
            ModelSource::Files { paths } => {
                let path = paths
                    .get(tag)
                    .with_context(|| format!("no model file for layer tag {tag:?}"))?;
                let bytes = std::fs::read(path)
                    .with_context(|| format!("cannot read model file {path}"))?;
                let file: ModelFile =
                    serde_json::from_slice(&bytes).context("model file is not valid JSON")?;
                file.into_model()?
            }
        };
        out.insert(tag.to_string(), model.invert());
    }
    Ok(out)
}

#[derive(Debug, Clone, Serialize)]
pub struct IsingResultRow {
    pub step: usize,
    pub observable: String,
    pub mitigated: f64,
    pub mitigated_stderr: f64,
    pub unmitigated: f64,
    pub unmitigated_stderr: f64,
    pub ideal: f64,
    pub gamma: f64,
    pub instances: usize,
    pub shots: usize,
}

/// Error-mitigated Trotter evolution of the transverse-field Ising chain:
/// per step, mitigated / unmitigated / ideal values of the configured
/// observables, on the instance schedule `min(cap, base·(γ₁γ₂)^{2s})`.
pub fn cmd_ising(cfg: &ExperimentConfig, out_root: &Path) -> Result<OutputDir> {
    let ising = cfg
        .ising
        .as_ref()
        .context("config has no \"ising\" section")?;
    let prov = Provenance::new(cfg)?;
    let mut out = OutputDir::create(out_root, "ising", &prov)?;
    let n = ising.n;
    let topo_n = cfg.topology()?.n();
    if topo_n != n {
        bail!("ising.n = {n} but the topology has {topo_n} qubits; the injected models live on the topology");
    }

    let even = chain_layer(n, 0);
    let odd = chain_layer(n, 1);
    let mut tags = vec![];
    if !even.gates().is_empty() {
        tags.push(EVEN_TAG);
    }
    if !odd.gates().is_empty() {
        tags.push(ODD_TAG);
    }
    let noise = cfg.noise_spec_for(n, &tags.iter().map(|&t| (t, None)).collect::<Vec<_>>())?;
    let models = mitigation_models(cfg, n, &tags)?;
    let gamma_step: f64 = models.values().map(|m| m.gamma()).product();

    let mut rows: Vec<IsingResultRow> = Vec::new();
    for s in 1..=ising.steps {
        let circuit = trotter_circuit(n, ising.j, ising.h, ising.dt, s);
        let gamma_l = gamma_step.powi(2 * s as i32);
        let instances = cfg.pec.instances.unwrap_or_else(|| {
            ((cfg.pec.instance_base * gamma_step.powf(2.0 * s as f64)).ceil() as usize)
                .clamp(2, cfg.pec.instance_cap)
        });
        let shots = cfg.pec.shots;

        for (basis_letter, basis_name) in
            [(Letter::X, "x"), (Letter::Y, "y"), (Letter::Z, "z")]
        {
            let wants_strings = basis_letter == Letter::Z
                && ising.observables.iter().any(|o| {
                    matches!(o, IsingObservable::ZFull | IsingObservable::ZWeightNm1)
                });
            let wants_magnetization = ising
                .observables
                .contains(&IsingObservable::Magnetization);
            if !wants_magnetization && !wants_strings {
                continue;
            }

            let mut measured = circuit.clone();
            let basis = PauliString::from_letters(&vec![basis_letter; n]);
            measured.push_basis_unprep(&basis)?;

            // Engine-frame observables (Z-type) and their bare counterparts
            // for the exact reference.
            let mut engine_obs: Vec<PauliString> = Vec::new();
            let mut bare_obs: Vec<PauliString> = Vec::new();
            let mut labels: Vec<String> = Vec::new();
            if wants_magnetization {
                for q in 0..n {
                    engine_obs.push(PauliString::single(n, q, Letter::Z));
                    bare_obs.push(PauliString::single(n, q, basis_letter));
                    labels.push(format!("{}_{}", basis_name, q));
                }
            }
            if wants_strings {
                if ising.observables.contains(&IsingObservable::ZFull) {
                    let full = PauliString::from_letters(&vec![Letter::Z; n]);
                    engine_obs.push(full.clone());
                    bare_obs.push(full.clone());
                    labels.push(full.to_string());
                }
                if ising.observables.contains(&IsingObservable::ZWeightNm1) {
                    for skip in 0..n {
                        let mut p = PauliString::from_letters(&vec![Letter::Z; n]);
                        p.set(skip, Letter::I);
                        engine_obs.push(p.clone());
                        bare_obs.push(p.clone());
                        labels.push(p.to_string());
                    }
                }
            }

            let seed_mit = seed::derive_seed(
                cfg.seed,
                &[0x15f, s as u64, basis_letter as u64, 0],
            );
            let seed_unmit = seed::derive_seed(
                cfg.seed,
                &[0x15f, s as u64, basis_letter as u64, 1],
            );
            let mit = mitigated_instance_means(
                &measured,
                &models,
                &noise,
                &engine_obs,
                instances,
                shots,
                cfg.pec.backend,
                seed_mit,
            )?;
            let unmit = unmitigated_instance_means(
                &measured,
                &noise,
                &engine_obs,
                instances,
                shots,
                cfg.pec.backend,
                seed_unmit,
            )?;

            let ideal: Vec<f64> = bare_obs
                .iter()
                .map(|b| noiseless_expectation(&circuit, b))
                .collect::<Result<_, _>>()?;

            if wants_magnetization {
                let weights: Vec<f64> = (0..engine_obs.len())
                    .map(|i| if i < n { 1.0 / n as f64 } else { 0.0 })
                    .collect();
                let m = mit.estimate(&weights);
                let u = unmit.estimate(&weights);
                let ideal_mag = ideal[..n].iter().sum::<f64>() / n as f64;
                rows.push(result_row(
                    s,
                    format!("mag_{basis_name}"),
                    &m,
                    &u,
                    ideal_mag,
                    gamma_l,
                ));
            }
            if wants_strings {
                for i in n * (wants_magnetization as usize)..engine_obs.len() {
                    let m = mit.estimate_single(i);
                    let u = unmit.estimate_single(i);
                    rows.push(result_row(s, labels[i].clone(), &m, &u, ideal[i], gamma_l));
                }
            }
        }
    }

    let mut csv = format!(
        "step,observable,mitigated,mitigated_stderr,unmitigated,unmitigated_stderr,ideal,gamma,n_instances,shots,{}\n",
        Provenance::CSV_HEADER_SUFFIX
    );
    for r in &rows {
        csv.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{}\n",
            r.step,
            r.observable,
            r.mitigated,
            r.mitigated_stderr,
            r.unmitigated,
            r.unmitigated_stderr,
            r.ideal,
            r.gamma,
            r.instances,
            r.shots,
            prov.csv_suffix()
        ));
    }
    out.write_text("ising.csv", &csv)?;

    #[derive(Serialize)]
    struct IsingFile<'a> {
        provenance: &'a Provenance,
        params: &'a crate::config::IsingConfig,
        gamma_step: f64,
        gamma_bar: f64,
        rows: &'a [IsingResultRow],
    }
    out.write_json(
        "ising.json",
        &IsingFile {
            provenance: &prov,
            params: ising,
            gamma_step,
            gamma_bar: gamma_bar(gamma_step.max(1.0), n, 2),
            rows: &rows,
        },
    )?;
    Ok(out)
}

fn result_row(
    step: usize,
    observable: String,
    m: &MitigatedEstimate,
    u: &MitigatedEstimate,
    ideal: f64,
    gamma: f64,
) -> IsingResultRow {
    IsingResultRow {
        step,
        observable,
        mitigated: m.value,
        mitigated_stderr: m.stderr,
        unmitigated: u.value,
        unmitigated_stderr: u.stderr,
        ideal,
        gamma,
        instances: m.instances,
        shots: m.shots_per_instance,
    }
}

/// Analytic sampling-overhead table for the Ising layer pair under per-gate
/// two-qubit depolarizing noise at fidelity `f`: a layer of `k` gates has
/// `γ = exp(−(15k/8)·log f)`; layer 1 carries ⌊n/2⌋ gates and layer 2
/// ⌊(n−1)/2⌋.
pub fn cmd_gamma_scaling(cfg: &ExperimentConfig, out_root: &Path) -> Result<OutputDir> {
    let gs = cfg
        .gamma_scaling
        .as_ref()
        .context("config has no \"gamma_scaling\" section")?;
    let prov = Provenance::new(cfg)?;
    let mut out = OutputDir::create(out_root, "gamma", &prov)?;
    let mut csv = format!(
        "n,one_minus_f,f,gamma1,gamma2,gamma_step,gamma_bar,{}\n",
        Provenance::CSV_HEADER_SUFFIX
    );
    for &n in &gs.n_values {
        for &e in &gs.one_minus_f {
            let f = 1.0 - e;
            if !(f > 0.0 && f <= 1.0) {
                bail!("one_minus_f = {e} leaves no valid fidelity");
            }
            let k1 = n / 2;
            let k2 = (n.saturating_sub(1)) / 2;
            let gamma1 = (-(15.0 * k1 as f64 / 8.0) * f.ln()).exp();
            let gamma2 = (-(15.0 * k2 as f64 / 8.0) * f.ln()).exp();
            // One Trotter step uses two instances of each layer.
            let gamma_step = (gamma1 * gamma2).powi(2);
            let gbar = gamma_bar((gamma1 * gamma2).max(1.0), n, 2);
            csv.push_str(&format!(
                "{},{},{},{},{},{},{},{}\n",
                n,
                e,
                f,
                gamma1,
                gamma2,
                gamma_step,
                gbar,
                prov.csv_suffix()
            ));
        }
    }
    out.write_text("gamma.csv", &csv)?;
    Ok(out)
}

/// Generic PEC run on a configured circuit.
pub fn cmd_mitigate(cfg: &ExperimentConfig, out_root: &Path) -> Result<OutputDir> {
    let mc = cfg
        .mitigate
        .as_ref()
        .context("config has no \"mitigate\" section")?;
    let prov = Provenance::new(cfg)?;
    let mut out = OutputDir::create(out_root, "mitigate", &prov)?;

    let circuit: Circuit = match &mc.circuit {
        CircuitSource::File { path } => {
            let bytes = std::fs::read(path)
                .with_context(|| format!("cannot read circuit file {path}"))?;
            serde_json::from_slice(&bytes).context("circuit file is not valid JSON")?
        }
        CircuitSource::RepeatedLayer { tag, repetitions } => {
            let topology = cfg.topology()?;
            let spec = cfg
                .layers
                .iter()
                .find(|l| &l.tag == tag)
                .with_context(|| format!("no configured layer with tag {tag:?}"))?;
            let layer = spec.to_layer(topology.n())?;
            let mut c = Circuit::new(topology.n());
            for _ in 0..*repetitions {
                c.push_layer(layer.clone(), tag)?;
            }
            c
        }
    };
    let n = circuit.n();
    let mut tags: Vec<String> = circuit
        .moments()
        .iter()
        .filter_map(|m| match m {
            plec_core::circuit::Moment::Layer(lm) => Some(lm.tag.clone()),
            _ => None,
        })
        .collect();
    tags.sort();
    tags.dedup();
    let tag_refs: Vec<&str> = tags.iter().map(|s| s.as_str()).collect();
    let noise = cfg.noise_spec_for(n, &tag_refs.iter().map(|&t| (t, None)).collect::<Vec<_>>())?;
    let models = mitigation_models(cfg, n, &tag_refs)?;

    let instances = mc.instances.or(cfg.pec.instances).unwrap_or(200);
    let shots = mc.shots.unwrap_or(cfg.pec.shots);
    let means = mitigated_instance_means(
        &circuit,
        &models,
        &noise,
        &mc.observables,
        instances,
        shots,
        cfg.pec.backend,
        seed::derive_seed(cfg.seed, &[0x317]),
    )?;

    #[derive(Serialize)]
    struct ResultRow<'a> {
        observable: &'a PauliString,
        value: f64,
        stderr: f64,
        gamma_total: f64,
        #[serde(rename = "N")]
        instances: usize,
        shots: usize,
        seed: u64,
    }
    #[derive(Serialize)]
    struct ResultFile<'a> {
        provenance: &'a Provenance,
        results: Vec<ResultRow<'a>>,
    }
    let results: Vec<ResultRow> = mc
        .observables
        .iter()
        .enumerate()
        .map(|(i, obs)| {
            let est = means.estimate_single(i);
            ResultRow {
                observable: obs,
                value: est.value,
                stderr: est.stderr,
                gamma_total: est.gamma_total,
                instances: est.instances,
                shots: est.shots_per_instance,
                seed: cfg.seed,
            }
        })
        .collect();
    out.write_json(
        "result.json",
        &ResultFile {
            provenance: &prov,
            results,
        },
    )?;
    Ok(out)
}

/// Shared entry used by main and the test suites.
pub fn run_command(command: &str, cfg: &ExperimentConfig, out_root: &Path) -> Result<OutputDir> {
    match command {
        "learn" => cmd_learn(cfg, out_root),
        "mitigate" => cmd_mitigate(cfg, out_root),
        "ising" => cmd_ising(cfg, out_root),
        "gamma" => cmd_gamma_scaling(cfg, out_root),
        "bases" => cmd_bases(cfg, out_root),
        other => bail!("unknown command {other:?}"),
    }
}
