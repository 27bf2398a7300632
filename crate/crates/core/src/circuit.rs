//! Circuit representation: moments of single-qubit operations, tagged layers
//! of two-qubit Clifford gates (with optional folded Pauli frames), and a
//! final measurement moment.
//!
//! Twirl and mitigation Paulis attach to layer moments as `pre`/`post`
//! frames rather than as extra moments, so instance circuits keep the moment
//! structure of the base circuit; only the classical distribution of
//! single-qubit operations changes.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use thiserror::Error;

use crate::lindblad::SparseModel;
use crate::pauli::{GateLayer, Letter, PauliString};

#[derive(Debug, Error)]
pub enum CircuitError {
    #[error("singles moment has {got} ops for {expected} qubits")]
    MomentLength { expected: usize, got: usize },
    #[error("layer acts on {got} qubits, circuit has {expected}")]
    LayerLength { expected: usize, got: usize },
    #[error("measure moment must be the last moment")]
    MeasureNotLast,
    #[error("flip probability {0} outside [0, 0.5)")]
    BadProbability(f64),
    #[error("noise model for tag {tag:?} has {got} qubits, circuit has {expected}")]
    ModelLength {
        tag: String,
        expected: usize,
        got: usize,
    },
}

/// Single-qubit operations. `BasisPrep(b)` maps the computational Z axis to
/// basis `b` (X: H, Y: S·H, Z: identity); `BasisUnprep` is its inverse.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Gate1 {
    I,
    X,
    Y,
    Z,
    H,
    S,
    Sdg,
    SqrtX,
    Rz(f64),
    Rx(f64),
    BasisPrep(Letter),
    BasisUnprep(Letter),
}

impl Gate1 {
    /// Pauli letter conjugation `g P g†` for Clifford gates; `None` for the
    /// continuous rotations. Returns the image letter and its ±1 sign.
    pub fn clifford_conjugation(&self, p: Letter) -> Option<(Letter, i8)> {
        use Letter::*;
        if p == I {
            return Some((I, 1));
        }
        let table: [(Letter, i8); 3] = match self {
            Gate1::I => [(X, 1), (Y, 1), (Z, 1)],
            Gate1::X => [(X, 1), (Y, -1), (Z, -1)],
            Gate1::Y => [(X, -1), (Y, 1), (Z, -1)],
            Gate1::Z => [(X, -1), (Y, -1), (Z, 1)],
            Gate1::H => [(Z, 1), (Y, -1), (X, 1)],
            Gate1::S => [(Y, 1), (X, -1), (Z, 1)],
            Gate1::Sdg => [(Y, -1), (X, 1), (Z, 1)],
            Gate1::SqrtX => [(X, 1), (Z, 1), (Y, -1)],
            Gate1::Rz(_) | Gate1::Rx(_) => return None,
            Gate1::BasisPrep(b) => match b {
                X => [(Z, 1), (Y, -1), (X, 1)],
                Y => [(Z, 1), (X, 1), (Y, 1)],
                Z => [(X, 1), (Y, 1), (Z, 1)],
                I => unreachable!("identity is not a basis"),
            },
            Gate1::BasisUnprep(b) => match b {
                X => [(Z, 1), (Y, -1), (X, 1)],
                Y => [(Y, 1), (Z, 1), (X, 1)],
                Z => [(X, 1), (Y, 1), (Z, 1)],
                I => unreachable!("identity is not a basis"),
            },
        };
        Some(table[match p {
            X => 0,
            Y => 1,
            Z => 2,
            I => unreachable!(),
        }])
    }

    /// Conjugation by the inverse gate: if `g P g† = s·Q` then `g† Q g = s·P`.
    pub fn clifford_conjugation_inv(&self, q: Letter) -> Option<(Letter, i8)> {
        use Letter::*;
        if q == I {
            return Some((I, 1));
        }
        for p in [X, Y, Z] {
            let (img, sign) = self.clifford_conjugation(p)?;
            if img == q {
                return Some((p, sign));
            }
        }
        unreachable!("Clifford conjugation permutes the letters")
    }

    pub fn is_clifford(&self) -> bool {
        !matches!(self, Gate1::Rz(_) | Gate1::Rx(_))
    }

    /// Dense 2x2 matrix of the gate.
    pub fn matrix(&self) -> [[Complex64; 2]; 2] {
        let c = Complex64::new;
        let s2 = std::f64::consts::FRAC_1_SQRT_2;
        match self {
            Gate1::I => [[c(1., 0.), c(0., 0.)], [c(0., 0.), c(1., 0.)]],
            Gate1::X => [[c(0., 0.), c(1., 0.)], [c(1., 0.), c(0., 0.)]],
            Gate1::Y => [[c(0., 0.), c(0., -1.)], [c(0., 1.), c(0., 0.)]],
            Gate1::Z => [[c(1., 0.), c(0., 0.)], [c(0., 0.), c(-1., 0.)]],
            Gate1::H => [[c(s2, 0.), c(s2, 0.)], [c(s2, 0.), c(-s2, 0.)]],
            Gate1::S => [[c(1., 0.), c(0., 0.)], [c(0., 0.), c(0., 1.)]],
            Gate1::Sdg => [[c(1., 0.), c(0., 0.)], [c(0., 0.), c(0., -1.)]],
            Gate1::SqrtX => [
                [c(0.5, 0.5), c(0.5, -0.5)],
                [c(0.5, -0.5), c(0.5, 0.5)],
            ],
            Gate1::Rz(theta) => [
                [Complex64::from_polar(1.0, -theta / 2.0), c(0., 0.)],
                [c(0., 0.), Complex64::from_polar(1.0, theta / 2.0)],
            ],
            Gate1::Rx(theta) => {
                let ch = c((theta / 2.0).cos(), 0.);
                let sh = c(0., -(theta / 2.0).sin());
                [[ch, sh], [sh, ch]]
            }
            Gate1::BasisPrep(b) => match b {
                Letter::X => Gate1::H.matrix(),
                // S·H maps Z to Y.
                Letter::Y => [[c(s2, 0.), c(s2, 0.)], [c(0., s2), c(0., -s2)]],
                Letter::Z | Letter::I => Gate1::I.matrix(),
            },
            Gate1::BasisUnprep(b) => {
                let m = Gate1::BasisPrep(*b).matrix();
                [
                    [m[0][0].conj(), m[1][0].conj()],
                    [m[0][1].conj(), m[1][1].conj()],
                ]
            }
        }
    }
}

/// A layer moment: the gates, a noise tag resolved through [`NoiseSpec`],
/// and optional folded Pauli frames applied just before and after the gates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerMoment {
    pub layer: GateLayer,
    pub tag: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pre: Option<PauliString>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub post: Option<PauliString>,
}

impl LayerMoment {
    /// Multiply a Pauli into the pre-gate frame.
    pub fn fold_pre(&mut self, p: &PauliString) {
        match &mut self.pre {
            Some(existing) => existing.mul_unsigned_inplace(p),
            None => self.pre = Some(p.clone()),
        }
    }

    pub fn fold_post(&mut self, p: &PauliString) {
        match &mut self.post {
            Some(existing) => existing.mul_unsigned_inplace(p),
            None => self.post = Some(p.clone()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Moment {
    Singles(Vec<Gate1>),
    Layer(LayerMoment),
    Measure(Vec<PauliString>),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Circuit {
    n: usize,
    moments: Vec<Moment>,
}

impl<'de> Deserialize<'de> for Circuit {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        struct Raw {
            n: usize,
            moments: Vec<Moment>,
        }
        let raw = Raw::deserialize(d)?;
        let mut c = Circuit::new(raw.n);
        for m in raw.moments {
            match m {
                Moment::Singles(ops) => {
                    c.push_singles(ops).map_err(serde::de::Error::custom)?;
                }
                Moment::Layer(lm) => {
                    c.push_layer(lm.layer, &lm.tag)
                        .map_err(serde::de::Error::custom)?;
                    let idx = c.moments.len() - 1;
                    if let Moment::Layer(slot) = &mut c.moments[idx] {
                        slot.pre = lm.pre;
                        slot.post = lm.post;
                    }
                }
                Moment::Measure(obs) => {
                    c.push_measure(obs).map_err(serde::de::Error::custom)?;
                }
            }
        }
        Ok(c)
    }
}

impl Circuit {
    pub fn new(n: usize) -> Self {
        assert!(n >= 1);
        Circuit {
            n,
            moments: Vec::new(),
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn moments(&self) -> &[Moment] {
        &self.moments
    }

    pub fn moments_mut(&mut self) -> &mut [Moment] {
        &mut self.moments
    }

    fn check_no_measure(&self) -> Result<(), CircuitError> {
        if matches!(self.moments.last(), Some(Moment::Measure(_))) {
            return Err(CircuitError::MeasureNotLast);
        }
        Ok(())
    }

    /// Append a moment of per-qubit operations; `ops[q]` acts on qubit `q`.
    pub fn push_singles(&mut self, ops: Vec<Gate1>) -> Result<&mut Self, CircuitError> {
        self.check_no_measure()?;
        if ops.len() != self.n {
            return Err(CircuitError::MomentLength {
                expected: self.n,
                got: ops.len(),
            });
        }
        self.moments.push(Moment::Singles(ops));
        Ok(self)
    }

    /// Append the same operation on every qubit.
    pub fn push_uniform(&mut self, op: Gate1) -> Result<&mut Self, CircuitError> {
        self.push_singles(vec![op; self.n])
    }

    pub fn push_layer(&mut self, layer: GateLayer, tag: &str) -> Result<&mut Self, CircuitError> {
        self.check_no_measure()?;
        if layer.n() != self.n {
            return Err(CircuitError::LayerLength {
                expected: self.n,
                got: layer.n(),
            });
        }
        self.moments.push(Moment::Layer(LayerMoment {
            layer,
            tag: tag.to_string(),
            pre: None,
            post: None,
        }));
        Ok(self)
    }

    pub fn push_measure(&mut self, observables: Vec<PauliString>) -> Result<&mut Self, CircuitError> {
        self.check_no_measure()?;
        self.moments.push(Moment::Measure(observables));
        Ok(self)
    }

    /// Basis-change moment mapping the computational axis onto the letters
    /// of `basis` (which must be identity-free).
    pub fn push_basis_prep(&mut self, basis: &PauliString) -> Result<&mut Self, CircuitError> {
        let ops: Vec<Gate1> = (0..self.n)
            .map(|q| Gate1::BasisPrep(basis.get(q)))
            .collect();
        self.push_singles(ops)
    }

    pub fn push_basis_unprep(&mut self, basis: &PauliString) -> Result<&mut Self, CircuitError> {
        let ops: Vec<Gate1> = (0..self.n)
            .map(|q| Gate1::BasisUnprep(basis.get(q)))
            .collect();
        self.push_singles(ops)
    }

    /// Indexes of all layer moments, in circuit order.
    pub fn layer_moment_indices(&self) -> Vec<usize> {
        self.moments
            .iter()
            .enumerate()
            .filter_map(|(i, m)| matches!(m, Moment::Layer(_)).then_some(i))
            .collect()
    }
}

/// Injected noise: per-tag layer models plus independent preparation and
/// readout flip probabilities per qubit (all in [0, ½)). `idle_z_rate`
/// optionally adds Z dephasing on qubits a layer leaves idle, standing in
/// for decoherence during the layer when echo sequences are absent.
#[derive(Debug, Clone, Default)]
pub struct NoiseSpec {
    pub layer_models: HashMap<String, SparseModel>,
    pub prep_flip: Vec<f64>,
    pub readout_flip: Vec<f64>,
    pub idle_z_rate: Option<f64>,
}

impl NoiseSpec {
    pub fn noiseless(n: usize) -> Self {
        NoiseSpec {
            layer_models: HashMap::new(),
            prep_flip: vec![0.0; n],
            readout_flip: vec![0.0; n],
            idle_z_rate: None,
        }
    }

    pub fn with_model(mut self, tag: &str, model: SparseModel) -> Self {
        self.layer_models.insert(tag.to_string(), model);
        self
    }

    pub fn with_spam(mut self, prep: f64, readout: f64) -> Self {
        self.prep_flip.iter_mut().for_each(|p| *p = prep);
        self.readout_flip.iter_mut().for_each(|p| *p = readout);
        self
    }

    pub fn validate(&self, circuit: &Circuit) -> Result<(), CircuitError> {
        let n = circuit.n();
        for list in [&self.prep_flip, &self.readout_flip] {
            if list.len() != n {
                return Err(CircuitError::MomentLength {
                    expected: n,
                    got: list.len(),
                });
            }
            for &p in list {
                if !(0.0..0.5).contains(&p) {
                    return Err(CircuitError::BadProbability(p));
                }
            }
        }
        for m in circuit.moments() {
            if let Moment::Layer(lm) = m {
                if let Some(model) = self.layer_models.get(&lm.tag) {
                    if model.n() != n {
                        return Err(CircuitError::ModelLength {
                            tag: lm.tag.clone(),
                            expected: n,
                            got: model.n(),
                        });
                    }
                }
            }
        }
        Ok(())
    }
}

/// Per-observable ±1 outcomes, one row of `shots` entries per observable.
#[derive(Debug, Clone)]
pub struct ShotTable {
    pub observables: Vec<PauliString>,
    pub outcomes: Vec<Vec<i8>>,
}

impl ShotTable {
    pub fn mean(&self, observable_idx: usize) -> f64 {
        let row = &self.outcomes[observable_idx];
        row.iter().map(|&v| v as f64).sum::<f64>() / row.len() as f64
    }

    pub fn shots(&self) -> usize {
        self.outcomes.first().map_or(0, |r| r.len())
    }

    /// Stream as CSV rows `instance,observable,shot,outcome`, tagging every
    /// row with the caller's instance id. `write_csv_header` emits the
    /// header line once per file.
    pub fn write_csv<W: std::io::Write>(&self, instance: usize, w: &mut W) -> std::io::Result<()> {
        for (obs, row) in self.observables.iter().zip(&self.outcomes) {
            for (shot, &v) in row.iter().enumerate() {
                writeln!(w, "{instance},{obs},{shot},{v}")?;
            }
        }
        Ok(())
    }

    pub fn write_csv_header<W: std::io::Write>(w: &mut W) -> std::io::Result<()> {
        writeln!(w, "instance,observable,shot,outcome")
    }
}
