//! Model fitting from fidelity data.
//!
//! The binary design matrix `M(B, K)` has entry `⟨b_i, k_j⟩_sp`; a measured
//! fidelity vector `f` over `B` determines nonnegative rates through
//! `Mλ = −log(f)/2`, solved as a nonnegative least-squares problem. Pairwise
//! observations (products `f₁·f₂` arising under self-adjoint gate layers)
//! contribute summed rows `M₁ + M₂` with entries in {0, 1, 2}.
//!
//! Rank checks run over exact integers (fraction-free elimination) to avoid
//! floating-point rank ambiguity; `σ_min` comes from a cyclic Jacobi
//! eigensolver on `MᵀM`.

use num_bigint::BigInt;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lindblad::{ModelError, SparseModel};
use crate::pauli::{GateLayer, PauliString, SignedPauli};
use crate::seed;

#[derive(Debug, Error)]
pub enum FitError {
    #[error("fidelity value must be positive and finite, got {0}")]
    NonpositiveFidelity(f64),
    #[error("design matrix is rank-deficient: no constraint on direction {missing}")]
    RankDeficient { missing: PauliString },
    #[error("NNLS did not converge after {iterations} iterations (residual {residual})")]
    NonConvergence { iterations: usize, residual: f64 },
    #[error("weighted fit requires strictly positive stderr on every observation")]
    InvalidWeights,
    #[error("epsilon must satisfy 0 <= eps < 1/4, got {0}")]
    EpsilonOutOfRange(f64),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Binary (or {0,1,2} for pair sums) commutation matrix between row Paulis
/// and model generators.
#[derive(Debug, Clone)]
pub struct DesignMatrix {
    rows: Vec<ObservationPaulis>,
    cols: Vec<PauliString>,
    entries: Vec<u8>, // row-major
}

/// The Pauli content of one observation row.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum ObservationPaulis {
    Single(PauliString),
    Pair(PauliString, PauliString),
}

impl ObservationPaulis {
    fn row_entry(&self, k: &PauliString) -> u8 {
        match self {
            ObservationPaulis::Single(b) => b.symplectic_inner(k),
            ObservationPaulis::Pair(b1, b2) => b1.symplectic_inner(k) + b2.symplectic_inner(k),
        }
    }

    pub fn label(&self) -> String {
        match self {
            ObservationPaulis::Single(b) => b.to_string(),
            ObservationPaulis::Pair(b1, b2) => format!("{b1}*{b2}"),
        }
    }
}

impl DesignMatrix {
    pub fn build(rows: Vec<ObservationPaulis>, cols: Vec<PauliString>) -> Self {
        let mut entries = Vec::with_capacity(rows.len() * cols.len());
        for r in &rows {
            for k in &cols {
                entries.push(r.row_entry(k));
            }
        }
        DesignMatrix {
            rows,
            cols,
            entries,
        }
    }

    /// `M(B, K)` for single fidelities.
    pub fn from_singles(b: &[PauliString], k: &[PauliString]) -> Self {
        DesignMatrix::build(
            b.iter().cloned().map(ObservationPaulis::Single).collect(),
            k.to_vec(),
        )
    }

    /// `M(B1, K) + M(B2, K)` for pairwise products at matching positions.
    pub fn from_pairs(b1: &[PauliString], b2: &[PauliString], k: &[PauliString]) -> Self {
        assert_eq!(b1.len(), b2.len(), "pair lists must have equal length");
        DesignMatrix::build(
            b1.iter()
                .zip(b2)
                .map(|(x, y)| ObservationPaulis::Pair(x.clone(), y.clone()))
                .collect(),
            k.to_vec(),
        )
    }

    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn n_cols(&self) -> usize {
        self.cols.len()
    }

    pub fn entry(&self, i: usize, j: usize) -> u8 {
        self.entries[i * self.cols.len() + j]
    }

    pub fn rows(&self) -> &[ObservationPaulis] {
        &self.rows
    }

    pub fn cols(&self) -> &[PauliString] {
        &self.cols
    }

    pub fn to_f64(&self) -> Vec<f64> {
        self.entries.iter().map(|&e| e as f64).collect()
    }

    /// Exact rank by fraction-free Gaussian elimination over the integers.
    pub fn rank(&self) -> usize {
        exact_rank(&self.entries, self.rows.len(), self.cols.len()).0
    }

    /// Index of a column without a pivot, if the matrix is column-rank-deficient.
    pub fn free_column(&self) -> Option<usize> {
        let (_, free) = exact_rank(&self.entries, self.rows.len(), self.cols.len());
        free
    }

    /// Smallest singular value, as the square root of the smallest
    /// eigenvalue of `MᵀM` computed by cyclic Jacobi.
    pub fn sigma_min(&self) -> f64 {
        assert!(!self.entries.is_empty(), "matrix must be nonempty");
        let (r, c) = (self.rows.len(), self.cols.len());
        let m = self.to_f64();
        let mut ata = vec![0.0; c * c];
        for i in 0..c {
            for j in i..c {
                let mut s = 0.0;
                for row in 0..r {
                    s += m[row * c + i] * m[row * c + j];
                }
                ata[i * c + j] = s;
                ata[j * c + i] = s;
            }
        }
        let eig = jacobi_eigenvalues(&mut ata, c);
        let min = eig.into_iter().fold(f64::INFINITY, f64::min);
        min.max(0.0).sqrt()
    }
}

/// Fraction-free (Bareiss-style) elimination; returns (rank, first pivotless column).
fn exact_rank(entries: &[u8], rows: usize, cols: usize) -> (usize, Option<usize>) {
    let mut m: Vec<BigInt> = entries.iter().map(|&e| BigInt::from(e)).collect();
    let zero = BigInt::from(0);
    let mut prev = BigInt::from(1);
    let mut rank = 0usize;
    let mut free = None;
    for c in 0..cols {
        let pivot_row = (rank..rows).find(|&r| m[r * cols + c] != zero);
        let Some(pr) = pivot_row else {
            if free.is_none() {
                free = Some(c);
            }
            continue;
        };
        if pr != rank {
            for j in 0..cols {
                m.swap(pr * cols + j, rank * cols + j);
            }
        }
        for i in (rank + 1)..rows {
            for j in (c + 1)..cols {
                let v = (&m[rank * cols + c] * &m[i * cols + j]
                    - &m[i * cols + c] * &m[rank * cols + j])
                    / &prev;
                m[i * cols + j] = v;
            }
            m[i * cols + c] = zero.clone();
        }
        prev = m[rank * cols + c].clone();
        rank += 1;
        if rank == rows {
            if free.is_none() && rank < cols {
                // Remaining columns beyond the last pivot column are free.
                free = (c + 1..cols).next();
            }
            break;
        }
    }
    (rank, free)
}

/// Cyclic Jacobi eigenvalues of a symmetric matrix (row-major, destroyed).
fn jacobi_eigenvalues(a: &mut [f64], n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![a[0]];
    }
    let scale: f64 = (0..n).map(|i| a[i * n + i].abs()).fold(1e-300, f64::max);
    for _sweep in 0..60 {
        let mut off = 0.0;
        for p in 0..n {
            for q in (p + 1)..n {
                off += a[p * n + q].abs();
            }
        }
        if off < 1e-13 * scale {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[p * n + q];
                if apq.abs() < 1e-300 {
                    continue;
                }
                let app = a[p * n + p];
                let aqq = a[q * n + q];
                let theta = (aqq - app) / (2.0 * apq);
                let t = if theta >= 0.0 {
                    1.0 / (theta + (1.0 + theta * theta).sqrt())
                } else {
                    1.0 / (theta - (1.0 + theta * theta).sqrt())
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;
                for i in 0..n {
                    let aip = a[i * n + p];
                    let aiq = a[i * n + q];
                    a[i * n + p] = c * aip - s * aiq;
                    a[i * n + q] = s * aip + c * aiq;
                }
                for i in 0..n {
                    let api = a[p * n + i];
                    let aqi = a[q * n + i];
                    a[p * n + i] = c * api - s * aqi;
                    a[q * n + i] = s * api + c * aqi;
                }
            }
        }
    }
    (0..n).map(|i| a[i * n + i]).collect()
}

/// Solution of a nonnegative least-squares problem.
#[derive(Debug, Clone)]
pub struct NnlsSolution {
    pub x: Vec<f64>,
    pub iterations: usize,
    pub residual_norm: f64,
    /// Objective value ½‖Mx − y‖² after each outer iteration.
    pub objective_trace: Vec<f64>,
}

/// Lawson–Hanson active-set NNLS: minimize ½‖Mλ − y‖² subject to λ ≥ 0.
///
/// The unconstrained subproblems are solved by Householder QR. On return the
/// KKT conditions hold to `tol`: λ ≥ 0, the gradient `g = Mᵀ(Mλ − y)` has
/// `g_j ≥ −tol`, and `|λ_j g_j| ≤ tol` per coordinate. `tol = None` uses the
/// default `1e-10·‖Mᵀy‖∞`.
pub fn nnls(m: &[f64], rows: usize, cols: usize, y: &[f64], tol: Option<f64>) -> Result<NnlsSolution, FitError> {
    assert_eq!(m.len(), rows * cols);
    assert_eq!(y.len(), rows);
    for &v in y {
        if !v.is_finite() {
            return Err(FitError::NonpositiveFidelity(v));
        }
    }
    let mty_inf = (0..cols)
        .map(|j| (0..rows).map(|i| m[i * cols + j] * y[i]).sum::<f64>().abs())
        .fold(0.0, f64::max);
    let tol = tol.unwrap_or(1e-10 * mty_inf.max(1e-30));

    let mut x = vec![0.0f64; cols];
    let mut passive = vec![false; cols];
    let mut iterations = 0usize;
    let max_iter = 10 * cols.max(3);
    let mut trace = Vec::new();

    let objective = |x: &[f64]| -> f64 {
        let mut s = 0.0;
        for i in 0..rows {
            let mut r = -y[i];
            for j in 0..cols {
                r += m[i * cols + j] * x[j];
            }
            s += r * r;
        }
        0.5 * s
    };
    trace.push(objective(&x));

    loop {
        // Dual vector w = Mᵀ(y − Mx); enter the most violated coordinate.
        let mut w = vec![0.0f64; cols];
        for i in 0..rows {
            let mut r = y[i];
            for j in 0..cols {
                r -= m[i * cols + j] * x[j];
            }
            for j in 0..cols {
                w[j] += m[i * cols + j] * r;
            }
        }
        let mut best = None;
        for j in 0..cols {
            if !passive[j] && w[j] > tol {
                match best {
                    None => best = Some(j),
                    Some(b) if w[j] > w[b] => best = Some(j),
                    _ => {}
                }
            }
        }
        let Some(enter) = best else {
            let res = (2.0 * objective(&x)).sqrt();
            return Ok(NnlsSolution {
                x,
                iterations,
                residual_norm: res,
                objective_trace: trace,
            });
        };
        passive[enter] = true;

        // Inner loop: solve on the passive set, step back if any coordinate
        // would go negative.
        loop {
            iterations += 1;
            if iterations > max_iter {
                return Err(FitError::NonConvergence {
                    iterations,
                    residual: (2.0 * objective(&x)).sqrt(),
                });
            }
            let idx: Vec<usize> = (0..cols).filter(|&j| passive[j]).collect();
            let mut sub = Vec::with_capacity(rows * idx.len());
            for i in 0..rows {
                for &j in &idx {
                    sub.push(m[i * cols + j]);
                }
            }
            let z_sub = householder_lstsq(&mut sub, rows, idx.len(), y).ok_or(
                FitError::NonConvergence {
                    iterations,
                    residual: (2.0 * objective(&x)).sqrt(),
                },
            )?;
            if z_sub.iter().all(|&z| z > 0.0) {
                x.iter_mut().for_each(|v| *v = 0.0);
                for (pos, &j) in idx.iter().enumerate() {
                    x[j] = z_sub[pos];
                }
                break;
            }
            // Line search toward z, dropping the first variable that hits zero.
            let mut alpha = f64::INFINITY;
            for (pos, &j) in idx.iter().enumerate() {
                if z_sub[pos] <= 0.0 {
                    let a = x[j] / (x[j] - z_sub[pos]);
                    if a < alpha {
                        alpha = a;
                    }
                }
            }
            for (pos, &j) in idx.iter().enumerate() {
                x[j] += alpha * (z_sub[pos] - x[j]);
            }
            for &j in &idx {
                if x[j] <= tol.max(1e-14) * 1.0 {
                    x[j] = 0.0;
                    passive[j] = false;
                }
            }
            if !passive.iter().any(|&p| p) {
                break;
            }
        }
        trace.push(objective(&x));
    }
}

/// Least squares via Householder QR; returns None when a diagonal of R
/// collapses (numerically dependent columns). Destroys `a`.
pub(crate) fn lstsq(a: &mut [f64], rows: usize, cols: usize, y: &[f64]) -> Option<Vec<f64>> {
    householder_lstsq(a, rows, cols, y)
}

fn householder_lstsq(a: &mut [f64], rows: usize, cols: usize, y: &[f64]) -> Option<Vec<f64>> {
    assert!(rows >= 1 && cols >= 1);
    if rows < cols {
        return None;
    }
    let mut b = y.to_vec();
    let mut col_scale = 0.0f64;
    for v in a.iter() {
        col_scale = col_scale.max(v.abs());
    }
    for k in 0..cols {
        // Householder vector for column k below the diagonal.
        let mut norm = 0.0;
        for i in k..rows {
            norm += a[i * cols + k] * a[i * cols + k];
        }
        let norm = norm.sqrt();
        if norm < 1e-13 * col_scale.max(1e-300) {
            return None;
        }
        let alpha = if a[k * cols + k] > 0.0 { -norm } else { norm };
        let mut v = vec![0.0; rows - k];
        v[0] = a[k * cols + k] - alpha;
        for i in (k + 1)..rows {
            v[i - k] = a[i * cols + k];
        }
        let vtv: f64 = v.iter().map(|x| x * x).sum();
        if vtv == 0.0 {
            return None;
        }
        a[k * cols + k] = alpha;
        for i in (k + 1)..rows {
            a[i * cols + k] = 0.0;
        }
        for j in (k + 1)..cols {
            let mut dot = 0.0;
            for i in k..rows {
                dot += v[i - k] * a[i * cols + j];
            }
            let f = 2.0 * dot / vtv;
            for i in k..rows {
                a[i * cols + j] -= f * v[i - k];
            }
        }
        let mut dot = 0.0;
        for i in k..rows {
            dot += v[i - k] * b[i];
        }
        let f = 2.0 * dot / vtv;
        for i in k..rows {
            b[i] -= f * v[i - k];
        }
    }
    // Back substitution on R x = Qᵀy.
    let mut x = vec![0.0; cols];
    for k in (0..cols).rev() {
        let mut s = b[k];
        for j in (k + 1)..cols {
            s -= a[k * cols + j] * x[j];
        }
        x[k] = s / a[k * cols + k];
    }
    Some(x)
}

/// One measured fidelity (or fidelity-pair product) with its uncertainty.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FidelityObservation {
    pub paulis: ObservationPaulis,
    pub value: f64,
    pub stderr: f64,
}

/// Per-row comparison of measured and model-predicted fidelities.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitRow {
    pub paulis: String,
    pub measured: f64,
    pub model: f64,
    pub residual: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitReport {
    pub rows: Vec<FitRow>,
    pub gamma: f64,
    pub sigma_min: f64,
    pub residual_norm: f64,
    pub nnls_iterations: usize,
    /// Parametric-bootstrap standard errors per fitted rate, when observation
    /// stderrs were provided.
    pub rate_stderr: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Copy)]
pub struct FitOptions {
    /// Weight rows by 1/stderr² of the log-fidelity (default: unweighted,
    /// plain least squares).
    pub weighted: bool,
    /// Number of parametric bootstrap refits used for rate standard errors;
    /// 0 disables.
    pub bootstrap_resamples: usize,
    pub bootstrap_seed: u64,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            weighted: false,
            bootstrap_resamples: 100,
            bootstrap_seed: 0,
        }
    }
}

/// Fit nonnegative rates to measured fidelities: solve
/// `min_{λ≥0} ½‖Mλ + log(f)/2‖²` with pair rows using `M₁ + M₂`.
pub fn fit_from_fidelities(
    observations: &[FidelityObservation],
    generators: &[PauliString],
    n: usize,
    options: &FitOptions,
) -> Result<(SparseModel, FitReport), FitError> {
    for o in observations {
        if !o.value.is_finite() || o.value <= 0.0 {
            return Err(FitError::NonpositiveFidelity(o.value));
        }
    }
    let dm = DesignMatrix::build(
        observations.iter().map(|o| o.paulis.clone()).collect(),
        generators.to_vec(),
    );
    if dm.rank() < dm.n_cols() {
        let j = dm.free_column().unwrap_or(0);
        return Err(FitError::RankDeficient {
            missing: dm.cols()[j].clone(),
        });
    }

    let rows = dm.n_rows();
    let cols = dm.n_cols();
    let base_m = dm.to_f64();
    let base_y: Vec<f64> = observations.iter().map(|o| -o.value.ln() / 2.0).collect();

    let weights: Option<Vec<f64>> = if options.weighted {
        let mut w = Vec::with_capacity(rows);
        for o in observations {
            if o.stderr.is_nan() || o.stderr <= 0.0 {
                return Err(FitError::InvalidWeights);
            }
            // stderr of log f is stderr(f)/f; the y scaling of 1/2 cancels in
            // the relative weighting.
            w.push(o.value / o.stderr);
        }
        Some(w)
    } else {
        None
    };

    let solve = |y: &[f64]| -> Result<NnlsSolution, FitError> {
        match &weights {
            None => nnls(&base_m, rows, cols, y, None),
            Some(w) => {
                let mut wm = base_m.clone();
                let mut wy = y.to_vec();
                for i in 0..rows {
                    for j in 0..cols {
                        wm[i * cols + j] *= w[i];
                    }
                    wy[i] *= w[i];
                }
                nnls(&wm, rows, cols, &wy, None)
            }
        }
    };

    let sol = solve(&base_y)?;
    let model = SparseModel::new(
        n,
        generators
            .iter()
            .cloned()
            .zip(sol.x.iter().copied())
            .collect(),
    )?;

    let mut report_rows = Vec::with_capacity(rows);
    for o in observations {
        let model_value = match &o.paulis {
            ObservationPaulis::Single(b) => model.fidelity(b),
            ObservationPaulis::Pair(b1, b2) => model.fidelity(b1) * model.fidelity(b2),
        };
        report_rows.push(FitRow {
            paulis: o.paulis.label(),
            measured: o.value,
            model: model_value,
            residual: o.value - model_value,
        });
    }

    let rate_stderr = if options.bootstrap_resamples > 0
        && observations.iter().any(|o| o.stderr > 0.0)
    {
        let mut rng = seed::derive_rng(options.bootstrap_seed, &[0x6f62]);
        let mut sums = vec![0.0f64; cols];
        let mut sq = vec![0.0f64; cols];
        let n_res = options.bootstrap_resamples;
        for _ in 0..n_res {
            let y: Vec<f64> = observations
                .iter()
                .zip(&base_y)
                .map(|(o, &y0)| y0 + standard_normal(&mut rng) * o.stderr / (2.0 * o.value))
                .collect();
            let s = solve(&y)?;
            for j in 0..cols {
                sums[j] += s.x[j];
                sq[j] += s.x[j] * s.x[j];
            }
        }
        Some(
            (0..cols)
                .map(|j| {
                    let mean = sums[j] / n_res as f64;
                    ((sq[j] / n_res as f64 - mean * mean).max(0.0)).sqrt()
                })
                .collect(),
        )
    } else {
        None
    };

    let report = FitReport {
        rows: report_rows,
        gamma: model.gamma(),
        sigma_min: dm.sigma_min(),
        residual_norm: sol.residual_norm,
        nnls_iterations: sol.iterations,
        rate_stderr,
    };
    Ok((model, report))
}

/// Box-Muller standard normal draw.
fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    let u1: f64 = rng.random::<f64>().max(f64::MIN_POSITIVE);
    let u2: f64 = rng.random();
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

/// Constants of the fidelity error band: `C_ε = (1+4ε)/(1−4ε)`,
/// `τ = √(|K||B|)/(σ_min k)` and the rate-vector error bound
/// `log(C_ε)√|B| / (2 σ_min k)`.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct BoundConstants {
    pub c_eps: f64,
    pub tau: f64,
    pub lambda_err: f64,
}

pub fn bound_constants(
    epsilon: f64,
    b_size: usize,
    k_size: usize,
    sigma_min: f64,
    depth: usize,
) -> Result<BoundConstants, FitError> {
    if !(0.0..0.25).contains(&epsilon) {
        return Err(FitError::EpsilonOutOfRange(epsilon));
    }
    assert!(depth >= 1, "depth must be at least 1");
    assert!(sigma_min > 0.0, "sigma_min must be positive");
    let c_eps = (1.0 + 4.0 * epsilon) / (1.0 - 4.0 * epsilon);
    let tau = ((k_size * b_size) as f64).sqrt() / (sigma_min * depth as f64);
    let lambda_err = c_eps.ln() * (b_size as f64).sqrt() / (2.0 * sigma_min * depth as f64);
    Ok(BoundConstants {
        c_eps,
        tau,
        lambda_err,
    })
}

/// Smallest instance count `N` with `N ≥ 2 log(2|B|/δ′)/ε²`.
pub fn sample_complexity(epsilon: f64, delta_prime: f64, b_size: usize) -> u64 {
    assert!(epsilon > 0.0 && epsilon < 1.0);
    assert!(delta_prime > 0.0 && delta_prime < 1.0);
    let raw = 2.0 * (2.0 * b_size as f64 / delta_prime).ln() / (epsilon * epsilon);
    raw.ceil() as u64
}

/// Hoeffding accuracy implied by an instance budget: the ε with
/// `N = 2 log(2|B|/δ′)/ε²`.
pub fn hoeffding_epsilon(instances: u64, delta_prime: f64, b_size: usize) -> f64 {
    (2.0 * (2.0 * b_size as f64 / delta_prime).ln() / instances as f64).sqrt()
}

/// Benchmark pair lists for a layer of disjoint CX/CZ gates on a topology.
///
/// For every model qubit the weight-one Paulis appear in both lists. For a
/// connected pair carrying a gate, a weight-two Pauli whose conjugate keeps
/// its support is paired with itself (the conjugate can be steered back with
/// single-qubit gates); one whose conjugate shrinks is paired with the
/// shrunken Pauli. Pairs without a gate use the full layer conjugate, which
/// may grow up to weight four. The first list equals the two-local model
/// term set, so `M(B₁,K) + M(B₂,K)` is square.
pub fn benchmark_pair_lists(
    layer: &GateLayer,
    edges: &[(usize, usize)],
) -> (Vec<PauliString>, Vec<PauliString>) {
    use crate::pauli::Letter;
    let n = layer.n();
    let gated: Vec<(usize, usize)> = layer
        .gates()
        .iter()
        .map(|g| {
            (
                g.control.min(g.target),
                g.control.max(g.target),
            )
        })
        .collect();
    let letters = [Letter::X, Letter::Y, Letter::Z];
    let mut b1 = Vec::new();
    let mut b2 = Vec::new();
    for q in 0..n {
        for &l in &letters {
            let v = PauliString::single(n, q, l);
            b1.push(v.clone());
            b2.push(v);
        }
    }
    for &(i, j) in edges {
        let (lo, hi) = (i.min(j), i.max(j));
        let has_gate = gated.contains(&(lo, hi));
        for &li in &letters {
            for &lj in &letters {
                let mut p1 = PauliString::identity(n);
                p1.set(i, li);
                p1.set(j, lj);
                let conj = layer.conjugate(&SignedPauli::positive(p1.clone())).pauli;
                let p2 = if has_gate {
                    if conj.support() == p1.support() {
                        p1.clone()
                    } else {
                        conj
                    }
                } else {
                    conj
                };
                b1.push(p1);
                b2.push(p2);
            }
        }
    }
    (b1, b2)
}
