//! Dense-matrix oracles and RNG helpers for unit tests.
//!
//! Everything here is deliberately independent of the symplectic code paths
//! it is used to check: matrices are built from literal 2x2 constants and
//! combined with explicit Kronecker products.

use num_complex::Complex64;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::pauli::{GateKind, Letter, SignedPauli};

pub type Mat = Vec<Vec<Complex64>>;

pub fn seeded_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

pub fn identity(dim: usize) -> Mat {
    let mut m = vec![vec![c(0.0, 0.0); dim]; dim];
    for (i, row) in m.iter_mut().enumerate() {
        row[i] = c(1.0, 0.0);
    }
    m
}

pub fn letter_matrix(l: Letter) -> Mat {
    match l {
        Letter::I => identity(2),
        Letter::X => vec![vec![c(0.0, 0.0), c(1.0, 0.0)], vec![c(1.0, 0.0), c(0.0, 0.0)]],
        Letter::Y => vec![vec![c(0.0, 0.0), c(0.0, -1.0)], vec![c(0.0, 1.0), c(0.0, 0.0)]],
        Letter::Z => vec![vec![c(1.0, 0.0), c(0.0, 0.0)], vec![c(0.0, 0.0), c(-1.0, 0.0)]],
    }
}

pub fn kron(a: &Mat, b: &Mat) -> Mat {
    let (ra, ca) = (a.len(), a[0].len());
    let (rb, cb) = (b.len(), b[0].len());
    let mut out = vec![vec![c(0.0, 0.0); ca * cb]; ra * rb];
    for i in 0..ra {
        for j in 0..ca {
            for k in 0..rb {
                for l in 0..cb {
                    out[i * rb + k][j * cb + l] = a[i][j] * b[k][l];
                }
            }
        }
    }
    out
}

pub fn matmul(a: &Mat, b: &Mat) -> Mat {
    let (ra, ca) = (a.len(), a[0].len());
    let cb = b[0].len();
    let mut out = vec![vec![c(0.0, 0.0); cb]; ra];
    for i in 0..ra {
        for k in 0..ca {
            let aik = a[i][k];
            for j in 0..cb {
                out[i][j] += aik * b[k][j];
            }
        }
    }
    out
}

pub fn scale(a: &Mat, s: Complex64) -> Mat {
    a.iter()
        .map(|row| row.iter().map(|&v| v * s).collect())
        .collect()
}

pub fn add(a: &Mat, b: &Mat) -> Mat {
    a.iter()
        .zip(b)
        .map(|(ra, rb)| ra.iter().zip(rb).map(|(&x, &y)| x + y).collect())
        .collect()
}

pub fn sub(a: &Mat, b: &Mat) -> Mat {
    a.iter()
        .zip(b)
        .map(|(ra, rb)| ra.iter().zip(rb).map(|(&x, &y)| x - y).collect())
        .collect()
}

pub fn dagger(a: &Mat) -> Mat {
    let (r, cl) = (a.len(), a[0].len());
    let mut out = vec![vec![c(0.0, 0.0); r]; cl];
    for i in 0..r {
        for j in 0..cl {
            out[j][i] = a[i][j].conj();
        }
    }
    out
}

pub fn trace(a: &Mat) -> Complex64 {
    (0..a.len()).map(|i| a[i][i]).sum()
}

pub fn is_zero(a: &Mat) -> bool {
    a.iter().flatten().all(|v| v.norm() < 1e-12)
}

pub fn approx_eq(a: &Mat, b: &Mat, tol: f64) -> bool {
    a.iter()
        .zip(b)
        .all(|(ra, rb)| ra.iter().zip(rb).all(|(x, y)| (x - y).norm() < tol))
}

/// Dense matrix of a signed Pauli, qubit 0 as the leftmost Kronecker factor.
pub fn pauli_matrix(p: &SignedPauli) -> Mat {
    let phase = match p.phase_exp % 4 {
        0 => c(1.0, 0.0),
        1 => c(0.0, 1.0),
        2 => c(-1.0, 0.0),
        _ => c(0.0, -1.0),
    };
    let mut m = letter_matrix(p.pauli.get(0));
    for q in 1..p.pauli.n() {
        m = kron(&m, &letter_matrix(p.pauli.get(q)));
    }
    scale(&m, phase)
}

/// CX/CZ with the control as the first Kronecker factor.
pub fn two_qubit_gate(kind: GateKind) -> Mat {
    let one = c(1.0, 0.0);
    let zero = c(0.0, 0.0);
    match kind {
        GateKind::CX => vec![
            vec![one, zero, zero, zero],
            vec![zero, one, zero, zero],
            vec![zero, zero, zero, one],
            vec![zero, zero, one, zero],
        ],
        GateKind::CZ => vec![
            vec![one, zero, zero, zero],
            vec![zero, one, zero, zero],
            vec![zero, zero, one, zero],
            vec![zero, zero, zero, -one],
        ],
    }
}
